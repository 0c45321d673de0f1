//! Domain blocklist, temporal window and de-duplication of search results.

use std::collections::HashSet;

use chrono::{Duration, NaiveDate};
use url::Url;

use super::{EvidenceSnippet, RetrievalConfig};

/// Fact-checking sites and social media excluded from evidence by default.
pub const DEFAULT_BLOCKLIST: [&str; 7] = [
    "politifact.com",
    "snopes.com",
    "factcheck.org",
    "tiktok.com",
    "facebook.com",
    "twitter.com",
    "youtube.com",
];

pub fn host_of(url: &str) -> Option<String> {
    Url::parse(url)
        .ok()?
        .host_str()
        .map(|h| h.trim_end_matches('.').to_ascii_lowercase())
}

/// Registrable domain (eTLD+1) of a host, or the host itself when the
/// public suffix list has no answer (IP addresses, single labels).
pub fn registrable_domain(host: &str) -> String {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    psl::domain_str(&host).map(str::to_string).unwrap_or(host)
}

/// Normalizes a blocklist entry: `www.politifact.com` and `politifact.com` mean the same thing.
pub fn normalize_blocklist_entry(entry: &str) -> String {
    let e = entry.trim().trim_start_matches("*.").trim_start_matches('.');
    registrable_domain(e)
}

/// True when `host` is `domain` or a subdomain of it.
pub fn host_matches(host: &str, domain: &str) -> bool {
    host == domain || host.strip_suffix(domain).is_some_and(|p| p.ends_with('.'))
}

pub fn is_blocked(url: &str, cfg: &RetrievalConfig) -> bool {
    match host_of(url) {
        Some(host) => cfg
            .blocklist
            .iter()
            .any(|d| host_matches(&host, &normalize_blocklist_entry(d))),
        None => false,
    }
}

/// Inclusive `[claim_date - window_days, claim_date]`. Undated snippets or
/// undated claims always pass.
pub fn in_window(published: Option<NaiveDate>, claim_date: Option<NaiveDate>, window_days: u32) -> bool {
    match (published, claim_date) {
        (Some(p), Some(c)) => {
            let earliest = c - Duration::days(i64::from(window_days));
            p >= earliest && p <= c
        }
        _ => true,
    }
}

/// Drops blocklisted and out-of-window snippets; keeps input order.
pub fn filter_results(
    raw: Vec<EvidenceSnippet>,
    claim_date: Option<NaiveDate>,
    cfg: &RetrievalConfig,
) -> Vec<EvidenceSnippet> {
    raw.into_iter()
        .filter(|s| !is_blocked(&s.url, cfg))
        .filter(|s| in_window(s.published_date, claim_date, cfg.window_days))
        .collect()
}

/// Keeps the first snippet for each (registrable domain, path).
pub fn dedup(snippets: Vec<EvidenceSnippet>) -> Vec<EvidenceSnippet> {
    let mut seen = HashSet::new();
    snippets
        .into_iter()
        .filter(|s| {
            let key = match Url::parse(&s.url) {
                Ok(u) => (
                    u.host_str().map(registrable_domain).unwrap_or_default(),
                    u.path().trim_end_matches('/').to_string(),
                ),
                Err(_) => (String::new(), s.url.clone()),
            };
            seen.insert(key)
        })
        .collect()
}

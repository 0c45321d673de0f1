//! Multimodal evidence retrieval: filtered web search, reverse-image captions,
//! an offline corpus backend and a persistent result cache.

pub mod cache;
pub mod filter;
mod live;
mod offline;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::media::ImageData;

pub use cache::{cache_key, CacheStats, GcReport, ResultCache};
pub use filter::{dedup, filter_results, DEFAULT_BLOCKLIST};
pub use live::{HttpImageSearch, HttpSearchBackend, LiveSearchBackend, LiveSearchConfig};
pub use offline::{OfflineCorpus, CAPTIONS_FILE};

/// Captions kept from a reverse-image lookup.
pub const MAX_CAPTIONS: usize = 10;
/// Characters of snippet text passed to a prompt.
pub const SNIPPET_PROMPT_CHARS: usize = 1_500;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrievalError {
    #[error("search backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("search quota exceeded")]
    QuotaExceeded,
    #[error("no reverse-image results for image {0}")]
    ImageNotFound(String),
    #[error("cache entry {0} failed its checksum")]
    CacheCorrupt(String),
    #[error("question must not be empty")]
    EmptyQuery,
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSnippet {
    pub url: String,
    pub title: String,
    pub snippet_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_date: Option<NaiveDate>,
}

impl EvidenceSnippet {
    /// Validated constructor: absolute URL and non-empty text.
    pub fn new(
        url: impl Into<String>,
        title: impl Into<String>,
        snippet_text: impl Into<String>,
        published_date: Option<NaiveDate>,
    ) -> Option<Self> {
        let url = url.into();
        let snippet_text = snippet_text.into();
        if url::Url::parse(&url).is_err() || snippet_text.trim().is_empty() {
            return None;
        }
        Some(Self {
            url,
            title: title.into(),
            snippet_text,
            published_date,
        })
    }

    /// Snippet text cut to the prompt budget on a char boundary.
    pub fn prompt_text(&self) -> &str {
        match self.snippet_text.char_indices().nth(SNIPPET_PROMPT_CHARS) {
            Some((i, _)) => &self.snippet_text[..i],
            None => &self.snippet_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCaption {
    pub source_url: String,
    pub caption_text: String,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    LiveSearch,
    #[default]
    OfflineCorpus,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::LiveSearch => "live_search",
            BackendKind::OfflineCorpus => "offline_corpus",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub max_results: usize,
    pub window_days: u32,
    pub blocklist: BTreeSet<String>,
    pub backend: BackendKind,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            max_results: 10,
            window_days: 730,
            blocklist: DEFAULT_BLOCKLIST.iter().map(|d| d.to_string()).collect(),
            backend: BackendKind::default(),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_results == 0 {
            return Err("max_results must be at least 1".into());
        }
        Ok(())
    }

    pub fn with_blocklist<I, S>(mut self, domains: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.blocklist = domains
            .into_iter()
            .map(|d| filter::normalize_blocklist_entry(d.as_ref()))
            .collect();
        self
    }
}

/// A source of raw, ranked search results and reverse-image captions.
pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<EvidenceSnippet>, RetrievalError>;

    fn image_captions(&self, image: &ImageData) -> Result<Vec<ImageCaption>, RetrievalError>;
}

/// Filtered, cached retrieval over a [`SearchBackend`].
#[derive(Clone)]
pub struct Retriever {
    backend: Arc<dyn SearchBackend>,
    cfg: RetrievalConfig,
    cache: Option<ResultCache>,
}

impl fmt::Debug for Retriever {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Retriever")
            .field("cfg", &self.cfg)
            .field("cache", &self.cache.as_ref().map(|c| c.root().to_path_buf()))
            .finish()
    }
}

#[derive(Serialize)]
struct SearchKey<'a> {
    op: &'static str,
    question: &'a str,
    claim_date: Option<NaiveDate>,
    cfg: &'a RetrievalConfig,
}

#[derive(Serialize)]
struct CaptionKey<'a> {
    op: &'static str,
    image_sha256: &'a str,
    backend: BackendKind,
    max: usize,
}

impl Retriever {
    pub fn new(backend: Arc<dyn SearchBackend>, cfg: RetrievalConfig) -> Self {
        Self {
            backend,
            cfg,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: ResultCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.cfg
    }

    pub fn search_key(&self, question: &str, claim_date: Option<NaiveDate>) -> String {
        cache_key(&SearchKey {
            op: "search_web",
            question,
            claim_date,
            cfg: &self.cfg,
        })
    }

    pub fn caption_key(&self, image: &ImageData) -> String {
        cache_key(&CaptionKey {
            op: "reverse_image_captions",
            image_sha256: &image.sha256,
            backend: self.cfg.backend,
            max: MAX_CAPTIONS,
        })
    }

    fn cached<T, F>(&self, key: &str, fetch: F) -> Result<T, RetrievalError>
    where
        T: Serialize + for<'de> Deserialize<'de>,
        F: FnOnce() -> Result<T, RetrievalError>,
    {
        let Some(cache) = &self.cache else {
            return fetch();
        };
        match cache.get(key) {
            Ok(Some(bytes)) => match serde_json::from_slice(&bytes) {
                Ok(v) => return Ok(v),
                Err(e) => warn!(key, error = %e, "undecodable cache entry, refetching"),
            },
            Ok(None) => {}
            Err(e) => warn!(key, error = %e, "cache read failed, refetching"),
        }
        let value = fetch()?;
        let bytes = serde_json::to_vec(&value).expect("retrieval result serializes");
        if let Err(e) = cache.put(key, &bytes) {
            warn!(key, error = %e, "cache write failed");
        }
        Ok(value)
    }

    /// Web evidence for a question: filter, de-duplicate, then cap at `max_results`.
    pub fn search_web(
        &self,
        question: &str,
        claim_date: Option<NaiveDate>,
    ) -> Result<Vec<EvidenceSnippet>, RetrievalError> {
        if question.trim().is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        let key = self.search_key(question, claim_date);
        self.cached(&key, || {
            let raw = self.backend.search(question)?;
            let mut kept = dedup(filter_results(raw, claim_date, &self.cfg));
            kept.truncate(self.cfg.max_results);
            Ok(kept)
        })
    }

    /// Up to ten captions of matching images, ranked from 1.
    pub fn reverse_image_captions(&self, image: &ImageData) -> Result<Vec<ImageCaption>, RetrievalError> {
        let key = self.caption_key(image);
        self.cached(&key, || {
            let mut caps = self.backend.image_captions(image)?;
            caps.sort_by_key(|c| c.rank);
            caps.retain(|c| !c.caption_text.trim().is_empty());
            caps.truncate(MAX_CAPTIONS);
            for (i, c) in caps.iter_mut().enumerate() {
                c.rank = i + 1;
            }
            Ok(caps)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Fixed {
        snippets: Vec<EvidenceSnippet>,
        captions: Vec<ImageCaption>,
        calls: AtomicUsize,
    }

    impl SearchBackend for Fixed {
        fn search(&self, _: &str) -> Result<Vec<EvidenceSnippet>, RetrievalError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.snippets.clone())
        }

        fn image_captions(&self, _: &ImageData) -> Result<Vec<ImageCaption>, RetrievalError> {
            Ok(self.captions.clone())
        }
    }

    fn snip(i: usize, host: &str) -> EvidenceSnippet {
        EvidenceSnippet::new(
            format!("https://{host}/doc{i}"),
            format!("t{i}"),
            format!("text {i}"),
            None,
        )
        .unwrap()
    }

    fn image() -> ImageData {
        ImageData::from_bytes("x.png", b"\x89PNG\r\n\x1a\n1".to_vec()).unwrap()
    }

    #[test]
    fn filters_then_truncates_to_ten() {
        // 15 raw results, positions 3 and 7 blocklisted: survivors are the other 13
        // in order, and the first 10 of those are doc0..doc11 minus doc3 and doc7.
        let snippets: Vec<_> = (0..15)
            .map(|i| match i {
                3 => snip(i, "www.snopes.com"),
                7 => snip(i, "m.facebook.com"),
                _ => snip(i, "news.example.org"),
            })
            .collect();
        let backend = Arc::new(Fixed {
            snippets,
            captions: vec![],
            calls: AtomicUsize::new(0),
        });
        let r = Retriever::new(backend, RetrievalConfig::default());
        let got: Vec<_> = r.search_web("q", None).unwrap().into_iter().map(|s| s.url).collect();
        let expected: Vec<_> = [0, 1, 2, 4, 5, 6, 8, 9, 10, 11]
            .iter()
            .map(|i| format!("https://news.example.org/doc{i}"))
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn empty_question_rejected() {
        let backend = Arc::new(Fixed {
            snippets: vec![],
            captions: vec![],
            calls: AtomicUsize::new(0),
        });
        let r = Retriever::new(backend, RetrievalConfig::default());
        assert_eq!(r.search_web("  ", None), Err(RetrievalError::EmptyQuery));
        assert_eq!(r.search_web("q", None), Ok(vec![]));
    }

    #[test]
    fn warm_cache_skips_backend() {
        let dir = tempfile::tempdir().unwrap();
        let backend = Arc::new(Fixed {
            snippets: vec![snip(0, "a.com")],
            captions: vec![],
            calls: AtomicUsize::new(0),
        });
        let r = Retriever::new(backend.clone(), RetrievalConfig::default())
            .with_cache(ResultCache::open(dir.path()).unwrap());
        let a = r.search_web("q", None).unwrap();
        let b = r.search_web("q", None).unwrap();
        assert_eq!(a, b);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
        r.search_web("other", None).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn captions_truncate_to_ten_and_rerank() {
        let captions = (1..=12)
            .rev()
            .map(|rank| ImageCaption {
                source_url: format!("https://img.example/{rank}"),
                caption_text: format!("caption {rank}"),
                rank,
            })
            .collect();
        let backend = Arc::new(Fixed {
            snippets: vec![],
            captions,
            calls: AtomicUsize::new(0),
        });
        let r = Retriever::new(backend, RetrievalConfig::default());
        let caps = r.reverse_image_captions(&image()).unwrap();
        assert_eq!(caps.len(), 10);
        assert_eq!(caps[0].caption_text, "caption 1");
        assert_eq!(
            caps.iter().map(|c| c.rank).collect::<Vec<_>>(),
            (1..=10).collect::<Vec<_>>()
        );
    }

    #[test]
    fn prompt_text_is_bounded() {
        let s = EvidenceSnippet::new("https://a.com", "t", "é".repeat(2000), None).unwrap();
        assert_eq!(s.prompt_text().chars().count(), SNIPPET_PROMPT_CHARS);
        assert!(EvidenceSnippet::new("relative/path", "t", "x", None).is_none());
        assert!(EvidenceSnippet::new("https://a.com", "t", " ", None).is_none());
    }
}

//! HTTP clients for web search and reverse image search.
//!
//! Defaults target SerpAPI (DuckDuckGo engine for text, Google reverse image for
//! captions), but any endpoint returning the same result shape works.

use std::time::Duration;

use chrono::NaiveDate;
use reqwest::StatusCode;
use serde::Deserialize;

use super::{EvidenceSnippet, ImageCaption, RetrievalError, SearchBackend};
use crate::media::ImageData;

pub const ENV_SEARCH_KEY: &str = "SEARCH_API_KEY";
pub const ENV_SEARCH_URL: &str = "SEARCH_API_URL";
pub const ENV_IMAGE_KEY: &str = "IMAGE_SEARCH_API_KEY";
pub const ENV_IMAGE_URL: &str = "IMAGE_SEARCH_API_URL";

const DEFAULT_ENDPOINT: &str = "https://serpapi.com/search.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveSearchConfig {
    pub endpoint: String,
    pub api_key: String,
    pub engine: Option<String>,
    /// Raw results requested per query, before filtering.
    pub fetch: usize,
    pub timeout: Duration,
}

impl LiveSearchConfig {
    fn from_env(key_var: &str, url_var: &str, engine: &str) -> Result<Self, RetrievalError> {
        let api_key = std::env::var(key_var)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| RetrievalError::BackendUnavailable(format!("{key_var} is not set")))?;
        let endpoint = std::env::var(url_var)
            .ok()
            .filter(|u| !u.is_empty())
            .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
        Ok(Self {
            endpoint,
            api_key,
            engine: Some(engine.to_string()),
            fetch: 20,
            timeout: Duration::from_secs(30),
        })
    }

    pub fn search_from_env() -> Result<Self, RetrievalError> {
        Self::from_env(ENV_SEARCH_KEY, ENV_SEARCH_URL, "duckduckgo")
    }

    pub fn image_from_env() -> Result<Self, RetrievalError> {
        Self::from_env(ENV_IMAGE_KEY, ENV_IMAGE_URL, "google_reverse_image")
    }
}

#[derive(Debug, Deserialize)]
struct SearchPayload {
    #[serde(default, alias = "organic_results", alias = "organic")]
    results: Vec<RawResult>,
}

#[derive(Debug, Deserialize)]
struct RawResult {
    #[serde(alias = "link")]
    url: String,
    #[serde(default)]
    title: String,
    #[serde(default, alias = "body", alias = "text")]
    snippet: String,
    #[serde(default, alias = "published_date")]
    date: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ImagePayload {
    #[serde(default, alias = "image_results")]
    results: Vec<RawCaption>,
}

#[derive(Debug, Deserialize)]
struct RawCaption {
    #[serde(alias = "link")]
    source_url: String,
    #[serde(default, alias = "caption_text")]
    caption: Option<String>,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    snippet: Option<String>,
    #[serde(default, alias = "position")]
    rank: Option<usize>,
}

/// Accepts `YYYY-MM-DD`, RFC 3339 timestamps and a few common prose forms.
fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    if let Some(prefix) = raw.get(..10) {
        if let Ok(d) = NaiveDate::parse_from_str(prefix, "%Y-%m-%d") {
            return Some(d);
        }
    }
    ["%b %d, %Y", "%B %d, %Y", "%d %b %Y", "%d %B %Y"]
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(raw, f).ok())
}

fn client(timeout: Duration) -> Result<reqwest::blocking::Client, RetrievalError> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| RetrievalError::BackendUnavailable(e.to_string()))
}

fn send(req: reqwest::blocking::RequestBuilder) -> Result<reqwest::blocking::Response, RetrievalError> {
    let resp = req
        .send()
        .map_err(|e| RetrievalError::BackendUnavailable(e.to_string()))?;
    match resp.status() {
        StatusCode::TOO_MANY_REQUESTS | StatusCode::PAYMENT_REQUIRED => Err(RetrievalError::QuotaExceeded),
        s if !s.is_success() => Err(RetrievalError::BackendUnavailable(format!("HTTP {s}"))),
        _ => Ok(resp),
    }
}

pub struct HttpSearchBackend {
    cfg: LiveSearchConfig,
    http: reqwest::blocking::Client,
}

impl HttpSearchBackend {
    pub fn new(cfg: LiveSearchConfig) -> Result<Self, RetrievalError> {
        Ok(Self {
            http: client(cfg.timeout)?,
            cfg,
        })
    }

    pub fn search(&self, query: &str) -> Result<Vec<EvidenceSnippet>, RetrievalError> {
        let mut params = vec![
            ("q", query.to_string()),
            ("num", self.cfg.fetch.to_string()),
            ("api_key", self.cfg.api_key.clone()),
        ];
        if let Some(engine) = &self.cfg.engine {
            params.push(("engine", engine.clone()));
        }
        let payload: SearchPayload = send(self.http.get(&self.cfg.endpoint).query(&params))?
            .json()
            .map_err(|e| RetrievalError::BackendUnavailable(e.to_string()))?;
        Ok(payload
            .results
            .into_iter()
            .filter_map(|r| EvidenceSnippet::new(r.url, r.title, r.snippet, r.date.as_deref().and_then(parse_date)))
            .collect())
    }
}

pub struct HttpImageSearch {
    cfg: LiveSearchConfig,
    http: reqwest::blocking::Client,
}

impl HttpImageSearch {
    pub fn new(cfg: LiveSearchConfig) -> Result<Self, RetrievalError> {
        Ok(Self {
            http: client(cfg.timeout)?,
            cfg,
        })
    }

    pub fn captions(&self, image: &ImageData) -> Result<Vec<ImageCaption>, RetrievalError> {
        if !image.image_ref.starts_with("http://") && !image.image_ref.starts_with("https://") {
            return Err(RetrievalError::BackendUnavailable(format!(
                "reverse image search needs a public image URL, got {}",
                image.image_ref
            )));
        }
        let mut params = vec![
            ("image_url", image.image_ref.clone()),
            ("api_key", self.cfg.api_key.clone()),
        ];
        if let Some(engine) = &self.cfg.engine {
            params.push(("engine", engine.clone()));
        }
        let payload: ImagePayload = send(self.http.get(&self.cfg.endpoint).query(&params))?
            .json()
            .map_err(|e| RetrievalError::BackendUnavailable(e.to_string()))?;
        if payload.results.is_empty() {
            return Err(RetrievalError::ImageNotFound(image.sha256.clone()));
        }
        Ok(captions_from_raw(payload.results))
    }
}

fn captions_from_raw(raw: Vec<RawCaption>) -> Vec<ImageCaption> {
    raw.into_iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let text = r
                .caption
                .or_else(|| match (r.title, r.snippet) {
                    (Some(t), Some(s)) => Some(format!("{t}. {s}")),
                    (t, s) => t.or(s),
                })
                .filter(|t| !t.trim().is_empty())?;
            Some(ImageCaption {
                source_url: r.source_url,
                caption_text: text,
                rank: r.rank.unwrap_or(i + 1),
            })
        })
        .collect()
}

/// Live web search plus reverse image search behind one backend.
pub struct LiveSearchBackend {
    web: HttpSearchBackend,
    image: Option<HttpImageSearch>,
}

impl LiveSearchBackend {
    pub fn new(web: HttpSearchBackend, image: Option<HttpImageSearch>) -> Self {
        Self { web, image }
    }

    /// Web search is required; reverse image search is enabled when its key is set.
    pub fn from_env() -> Result<Self, RetrievalError> {
        let web = HttpSearchBackend::new(LiveSearchConfig::search_from_env()?)?;
        let image = match LiveSearchConfig::image_from_env() {
            Ok(cfg) => Some(HttpImageSearch::new(cfg)?),
            Err(_) => None,
        };
        Ok(Self { web, image })
    }
}

impl SearchBackend for LiveSearchBackend {
    fn search(&self, query: &str) -> Result<Vec<EvidenceSnippet>, RetrievalError> {
        self.web.search(query)
    }

    fn image_captions(&self, image: &ImageData) -> Result<Vec<ImageCaption>, RetrievalError> {
        match &self.image {
            Some(c) => c.captions(image),
            None => Err(RetrievalError::BackendUnavailable(format!(
                "{ENV_IMAGE_KEY} is not set"
            ))),
        }
    }
}

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use super::{EvidenceSnippet, ImageCaption, RetrievalError, SearchBackend};
use crate::media::ImageData;

/// Name of the caption fixture inside a corpus directory.
pub const CAPTIONS_FILE: &str = "captions.json";

#[derive(Debug, Deserialize)]
struct CorpusDoc {
    url: String,
    #[serde(default)]
    title: String,
    text: String,
    #[serde(default)]
    published_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureCaption {
    source_url: String,
    #[serde(alias = "caption_text")]
    caption: String,
}

#[derive(Debug, Clone)]
struct IndexedDoc {
    snippet: EvidenceSnippet,
    terms: HashSet<String>,
}

/// Directory of JSON documents plus a caption fixture keyed by image SHA-256.
///
/// A document matches a query when it contains at least one of the query's
/// content words; matches rank by the number of distinct query words they
/// contain, ties broken by file name.
#[derive(Debug, Clone)]
pub struct OfflineCorpus {
    root: PathBuf,
    docs: Vec<IndexedDoc>,
    captions: BTreeMap<String, Vec<FixtureCaption>>,
}

const STOPWORDS: &[&str] = &[
    "the",
    "and",
    "for",
    "are",
    "was",
    "were",
    "what",
    "which",
    "who",
    "whom",
    "when",
    "where",
    "why",
    "how",
    "did",
    "does",
    "has",
    "have",
    "had",
    "that",
    "this",
    "these",
    "those",
    "with",
    "from",
    "into",
    "about",
    "any",
    "there",
    "their",
    "they",
    "can",
    "could",
    "would",
    "should",
    "will",
    "been",
    "being",
    "its",
    "than",
    "then",
    "also",
    "not",
    "but",
    "you",
    "your",
    "provide",
    "specific",
    "claim",
    "claims",
    "mentioned",
    "according",
    "based",
    "used",
];

pub(crate) fn terms(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 3)
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

impl OfflineCorpus {
    pub fn open(root: &Path) -> Result<Self, RetrievalError> {
        let unavailable = |msg: String| RetrievalError::BackendUnavailable(msg);
        if !root.is_dir() {
            return Err(unavailable(format!(
                "corpus directory {} does not exist",
                root.display()
            )));
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(root)
            .map_err(|e| unavailable(format!("{}: {e}", root.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .filter(|p| p.file_name().is_some_and(|n| n != CAPTIONS_FILE))
            .collect();
        paths.sort();
        let mut docs = Vec::with_capacity(paths.len());
        for path in paths {
            let raw = std::fs::read_to_string(&path).map_err(|e| unavailable(format!("{}: {e}", path.display())))?;
            let doc: CorpusDoc =
                serde_json::from_str(&raw).map_err(|e| unavailable(format!("{}: {e}", path.display())))?;
            let terms = terms(&format!("{} {}", doc.title, doc.text));
            let snippet = EvidenceSnippet::new(doc.url, doc.title, doc.text, doc.published_date)
                .ok_or_else(|| unavailable(format!("{}: invalid url or empty text", path.display())))?;
            docs.push(IndexedDoc { snippet, terms });
        }
        let cap_path = root.join(CAPTIONS_FILE);
        let captions = if cap_path.exists() {
            let raw =
                std::fs::read_to_string(&cap_path).map_err(|e| unavailable(format!("{}: {e}", cap_path.display())))?;
            serde_json::from_str(&raw).map_err(|e| unavailable(format!("{}: {e}", cap_path.display())))?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            root: root.to_path_buf(),
            docs,
            captions,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

impl SearchBackend for OfflineCorpus {
    fn search(&self, query: &str) -> Result<Vec<EvidenceSnippet>, RetrievalError> {
        let q = terms(query);
        let mut scored: Vec<(usize, usize)> = self
            .docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.terms.intersection(&q).count(), i))
            .filter(|(score, _)| *score > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().map(|(_, i)| self.docs[i].snippet.clone()).collect())
    }

    fn image_captions(&self, image: &ImageData) -> Result<Vec<ImageCaption>, RetrievalError> {
        let caps = self
            .captions
            .get(&image.sha256)
            .ok_or_else(|| RetrievalError::ImageNotFound(image.sha256.clone()))?;
        Ok(caps
            .iter()
            .enumerate()
            .map(|(i, c)| ImageCaption {
                source_url: c.source_url.clone(),
                caption_text: c.caption.clone(),
                rank: i + 1,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write_doc(dir: &Path, name: &str, url: &str, text: &str) {
        std::fs::write(
            dir.join(name),
            json!({"url": url, "title": "", "text": text, "published_date": "2020-05-01"}).to_string(),
        )
        .unwrap();
    }

    #[test]
    fn returns_matches_in_rank_order() {
        let dir = tempfile::tempdir().unwrap();
        write_doc(
            dir.path(),
            "a.json",
            "https://a.com/1",
            "paycheck protection program loans",
        );
        write_doc(dir.path(), "b.json", "https://b.com/1", "protection of wildlife");
        write_doc(
            dir.path(),
            "c.json",
            "https://c.com/1",
            "paycheck protection program average grant",
        );
        write_doc(dir.path(), "d.json", "https://d.com/1", "unrelated gardening");
        let corpus = OfflineCorpus::open(dir.path()).unwrap();
        let urls: Vec<_> = corpus
            .search("What was the average PPP paycheck protection grant?")
            .unwrap()
            .into_iter()
            .map(|s| s.url)
            .collect();
        assert_eq!(urls, ["https://c.com/1", "https://a.com/1", "https://b.com/1"]);
        assert!(corpus.search("zebra").unwrap().is_empty());
    }

    #[test]
    fn caption_fixture_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageData::from_bytes("p.png", b"\x89PNG\r\n\x1a\nabc".to_vec()).unwrap();
        let caps: Vec<_> = (0..4)
            .map(|i| json!({"source_url": format!("https://n.com/{i}"), "caption": format!("cap {i}")}))
            .collect();
        std::fs::write(
            dir.path().join(CAPTIONS_FILE),
            json!({ img.sha256.clone(): caps }).to_string(),
        )
        .unwrap();
        let corpus = OfflineCorpus::open(dir.path()).unwrap();
        assert!(corpus.is_empty());
        let got = corpus.image_captions(&img).unwrap();
        assert_eq!(got.len(), 4);
        assert_eq!(got[3].rank, 4);
        assert_eq!(got[0].caption_text, "cap 0");

        let other = ImageData::from_bytes("q.png", b"\x89PNG\r\n\x1a\nzzz".to_vec()).unwrap();
        assert!(matches!(
            corpus.image_captions(&other),
            Err(RetrievalError::ImageNotFound(_))
        ));
    }

    #[test]
    fn missing_directory_is_unavailable() {
        let err = OfflineCorpus::open(Path::new("/definitely/not/here")).unwrap_err();
        assert!(matches!(err, RetrievalError::BackendUnavailable(_)));
    }
}

//! Test scaffolding shared by unit tests, integration tests and the CLI tests.

use std::collections::HashMap;
use std::sync::Arc;

use crate::context::StageContext;
use crate::media::ImageData;
use crate::provider::{MockProvider, PromptRegistry};
use crate::retrieval::{EvidenceSnippet, ImageCaption, RetrievalConfig, RetrievalError, Retriever, SearchBackend};
use crate::trace::Tracer;

/// In-memory search backend. Queries matching a registered substring get that
/// entry's results, everything else gets the fallback.
#[derive(Default, Clone)]
pub struct MemoryBackend {
    by_query: Vec<(String, Vec<EvidenceSnippet>)>,
    fallback: Vec<EvidenceSnippet>,
    captions: HashMap<String, Vec<ImageCaption>>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn always(snippets: Vec<EvidenceSnippet>) -> Self {
        Self {
            fallback: snippets,
            ..Self::default()
        }
    }

    pub fn when(mut self, query_contains: &str, snippets: Vec<EvidenceSnippet>) -> Self {
        self.by_query.push((query_contains.to_lowercase(), snippets));
        self
    }

    pub fn with_captions(mut self, image_sha256: &str, captions: Vec<ImageCaption>) -> Self {
        self.captions.insert(image_sha256.to_string(), captions);
        self
    }
}

impl SearchBackend for MemoryBackend {
    fn search(&self, query: &str) -> Result<Vec<EvidenceSnippet>, RetrievalError> {
        let q = query.to_lowercase();
        Ok(self
            .by_query
            .iter()
            .find(|(k, _)| q.contains(k.as_str()))
            .map(|(_, s)| s.clone())
            .unwrap_or_else(|| self.fallback.clone()))
    }

    fn image_captions(&self, image: &ImageData) -> Result<Vec<ImageCaption>, RetrievalError> {
        self.captions
            .get(&image.sha256)
            .cloned()
            .ok_or_else(|| RetrievalError::ImageNotFound(image.image_ref.clone()))
    }
}

/// Undated snippet with a title derived from the URL.
pub fn snippet(url: &str, text: &str) -> EvidenceSnippet {
    EvidenceSnippet::new(url, format!("About {url}"), text, None).expect("valid test snippet")
}

/// A PNG-signature payload; enough for format sniffing and hashing.
pub fn tiny_png(seed: &[u8]) -> Vec<u8> {
    let mut bytes = b"\x89PNG\r\n\x1a\n".to_vec();
    bytes.extend_from_slice(seed);
    bytes
}

/// Owns everything a [`StageContext`] borrows.
pub struct Harness {
    pub provider: MockProvider,
    pub prompts: PromptRegistry,
    pub retriever: Retriever,
    pub tracer: Tracer,
}

impl Harness {
    pub fn new(provider: MockProvider) -> Self {
        Self {
            provider,
            prompts: PromptRegistry::builtin(),
            retriever: Retriever::new(Arc::new(MemoryBackend::new()), RetrievalConfig::default()),
            tracer: Tracer::new(true),
        }
    }

    pub fn with_backend(mut self, backend: impl SearchBackend + 'static) -> Self {
        self.retriever = Retriever::new(Arc::new(backend), RetrievalConfig::default());
        self
    }

    pub fn with_retriever(mut self, retriever: Retriever) -> Self {
        self.retriever = retriever;
        self
    }

    pub fn ctx(&self) -> StageContext<'_> {
        StageContext::new(&self.provider, &self.prompts, &self.retriever, &self.tracer)
    }
}

/// A three-claim end-to-end fixture: dataset, offline corpus, caption
/// fixture, one claim image, and a deterministic mock whose replies depend
/// only on prompt bindings (safe under any worker width).
pub mod golden {
    use std::path::{Path, PathBuf};
    use std::sync::Arc;

    use serde_json::json;

    use super::tiny_png;
    use crate::evalharness::Stores;
    use crate::media::sha256_hex;
    use crate::provider::{ids, MockProvider, PromptInstance, PromptRegistry, Provider};
    use crate::retrieval::{OfflineCorpus, RetrievalConfig, Retriever, CAPTIONS_FILE};

    pub struct GoldenScenario {
        pub root: PathBuf,
        pub dataset: PathBuf,
        pub corpus: PathBuf,
    }

    pub const IMAGE_REF: &str = "img/pompeo.png";

    pub fn image_bytes() -> Vec<u8> {
        tiny_png(b"pompeo-doha")
    }

    fn docs() -> Vec<(&'static str, serde_json::Value)> {
        vec![
            (
                "ppp-sba",
                json!({
                    "url": "https://www.sba.gov/ppp/report",
                    "title": "Paycheck Protection Program report",
                    "text": "Paycheck Protection Program loans averaged about $11,000 per employee across 5.2 million loans. Loans were forgivable when spent on payroll.",
                    "published_date": "2020-12-01"
                }),
            ),
            (
                "ppp-snopes",
                json!({
                    "url": "https://www.snopes.com/fact-check/ppp-grant",
                    "title": "Did the Paycheck Protection Program pay grants per employee?",
                    "text": "Fact check of the Paycheck Protection Program average per employee claim.",
                    "published_date": "2021-01-15"
                }),
            ),
            (
                "ppp-stale",
                json!({
                    "url": "https://archive.example.org/paycheck-1999",
                    "title": "Paycheck program history",
                    "text": "An unrelated paycheck program from 1999 paid an average of $500 per employee.",
                    "published_date": "1999-05-01"
                }),
            ),
            (
                "pompeo-doha",
                json!({
                    "url": "https://www.state.gov/pompeo-doha",
                    "title": "Secretary Pompeo in Doha",
                    "text": "Secretary Mike Pompeo met Taliban co-founder Mullah Abdul Ghani Baradar in Doha on November 21, 2020. No peace deal was signed at that meeting.",
                    "published_date": "2020-11-21"
                }),
            ),
            (
                "knee-ap",
                json!({
                    "url": "https://apnews.com/biden-kneels-delaware",
                    "title": "Biden kneels at Delaware church",
                    "text": "Joe Biden knelt at a Delaware church during a meeting with community leaders on June 1, 2020, not during the national anthem.",
                    "published_date": "2020-06-02"
                }),
            ),
            (
                "knee-facebook",
                json!({
                    "url": "https://www.facebook.com/posts/biden-anthem",
                    "title": "Biden anthem post",
                    "text": "Joe Biden took a knee during the national anthem!",
                    "published_date": "2020-06-05"
                }),
            ),
        ]
    }

    /// Writes the fixture under `root` and returns its paths.
    pub fn write_golden(root: &Path) -> std::io::Result<GoldenScenario> {
        let corpus = root.join("corpus");
        std::fs::create_dir_all(&corpus)?;
        std::fs::create_dir_all(root.join("img"))?;
        for (name, doc) in docs() {
            std::fs::write(corpus.join(format!("{name}.json")), serde_json::to_string_pretty(&doc)?)?;
        }
        let image = image_bytes();
        std::fs::write(root.join(IMAGE_REF), &image)?;
        let captions = json!({
            sha256_hex(&image): [
                {"source_url": "https://www.reuters.com/world/pompeo-doha", "caption": "Secretary of State Mike Pompeo meets with Taliban co-founder Mullah Abdul Ghani Baradar in Doha"},
                {"source_url": "https://www.aljazeera.com/news/pompeo-taliban", "caption": "Pompeo and Baradar at talks in Qatar"}
            ]
        });
        std::fs::write(corpus.join(CAPTIONS_FILE), serde_json::to_string_pretty(&captions)?)?;
        let records = [
            json!({"id": "c1-ppp", "claim_text": "The Paycheck Protection Program on average provided a grant of around $11,000 per employee.", "claim_date": "2021-03-01", "gold_label": "supported"}),
            json!({"id": "c2-pompeo", "claim_text": "Photo shows Mike Pompeo meeting a Taliban leader in Doha.", "image_ref": IMAGE_REF, "claim_date": "2020-11-25", "gold_label": "supported"}),
            json!({"id": "c3-knee", "claim_text": "Joe Biden took a knee during the national anthem.", "claim_date": "2020-06-10", "gold_label": "refuted"}),
        ];
        let dataset = root.join("claims.jsonl");
        let lines: Vec<String> = records.iter().map(|r| r.to_string()).collect();
        std::fs::write(&dataset, lines.join("\n") + "\n")?;
        Ok(GoldenScenario {
            root: root.to_path_buf(),
            dataset,
            corpus,
        })
    }

    /// Offline stores over the fixture corpus with the given provider.
    pub fn stores(scn: &GoldenScenario, provider: Arc<dyn Provider>) -> Stores {
        let corpus = OfflineCorpus::open(&scn.corpus).expect("golden corpus opens");
        Stores {
            provider,
            prompts: PromptRegistry::builtin(),
            retriever: Retriever::new(Arc::new(corpus), RetrievalConfig::default()),
            image_base: Some(scn.root.clone()),
        }
    }

    #[derive(Clone, Copy)]
    enum Topic {
        Ppp,
        Pompeo,
        Knee,
    }

    fn topic(p: &PromptInstance) -> Topic {
        let text = p
            .binding("claim")
            .or(p.binding("question"))
            .unwrap_or_default()
            .to_lowercase();
        if text.contains("pompeo") || text.contains("taliban") || text.contains("photo") {
            Topic::Pompeo
        } else if text.contains("knee") || text.contains("biden") {
            Topic::Knee
        } else {
            Topic::Ppp
        }
    }

    fn subject(t: Topic) -> &'static str {
        match t {
            Topic::Ppp => "the Paycheck Protection Program average per employee",
            Topic::Pompeo => "Pompeo meeting Taliban leader Baradar in Doha",
            Topic::Knee => "Joe Biden kneeling in Delaware",
        }
    }

    fn steps_so_far(p: &PromptInstance) -> usize {
        p.binding("qa_pairs")
            .map_or(0, |qa| qa.lines().filter(|l| l.starts_with('Q')).count())
    }

    fn verdict(t: Topic, cot: bool) -> String {
        let (label, why) = match t {
            Topic::Ppp => (
                "supported",
                "SBA data show Paycheck Protection Program loans averaged about $11,000 per employee.",
            ),
            Topic::Pompeo => (
                "supported",
                "Captions and State Department records show Pompeo met Taliban co-founder Baradar in Doha.",
            ),
            Topic::Knee => (
                "refuted",
                "Biden knelt at a Delaware church, not during the national anthem.",
            ),
        };
        let reasoning = if cot {
            "Step 1: compare the claim with each answer.\nStep 2: the answers agree with one reading.\n"
        } else {
            ""
        };
        format!("{reasoning}VERDICT: {label}\nEXPLANATION: {why}")
    }

    /// Deterministic provider for the fixture: every reply is a pure function
    /// of the prompt's template and bindings.
    pub fn mock() -> MockProvider {
        MockProvider::new()
            .reply(
                ids::CLAIM_GENERATION,
                "IMAGE_CONTEXT: The image shows Mike Pompeo standing next to a bearded man in a formal meeting room.",
            )
            .on(ids::ROUTE_QUESTION, |p| {
                let q = p.binding("question").unwrap_or_default().to_lowercase();
                if q.contains("photo") || q.contains("image") { "ROUTE: IMAGE" } else { "ROUTE: WEB" }.into()
            })
            .on(ids::FIRST_QUESTION, |p| {
                match topic(p) {
                    Topic::Ppp => "QUESTION: What was the average Paycheck Protection Program loan per employee?",
                    Topic::Pompeo => "QUESTION: Who is the man standing next to Mike Pompeo in the photo?",
                    Topic::Knee => "QUESTION: Where did Joe Biden kneel in June 2020?",
                }
                .into()
            })
            .on(ids::FOLLOWUP_CHECK, |p| {
                format!("FOLLOWUP_NEEDED: {}", if steps_so_far(p) >= 2 { "False" } else { "True" })
            })
            .on(ids::FOLLOWUP_QUESTION, |p| {
                format!("QUESTION: What do records show about {} (follow-up {})?", subject(topic(p)), steps_so_far(p) + 1)
            })
            .on(ids::SUBQ_QUESTIONS, |p| {
                let s = subject(topic(p));
                format!("QUESTION 1: What is known about {s}?\nQUESTION 2: Which sources report on {s}?\nQUESTION 3: When did reports on {s} appear?")
            })
            .on(ids::TORAG_FIRST_QUESTIONS, |p| {
                let s = subject(topic(p));
                (1..=3).map(|b| format!("QUESTION {b}: Branch {b}: what is reported about {s}?\n")).collect()
            })
            .on(ids::TORAG_FOLLOWUP_QUESTIONS, |p| {
                let s = subject(topic(p));
                let n = steps_so_far(p);
                (1..=3).map(|b| format!("QUESTION {b}: Step {n} branch {b}: which sources confirm {s}?\n")).collect()
            })
            .reply(ids::QA_ELIMINATION, "CHOICE: 1")
            .on(ids::IMAGE_QA, |p| {
                if p.binding("captions").unwrap_or_default().contains("Baradar") {
                    "ANSWER: The man is Taliban co-founder Mullah Abdul Ghani Baradar.".into()
                } else {
                    "ANSWER: The image alone does not identify him.".into()
                }
            })
            .on(ids::WEB_ANSWER, |p| {
                let snippets = p.binding("snippets").unwrap_or_default();
                let first = snippets.lines().nth(1).unwrap_or_default();
                let sentence = first.split(". ").next().unwrap_or(first).trim_end_matches('.');
                format!("ANSWER: According to the retrieved sources, {sentence}.")
            })
            .on(ids::VERACITY_STANDARD, |p| verdict(topic(p), false))
            .on(ids::VERACITY_COT, |p| verdict(topic(p), true))
            .on(ids::COVE_QUESTIONS, |p| {
                let s = subject(topic(p));
                format!("QUESTION 1: Is there a record of {s}?\nQUESTION 2: Who reported on {s}?")
            })
            .reply(ids::COVE_CORRECTION, "NO DISCREPANCY")
    }
}

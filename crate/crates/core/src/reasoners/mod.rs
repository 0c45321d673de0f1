//! Evidence-gathering strategies: independent sub-questions, a sequential
//! chain of RAG question-answer steps, and a branching tree with elimination.
//!
//! All three share question routing, answer generation and the follow-up check.

mod corag;
mod subq;
mod torag;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::context::StageContext;
use crate::domain::{EvidenceLog, MultimodalClaim, QAPair, Question, QuestionKind};
use crate::error::{PipelineError, Result};
use crate::provider::{bindings, envelope, ids};
use crate::retrieval::{EvidenceSnippet, ImageCaption};
use crate::trace::{stage, TraceEvent};

pub use corag::run_corag;
pub use subq::run_subq;
pub(crate) use torag::fan_out;
pub use torag::{generate_branch_questions, qa_elimination, run_torag, BranchCandidate};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerConfig {
    pub max_steps: usize,
    pub branch_factor: usize,
    pub max_subquestions: usize,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self {
            max_steps: 6,
            branch_factor: 3,
            max_subquestions: 6,
        }
    }
}

impl ReasonerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps < 1 {
            return Err("max_steps must be at least 1".into());
        }
        if self.branch_factor < 2 {
            return Err("branch_factor must be at least 2".into());
        }
        if self.max_subquestions < 1 {
            return Err("max_subquestions must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasonerKind {
    Subq,
    Corag,
    Torag,
}

impl ReasonerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonerKind::Subq => "subq",
            ReasonerKind::Corag => "corag",
            ReasonerKind::Torag => "torag",
        }
    }
}

impl fmt::Display for ReasonerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReasonerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "subq" => Ok(ReasonerKind::Subq),
            "corag" => Ok(ReasonerKind::Corag),
            "torag" => Ok(ReasonerKind::Torag),
            _ => Err(format!("unknown reasoner {s:?} (expected subq, corag or torag)")),
        }
    }
}

/// Runs the configured strategy.
pub fn run_reasoner(
    kind: ReasonerKind,
    ctx: &StageContext<'_>,
    mm: &MultimodalClaim,
    captions: &[ImageCaption],
    cfg: &ReasonerConfig,
) -> Result<EvidenceLog> {
    match kind {
        ReasonerKind::Subq => run_subq(ctx, mm, captions, cfg),
        ReasonerKind::Corag => run_corag(ctx, mm, captions, cfg),
        ReasonerKind::Torag => run_torag(ctx, mm, captions, cfg),
    }
}

pub(crate) fn format_qa_pairs(pairs: &[QAPair]) -> String {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| format!("Q{n}: {}\nA{n}: {}", p.question.text, p.answer, n = i + 1))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn format_snippets(snippets: &[EvidenceSnippet]) -> String {
    snippets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let date = s.published_date.map(|d| format!(", {d}")).unwrap_or_default();
            format!("[{}] {} ({}{date})\n{}", i + 1, s.title, s.url, s.prompt_text())
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn format_captions(captions: &[ImageCaption]) -> String {
    if captions.is_empty() {
        return "(none)".into();
    }
    captions
        .iter()
        .map(|c| format!("[{}] {} ({})", c.rank, c.caption_text, c.source_url))
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn image_context_or_none(mm: &MultimodalClaim) -> &str {
    if mm.image_context.is_empty() {
        "(no image)"
    } else {
        &mm.image_context
    }
}

/// Decides whether a question is about the claim image or needs web search.
///
/// Claims without any image material always route to web search without a
/// model call. Unparseable replies default to web.
pub fn route_question(
    ctx: &StageContext<'_>,
    mm: &MultimodalClaim,
    captions: &[ImageCaption],
    question: &str,
) -> Result<QuestionKind> {
    if mm.image_context.is_empty() && captions.is_empty() {
        return Ok(QuestionKind::Web);
    }
    let reply = ctx.ask(
        "route_question",
        ids::ROUTE_QUESTION,
        bindings([("claim", mm.claim.as_str()), ("question", question)]),
        None,
    )?;
    Ok(parse_route(&reply))
}

pub(crate) fn parse_route(reply: &str) -> QuestionKind {
    let value = envelope::lenient(reply, "ROUTE").unwrap_or_default();
    match envelope::first_word(&value).map(|w| w.to_ascii_uppercase()).as_deref() {
        Some("IMAGE") => QuestionKind::Image,
        _ => QuestionKind::Web,
    }
}

/// Routes the text and builds the question.
pub(crate) fn make_question(
    ctx: &StageContext<'_>,
    mm: &MultimodalClaim,
    captions: &[ImageCaption],
    text: String,
    step_index: usize,
) -> Result<Question> {
    let kind = route_question(ctx, mm, captions, &text)?;
    Ok(Question::new(text, kind, step_index)?)
}

/// Answers from the image context and captions, or from filtered web search.
pub fn answer_question(
    ctx: &StageContext<'_>,
    question: Question,
    mm: &MultimodalClaim,
    captions: &[ImageCaption],
) -> Result<QAPair> {
    match question.kind {
        QuestionKind::Image => {
            let reply = ctx.ask(
                "image_qa",
                ids::IMAGE_QA,
                bindings([
                    ("question", question.text.as_str()),
                    ("image_context", image_context_or_none(mm)),
                    ("captions", format_captions(captions).as_str()),
                ]),
                None,
            )?;
            let sources = captions.iter().map(|c| c.source_url.clone()).collect();
            Ok(pair_from_reply(question, &reply, sources))
        }
        QuestionKind::Web => web_answer(ctx, question, mm),
    }
}

/// Retrieval-backed answer, regardless of the question's routing.
pub(crate) fn web_answer(ctx: &StageContext<'_>, question: Question, mm: &MultimodalClaim) -> Result<QAPair> {
    let snippets = ctx.search(&question.text, mm.claim_date)?;
    if snippets.is_empty() {
        return Ok(QAPair::no_evidence(question));
    }
    let reply = ctx.ask(
        "web_answer",
        ids::WEB_ANSWER,
        bindings([
            ("question", question.text.as_str()),
            ("snippets", format_snippets(&snippets).as_str()),
        ]),
        None,
    )?;
    let sources = snippets.into_iter().map(|s| s.url).collect();
    Ok(pair_from_reply(question, &reply, sources))
}

fn pair_from_reply(question: Question, reply: &str, sources: Vec<String>) -> QAPair {
    match envelope::lenient_block(reply, "ANSWER") {
        Some(answer) => QAPair {
            question,
            answer,
            sources,
        },
        None => QAPair::no_evidence(question),
    }
}

/// True when more evidence is needed. Unparseable replies count as true.
pub fn followup_check(ctx: &StageContext<'_>, mm: &MultimodalClaim, log: &EvidenceLog) -> Result<bool> {
    if log.is_empty() {
        return Err(PipelineError::Precondition(
            "follow-up check needs at least one pair".into(),
        ));
    }
    let reply = ctx.ask(
        "followup_check",
        ids::FOLLOWUP_CHECK,
        bindings([
            ("claim", mm.claim.as_str()),
            ("image_context", image_context_or_none(mm)),
            ("qa_pairs", format_qa_pairs(&log.pairs).as_str()),
        ]),
        None,
    )?;
    Ok(parse_followup(&reply))
}

pub(crate) fn parse_followup(reply: &str) -> bool {
    envelope::lenient(reply, "FOLLOWUP_NEEDED")
        .as_deref()
        .and_then(envelope::parse_bool)
        .unwrap_or(true)
}

fn normalized(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub(crate) fn is_repeat(question: &str, prior: &[&str]) -> bool {
    let q = normalized(question);
    prior.iter().any(|p| normalized(p) == q)
}

pub(crate) fn record_qa(ctx: &StageContext<'_>, stage_name: &str, pair: &QAPair) {
    ctx.tracer
        .record(TraceEvent::new(stage_name).with_detail(serde_json::to_value(pair).expect("pair serializes")));
}

pub(crate) fn record_pair(ctx: &StageContext<'_>, pair: &QAPair) {
    record_qa(ctx, stage::QA, pair);
}

pub(crate) fn retry_note(reason: &str) -> String {
    format!("\nNote: {reason}\n")
}

pub(crate) fn note_warning(ctx: &StageContext<'_>, message: String, detail: serde_json::Value) {
    ctx.tracer
        .record(TraceEvent::new(stage::WARNING).with_detail(json!({ "message": message, "detail": detail })));
    tracing::warn!("{message}");
}

//! Veracity prediction over a gathered evidence log, plus the optional
//! chain-of-verification pass that may correct the explanation and label.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::context::StageContext;
use crate::domain::{
    parse_label, EvidenceLog, Label, MultimodalClaim, QAPair, Question, QuestionKind, VeracityVerdict,
};
use crate::error::{PipelineError, Result};
use crate::provider::{bindings, envelope, ids};
use crate::reasoners::{fan_out, format_qa_pairs, image_context_or_none, note_warning, web_answer};
use crate::trace::{stage, TraceEvent};

/// Upper bound on CoVe verification questions.
pub const MAX_VERIFICATION_QUESTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VeracityKind {
    Standard,
    Cot,
    CotCove,
}

impl VeracityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VeracityKind::Standard => "standard",
            VeracityKind::Cot => "cot",
            VeracityKind::CotCove => "cot_cove",
        }
    }
}

impl fmt::Display for VeracityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VeracityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "standard" => Ok(VeracityKind::Standard),
            "cot" => Ok(VeracityKind::Cot),
            "cot_cove" => Ok(VeracityKind::CotCove),
            _ => Err(format!(
                "unknown veracity variant {s:?} (expected standard, cot or cot_cove)"
            )),
        }
    }
}

/// The intermediate state of one CoVe pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationRound {
    pub questions: Vec<Question>,
    pub answers: Vec<QAPair>,
    pub correction_applied: bool,
}

fn label_word(value: &str) -> Option<&str> {
    value.split(|c: char| !c.is_ascii_alphabetic()).find(|w| !w.is_empty())
}

/// Parses the `VERDICT:` / `EXPLANATION:` envelope. The last envelope wins, so
/// reasoning text before it is ignored. A bare label word is also accepted.
pub fn parse_verdict(reply: &str) -> Result<VeracityVerdict> {
    let raw = envelope::field_last(reply, "VERDICT").or_else(|| {
        let trimmed = reply.trim();
        (label_word(trimmed).map(str::len) == Some(trimmed.trim_end_matches('.').len())).then(|| trimmed.to_string())
    });
    let Some(raw) = raw else {
        return Err(PipelineError::VerdictParse(format!(
            "no VERDICT line in reply: {:.80}",
            reply.trim()
        )));
    };
    let label = label_word(&raw)
        .and_then(|w| parse_label(w).ok())
        .ok_or_else(|| PipelineError::VerdictParse(format!("{raw:?} is not a veracity label")))?;
    let explanation = envelope::block_last(reply, "EXPLANATION", &["VERDICT", "DISCREPANCY"]).unwrap_or_default();
    VeracityVerdict::new(label, explanation).map_err(|e| PipelineError::VerdictParse(e.to_string()))
}

/// URLs cited in `text` that are not among `sources`.
pub fn uncited_urls<'a>(text: &str, sources: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let norm = |u: &str| u.trim_end_matches('/').to_string();
    let known: Vec<String> = sources.into_iter().map(norm).collect();
    text.split(|c: char| c.is_whitespace() || matches!(c, '(' | '<' | '[' | '"'))
        .filter(|t| t.starts_with("http://") || t.starts_with("https://"))
        .map(|t| t.trim_end_matches(['.', ',', ';', ':', ')', ']', '>', '"', '\'']))
        .filter(|u| !known.contains(&norm(u)))
        .map(str::to_string)
        .collect()
}

fn predict(
    ctx: &StageContext<'_>,
    variant: &str,
    template: &str,
    mm: &MultimodalClaim,
    log: &EvidenceLog,
) -> Result<VeracityVerdict> {
    if log.is_empty() {
        return Err(PipelineError::Precondition(
            "veracity prediction needs at least one QA pair".into(),
        ));
    }
    let reply = ctx.ask(
        variant,
        template,
        bindings([
            ("claim", mm.claim.as_str()),
            ("image_context", image_context_or_none(mm)),
            ("qa_pairs", format_qa_pairs(&log.pairs).as_str()),
        ]),
        None,
    )?;
    let verdict = parse_verdict(&reply)?;
    let reasoning = reply
        .lines()
        .take_while(|l| {
            envelope::field_first(l, "VERDICT").is_none() && envelope::field_first(l, "EXPLANATION").is_none()
        })
        .collect::<Vec<_>>()
        .join("\n");
    let uncited = uncited_urls(&verdict.explanation, log.sources());
    if !uncited.is_empty() {
        note_warning(
            ctx,
            "explanation cites URLs outside the evidence log".into(),
            json!({ "urls": uncited }),
        );
    }
    ctx.tracer.record(TraceEvent::new(stage::VERDICT).with_detail(json!({
        "variant": variant,
        "verdict": verdict,
        "reasoning": reasoning.trim(),
    })));
    Ok(verdict)
}

/// Label and explanation in one call, no induced reasoning.
pub fn predict_standard(ctx: &StageContext<'_>, mm: &MultimodalClaim, log: &EvidenceLog) -> Result<VeracityVerdict> {
    predict(ctx, "standard", ids::VERACITY_STANDARD, mm, log)
}

/// Zero-shot chain of thought; only the final envelope is parsed.
pub fn predict_cot(ctx: &StageContext<'_>, mm: &MultimodalClaim, log: &EvidenceLog) -> Result<VeracityVerdict> {
    predict(ctx, "cot", ids::VERACITY_COT, mm, log)
}

fn no_discrepancy(reply: &str) -> bool {
    if envelope::field_last(reply, "VERDICT").is_some() {
        return false;
    }
    let upper = reply.to_ascii_uppercase();
    if upper.contains("NO DISCREPANCY") {
        return true;
    }
    matches!(
        envelope::field_first(reply, "DISCREPANCY")
            .as_deref()
            .and_then(label_word)
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("none" | "no")
    )
}

/// One verification round: questions from the explanation, retrieval-backed
/// answers, then a correction check. Returns the input unchanged when the
/// check finds no discrepancy or verification answering fails.
pub fn cove_refine(ctx: &StageContext<'_>, mm: &MultimodalClaim, verdict: &VeracityVerdict) -> Result<VeracityVerdict> {
    if verdict.label == Label::Failed {
        return Err(PipelineError::Precondition(
            "CoVe needs a supported or refuted verdict".into(),
        ));
    }
    let max = MAX_VERIFICATION_QUESTIONS.to_string();
    let reply = ctx.ask(
        "cove_questions",
        ids::COVE_QUESTIONS,
        bindings([
            ("claim", mm.claim.as_str()),
            ("image_context", image_context_or_none(mm)),
            ("explanation", verdict.explanation.as_str()),
            ("max_questions", max.as_str()),
        ]),
        None,
    )?;
    let mut texts = envelope::list_items(&reply, "QUESTION");
    texts.truncate(MAX_VERIFICATION_QUESTIONS);
    let questions = texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| Question::new(t, QuestionKind::Web, i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut round = VerificationRound {
        questions: questions.clone(),
        answers: Vec::new(),
        correction_applied: false,
    };
    let keep = |round: &VerificationRound, reason: &str| {
        note_warning(ctx, format!("CoVe kept the original verdict: {reason}"), json!({}));
        record_cove(ctx, round, verdict, verdict);
        Ok(verdict.clone())
    };
    if questions.is_empty() {
        return keep(&round, "no verification questions");
    }
    let answered = fan_out(ctx, questions, |child, _, q| web_answer(child, q, mm));
    match answered.into_iter().collect::<Result<Vec<_>>>() {
        Ok(answers) => round.answers = answers,
        Err(e) => return keep(&round, &format!("verification answering failed: {e}")),
    }
    let label = verdict.label.to_string();
    let reply = ctx.ask(
        "cove_correction",
        ids::COVE_CORRECTION,
        bindings([
            ("claim", mm.claim.as_str()),
            ("image_context", image_context_or_none(mm)),
            ("label", label.as_str()),
            ("explanation", verdict.explanation.as_str()),
            ("qa_pairs", format_qa_pairs(&round.answers).as_str()),
        ]),
        None,
    )?;
    if no_discrepancy(&reply) {
        record_cove(ctx, &round, verdict, verdict);
        return Ok(verdict.clone());
    }
    let revised = parse_verdict(&reply)?;
    let mut out = revised.clone();
    out.corrected = revised.label != verdict.label || revised.explanation != verdict.explanation;
    round.correction_applied = out.corrected;
    record_cove(ctx, &round, verdict, &out);
    Ok(out)
}

fn record_cove(ctx: &StageContext<'_>, round: &VerificationRound, original: &VeracityVerdict, last: &VeracityVerdict) {
    ctx.tracer.record(TraceEvent::new(stage::COVE).with_detail(json!({
        "round": round,
        "original": original,
        "final": last,
    })));
}

/// Runs the configured variant. CoVe is skipped for a failed CoT verdict.
pub fn predict_veracity(
    kind: VeracityKind,
    ctx: &StageContext<'_>,
    mm: &MultimodalClaim,
    log: &EvidenceLog,
) -> Result<VeracityVerdict> {
    match kind {
        VeracityKind::Standard => predict_standard(ctx, mm, log),
        VeracityKind::Cot => predict_cot(ctx, mm, log),
        VeracityKind::CotCove => {
            let v = predict_cot(ctx, mm, log)?;
            if v.label == Label::Failed {
                return Ok(v);
            }
            cove_refine(ctx, mm, &v)
        }
    }
}

//! Core data model shared by every pipeline stage. No I/O happens here.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Answer text used when retrieval produced nothing to answer from.
pub const NO_EVIDENCE: &str = "no evidence found";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("claim text must not be empty")]
    EmptyClaim,
    #[error("question text must not be empty")]
    EmptyQuestion,
    #[error("answer text must not be empty")]
    EmptyAnswer,
    #[error("explanation must not be empty for a {0} verdict")]
    MissingExplanation(Label),
}

/// Veracity label. `Failed` means the evidence was insufficient to decide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Supported,
    Refuted,
    Failed,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Supported, Label::Refuted, Label::Failed];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Supported => "supported",
            Label::Refuted => "refuted",
            Label::Failed => "failed",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Case-insensitive, whitespace-tolerant label parser.
pub fn parse_label(raw: &str) -> Result<Label, DomainError> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "supported" => Ok(Label::Supported),
        "refuted" => Ok(Label::Refuted),
        "failed" => Ok(Label::Failed),
        _ => Err(DomainError::UnknownLabel(raw.to_string())),
    }
}

impl FromStr for Label {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label(s)
    }
}

/// One dataset entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub id: String,
    pub claim_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruling_outline: Option<String>,
}

impl ClaimRecord {
    pub fn new(id: impl Into<String>, claim_text: impl Into<String>) -> Result<Self, DomainError> {
        let claim_text = claim_text.into();
        if claim_text.trim().is_empty() {
            return Err(DomainError::EmptyClaim);
        }
        Ok(Self {
            id: id.into(),
            claim_text,
            image_ref: None,
            claim_date: None,
            gold_label: None,
            ruling_outline: None,
        })
    }
}

/// The claim as seen by the reasoners: text plus verbalized image context.
///
/// Reasoners only ever receive this type, never a [`ClaimRecord`], so they
/// cannot observe gold labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultimodalClaim {
    pub claim: String,
    pub image_context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_date: Option<NaiveDate>,
}

impl MultimodalClaim {
    pub fn new(
        claim: impl Into<String>,
        image_context: impl Into<String>,
        claim_date: Option<NaiveDate>,
    ) -> Result<Self, DomainError> {
        let claim = claim.into();
        if claim.trim().is_empty() {
            return Err(DomainError::EmptyClaim);
        }
        Ok(Self {
            claim,
            image_context: image_context.into(),
            claim_date,
        })
    }

    pub fn text_only(claim: impl Into<String>) -> Result<Self, DomainError> {
        Self::new(claim, "", None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionKind {
    Web,
    Image,
}

impl fmt::Display for QuestionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuestionKind::Web => "web",
            QuestionKind::Image => "image",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub kind: QuestionKind,
    pub step_index: usize,
    /// Set only for questions generated by the tree reasoner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_index: Option<usize>,
}

impl Question {
    pub fn new(text: impl Into<String>, kind: QuestionKind, step_index: usize) -> Result<Self, DomainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DomainError::EmptyQuestion);
        }
        Ok(Self {
            text,
            kind,
            step_index,
            branch_index: None,
        })
    }

    pub fn with_branch(mut self, branch_index: usize) -> Self {
        self.branch_index = Some(branch_index);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: Question,
    pub answer: String,
    #[serde(default)]
    pub sources: Vec<String>,
}

impl QAPair {
    pub fn new(question: Question, answer: impl Into<String>, sources: Vec<String>) -> Result<Self, DomainError> {
        let answer = answer.into();
        if answer.trim().is_empty() {
            return Err(DomainError::EmptyAnswer);
        }
        Ok(Self {
            question,
            answer,
            sources,
        })
    }

    /// Pair produced when retrieval came back empty.
    pub fn no_evidence(question: Question) -> Self {
        Self {
            question,
            answer: NO_EVIDENCE.to_string(),
            sources: Vec::new(),
        }
    }
}

/// Ordered question-answer evidence gathered by a reasoner.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceLog {
    pub pairs: Vec<QAPair>,
    pub terminated_early: bool,
    pub steps_used: usize,
}

impl EvidenceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pair: QAPair) {
        self.pairs.push(pair);
        self.steps_used = self.pairs.len();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn answers(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.answer.as_str())
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().flat_map(|p| p.sources.iter().map(String::as_str))
    }

    /// Pairs are ordered by step index; ties keep insertion order.
    pub fn is_ordered(&self) -> bool {
        self.pairs
            .windows(2)
            .all(|w| w[0].question.step_index <= w[1].question.step_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VeracityVerdict {
    pub label: Label,
    pub explanation: String,
    /// Only CoVe ever sets this.
    #[serde(default)]
    pub corrected: bool,
}

impl VeracityVerdict {
    /// Builds a verdict; a non-failed label needs an explanation.
    pub fn new(label: Label, explanation: impl Into<String>) -> Result<Self, DomainError> {
        let explanation = explanation.into();
        if label != Label::Failed && explanation.trim().is_empty() {
            return Err(DomainError::MissingExplanation(label));
        }
        Ok(Self {
            label,
            explanation,
            corrected: false,
        })
    }

    pub fn failed(explanation: impl Into<String>) -> Self {
        Self {
            label: Label::Failed,
            explanation: explanation.into(),
            corrected: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_label_is_case_insensitive() {
        assert_eq!(parse_label("SUPPORTED").unwrap(), Label::Supported);
        assert_eq!(parse_label("Failed").unwrap(), Label::Failed);
    }

    #[test]
    fn parse_label_trims_whitespace() {
        assert_eq!(parse_label(" refuted\n").unwrap(), Label::Refuted);
    }

    #[test]
    fn out_of_scope_labels_are_errors() {
        for raw in ["half-true", "mixture", "NEI", "unproven", ""] {
            assert_eq!(parse_label(raw), Err(DomainError::UnknownLabel(raw.to_string())));
        }
    }

    #[test]
    fn label_round_trips_through_display() {
        for l in Label::ALL {
            assert_eq!(parse_label(&l.to_string()).unwrap(), l);
        }
    }

    #[test]
    fn empty_claim_rejected() {
        assert_eq!(ClaimRecord::new("a", "  "), Err(DomainError::EmptyClaim));
        assert_eq!(MultimodalClaim::text_only(""), Err(DomainError::EmptyClaim));
    }

    #[test]
    fn verdict_requires_explanation_unless_failed() {
        assert!(VeracityVerdict::new(Label::Supported, "").is_err());
        assert!(VeracityVerdict::new(Label::Failed, "").is_ok());
    }

    fn arb_pair() -> impl Strategy<Value = QAPair> {
        (
            "[a-z ]{1,20}[a-z]",
            "[a-z ]{1,20}[a-z]",
            0usize..6,
            proptest::option::of(0usize..3),
            proptest::collection::vec("https://[a-z]{1,8}\\.com/[a-z]{0,5}", 0..3),
        )
            .prop_map(|(q, a, step, branch, sources)| QAPair {
                question: Question {
                    text: q,
                    kind: if step % 2 == 0 {
                        QuestionKind::Web
                    } else {
                        QuestionKind::Image
                    },
                    step_index: step,
                    branch_index: branch,
                },
                answer: a,
                sources,
            })
    }

    proptest! {
        #[test]
        fn evidence_log_survives_json_round_trip(mut pairs in proptest::collection::vec(arb_pair(), 1..6), early: bool) {
            pairs.sort_by_key(|p| p.question.step_index);
            let mut log = EvidenceLog::new();
            for p in pairs {
                log.push(p);
            }
            log.terminated_early = early;
            let json = serde_json::to_string(&log).unwrap();
            let back: EvidenceLog = serde_json::from_str(&json).unwrap();
            prop_assert!(back.is_ordered());
            prop_assert_eq!(back, log);
        }
    }
}

//! Multimodal claim verification: claim generation, evidence-gathering
//! reasoners, veracity prediction and an evaluation harness.

pub mod claimgen;
pub mod context;
pub mod domain;
pub mod error;
pub mod evalharness;
pub mod media;
pub mod provider;
pub mod reasoners;
pub mod retrieval;
pub mod testkit;
pub mod trace;
pub mod veracity;

pub use context::StageContext;
pub use domain::{ClaimRecord, EvidenceLog, Label, MultimodalClaim, QAPair, Question, QuestionKind, VeracityVerdict};
pub use error::{PipelineError, Result};

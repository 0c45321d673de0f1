use thiserror::Error;

use crate::domain::DomainError;
use crate::media::ImageLoadError;
use crate::provider::{ProviderError, TemplateError};
use crate::retrieval::RetrievalError;

/// Any failure while fact-checking one claim.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Image(#[from] ImageLoadError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("question generator produced no questions")]
    EmptyQuestionSet,
    #[error("expected {expected} branch questions, got {got}")]
    BranchCountMismatch { expected: usize, got: usize },
    #[error("cannot parse verdict: {0}")]
    VerdictParse(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

//! Language-model gateway: prompt templates, structured-output parsing and
//! the provider implementations (live HTTP, scripted replay, recording, mock).

pub mod envelope;
mod live;
mod mock;
mod recording;
mod scripted;
pub mod template;
mod transcript;

use thiserror::Error;

pub use live::{LiveProvider, LiveProviderConfig};
pub use mock::MockProvider;
pub use recording::RecordingProvider;
pub use scripted::ScriptedProvider;
pub use template::{bindings, ids, Modality, PromptInstance, PromptRegistry, PromptTemplate, TemplateError};
pub use transcript::{load_transcript, TranscriptError, TranscriptRecord, TranscriptWriter};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("no recorded response for prompt digest {0}")]
    ReplayMiss(String),
    #[error("provider request timed out")]
    Timeout,
    #[error("transcript error: {0}")]
    Transcript(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderResponse {
    pub text: String,
    pub provider_name: String,
    pub latency_ms: u64,
    pub from_replay: bool,
}

/// Anything that can complete a rendered prompt.
///
/// Implementations are shared across threads; tree reasoning issues several
/// requests at once.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, prompt: &PromptInstance) -> Result<ProviderResponse, ProviderError>;

    /// Whether responses are replayed from a transcript, so timings can be frozen.
    fn is_replay(&self) -> bool {
        false
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, prompt: &PromptInstance) -> Result<ProviderResponse, ProviderError> {
        (**self).complete(prompt)
    }

    fn is_replay(&self) -> bool {
        (**self).is_replay()
    }
}

impl<P: Provider + ?Sized> Provider for std::sync::Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, prompt: &PromptInstance) -> Result<ProviderResponse, ProviderError> {
        (**self).complete(prompt)
    }

    fn is_replay(&self) -> bool {
        (**self).is_replay()
    }
}

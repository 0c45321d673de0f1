use std::collections::HashMap;
use std::path::Path;

use super::transcript::{load_transcript, TranscriptError};
use super::{PromptInstance, Provider, ProviderError, ProviderResponse};

/// Replays stored responses keyed by prompt digest. Never makes a live call.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    responses: HashMap<String, String>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_transcript(path: &Path) -> Result<Self, TranscriptError> {
        let responses = load_transcript(path)?
            .into_iter()
            .map(|(digest, rec)| (digest, rec.text))
            .collect();
        Ok(Self { responses })
    }

    pub fn insert(&mut self, digest: impl Into<String>, text: impl Into<String>) {
        self.responses.insert(digest.into(), text.into());
    }

    pub fn with(mut self, digest: impl Into<String>, text: impl Into<String>) -> Self {
        self.insert(digest, text);
        self
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.responses.contains_key(digest)
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, prompt: &PromptInstance) -> Result<ProviderResponse, ProviderError> {
        let text = self
            .responses
            .get(&prompt.bindings_digest)
            .ok_or_else(|| ProviderError::ReplayMiss(prompt.bindings_digest.clone()))?;
        Ok(ProviderResponse {
            text: text.clone(),
            provider_name: self.name().to_string(),
            latency_ms: 0,
            from_replay: true,
        })
    }

    fn is_replay(&self) -> bool {
        true
    }
}

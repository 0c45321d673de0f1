use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::Deserialize;
use serde_json::json;

use super::{PromptInstance, Provider, ProviderError, ProviderResponse};

pub const ENV_API_KEY: &str = "LLM_API_KEY";
pub const ENV_BASE_URL: &str = "LLM_API_BASE_URL";
pub const ENV_MODEL: &str = "LLM_MODEL_NAME";

#[derive(Debug, Clone, PartialEq)]
pub struct LiveProviderConfig {
    pub api_key: String,
    pub base_url: String,
    pub model: String,
    pub temperature: f32,
    pub timeout: Duration,
}

impl LiveProviderConfig {
    pub fn new(api_key: impl Into<String>, base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            api_key: api_key.into(),
            base_url: base_url.into(),
            model: model.into(),
            temperature: 0.0,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        let var = |k: &str| {
            std::env::var(k)
                .ok()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| ProviderError::Unavailable(format!("{k} is not set")))
        };
        Ok(Self::new(var(ENV_API_KEY)?, var(ENV_BASE_URL)?, var(ENV_MODEL)?))
    }
}

/// Client for OpenAI-compatible chat-completion endpoints.
pub struct LiveProvider {
    cfg: LiveProviderConfig,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl LiveProvider {
    pub fn new(cfg: LiveProviderConfig) -> Result<Self, ProviderError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        Ok(Self { cfg, http })
    }

    fn request_body(&self, prompt: &PromptInstance) -> serde_json::Value {
        let content = match &prompt.attached_image {
            Some(img) => json!([
                { "type": "text", "text": prompt.rendered_text },
                {
                    "type": "image_url",
                    "image_url": { "url": format!("data:{};base64,{}", img.mime(), BASE64.encode(&img.bytes)) }
                }
            ]),
            None => json!(prompt.rendered_text),
        };
        json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [{ "role": "user", "content": content }],
        })
    }
}

impl Provider for LiveProvider {
    fn name(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, prompt: &PromptInstance) -> Result<ProviderResponse, ProviderError> {
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let started = Instant::now();
        let map_err = |e: reqwest::Error| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Unavailable(e.to_string())
            }
        };
        let resp: ChatResponse = self
            .http
            .post(url)
            .bearer_auth(&self.cfg.api_key)
            .json(&self.request_body(prompt))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(map_err)?
            .json()
            .map_err(map_err)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Unavailable("response has no choices".into()))?;
        Ok(ProviderResponse {
            text,
            provider_name: self.cfg.model.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            from_replay: false,
        })
    }
}

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::{PromptInstance, Provider, ProviderError, ProviderResponse};

type Responder = Arc<dyn Fn(&PromptInstance) -> Result<String, ProviderError> + Send + Sync>;
type CallLog = Arc<Mutex<Vec<(String, BTreeMap<String, String>)>>>;

/// Rule-based provider for tests and fixture generation.
///
/// Each template id gets a responder. Responders should depend on the prompt
/// bindings rather than call order wherever calls may run concurrently.
#[derive(Clone, Default)]
pub struct MockProvider {
    rules: HashMap<String, Responder>,
    calls: CallLog,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on<F>(mut self, template_id: &str, f: F) -> Self
    where
        F: Fn(&PromptInstance) -> String + Send + Sync + 'static,
    {
        self.rules.insert(template_id.to_string(), Arc::new(move |p| Ok(f(p))));
        self
    }

    pub fn on_result<F>(mut self, template_id: &str, f: F) -> Self
    where
        F: Fn(&PromptInstance) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        self.rules.insert(template_id.to_string(), Arc::new(f));
        self
    }

    pub fn reply(self, template_id: &str, text: impl Into<String>) -> Self {
        let text = text.into();
        self.on(template_id, move |_| text.clone())
    }

    /// Replies in order; the last reply repeats once the list is exhausted.
    pub fn sequence<I, S>(self, template_id: &str, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        assert!(!replies.is_empty(), "sequence needs at least one reply");
        let next = AtomicUsize::new(0);
        self.on(template_id, move |_| {
            let i = next.fetch_add(1, Ordering::SeqCst);
            replies[i.min(replies.len() - 1)].clone()
        })
    }

    pub fn fail(self, template_id: &str, err: ProviderError) -> Self {
        self.on_result(template_id, move |_| Err(err.clone()))
    }

    pub fn calls(&self, template_id: &str) -> usize {
        self.lock_calls().iter().filter(|(t, _)| t == template_id).count()
    }

    pub fn total_calls(&self) -> usize {
        self.lock_calls().len()
    }

    /// Bindings of every call to `template_id`, in call order.
    pub fn bindings_for(&self, template_id: &str) -> Vec<BTreeMap<String, String>> {
        self.lock_calls()
            .iter()
            .filter(|(t, _)| t == template_id)
            .map(|(_, b)| b.clone())
            .collect()
    }

    fn lock_calls(&self) -> std::sync::MutexGuard<'_, Vec<(String, BTreeMap<String, String>)>> {
        self.calls.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &PromptInstance) -> Result<ProviderResponse, ProviderError> {
        self.lock_calls()
            .push((prompt.template_id.clone(), prompt.bindings.clone()));
        let rule = self
            .rules
            .get(&prompt.template_id)
            .ok_or_else(|| ProviderError::Unavailable(format!("no mock rule for {}", prompt.template_id)))?;
        Ok(ProviderResponse {
            text: rule(prompt)?,
            provider_name: "mock".into(),
            latency_ms: 0,
            from_replay: false,
        })
    }
}

//! The handles every pipeline stage needs: provider, prompts, retrieval, tracer.

use std::collections::BTreeMap;
use std::time::Instant;

use chrono::NaiveDate;
use serde_json::json;

use crate::error::Result;
use crate::media::ImageData;
use crate::provider::{PromptRegistry, Provider};
use crate::retrieval::{EvidenceSnippet, ImageCaption, Retriever};
use crate::trace::{stage, TraceEvent, Tracer};

#[derive(Clone, Copy)]
pub struct StageContext<'a> {
    pub provider: &'a dyn Provider,
    pub prompts: &'a PromptRegistry,
    pub retriever: &'a Retriever,
    pub tracer: &'a Tracer,
}

impl<'a> StageContext<'a> {
    pub fn new(
        provider: &'a dyn Provider,
        prompts: &'a PromptRegistry,
        retriever: &'a Retriever,
        tracer: &'a Tracer,
    ) -> Self {
        Self {
            provider,
            prompts,
            retriever,
            tracer,
        }
    }

    /// Same handles, different tracer (for work fanned out to other threads).
    pub fn with_tracer<'b>(&self, tracer: &'b Tracer) -> StageContext<'b>
    where
        'a: 'b,
    {
        StageContext {
            provider: self.provider,
            prompts: self.prompts,
            retriever: self.retriever,
            tracer,
        }
    }

    /// Renders a template, completes it and records the exchange.
    pub fn ask(
        &self,
        purpose: &str,
        template_id: &str,
        bindings: BTreeMap<String, String>,
        image: Option<&ImageData>,
    ) -> Result<String> {
        let prompt = self.prompts.render(template_id, bindings, image.cloned())?;
        let started = Instant::now();
        let outcome = self.provider.complete(&prompt);
        let mut ev = TraceEvent::new(stage::PROMPT);
        ev.purpose = Some(purpose.to_string());
        ev.template_id = Some(prompt.template_id.clone());
        ev.bindings_digest = Some(prompt.bindings_digest.clone());
        ev.bindings = Some(prompt.bindings);
        ev.elapsed_ms = self.tracer.elapsed_ms(started);
        match outcome {
            Ok(resp) => {
                ev.response_text = Some(resp.text.clone());
                self.tracer.record(ev);
                Ok(resp.text)
            }
            Err(e) => {
                ev.detail = Some(json!({ "error": e.to_string() }));
                self.tracer.record(ev);
                Err(e.into())
            }
        }
    }

    pub fn search(&self, question: &str, claim_date: Option<NaiveDate>) -> Result<Vec<EvidenceSnippet>> {
        let started = Instant::now();
        let key = self.retriever.search_key(question, claim_date);
        let outcome = self.retriever.search_web(question, claim_date);
        let mut ev = TraceEvent::new(stage::RETRIEVAL);
        ev.retrieval_key = Some(key);
        ev.elapsed_ms = self.tracer.elapsed_ms(started);
        match outcome {
            Ok(snippets) => {
                ev.detail = Some(json!({
                    "query": question,
                    "urls": snippets.iter().map(|s| s.url.as_str()).collect::<Vec<_>>(),
                }));
                self.tracer.record(ev);
                Ok(snippets)
            }
            Err(e) => {
                ev.detail = Some(json!({ "query": question, "error": e.to_string() }));
                self.tracer.record(ev);
                Err(e.into())
            }
        }
    }

    pub fn captions(&self, image: &ImageData) -> Result<Vec<ImageCaption>> {
        let started = Instant::now();
        let mut ev = TraceEvent::new(stage::CAPTIONS);
        ev.retrieval_key = Some(self.retriever.caption_key(image));
        let outcome = self.retriever.reverse_image_captions(image);
        ev.elapsed_ms = self.tracer.elapsed_ms(started);
        match &outcome {
            Ok(caps) => ev.detail = Some(json!({ "image_sha256": image.sha256, "captions": caps })),
            Err(e) => ev.detail = Some(json!({ "image_sha256": image.sha256, "error": e.to_string() })),
        }
        self.tracer.record(ev);
        Ok(outcome?)
    }
}

//! Replayable per-claim run traces: one JSON event per line.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Event stage names.
pub mod stage {
    pub const CLAIM: &str = "claim";
    pub const PROMPT: &str = "prompt";
    pub const RETRIEVAL: &str = "retrieval";
    pub const CAPTIONS: &str = "captions";
    pub const QA: &str = "qa";
    pub const BRANCH_QA: &str = "branch_qa";
    pub const ELIMINATION: &str = "elimination";
    pub const VERDICT: &str = "verdict";
    pub const COVE: &str = "cove";
    pub const WARNING: &str = "warning";
    pub const ERROR: &str = "error";
    pub const RESULT: &str = "result";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub stage: String,
    /// Logical step that issued a prompt (`first_question`, `followup_check`, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purpose: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bindings_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bindings: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
    pub elapsed_ms: u64,
}

impl TraceEvent {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            purpose: None,
            template_id: None,
            bindings_digest: None,
            bindings: None,
            response_text: None,
            retrieval_key: None,
            detail: None,
            elapsed_ms: 0,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

/// Collects events for one claim. Timings are zeroed when frozen so replayed
/// runs serialize byte-identically.
#[derive(Debug)]
pub struct Tracer {
    events: Mutex<Vec<TraceEvent>>,
    frozen_clock: bool,
}

impl Tracer {
    pub fn new(frozen_clock: bool) -> Self {
        Self {
            events: Mutex::new(Vec::new()),
            frozen_clock,
        }
    }

    /// Empty tracer with the same clock, for work done on another thread.
    pub fn fork(&self) -> Tracer {
        Tracer::new(self.frozen_clock)
    }

    /// Appends everything recorded by a forked tracer.
    pub fn absorb(&self, child: Tracer) {
        let events = child.events.into_inner().unwrap_or_else(|p| p.into_inner());
        self.lock().extend(events);
    }

    pub fn elapsed_ms(&self, since: Instant) -> u64 {
        if self.frozen_clock {
            0
        } else {
            since.elapsed().as_millis() as u64
        }
    }

    pub fn record(&self, event: TraceEvent) {
        self.lock().push(event);
    }

    pub fn warn(&self, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!("{message}");
        self.record(TraceEvent::new(stage::WARNING).with_detail(serde_json::json!({ "message": message })));
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.lock().clone()
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events.into_inner().unwrap_or_else(|p| p.into_inner())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Vec<TraceEvent>> {
        self.events.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace {0} not found")]
    NotFound(PathBuf),
    #[error("trace {path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub claim_id: String,
    pub events: Vec<TraceEvent>,
}

impl RunTrace {
    pub fn events_of<'a>(&'a self, stage: &'a str) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events.iter().filter(move |e| e.stage == stage)
    }

    pub fn prompts_for<'a>(&'a self, template_id: &'a str) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events
            .iter()
            .filter(move |e| e.stage == stage::PROMPT && e.template_id.as_deref() == Some(template_id))
    }

    pub fn result(&self) -> Option<&TraceEvent> {
        self.events.iter().rev().find(|e| e.stage == stage::RESULT)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace event serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes atomically: a reader never sees a half-written trace.
    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        let io = |source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let tmp = path.with_extension("jsonl.partial");
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, TraceError> {
        let file = std::fs::File::open(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                TraceError::NotFound(path.to_path_buf())
            } else {
                TraceError::Io {
                    path: path.to_path_buf(),
                    source,
                }
            }
        })?;
        let mut events = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| TraceError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let ev: TraceEvent = serde_json::from_str(&line).map_err(|e| TraceError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            events.push(ev);
        }
        let claim_id = events
            .iter()
            .find(|e| e.stage == stage::CLAIM)
            .and_then(|e| e.detail.as_ref()?.get("id")?.as_str().map(str::to_string))
            .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_default();
        Ok(Self { claim_id, events })
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::metrics::{evaluate, render_table, EvalError, MetricsReport};
use crate::claimgen::{generate_multimodal_claim, load_claim_image};
use crate::context::StageContext;
use crate::domain::{ClaimRecord, EvidenceLog, Label, VeracityVerdict};
use crate::error::{PipelineError, Result as PipelineResult};
use crate::media::sha256_hex;
use crate::provider::{
    LiveProvider, LiveProviderConfig, PromptRegistry, Provider, ProviderError, RecordingProvider, ScriptedProvider,
};
use crate::reasoners::{run_reasoner, ReasonerConfig, ReasonerKind};
use crate::retrieval::{RetrievalConfig, RetrievalError, Retriever};
use crate::trace::{stage, RunTrace, TraceError, TraceEvent, Tracer};
use crate::veracity::{predict_veracity, VeracityKind};

/// Where model responses come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum ProviderSpec {
    /// Replay only; a prompt missing from the transcript is an error.
    Scripted { transcript: PathBuf },
    /// Live endpoint configured from the environment.
    #[default]
    Live,
    /// Live endpoint, every new exchange appended to the transcript.
    Record { transcript: PathBuf },
}

impl ProviderSpec {
    pub fn build(&self) -> Result<Arc<dyn Provider>, ProviderError> {
        let transcript_err = |e: crate::provider::TranscriptError| ProviderError::Transcript(e.to_string());
        Ok(match self {
            ProviderSpec::Scripted { transcript } => {
                Arc::new(ScriptedProvider::from_transcript(transcript).map_err(transcript_err)?)
            }
            ProviderSpec::Live => Arc::new(LiveProvider::new(LiveProviderConfig::from_env()?)?),
            ProviderSpec::Record { transcript } => {
                let live = LiveProvider::new(LiveProviderConfig::from_env()?)?;
                Arc::new(RecordingProvider::open(live, transcript).map_err(transcript_err)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub reasoner: ReasonerKind,
    pub veracity: VeracityKind,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub reasoner_cfg: ReasonerConfig,
    #[serde(default)]
    pub provider: ProviderSpec,
    #[serde(default)]
    pub seed_note: String,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, reasoner: ReasonerKind, veracity: VeracityKind) -> Self {
        Self {
            name: name.into(),
            reasoner,
            veracity,
            retrieval: RetrievalConfig::default(),
            reasoner_cfg: ReasonerConfig::default(),
            provider: ProviderSpec::default(),
            seed_note: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("experiment name must not be empty".into());
        }
        self.retrieval.validate()?;
        self.reasoner_cfg.validate()
    }

    /// Row label in the form `corag+cot_cove`.
    pub fn label(&self) -> String {
        format!("{}+{}", self.reasoner, self.veracity)
    }
}

/// Shared, read-only resources for a run.
pub struct Stores {
    pub provider: Arc<dyn Provider>,
    pub prompts: PromptRegistry,
    pub retriever: Retriever,
    /// Base directory for relative image references.
    pub image_base: Option<PathBuf>,
}

/// The end state of one claim.
#[derive(Debug, Clone)]
pub struct ClaimOutcome {
    pub claim_id: String,
    pub verdict: VeracityVerdict,
    pub evidence: Option<EvidenceLog>,
    pub error: Option<String>,
    pub trace: RunTrace,
}

/// The full pipeline for a single claim: claim generation, image captions,
/// evidence gathering and veracity prediction.
pub struct FactChecker<'a> {
    pub stores: &'a Stores,
    pub reasoner: ReasonerKind,
    pub veracity: VeracityKind,
    pub reasoner_cfg: ReasonerConfig,
}

impl<'a> FactChecker<'a> {
    pub fn new(stores: &'a Stores, cfg: &ExperimentConfig) -> Self {
        Self {
            stores,
            reasoner: cfg.reasoner,
            veracity: cfg.veracity,
            reasoner_cfg: cfg.reasoner_cfg.clone(),
        }
    }

    fn pipeline(&self, ctx: &StageContext<'_>, record: &ClaimRecord) -> PipelineResult<(EvidenceLog, VeracityVerdict)> {
        let image = load_claim_image(record, self.stores.image_base.as_deref())?;
        let mm = generate_multimodal_claim(ctx, record, image.as_ref())?;
        let captions = match &image {
            None => Vec::new(),
            Some(img) => match ctx.captions(img) {
                Ok(c) => c,
                Err(PipelineError::Retrieval(RetrievalError::ImageNotFound(r))) => {
                    ctx.tracer.warn(format!("no reverse-image captions for {r}"));
                    Vec::new()
                }
                Err(e) => return Err(e),
            },
        };
        let log = run_reasoner(self.reasoner, ctx, &mm, &captions, &self.reasoner_cfg)?;
        let verdict = predict_veracity(self.veracity, ctx, &mm, &log)?;
        Ok((log, verdict))
    }

    /// Never fails: pipeline errors become a `failed` verdict with a diagnostic.
    pub fn check_claim(&self, record: &ClaimRecord) -> ClaimOutcome {
        let tracer = Tracer::new(self.stores.provider.is_replay());
        let ctx = StageContext::new(
            &*self.stores.provider,
            &self.stores.prompts,
            &self.stores.retriever,
            &tracer,
        );
        tracer.record(TraceEvent::new(stage::CLAIM).with_detail(json!({
            "id": record.id,
            "claim_text": record.claim_text,
            "image_ref": record.image_ref,
            "claim_date": record.claim_date,
            "reasoner": self.reasoner,
            "veracity": self.veracity,
        })));
        let (evidence, verdict, error) = match self.pipeline(&ctx, record) {
            Ok((log, v)) => (Some(log), v, None),
            Err(e) => {
                let msg = e.to_string();
                tracer.record(TraceEvent::new(stage::ERROR).with_detail(json!({ "error": msg })));
                tracing::warn!(claim = %record.id, error = %msg, "claim failed");
                (
                    None,
                    VeracityVerdict::failed(format!("pipeline error: {msg}")),
                    Some(msg),
                )
            }
        };
        tracer.record(TraceEvent::new(stage::RESULT).with_detail(json!({
            "verdict": verdict,
            "error": error,
        })));
        ClaimOutcome {
            claim_id: record.id.clone(),
            verdict,
            evidence,
            error,
            trace: RunTrace {
                claim_id: record.id.clone(),
                events: tracer.into_events(),
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("claim {0} has no gold label")]
    MissingGold(String),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub traces_root: PathBuf,
    pub workers: usize,
    /// Reuse finished traces instead of re-running their claims.
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub configuration: String,
    pub seed_note: String,
    pub metrics: MetricsReport,
    pub predictions: BTreeMap<String, Label>,
    pub errors: BTreeMap<String, String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn table(&self) -> String {
        render_table(&[(self.configuration.as_str(), &self.metrics)])
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        let io = |path: PathBuf| move |source| ExperimentError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let json_path = dir.join("report.json");
        std::fs::write(&json_path, self.to_json()).map_err(io(json_path.clone()))?;
        let txt_path = dir.join("report.txt");
        std::fs::write(&txt_path, self.table()).map_err(io(txt_path.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub traces: Vec<RunTrace>,
    pub executed: usize,
    pub resumed: usize,
}

/// File name for a claim's trace. Ids that are not already safe file names
/// are sanitized and suffixed with a short hash so distinct ids never collide.
pub fn trace_file_name(claim_id: &str) -> String {
    let safe = |c: char| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.');
    if !claim_id.is_empty() && !claim_id.starts_with('.') && claim_id.chars().all(safe) && claim_id.len() <= 120 {
        return format!("{claim_id}.jsonl");
    }
    let stem: String = claim_id
        .chars()
        .take(64)
        .map(|c| if safe(c) { c } else { '_' })
        .collect();
    format!(
        "{}-{}.jsonl",
        stem.trim_start_matches('.'),
        &sha256_hex(claim_id.as_bytes())[..10]
    )
}

pub fn experiment_dir(traces_root: &Path, cfg: &ExperimentConfig) -> PathBuf {
    traces_root.join(&cfg.name)
}

/// A finished trace's verdict and error, if the trace is complete.
fn resumed_result(trace: &RunTrace) -> Option<(VeracityVerdict, Option<String>)> {
    let detail = trace.result()?.detail.as_ref()?;
    let verdict: VeracityVerdict = serde_json::from_value(detail.get("verdict")?.clone()).ok()?;
    let error = detail.get("error").and_then(|e| e.as_str()).map(str::to_string);
    Some((verdict, error))
}

/// Runs every claim on a bounded pool, persists one trace per claim as soon
/// as it finishes, then scores the predictions. Report and traces come back
/// in dataset order whatever the pool width.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    dataset: &[ClaimRecord],
    stores: &Stores,
    opts: &RunOptions,
) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate().map_err(ExperimentError::Config)?;
    let gold: BTreeMap<String, Label> = dataset
        .iter()
        .map(|r| {
            r.gold_label
                .map(|g| (r.id.clone(), g))
                .ok_or_else(|| ExperimentError::MissingGold(r.id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let dir = experiment_dir(&opts.traces_root, cfg);
    std::fs::create_dir_all(&dir).map_err(|source| ExperimentError::Io {
        path: dir.clone(),
        source,
    })?;
    let checker = FactChecker::new(stores, cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;

    type Done = (RunTrace, VeracityVerdict, Option<String>, bool);
    let results: Vec<Result<Done, ExperimentError>> = pool.install(|| {
        dataset
            .par_iter()
            .map(|record| {
                let path = dir.join(trace_file_name(&record.id));
                if opts.resume && path.exists() {
                    match RunTrace::read(&path) {
                        Ok(trace) => {
                            if let Some((verdict, error)) = resumed_result(&trace) {
                                return Ok((trace, verdict, error, true));
                            }
                        }
                        Err(e) => tracing::warn!(path = %path.display(), error = %e, "unreadable trace, re-running"),
                    }
                }
                let outcome = checker.check_claim(record);
                outcome.trace.write(&path)?;
                Ok((outcome.trace, outcome.verdict, outcome.error, false))
            })
            .collect()
    });

    let mut traces = Vec::with_capacity(dataset.len());
    let mut predictions = BTreeMap::new();
    let mut errors = BTreeMap::new();
    let (mut executed, mut resumed) = (0, 0);
    for (record, result) in dataset.iter().zip(results) {
        let (trace, verdict, error, was_resumed) = result?;
        if was_resumed {
            resumed += 1;
        } else {
            executed += 1;
        }
        predictions.insert(record.id.clone(), verdict.label);
        if let Some(e) = error {
            errors.insert(record.id.clone(), e);
        }
        traces.push(trace);
    }
    let metrics = evaluate(&predictions, &gold)?;
    let report = ExperimentReport {
        experiment: cfg.name.clone(),
        configuration: cfg.label(),
        seed_note: cfg.seed_note.clone(),
        metrics,
        predictions,
        errors,
    };
    report.write(&dir)?;
    Ok(ExperimentOutput {
        report,
        traces,
        executed,
        resumed,
    })
}

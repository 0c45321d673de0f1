mod config;
mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use fcheck_core::domain::{ClaimRecord, Label};
use fcheck_core::evalharness::{
    experiment_dir, load_dataset, run_experiment, ExperimentConfig, FactChecker, ProviderSpec, RunOptions, Stores,
};
use fcheck_core::provider::{PromptRegistry, ProviderError};
use fcheck_core::reasoners::ReasonerKind;
use fcheck_core::retrieval::{BackendKind, LiveSearchBackend, OfflineCorpus, ResultCache, Retriever, SearchBackend};
use fcheck_core::trace::RunTrace;
use fcheck_core::veracity::VeracityKind;
use tracing_subscriber::EnvFilter;

use config::{AppConfig, ProviderKind};
use render::Show;

const EXIT_ERROR: u8 = 1;
const EXIT_FAILED_LABEL: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "fcheck",
    version,
    about = "Multimodal fact-checking with chain and tree retrieval reasoning",
    args_override_self = true
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true, env = "FCHECK_CONFIG")]
    config: Option<PathBuf>,
    /// Replay the transcript against the offline corpus; never touches the network.
    #[arg(long, global = true)]
    offline: bool,
    #[arg(long, global = true, env = "FCHECK_PROVIDER", value_enum)]
    provider: Option<ProviderKind>,
    #[arg(long, global = true, env = "FCHECK_TRANSCRIPT")]
    transcript: Option<PathBuf>,
    #[arg(long, global = true, env = "FCHECK_BACKEND", value_parser = parse_backend)]
    backend: Option<BackendKind>,
    #[arg(long, global = true, env = "FCHECK_CORPUS_DIR")]
    corpus_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "FCHECK_TRACES_ROOT")]
    traces_root: Option<PathBuf>,
    #[arg(long, global = true, env = "FCHECK_CACHE_ROOT")]
    cache_root: Option<PathBuf>,
    #[arg(long, global = true, env = "FCHECK_PROMPTS_DIR")]
    prompts_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "FCHECK_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct Strategy {
    #[arg(long, value_parser = parse_reasoner)]
    reasoner: Option<ReasonerKind>,
    #[arg(long, value_parser = parse_veracity)]
    veracity: Option<VeracityKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Fact-check one claim and print the verdict and its question-answer chain.
    Factcheck {
        claim: String,
        /// Local path or http(s) URL of the claim image.
        #[arg(long)]
        image: Option<String>,
        /// Date the claim was made (YYYY-MM-DD).
        #[arg(long)]
        date: Option<NaiveDate>,
        #[command(flatten)]
        strategy: Strategy,
        /// Write the run trace here.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run a dataset and write traces plus a metrics report.
    Run {
        dataset: PathBuf,
        #[arg(long)]
        experiment_name: Option<String>,
        /// Keep finished traces and only run the remaining claims.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        strategy: Strategy,
    },
    /// Print a run trace.
    Trace {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        show: Show,
    },
    /// Inspect or clean the retrieval cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Record or check provider transcripts.
    Transcripts {
        #[command(subcommand)]
        action: TranscriptAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Stats,
    /// Remove corrupt entries and stale temp files; `--all` empties the cache.
    Gc {
        #[arg(long)]
        all: bool,
    },
}

#[derive(Subcommand)]
enum TranscriptAction {
    /// Run a dataset against the live provider, appending every new exchange.
    Record {
        dataset: PathBuf,
        #[arg(long)]
        experiment_name: Option<String>,
        #[command(flatten)]
        strategy: Strategy,
    },
    /// Replay a dataset and report prompts missing from the transcript.
    Verify {
        dataset: PathBuf,
        #[command(flatten)]
        strategy: Strategy,
    },
}

fn parse_reasoner(s: &str) -> Result<ReasonerKind, String> {
    s.parse()
}

fn parse_veracity(s: &str) -> Result<VeracityKind, String> {
    s.parse()
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s.replace('-', "_").as_str() {
        "offline_corpus" | "offline" => Ok(BackendKind::OfflineCorpus),
        "live_search" | "live" => Ok(BackendKind::LiveSearch),
        _ => Err(format!(
            "unknown backend {s:?} (expected offline_corpus or live_search)"
        )),
    }
}

fn resolve_config(g: &GlobalArgs) -> Result<AppConfig> {
    let mut cfg = AppConfig::load(g.config.as_deref())?;
    if let Some(p) = g.provider {
        cfg.provider.kind = p;
    }
    if let Some(t) = &g.transcript {
        cfg.provider.transcript = t.clone();
    }
    if let Some(b) = g.backend {
        cfg.retrieval.backend = b;
    }
    if let Some(d) = &g.corpus_dir {
        cfg.paths.corpus_dir = d.clone();
    }
    if let Some(d) = &g.traces_root {
        cfg.paths.traces_root = d.clone();
    }
    if let Some(d) = &g.cache_root {
        cfg.paths.cache_root = Some(d.clone());
    }
    if let Some(d) = &g.prompts_dir {
        cfg.paths.prompts_dir = Some(d.clone());
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if g.offline {
        cfg.provider.kind = ProviderKind::Scripted;
        cfg.retrieval.backend = BackendKind::OfflineCorpus;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn provider_spec(cfg: &AppConfig) -> ProviderSpec {
    let transcript = cfg.provider.transcript.clone();
    match cfg.provider.kind {
        ProviderKind::Scripted => ProviderSpec::Scripted { transcript },
        ProviderKind::Live => ProviderSpec::Live,
        ProviderKind::Record => ProviderSpec::Record { transcript },
    }
}

fn build_retriever(cfg: &AppConfig) -> Result<Retriever> {
    let backend: Arc<dyn SearchBackend> = match cfg.retrieval.backend {
        BackendKind::OfflineCorpus => Arc::new(OfflineCorpus::open(&cfg.paths.corpus_dir)?),
        BackendKind::LiveSearch => Arc::new(LiveSearchBackend::from_env()?),
    };
    let mut retriever = Retriever::new(backend, cfg.retrieval.clone());
    if let Some(root) = &cfg.paths.cache_root {
        retriever = retriever.with_cache(ResultCache::open(root)?);
    }
    Ok(retriever)
}

fn build_stores(cfg: &AppConfig, spec: &ProviderSpec, image_base: Option<PathBuf>) -> Result<Stores> {
    let retriever = build_retriever(cfg)?;
    let prompts = match &cfg.paths.prompts_dir {
        Some(dir) => PromptRegistry::from_dir(dir)?,
        None => PromptRegistry::builtin(),
    };
    let provider = spec.build().context("cannot set up the language-model provider")?;
    Ok(Stores {
        provider,
        prompts,
        retriever,
        image_base,
    })
}

fn experiment(cfg: &AppConfig, strategy: &Strategy, name: Option<String>, spec: ProviderSpec) -> ExperimentConfig {
    let reasoner = strategy.reasoner.unwrap_or(cfg.defaults.reasoner);
    let veracity = strategy.veracity.unwrap_or(cfg.defaults.veracity);
    let mut exp = ExperimentConfig::new(
        name.unwrap_or_else(|| format!("{reasoner}-{veracity}")),
        reasoner,
        veracity,
    );
    exp.retrieval = cfg.retrieval.clone();
    exp.reasoner_cfg = cfg.reasoning.clone();
    exp.provider = spec;
    exp
}

fn dataset_base(dataset: &Path) -> Option<PathBuf> {
    dataset.parent().map(Path::to_path_buf)
}

fn cmd_factcheck(
    cfg: &AppConfig,
    claim: String,
    image: Option<String>,
    date: Option<NaiveDate>,
    strategy: &Strategy,
    trace_out: Option<PathBuf>,
) -> Result<u8> {
    let spec = provider_spec(cfg);
    let stores = build_stores(cfg, &spec, None)?;
    let exp = experiment(cfg, strategy, None, spec);
    let mut record = ClaimRecord::new("cli", claim)?;
    record.image_ref = image;
    record.claim_date = date;
    let outcome = FactChecker::new(&stores, &exp).check_claim(&record);
    if let Some(path) = trace_out {
        outcome.trace.write(&path)?;
    }
    if let Some(err) = outcome.error {
        bail!(err);
    }
    print!("{}", render::verdict(&outcome.verdict, outcome.evidence.as_ref()));
    Ok(if outcome.verdict.label == Label::Failed {
        EXIT_FAILED_LABEL
    } else {
        0
    })
}

fn cmd_run(
    cfg: &AppConfig,
    dataset: &Path,
    name: Option<String>,
    resume: bool,
    strategy: &Strategy,
    spec: ProviderSpec,
) -> Result<u8> {
    let records = load_dataset(dataset)?;
    let stores = build_stores(cfg, &spec, dataset_base(dataset))?;
    let exp = experiment(cfg, strategy, name, spec);
    let opts = RunOptions {
        traces_root: cfg.paths.traces_root.clone(),
        workers: cfg.workers,
        resume,
    };
    let out = run_experiment(&exp, &records, &stores, &opts)?;
    print!("{}", out.report.table());
    let dir = experiment_dir(&opts.traces_root, &exp);
    println!(
        "{} claims ({} run, {} resumed, {} errors); report {}",
        records.len(),
        out.executed,
        out.resumed,
        out.report.errors.len(),
        dir.join("report.json").display()
    );
    Ok(0)
}

fn cmd_verify(cfg: &AppConfig, dataset: &Path, strategy: &Strategy) -> Result<u8> {
    let records = load_dataset(dataset)?;
    let spec = ProviderSpec::Scripted {
        transcript: cfg.provider.transcript.clone(),
    };
    let stores = build_stores(cfg, &spec, dataset_base(dataset))?;
    let exp = experiment(cfg, strategy, None, spec);
    let checker = FactChecker::new(&stores, &exp);
    let miss = ProviderError::ReplayMiss(String::new()).to_string();
    let miss_prefix = miss.trim_end();
    let mut missing = 0;
    for r in &records {
        let outcome = checker.check_claim(r);
        if let Some(e) = outcome.error {
            missing += 1;
            let kind = if e.starts_with(miss_prefix) {
                "missing response"
            } else {
                "error"
            };
            println!("{}: {kind}: {e}", r.id);
        }
    }
    println!("{} of {} claims replay cleanly", records.len() - missing, records.len());
    Ok(if missing == 0 { 0 } else { EXIT_ERROR })
}

fn cmd_cache(cfg: &AppConfig, action: &CacheAction) -> Result<u8> {
    let Some(root) = &cfg.paths.cache_root else {
        bail!("no cache configured (set paths.cache_root, FCHECK_CACHE_ROOT or --cache-root)");
    };
    let cache = ResultCache::open(root)?;
    match action {
        CacheAction::Stats => {
            let s = cache.stats();
            println!("root: {}", root.display());
            println!(
                "entries: {}\nbytes: {}\ncorrupt: {}\ntemp files: {}",
                s.entries, s.bytes, s.corrupt, s.temp_files
            );
        }
        CacheAction::Gc { all } => {
            let r = cache.gc(*all)?;
            println!(
                "removed {} corrupt, {} temp, {} entries",
                r.removed_corrupt, r.removed_temp, r.removed_entries
            );
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Factcheck {
            claim,
            image,
            date,
            strategy,
            trace_out,
        } => cmd_factcheck(&cfg, claim, image, date, &strategy, trace_out),
        Command::Run {
            dataset,
            experiment_name,
            resume,
            strategy,
        } => cmd_run(&cfg, &dataset, experiment_name, resume, &strategy, provider_spec(&cfg)),
        Command::Trace { path, show } => {
            let trace = RunTrace::read(&path)?;
            print!("{}", render::trace(&trace, show));
            Ok(0)
        }
        Command::Cache { action } => cmd_cache(&cfg, &action),
        Command::Transcripts { action } => match action {
            TranscriptAction::Record {
                dataset,
                experiment_name,
                strategy,
            } => {
                let spec = ProviderSpec::Record {
                    transcript: cfg.provider.transcript.clone(),
                };
                cmd_run(&cfg, &dataset, experiment_name, false, &strategy, spec)
            }
            TranscriptAction::Verify { dataset, strategy } => cmd_verify(&cfg, &dataset, &strategy),
        },
    }
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("FCHECK_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_offline_forces_replay() {
        let cli = Cli::try_parse_from([
            "fcheck",
            "--offline",
            "--provider",
            "live",
            "--workers",
            "3",
            "--backend",
            "live_search",
            "trace",
            "t.jsonl",
        ])
        .unwrap();
        let cfg = resolve_config(&cli.global).unwrap();
        assert_eq!(cfg.workers, 3);
        assert_eq!(cfg.provider.kind, ProviderKind::Scripted);
        assert_eq!(cfg.retrieval.backend, BackendKind::OfflineCorpus);
    }

    #[test]
    fn unknown_reasoner_is_a_usage_error() {
        let err = Cli::try_parse_from(["fcheck", "run", "d.jsonl", "--reasoner", "bfs"])
            .err()
            .unwrap();
        assert!(err.use_stderr());
    }

    #[test]
    fn default_experiment_name() {
        let cfg = AppConfig::default();
        let s = Strategy {
            reasoner: Some(ReasonerKind::Torag),
            veracity: None,
        };
        assert_eq!(experiment(&cfg, &s, None, ProviderSpec::Live).name, "torag-cot_cove");
    }
}

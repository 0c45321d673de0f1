use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use chrono::NaiveDate;
use fcheck_core::domain::ClaimRecord;
use fcheck_core::evalharness::{load_dataset, run_experiment, ExperimentConfig, FactChecker, RunOptions};
use fcheck_core::provider::{ids, MockProvider, RecordingProvider};
use fcheck_core::reasoners::ReasonerKind;
use fcheck_core::testkit::golden::{self, GoldenScenario};
use fcheck_core::veracity::VeracityKind;
use tempfile::TempDir;

const KNEE: &str = "Joe Biden took a knee during the national anthem.";

struct Fixture {
    _dir: TempDir,
    scn: GoldenScenario,
    transcript: PathBuf,
    traces: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let scn = golden::write_golden(&dir.path().join("golden")).unwrap();
        let transcript = dir.path().join("transcript.jsonl");
        let traces = dir.path().join("traces");
        Self {
            _dir: dir,
            scn,
            transcript,
            traces,
        }
    }

    fn cfg(reasoner: ReasonerKind, veracity: VeracityKind) -> ExperimentConfig {
        ExperimentConfig::new(format!("{reasoner}-{veracity}"), reasoner, veracity)
    }

    /// Records the knee claim as the CLI issues it for `factcheck`.
    fn record_knee(&self, mock: MockProvider, reasoner: ReasonerKind, veracity: VeracityKind) {
        let provider = RecordingProvider::open(mock, &self.transcript).unwrap();
        let stores = golden::stores(&self.scn, Arc::new(provider));
        let mut record = ClaimRecord::new("cli", KNEE).unwrap();
        record.claim_date = NaiveDate::from_ymd_opt(2020, 6, 10);
        let out = FactChecker::new(&stores, &Self::cfg(reasoner, veracity)).check_claim(&record);
        assert!(out.error.is_none(), "{:?}", out.error);
    }

    fn record_dataset(&self, reasoner: ReasonerKind, veracity: VeracityKind) {
        let provider = RecordingProvider::open(golden::mock(), &self.transcript).unwrap();
        let stores = golden::stores(&self.scn, Arc::new(provider));
        let scratch = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            traces_root: scratch.path().to_path_buf(),
            workers: 1,
            resume: false,
        };
        let records = load_dataset(&self.scn.dataset).unwrap();
        run_experiment(&Self::cfg(reasoner, veracity), &records, &stores, &opts).unwrap();
    }

    fn cmd(&self) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_fcheck"));
        c.env_clear()
            .arg("--offline")
            .arg("--transcript")
            .arg(&self.transcript)
            .arg("--corpus-dir")
            .arg(&self.scn.corpus)
            .arg("--traces-root")
            .arg(&self.traces);
        c
    }

    fn factcheck(&self, extra: &[&str]) -> Output {
        self.cmd()
            .args(["factcheck", KNEE, "--date", "2020-06-10"])
            .args(extra)
            .output()
            .unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("process exited normally")
}

#[test]
fn offline_factcheck_prints_verdict_and_chain() {
    let fx = Fixture::new();
    fx.record_knee(golden::mock(), ReasonerKind::Corag, VeracityKind::CotCove);
    let out = fx.factcheck(&[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("label: refuted"), "{text}");
    assert!(text.contains("Q1: Where did Joe Biden kneel in June 2020?"), "{text}");
    assert!(text.contains("A2: "), "{text}");
}

#[test]
fn failed_label_exits_2() {
    let fx = Fixture::new();
    let mock = golden::mock().reply(
        ids::VERACITY_STANDARD,
        "VERDICT: failed\nEXPLANATION: The answers do not settle it.",
    );
    fx.record_knee(mock, ReasonerKind::Corag, VeracityKind::Standard);
    let out = fx.factcheck(&["--veracity", "standard"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stdout(&out).contains("label: failed"));
}

#[test]
fn missing_corpus_exits_1() {
    let fx = Fixture::new();
    let out = fx
        .cmd()
        .args(["--corpus-dir", "/nonexistent/corpus", "factcheck", KNEE])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("error:"));
}

#[test]
fn replay_miss_exits_1() {
    let fx = Fixture::new();
    fx.record_knee(golden::mock(), ReasonerKind::Corag, VeracityKind::CotCove);
    let out = fx
        .cmd()
        .args(["factcheck", "A claim that was never recorded."])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn usage_errors_exit_64() {
    let fx = Fixture::new();
    let out = fx.factcheck(&["--reasoner", "bfs"]);
    assert_eq!(code(&out), 64);
    let out = fx.cmd().args(["factcheck", KNEE, "--date", "june"]).output().unwrap();
    assert_eq!(code(&out), 64);
    let out = Command::new(env!("CARGO_BIN_EXE_fcheck"))
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn trace_out_and_trace_views() {
    let fx = Fixture::new();
    fx.record_knee(golden::mock(), ReasonerKind::Corag, VeracityKind::CotCove);
    let trace = fx.traces.join("knee.jsonl");
    let out = fx.factcheck(&["--trace-out", trace.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let q = fx
        .cmd()
        .args(["trace", trace.to_str().unwrap(), "--show", "questions"])
        .output()
        .unwrap();
    assert_eq!(code(&q), 0);
    let lines: Vec<_> = stdout(&q).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 2, "{lines:?}");
    assert!(lines.iter().all(|l| l.starts_with('Q')));

    let p = fx
        .cmd()
        .args(["trace", trace.to_str().unwrap(), "--show", "prompts"])
        .output()
        .unwrap();
    assert!(stdout(&p).contains("--- veracity_cot"), "{}", stdout(&p));

    let all = fx.cmd().args(["trace", trace.to_str().unwrap()]).output().unwrap();
    let text = stdout(&all);
    assert!(
        text.contains("cove: 2 verification questions, refuted -> refuted"),
        "{text}"
    );
    assert!(text.contains("result: refuted"), "{text}");
}

#[test]
fn corrupt_trace_names_the_line() {
    let fx = Fixture::new();
    fx.record_knee(golden::mock(), ReasonerKind::Corag, VeracityKind::CotCove);
    let trace = fx.traces.join("knee.jsonl");
    assert_eq!(code(&fx.factcheck(&["--trace-out", trace.to_str().unwrap()])), 0);
    let mut text = std::fs::read_to_string(&trace).unwrap();
    text.push_str("{not json\n");
    let n = text.lines().count();
    std::fs::write(&trace, text).unwrap();
    let out = fx.cmd().args(["trace", trace.to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains(&format!("line {n}")), "{}", stderr(&out));
}

#[test]
fn torag_trace_marks_surviving_branch() {
    let fx = Fixture::new();
    fx.record_knee(golden::mock(), ReasonerKind::Torag, VeracityKind::CotCove);
    let trace = fx.traces.join("t.jsonl");
    let out = fx.factcheck(&["--reasoner", "torag", "--trace-out", trace.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(
        &fx.cmd()
            .args(["trace", trace.to_str().unwrap(), "--show", "all"])
            .output()
            .unwrap(),
    );
    assert!(text.contains("step 1 branches:"), "{text}");
    let marked: Vec<_> = text.lines().filter(|l| l.trim_start().starts_with("* [")).collect();
    assert_eq!(marked.len(), 2, "{text}");
    // the fixture always answers CHOICE: 1, and candidates are numbered from 0
    assert!(marked.iter().all(|l| l.contains("[1]")), "{text}");
    assert_eq!(
        text.lines().filter(|l| l.trim_start().starts_with("[")).count(),
        4,
        "{text}"
    );
}

fn run_report(fx: &Fixture, extra: &[&str]) -> Vec<u8> {
    let out = fx
        .cmd()
        .args(["run", fx.scn.dataset.to_str().unwrap(), "--reasoner", "torag"])
        .args(extra)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("WEIGHTED F1"), "{text}");
    std::fs::read(fx.traces.join("torag-cot_cove").join("report.json")).unwrap()
}

#[test]
fn run_writes_report_and_resume_needs_no_provider() {
    let fx = Fixture::new();
    fx.record_dataset(ReasonerKind::Torag, VeracityKind::CotCove);
    let first = run_report(&fx, &[]);
    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(report["metrics"]["n"], 3);
    assert_eq!(report["metrics"]["weighted_f1"], 1.0);
    assert_eq!(report["predictions"]["c2-pompeo"], "supported");

    std::fs::remove_file(&fx.transcript).unwrap();
    std::fs::write(&fx.transcript, "").unwrap();
    let resumed = run_report(&fx, &["--resume"]);
    assert_eq!(first, resumed);
}

#[test]
fn transcripts_verify_reports_misses() {
    let fx = Fixture::new();
    fx.record_dataset(ReasonerKind::Corag, VeracityKind::CotCove);
    let ds = fx.scn.dataset.to_str().unwrap();
    let ok = fx.cmd().args(["transcripts", "verify", ds]).output().unwrap();
    assert_eq!(code(&ok), 0, "{}{}", stdout(&ok), stderr(&ok));
    assert!(stdout(&ok).contains("3 of 3 claims replay cleanly"));

    let miss = fx
        .cmd()
        .args(["transcripts", "verify", ds, "--reasoner", "subq"])
        .output()
        .unwrap();
    assert_eq!(code(&miss), 1);
    assert!(stdout(&miss).contains("0 of 3"), "{}", stdout(&miss));
}

#[test]
fn cache_stats_and_gc() {
    let fx = Fixture::new();
    fx.record_knee(golden::mock(), ReasonerKind::Corag, VeracityKind::CotCove);
    let cache = fx.traces.join("cache");
    let c = cache.to_str().unwrap();
    assert_eq!(code(&fx.factcheck(&["--cache-root", c])), 0);
    let stats = stdout(&fx.cmd().args(["--cache-root", c, "cache", "stats"]).output().unwrap());
    let entries: usize = stats
        .lines()
        .find_map(|l| l.strip_prefix("entries: "))
        .and_then(|n| n.parse().ok())
        .unwrap();
    assert!(entries > 0, "{stats}");

    let gc = fx
        .cmd()
        .args(["--cache-root", c, "cache", "gc", "--all"])
        .output()
        .unwrap();
    assert_eq!(code(&gc), 0);
    assert!(stdout(&gc).contains(&format!("{entries} entries")), "{}", stdout(&gc));
    let stats = stdout(&fx.cmd().args(["--cache-root", c, "cache", "stats"]).output().unwrap());
    assert!(stats.contains("entries: 0"));

    let none = fx.cmd().args(["cache", "stats"]).output().unwrap();
    assert_eq!(code(&none), 1);
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("fcheck.toml");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn flags_beat_env_and_env_beats_file() {
    let fx = Fixture::new();
    fx.record_knee(golden::mock(), ReasonerKind::Corag, VeracityKind::CotCove);
    let cfg = write_config(&fx.scn.root, "workers = 0\n");
    let base = || {
        let mut c = Command::new(env!("CARGO_BIN_EXE_fcheck"));
        c.env_clear()
            .env("FCHECK_CONFIG", &cfg)
            .env("FCHECK_OFFLINE_IGNORED", "1")
            .env("FCHECK_TRANSCRIPT", &fx.transcript)
            .env("FCHECK_CORPUS_DIR", &fx.scn.corpus)
            .arg("--offline")
            .args(["factcheck", KNEE, "--date", "2020-06-10"]);
        c
    };
    // file says workers = 0, which is invalid
    assert_eq!(code(&base().output().unwrap()), 1);
    // env overrides the file
    assert_eq!(code(&base().env("FCHECK_WORKERS", "2").output().unwrap()), 0);
    // a bad env value loses to the flag
    let out = base()
        .env("FCHECK_CORPUS_DIR", "/nonexistent")
        .arg("--workers")
        .arg("1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    let out = base()
        .env("FCHECK_CORPUS_DIR", "/nonexistent")
        .arg("--workers=1")
        .arg("--corpus-dir")
        .arg(&fx.scn.corpus)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

use std::fmt::Write as _;

use fcheck_core::domain::{EvidenceLog, QAPair, VeracityVerdict};
use fcheck_core::trace::{stage, RunTrace, TraceEvent};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Show {
    Questions,
    Answers,
    Prompts,
    All,
}

fn pair_of(e: &TraceEvent) -> Option<QAPair> {
    serde_json::from_value(e.detail.clone()?).ok()
}

fn kind_tag(p: &QAPair) -> &'static str {
    match p.question.kind {
        fcheck_core::domain::QuestionKind::Image => " [image]",
        fcheck_core::domain::QuestionKind::Web => "",
    }
}

pub fn verdict(v: &VeracityVerdict, log: Option<&EvidenceLog>) -> String {
    let mut out = format!("label: {}\n", v.label);
    if v.corrected {
        out.push_str("corrected: yes\n");
    }
    let _ = writeln!(out, "explanation: {}", v.explanation);
    if let Some(log) = log {
        out.push('\n');
        for (i, p) in log.pairs.iter().enumerate() {
            let _ = writeln!(out, "Q{}{}: {}", i + 1, kind_tag(p), p.question.text);
            let _ = writeln!(out, "A{}: {}", i + 1, p.answer);
        }
    }
    out
}

fn prompts(trace: &RunTrace) -> String {
    let mut out = String::new();
    for e in trace.events_of(stage::PROMPT) {
        let _ = writeln!(
            out,
            "--- {} ({}) {}",
            e.template_id.as_deref().unwrap_or("?"),
            e.purpose.as_deref().unwrap_or("-"),
            e.bindings_digest.as_deref().map_or("", |d| &d[..d.len().min(12)]),
        );
        for (k, v) in e.bindings.iter().flatten() {
            let _ = writeln!(out, "{k}: {v}");
        }
        match (&e.response_text, &e.detail) {
            (Some(r), _) => {
                let _ = writeln!(out, ">>> {r}");
            }
            (None, Some(d)) => {
                let _ = writeln!(out, "!!! {}", d["error"].as_str().unwrap_or("error"));
            }
            _ => {}
        }
    }
    out
}

fn str_at<'a>(v: &'a Value, path: &[&str]) -> &'a str {
    path.iter().fold(v, |v, k| &v[k]).as_str().unwrap_or("")
}

/// Human-readable view of a claim trace.
pub fn trace(trace: &RunTrace, show: Show) -> String {
    if show == Show::Prompts {
        return prompts(trace);
    }
    let mut out = String::new();
    let mut step = 0;
    let mut branches: Vec<QAPair> = Vec::new();
    for e in &trace.events {
        let detail = e.detail.as_ref().unwrap_or(&Value::Null);
        match e.stage.as_str() {
            stage::CLAIM if show == Show::All => {
                let _ = writeln!(out, "claim {}: {}", trace.claim_id, str_at(detail, &["claim_text"]));
            }
            stage::BRANCH_QA => branches.extend(pair_of(e)),
            stage::QA => {
                let Some(p) = pair_of(e) else { continue };
                step += 1;
                if show == Show::All && !branches.is_empty() {
                    let _ = writeln!(out, "step {step} branches:");
                    for b in branches.drain(..) {
                        let mark = if b.question.branch_index == p.question.branch_index {
                            "*"
                        } else {
                            " "
                        };
                        let _ = writeln!(
                            out,
                            "  {mark} [{}] {}",
                            b.question.branch_index.unwrap_or(0),
                            b.question.text
                        );
                        let _ = writeln!(out, "        -> {}", b.answer);
                    }
                }
                branches.clear();
                match show {
                    Show::Questions => {
                        let _ = writeln!(out, "Q{step}{}: {}", kind_tag(&p), p.question.text);
                    }
                    Show::Answers => {
                        let _ = writeln!(out, "A{step}: {}", p.answer);
                    }
                    _ => {
                        let _ = writeln!(out, "Q{step}{}: {}", kind_tag(&p), p.question.text);
                        let _ = writeln!(out, "A{step}: {}", p.answer);
                        if !p.sources.is_empty() {
                            let _ = writeln!(out, "   sources: {}", p.sources.join(", "));
                        }
                    }
                }
            }
            stage::VERDICT if show == Show::All => {
                let _ = writeln!(
                    out,
                    "verdict ({}): {} - {}",
                    str_at(detail, &["variant"]),
                    str_at(detail, &["verdict", "label"]),
                    str_at(detail, &["verdict", "explanation"])
                );
            }
            stage::COVE if show == Show::All => {
                let n = detail["round"]["questions"].as_array().map_or(0, Vec::len);
                let _ = writeln!(
                    out,
                    "cove: {n} verification questions, {} -> {}",
                    str_at(detail, &["original", "label"]),
                    str_at(detail, &["final", "label"])
                );
            }
            stage::WARNING | stage::ERROR if show == Show::All => {
                let msg = detail["message"].as_str().or(detail["error"].as_str()).unwrap_or("");
                let _ = writeln!(out, "{}: {msg}", e.stage);
            }
            stage::RESULT if show == Show::All => {
                let _ = writeln!(out, "result: {}", str_at(detail, &["verdict", "label"]));
            }
            _ => {}
        }
    }
    out
}

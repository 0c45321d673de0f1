//! Correctness-of-veracity metrics: per-class F1 over the two gold classes,
//! support-weighted F1, and counts of `failed` predictions per gold class.
//!
//! Convention: a `failed` prediction is a false negative for its gold class
//! and a false positive for neither class. A class with no true positives has
//! F1 = 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("prediction and gold id sets differ: {0}")]
    KeyMismatch(String),
    #[error("gold label for {0} must be supported or refuted")]
    InvalidGold(String),
    #[error("nothing to evaluate")]
    Empty,
}

const PRED: [Label; 3] = [Label::Supported, Label::Refuted, Label::Failed];
const GOLD: [Label; 2] = [Label::Supported, Label::Refuted];

fn pred_row(l: Label) -> usize {
    PRED.iter().position(|&p| p == l).expect("closed label set")
}

fn gold_col(l: Label) -> Option<usize> {
    GOLD.iter().position(|&g| g == l)
}

/// Counts indexed `[predicted][gold]`, rows supported / refuted / failed,
/// columns supported / refuted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[usize; 2]; 3]);

impl Confusion {
    pub fn add(&mut self, pred: Label, gold: Label) -> Result<(), Label> {
        let g = gold_col(gold).ok_or(gold)?;
        self.0[pred_row(pred)][g] += 1;
        Ok(())
    }

    pub fn get(&self, pred: Label, gold: Label) -> usize {
        gold_col(gold).map_or(0, |g| self.0[pred_row(pred)][g])
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn support(&self, gold: Label) -> usize {
        PRED.iter().map(|&p| self.get(p, gold)).sum()
    }

    fn f1(&self, class: Label) -> f64 {
        let other = if class == Label::Supported {
            Label::Refuted
        } else {
            Label::Supported
        };
        let tp = self.get(class, class) as f64;
        let predicted = tp + self.get(class, other) as f64;
        let support = self.support(class) as f64;
        if tp == 0.0 {
            return 0.0;
        }
        let precision = tp / predicted;
        let recall = tp / support;
        2.0 * precision * recall / (precision + recall)
    }

    /// Metrics derived from this table alone.
    pub fn report(&self) -> MetricsReport {
        let n = self.total();
        let f1_s = self.f1(Label::Supported);
        let f1_r = self.f1(Label::Refuted);
        let weighted_f1 = if n == 0 {
            0.0
        } else {
            (self.support(Label::Supported) as f64 * f1_s + self.support(Label::Refuted) as f64 * f1_r) / n as f64
        };
        MetricsReport {
            per_class_f1: PerClass {
                supported: f1_s,
                refuted: f1_r,
            },
            weighted_f1,
            failed_counts: FailedCounts {
                supported: self.get(Label::Failed, Label::Supported),
                refuted: self.get(Label::Failed, Label::Refuted),
            },
            n,
            confusion: *self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub supported: f64,
    pub refuted: f64,
}

/// Failed predictions split by gold class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedCounts {
    pub supported: usize,
    pub refuted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_f1: PerClass,
    pub weighted_f1: f64,
    pub failed_counts: FailedCounts,
    pub n: usize,
    pub confusion: Confusion,
}

/// Scores predictions against gold labels over identical id sets.
pub fn evaluate(
    predictions: &BTreeMap<String, Label>,
    gold: &BTreeMap<String, Label>,
) -> Result<MetricsReport, EvalError> {
    if predictions.len() != gold.len() || predictions.keys().ne(gold.keys()) {
        let missing: Vec<_> = gold.keys().filter(|k| !predictions.contains_key(*k)).collect();
        let extra: Vec<_> = predictions.keys().filter(|k| !gold.contains_key(*k)).collect();
        return Err(EvalError::KeyMismatch(format!(
            "missing predictions {missing:?}, unknown ids {extra:?}"
        )));
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut table = Confusion::default();
    for (id, &g) in gold {
        table
            .add(predictions[id], g)
            .map_err(|_| EvalError::InvalidGold(id.clone()))?;
    }
    Ok(table.report())
}

/// Plain-text table with one row per configuration.
pub fn render_table(rows: &[(&str, &MetricsReport)]) -> String {
    let width = rows
        .iter()
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(0)
        .max("CONFIGURATION".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>13}  {:>11}  {:>11}  {:>11}",
        "CONFIGURATION", "SUPPORTED F1", "REFUTED F1", "# FAILED s|r", "WEIGHTED F1"
    );
    for (name, r) in rows {
        let failed = format!("{} | {}", r.failed_counts.supported, r.failed_counts.refuted);
        let _ = writeln!(
            out,
            "{:<width$}  {:>13.2}  {:>11.2}  {:>12}  {:>11.2}",
            name, r.per_class_f1.supported, r.per_class_f1.refuted, failed, r.weighted_f1
        );
    }
    out
}

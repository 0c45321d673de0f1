use std::collections::HashSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{parse_label, ClaimRecord, Label};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset line {line}, field {field}: {reason}")]
    Schema { line: usize, field: String, reason: String },
    #[error("dataset {0} has no records")]
    EmptyDataset(PathBuf),
}

fn schema(line: usize, field: &str, reason: impl Into<String>) -> DatasetError {
    DatasetError::Schema {
        line,
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn opt_str(obj: &Map<String, Value>, line: usize, field: &str) -> Result<Option<String>, DatasetError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(schema(line, field, "expected a string")),
    }
}

fn parse_record(line: usize, text: &str) -> Result<ClaimRecord, DatasetError> {
    let value: Value = serde_json::from_str(text).map_err(|e| schema(line, "<line>", e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(schema(line, "<line>", "expected a JSON object"));
    };
    let id = opt_str(&obj, line, "id")?
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| schema(line, "id", "required non-empty string"))?;
    let claim_text = opt_str(&obj, line, "claim_text")?.unwrap_or_default();
    let mut record = ClaimRecord::new(id, claim_text).map_err(|e| schema(line, "claim_text", e.to_string()))?;
    record.image_ref = opt_str(&obj, line, "image_ref")?.filter(|s| !s.trim().is_empty());
    record.claim_date = opt_str(&obj, line, "claim_date")?
        .map(|d| {
            NaiveDate::parse_from_str(&d, "%Y-%m-%d").map_err(|e| schema(line, "claim_date", format!("{d:?}: {e}")))
        })
        .transpose()?;
    let gold = opt_str(&obj, line, "gold_label")?.ok_or_else(|| schema(line, "gold_label", "required"))?;
    record.gold_label = match parse_label(&gold) {
        Ok(l @ (Label::Supported | Label::Refuted)) => Some(l),
        _ => {
            return Err(schema(
                line,
                "gold_label",
                format!("{gold:?} is not supported or refuted"),
            ))
        }
    };
    record.ruling_outline = opt_str(&obj, line, "ruling_outline")?;
    Ok(record)
}

/// Reads a JSON-lines dataset. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn load_dataset(path: &Path) -> Result<Vec<ClaimRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(i + 1, line)?;
        if !seen.insert(rec.id.clone()) {
            return Err(schema(i + 1, "id", format!("duplicate id {:?}", rec.id)));
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset(path.to_path_buf()));
    }
    Ok(records)
}

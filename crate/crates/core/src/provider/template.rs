//! Prompt templates with `{{name}}` placeholders and the registry that holds them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::media::ImageData;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("missing binding {0:?}")]
    MissingBinding(String),
    #[error("unused binding {0:?}")]
    UnusedBinding(String),
    #[error("template {template_id:?} is malformed: {reason}")]
    Malformed { template_id: String, reason: String },
    #[error("template {0:?} requires an attached image")]
    MissingImage(String),
    #[error("cannot read prompt directory: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Multimodal,
}

/// Every template id the pipeline renders.
pub mod ids {
    pub const CLAIM_GENERATION: &str = "claim_generation";
    pub const ROUTE_QUESTION: &str = "route_question";
    pub const FIRST_QUESTION: &str = "first_question";
    pub const FOLLOWUP_CHECK: &str = "followup_check";
    pub const FOLLOWUP_QUESTION: &str = "followup_question";
    pub const TORAG_FIRST_QUESTIONS: &str = "torag_first_questions";
    pub const TORAG_FOLLOWUP_QUESTIONS: &str = "torag_followup_questions";
    pub const QA_ELIMINATION: &str = "qa_elimination";
    pub const IMAGE_QA: &str = "image_qa";
    pub const WEB_ANSWER: &str = "web_answer";
    pub const SUBQ_QUESTIONS: &str = "subq_questions";
    pub const VERACITY_STANDARD: &str = "veracity_standard";
    pub const VERACITY_COT: &str = "veracity_cot";
    pub const COVE_QUESTIONS: &str = "cove_questions";
    pub const COVE_CORRECTION: &str = "cove_correction";

    pub const ALL: [&str; 15] = [
        CLAIM_GENERATION,
        ROUTE_QUESTION,
        FIRST_QUESTION,
        FOLLOWUP_CHECK,
        FOLLOWUP_QUESTION,
        TORAG_FIRST_QUESTIONS,
        TORAG_FOLLOWUP_QUESTIONS,
        QA_ELIMINATION,
        IMAGE_QA,
        WEB_ANSWER,
        SUBQ_QUESTIONS,
        VERACITY_STANDARD,
        VERACITY_COT,
        COVE_QUESTIONS,
        COVE_CORRECTION,
    ];
}

const MODALITY_HEADER: &str = "#! modality:";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
    pub required_bindings: BTreeSet<String>,
    pub modality: Modality,
}

impl PromptTemplate {
    pub fn new(
        template_id: impl Into<String>,
        body: impl Into<String>,
        modality: Modality,
    ) -> Result<Self, TemplateError> {
        let template_id = template_id.into();
        let body = body.into();
        let required_bindings = placeholders(&body).map_err(|reason| TemplateError::Malformed {
            template_id: template_id.clone(),
            reason,
        })?;
        Ok(Self {
            template_id,
            body,
            required_bindings,
            modality,
        })
    }

    /// Parses a prompt file. An optional first line `#! modality: multimodal` sets the modality.
    pub fn parse(template_id: impl Into<String>, source: &str) -> Result<Self, TemplateError> {
        let template_id = template_id.into();
        let (modality, body) = match source.split_once('\n') {
            Some((first, rest)) if first.trim_start().starts_with(MODALITY_HEADER) => {
                let value = first.trim_start()[MODALITY_HEADER.len()..].trim();
                let modality = match value {
                    "text" => Modality::Text,
                    "multimodal" => Modality::Multimodal,
                    other => {
                        return Err(TemplateError::Malformed {
                            template_id,
                            reason: format!("unknown modality {other:?}"),
                        })
                    }
                };
                (modality, rest)
            }
            _ => (Modality::Text, source),
        };
        Self::new(template_id, body, modality)
    }

    fn substitute(&self, bindings: &BTreeMap<String, String>) -> String {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            // placeholders() already validated every opening brace pair
            let end = after.find("}}").expect("validated placeholder");
            let name = after[..end].trim();
            out.push_str(&bindings[name]);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        out
    }
}

fn placeholders(body: &str) -> Result<BTreeSet<String>, String> {
    let mut names = BTreeSet::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| "unterminated placeholder".to_string())?;
        let name = after[..end].trim();
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        {
            return Err(format!("invalid placeholder name {name:?}"));
        }
        names.insert(name.to_string());
        rest = &after[end + 2..];
    }
    Ok(names)
}

/// Image attached to a multimodal prompt.
pub type Attachment = ImageData;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptInstance {
    pub template_id: String,
    pub rendered_text: String,
    pub bindings_digest: String,
    pub bindings: BTreeMap<String, String>,
    pub attached_image: Option<Attachment>,
}

impl PromptInstance {
    pub fn binding(&self, name: &str) -> Option<&str> {
        self.bindings.get(name).map(String::as_str)
    }
}

/// SHA-256 over the template id, the sorted bindings and the attached image hash.
///
/// Fields are length-prefixed so no two distinct inputs share an encoding.
pub fn bindings_digest(template_id: &str, bindings: &BTreeMap<String, String>, image_sha256: Option<&str>) -> String {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(b"fcheck-prompt-v1");
    field(template_id.as_bytes());
    for (k, v) in bindings {
        field(k.as_bytes());
        field(v.as_bytes());
    }
    if let Some(sha) = image_sha256 {
        field(b"image");
        field(sha.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Default)]
pub struct PromptRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

macro_rules! builtin {
    ($($id:literal),* $(,)?) => {
        &[$(($id, include_str!(concat!("../../prompts/", $id, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin!(
    "claim_generation",
    "route_question",
    "first_question",
    "followup_check",
    "followup_question",
    "torag_first_questions",
    "torag_followup_questions",
    "qa_elimination",
    "image_qa",
    "web_answer",
    "subq_questions",
    "veracity_standard",
    "veracity_cot",
    "cove_questions",
    "cove_correction",
);

impl PromptRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The prompts shipped in the crate's `prompts/` directory.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        for (id, src) in BUILTIN {
            reg.insert(PromptTemplate::parse(*id, src).expect("builtin prompt parses"));
        }
        reg
    }

    /// Loads every `<template_id>.txt` in `dir`, layered over the builtin set.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut reg = Self::builtin();
        let entries = std::fs::read_dir(dir).map_err(|e| TemplateError::Io(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        for path in paths {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let src =
                std::fs::read_to_string(&path).map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
            reg.insert(PromptTemplate::parse(id, &src)?);
        }
        Ok(reg)
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.template_id.clone(), template);
    }

    pub fn get(&self, template_id: &str) -> Option<&PromptTemplate> {
        self.templates.get(template_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(
        &self,
        template_id: &str,
        bindings: BTreeMap<String, String>,
        image: Option<Attachment>,
    ) -> Result<PromptInstance, TemplateError> {
        let template = self
            .get(template_id)
            .ok_or_else(|| TemplateError::UnknownTemplate(template_id.to_string()))?;
        if let Some(missing) = template.required_bindings.iter().find(|n| !bindings.contains_key(*n)) {
            return Err(TemplateError::MissingBinding(missing.clone()));
        }
        if let Some(unused) = bindings.keys().find(|k| !template.required_bindings.contains(*k)) {
            return Err(TemplateError::UnusedBinding(unused.clone()));
        }
        if template.modality == Modality::Multimodal && image.is_none() {
            return Err(TemplateError::MissingImage(template_id.to_string()));
        }
        let image = if template.modality == Modality::Multimodal {
            image
        } else {
            None
        };
        Ok(PromptInstance {
            template_id: template_id.to_string(),
            rendered_text: template.substitute(&bindings),
            bindings_digest: bindings_digest(template_id, &bindings, image.as_ref().map(|i| i.sha256.as_str())),
            bindings,
            attached_image: image,
        })
    }
}

/// Builds a binding map from `(name, value)` pairs.
pub fn bindings<I, K, V>(pairs: I) -> BTreeMap<String, String>
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<String>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_registry_has_every_pipeline_template() {
        let reg = PromptRegistry::builtin();
        for id in ids::ALL {
            assert!(reg.get(id).is_some(), "missing {id}");
        }
        assert_eq!(reg.ids().count(), ids::ALL.len());
        assert_eq!(reg.get(ids::CLAIM_GENERATION).unwrap().modality, Modality::Multimodal);
        assert_eq!(reg.get(ids::WEB_ANSWER).unwrap().modality, Modality::Text);
    }

    #[test]
    fn placeholders_match_required_bindings() {
        let reg = PromptRegistry::builtin();
        let first = reg.get(ids::FIRST_QUESTION).unwrap();
        assert_eq!(
            first.required_bindings,
            ["claim", "image_context"].iter().map(|s| s.to_string()).collect()
        );
    }

    #[test]
    fn renders_claim_into_text() {
        let reg = PromptRegistry::builtin();
        let inst = reg
            .render(
                ids::FIRST_QUESTION,
                bindings([("claim", "X"), ("image_context", "")]),
                None,
            )
            .unwrap();
        assert!(inst.rendered_text.contains("Claim: X"));
        assert!(!inst.rendered_text.contains("{{"));
        assert_eq!(inst.bindings_digest.len(), 64);
    }

    #[test]
    fn missing_binding_is_reported() {
        let reg = PromptRegistry::builtin();
        let err = reg
            .render(ids::FIRST_QUESTION, bindings([("claim", "X")]), None)
            .unwrap_err();
        assert_eq!(err, TemplateError::MissingBinding("image_context".into()));
    }

    #[test]
    fn unused_binding_is_reported() {
        let reg = PromptRegistry::builtin();
        let err = reg
            .render(
                ids::FIRST_QUESTION,
                bindings([("claim", "X"), ("image_context", ""), ("extra", "y")]),
                None,
            )
            .unwrap_err();
        assert_eq!(err, TemplateError::UnusedBinding("extra".into()));
    }

    #[test]
    fn unknown_template_is_reported() {
        let reg = PromptRegistry::builtin();
        assert_eq!(
            reg.render("nope", BTreeMap::new(), None).unwrap_err(),
            TemplateError::UnknownTemplate("nope".into())
        );
    }

    #[test]
    fn digest_is_deterministic_and_binding_sensitive() {
        let reg = PromptRegistry::builtin();
        let a = reg
            .render(
                ids::FIRST_QUESTION,
                bindings([("claim", "X"), ("image_context", "")]),
                None,
            )
            .unwrap();
        let b = reg
            .render(
                ids::FIRST_QUESTION,
                bindings([("claim", "X"), ("image_context", "")]),
                None,
            )
            .unwrap();
        let c = reg
            .render(
                ids::FIRST_QUESTION,
                bindings([("claim", "Y"), ("image_context", "")]),
                None,
            )
            .unwrap();
        assert_eq!(a.bindings_digest, b.bindings_digest);
        assert_ne!(a.bindings_digest, c.bindings_digest);
        // a value boundary shift must not collide
        let d1 = bindings_digest("t", &bindings([("a", "bc"), ("d", "")]), None);
        let d2 = bindings_digest("t", &bindings([("a", "b"), ("cd", "")]), None);
        assert_ne!(d1, d2);
    }

    #[test]
    fn multimodal_template_needs_image() {
        let reg = PromptRegistry::builtin();
        let err = reg
            .render(
                ids::CLAIM_GENERATION,
                bindings([("claim", "X"), ("claim_date", "unknown")]),
                None,
            )
            .unwrap_err();
        assert_eq!(err, TemplateError::MissingImage(ids::CLAIM_GENERATION.into()));
    }

    #[test]
    fn malformed_templates_rejected() {
        assert!(PromptTemplate::new("t", "hello {{ name", Modality::Text).is_err());
        assert!(PromptTemplate::new("t", "hello {{Bad-Name}}", Modality::Text).is_err());
        assert!(PromptTemplate::parse("t", "#! modality: audio\nbody").is_err());
    }

    #[test]
    fn dir_overrides_builtin() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("first_question.txt"),
            "Q for {{claim}} {{image_context}}",
        )
        .unwrap();
        let reg = PromptRegistry::from_dir(dir.path()).unwrap();
        let inst = reg
            .render(
                ids::FIRST_QUESTION,
                bindings([("claim", "X"), ("image_context", "I")]),
                None,
            )
            .unwrap();
        assert_eq!(inst.rendered_text, "Q for X I");
        assert!(reg.get(ids::WEB_ANSWER).is_some());
    }
}

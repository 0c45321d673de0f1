//! Multimodal claim generation: verbalize the claim image into prose context.

use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::context::StageContext;
use crate::domain::{ClaimRecord, MultimodalClaim};
use crate::error::Result;
use crate::media::{load_image, ImageData};
use crate::provider::{bindings, envelope, ids};

/// Loads the record's image, if it has one.
pub fn load_claim_image(record: &ClaimRecord, base_dir: Option<&Path>) -> Result<Option<ImageData>> {
    match &record.image_ref {
        Some(r) if !r.trim().is_empty() => Ok(Some(load_image(r, base_dir)?)),
        _ => Ok(None),
    }
}

fn time_frame(date: NaiveDate) -> String {
    format!("Claim stated in {}.", date.year())
}

/// Builds the reasoners' view of a claim. The claim text passes through untouched;
/// without an image the image context is empty and no model call is made.
pub fn generate_multimodal_claim(
    ctx: &StageContext<'_>,
    record: &ClaimRecord,
    image: Option<&ImageData>,
) -> Result<MultimodalClaim> {
    let Some(image) = image else {
        return Ok(MultimodalClaim::new(record.claim_text.clone(), "", record.claim_date)?);
    };
    let date = record
        .claim_date
        .map(|d| d.format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| "unknown".into());
    let reply = ctx.ask(
        "claim_generation",
        ids::CLAIM_GENERATION,
        bindings([("claim", record.claim_text.as_str()), ("claim_date", date.as_str())]),
        Some(image),
    )?;
    let mut context = envelope::lenient_block(&reply, "IMAGE_CONTEXT").unwrap_or_default();
    if let (false, Some(date)) = (context.is_empty(), record.claim_date) {
        let marker = time_frame(date);
        if !context.contains(marker.trim_end_matches('.')) {
            if !context.ends_with(char::is_whitespace) {
                context.push(' ');
            }
            context.push_str(&marker);
        }
    }
    Ok(MultimodalClaim::new(
        record.claim_text.clone(),
        context,
        record.claim_date,
    )?)
}

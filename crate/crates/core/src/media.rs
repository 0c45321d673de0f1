//! Image loading and format sniffing.

use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageLoadError {
    #[error("cannot read image {image_ref}: {reason}")]
    Unreadable { image_ref: String, reason: String },
    #[error("image {0} is not a JPEG or PNG file")]
    UnsupportedFormat(String),
}

impl ImageLoadError {
    pub fn image_ref(&self) -> &str {
        match self {
            ImageLoadError::Unreadable { image_ref, .. } => image_ref,
            ImageLoadError::UnsupportedFormat(r) => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Jpeg,
    Png,
}

impl ImageFormat {
    pub fn mime(self) -> &'static str {
        match self {
            ImageFormat::Jpeg => "image/jpeg",
            ImageFormat::Png => "image/png",
        }
    }
}

/// Identifies JPEG and PNG by their leading magic bytes.
pub fn sniff_format(bytes: &[u8]) -> Option<ImageFormat> {
    const PNG: &[u8] = b"\x89PNG\r\n\x1a\n";
    if bytes.starts_with(PNG) {
        Some(ImageFormat::Png)
    } else if bytes.len() >= 3 && bytes[..3] == [0xFF, 0xD8, 0xFF] {
        Some(ImageFormat::Jpeg)
    } else {
        None
    }
}

/// Image bytes plus their SHA-256, which keys caption fixtures and replay digests.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageData {
    pub image_ref: String,
    pub format: ImageFormat,
    pub sha256: String,
    pub bytes: Arc<[u8]>,
}

impl fmt::Debug for ImageData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageData")
            .field("image_ref", &self.image_ref)
            .field("format", &self.format)
            .field("sha256", &self.sha256)
            .field("len", &self.bytes.len())
            .finish()
    }
}

impl ImageData {
    pub fn from_bytes(image_ref: impl Into<String>, bytes: Vec<u8>) -> Result<Self, ImageLoadError> {
        let image_ref = image_ref.into();
        let format = sniff_format(&bytes).ok_or_else(|| ImageLoadError::UnsupportedFormat(image_ref.clone()))?;
        Ok(Self {
            sha256: sha256_hex(&bytes),
            image_ref,
            format,
            bytes: bytes.into(),
        })
    }

    pub fn mime(&self) -> &'static str {
        self.format.mime()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads an image from a local path or an http(s) URL. Relative paths resolve against `base_dir`.
pub fn load_image(image_ref: &str, base_dir: Option<&Path>) -> Result<ImageData, ImageLoadError> {
    let unreadable = |reason: String| ImageLoadError::Unreadable {
        image_ref: image_ref.to_string(),
        reason,
    };
    let bytes = if image_ref.starts_with("https://") || image_ref.starts_with("http://") {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| unreadable(e.to_string()))?;
        let resp = client
            .get(image_ref)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| unreadable(e.to_string()))?;
        resp.bytes().map_err(|e| unreadable(e.to_string()))?.to_vec()
    } else {
        let path = Path::new(image_ref);
        let path = match base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        };
        std::fs::read(&path).map_err(|e| unreadable(e.to_string()))?
    };
    ImageData::from_bytes(image_ref, bytes)
}

//! Image loading and request-size normalization.

use std::fs;
use std::io::Cursor;

use base64::Engine;
use image::codecs::jpeg::JpegEncoder;
use image::imageops::FilterType;
use image::DynamicImage;
use thiserror::Error;

use crate::model::ImageRef;

/// Longest edge, in pixels, of images sent to the model.
pub const MAX_EDGE: u32 = 2048;
const JPEG_QUALITY: u8 = 90;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InputError {
    #[error("cannot read image {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("cannot decode image {path}: {reason}")]
    Undecodable { path: String, reason: String },
}

/// A model-ready image: JPEG, long edge at most [`MAX_EDGE`], base64.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub base64: String,
    pub source: String,
    pub width: u32,
    pub height: u32,
}

pub fn encode_image(image_ref: &ImageRef) -> Result<EncodedImage, InputError> {
    let source = image_ref.describe();
    let bytes = match image_ref {
        ImageRef::Path(path) => fs::read(path).map_err(|e| InputError::Unreadable {
            path: source.clone(),
            reason: e.to_string(),
        })?,
        ImageRef::Bytes(b) => b.clone(),
    };
    let decoded = image::load_from_memory(&bytes).map_err(|e| InputError::Undecodable {
        path: source.clone(),
        reason: e.to_string(),
    })?;
    let bounded = bound_size(decoded);
    let rgb = bounded.to_rgb8();
    let mut jpeg = Vec::new();
    JpegEncoder::new_with_quality(Cursor::new(&mut jpeg), JPEG_QUALITY)
        .encode_image(&rgb)
        .map_err(|e| InputError::Undecodable {
            path: source.clone(),
            reason: e.to_string(),
        })?;
    Ok(EncodedImage {
        base64: base64::engine::general_purpose::STANDARD.encode(&jpeg),
        source,
        width: rgb.width(),
        height: rgb.height(),
    })
}

fn bound_size(img: DynamicImage) -> DynamicImage {
    if img.width().max(img.height()) <= MAX_EDGE {
        img
    } else {
        img.resize(MAX_EDGE, MAX_EDGE, FilterType::Triangle)
    }
}

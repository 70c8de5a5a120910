//! Corpus ingestion: manifest parsing, preprocessing, augmentation, and the
//! deterministic synthetic-face oracle.

pub mod augment;
pub mod image;
pub mod manifest;
pub mod synth;

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::types::MoodVector;
pub use augment::{augment, AugmentPolicy};
pub use image::{load_png, resize_bilinear, CenterCropResize, FaceImage, Preprocessor};
pub use manifest::{read_manifest, ManifestRow, ParsedManifest, Split};
pub use synth::{
    label_synthetic, make_synthetic_corpus, mouth_bbox, render_synthetic, RenderedFace,
    SyntheticParams,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest not found: {path}")]
    MissingManifest { path: String },
    #[error("i/o failure at {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("cannot decode image {path}: {detail}")]
    Decode { path: String, detail: String },
    #[error("cannot encode image {path}: {detail}")]
    Encode { path: String, detail: String },
    #[error("canvas too small: {size} (minimum {min})")]
    CanvasTooSmall { size: usize, min: usize },
    #[error("corpus counts must be positive, got n_train={n_train} n_test={n_test}")]
    InvalidCounts { n_train: usize, n_test: usize },
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
}

/// A face image with its annotations.
#[derive(Clone, Debug)]
pub struct ImageSample {
    pub image: FaceImage,
    pub path: String,
    pub split: Split,
    pub emotion: Option<usize>,
    pub av: Option<(f64, f64)>,
    pub mood: Option<MoodVector>,
}

impl ImageSample {
    pub fn has_any_annotation(&self) -> bool {
        self.emotion.is_some() || self.av.is_some() || self.mood.is_some()
    }
}

/// Why a manifest record was dropped during sanitation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Malformed,
    Decode,
    MissingAnnotations,
    BadAnnotation,
}

#[derive(Clone, Debug, Serialize)]
pub struct DroppedRecord {
    pub line: usize,
    pub path: String,
    pub reason: DropReason,
    pub detail: String,
}

/// Sanitation outcome of [`load_corpus`].
#[derive(Clone, Debug, Default, Serialize)]
pub struct SanitationReport {
    pub kept: usize,
    pub dropped: Vec<DroppedRecord>,
}

impl SanitationReport {
    pub fn dropped_count(&self) -> usize {
        self.dropped.len()
    }
}

fn validate_row(row: &ManifestRow) -> Result<(), String> {
    if let Some(e) = row.emotion {
        if e > 6 {
            return Err(format!("emotion id {e} out of [0,6]"));
        }
    }
    for (name, value) in [("valence", row.valence), ("arousal", row.arousal)] {
        if let Some(v) = value {
            if !(-1.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(format!("{name} {v} out of [-1,1]"));
            }
        }
    }
    if let Some(m) = row.mood {
        for (i, v) in m.iter().enumerate() {
            if !(-1.0..=1.0).contains(v) || !v.is_finite() {
                return Err(format!("mood[{i}] = {v} out of [-1,1]"));
            }
        }
    }
    Ok(())
}

/// Load an annotated corpus from a JSONL manifest, resizing every image to
/// `image_size` through the given preprocessing hook. Records that fail to
/// decode, carry invalid annotations, or carry no annotation at all are
/// dropped and reported.
pub fn load_corpus_with(
    manifest_path: &Path,
    image_size: usize,
    pre: &dyn Preprocessor,
) -> Result<(Vec<ImageSample>, SanitationReport), CorpusError> {
    let parsed = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::new();
    let mut report = SanitationReport::default();
    for (line, detail) in parsed.malformed {
        report.dropped.push(DroppedRecord {
            line,
            path: String::new(),
            reason: DropReason::Malformed,
            detail,
        });
    }
    for (line, row) in parsed.rows {
        if let Err(detail) = validate_row(&row) {
            report.dropped.push(DroppedRecord {
                line,
                path: row.path.clone(),
                reason: DropReason::BadAnnotation,
                detail,
            });
            continue;
        }
        if !row.has_any_annotation() {
            report.dropped.push(DroppedRecord {
                line,
                path: row.path.clone(),
                reason: DropReason::MissingAnnotations,
                detail: "no emotion, av, or mood annotation".into(),
            });
            continue;
        }
        match load_png(&base.join(&row.path), image_size, pre) {
            Ok(img) => {
                samples.push(ImageSample {
                    image: img,
                    path: row.path,
                    split: row.split,
                    emotion: row.emotion,
                    av: row.av(),
                    mood: row.mood.map(MoodVector::from),
                });
            }
            Err(e) => {
                report.dropped.push(DroppedRecord {
                    line,
                    path: row.path.clone(),
                    reason: DropReason::Decode,
                    detail: e.to_string(),
                });
            }
        }
    }
    report.kept = samples.len();
    Ok((samples, report))
}

/// [`load_corpus_with`] using the default center-crop + resize hook.
pub fn load_corpus(
    manifest_path: &Path,
    image_size: usize,
) -> Result<(Vec<ImageSample>, SanitationReport), CorpusError> {
    load_corpus_with(manifest_path, image_size, &CenterCropResize)
}

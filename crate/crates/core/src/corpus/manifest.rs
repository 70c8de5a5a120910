//! JSONL annotation manifest: one object per line with fields
//! `{"path", "split", "emotion", "valence", "arousal", "mood"}`.
//! Unknown keys are ignored; image paths are relative to the manifest.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One manifest line. Absent annotations serialize as `null`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub split: Split,
    pub emotion: Option<usize>,
    pub valence: Option<f64>,
    pub arousal: Option<f64>,
    pub mood: Option<[f64; 3]>,
}

impl ManifestRow {
    pub fn av(&self) -> Option<(f64, f64)> {
        match (self.valence, self.arousal) {
            (Some(v), Some(a)) => Some((v, a)),
            _ => None,
        }
    }

    pub fn has_any_annotation(&self) -> bool {
        self.emotion.is_some() || self.av().is_some() || self.mood.is_some()
    }
}

/// Parsed manifest: rows in file order, each with its 1-based line number,
/// plus lines that failed to parse.
pub struct ParsedManifest {
    pub rows: Vec<(usize, ManifestRow)>,
    pub malformed: Vec<(usize, String)>,
}

/// Read a JSONL manifest. A missing file is fatal; malformed lines are
/// collected, not fatal.
pub fn read_manifest(path: &Path) -> Result<ParsedManifest, CorpusError> {
    let file = fs::File::open(path).map_err(|_| CorpusError::MissingManifest {
        path: path.display().to_string(),
    })?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    let mut malformed = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ManifestRow>(&line) {
            Ok(row) => rows.push((line_no, row)),
            Err(e) => malformed.push((line_no, e.to_string())),
        }
    }
    Ok(ParsedManifest { rows, malformed })
}

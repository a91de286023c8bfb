use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KwsError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    #[default]
    Example,
    Noise,
    Rir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleLabel {
    Positive,
    Negative,
}

impl ExampleLabel {
    pub fn as_u8(self) -> u8 {
        u8::from(self == ExampleLabel::Positive)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
}

/// One JSONL manifest line. Examples carry a label; noise and RIR entries
/// only a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "is_example")]
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ExampleLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_s: Option<[f64; 2]>,
    /// All keyword spans of a long recording, for evaluation manifests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans_s: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

fn is_example(k: &RecordKind) -> bool {
    *k == RecordKind::Example
}

impl ManifestRecord {
    pub fn example(path: impl Into<PathBuf>, label: ExampleLabel) -> Self {
        Self {
            path: path.into(),
            kind: RecordKind::Example,
            label: Some(label),
            span_s: None,
            spans_s: None,
            offset_s: None,
            split: None,
        }
    }

    pub fn pool(path: impl Into<PathBuf>, kind: RecordKind) -> Self {
        Self {
            kind,
            label: None,
            ..Self::example(path, ExampleLabel::Negative)
        }
    }

    /// Keyword spans listed on the record, from either span field.
    pub fn keyword_spans(&self) -> Vec<[f64; 2]> {
        match (&self.spans_s, self.span_s) {
            (Some(v), _) => v.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => Vec::new(),
        }
    }

    fn validate(&self, line: usize) -> Result<()> {
        let bad = |m: &str| Err(KwsError::Format(format!("manifest line {line}: {m}")));
        if self.kind == RecordKind::Example && self.label.is_none() {
            return bad("example without a label");
        }
        for [b, e] in self.keyword_spans() {
            if !(b.is_finite() && e.is_finite() && 0.0 <= b && b <= e) {
                return bad("span must satisfy 0 <= begin <= end");
            }
        }
        if let Some(o) = self.offset_s {
            if !(o.is_finite() && o >= 0.0) {
                return bad("offset_s must be >= 0");
            }
        }
        Ok(())
    }
}

/// Reads a JSONL manifest; relative paths resolve against its directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| KwsError::Format(format!("manifest line {}: {e}", i + 1)))?;
        rec.validate(i + 1)?;
        if rec.path.is_relative() {
            rec.path = base.join(&rec.path);
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(records: &[ManifestRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

//! Checkpoint container.
//!
//! Layout: `"CKWS"`, u32 version (1), u32 header length, UTF-8 JSON header,
//! then every tensor as little-endian f32 in row-major order, in the order the
//! header's manifest lists them. Offsets in the manifest are relative to the
//! first payload byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::forward;
use super::weights::{tensor_specs, Weights};
use crate::codec::{put_f32s, put_u32, u32_len, ByteReader};
use crate::error::{KwsError, Result};
use crate::frontend::{FeatureConfig, FeatureMatrix};

const MAGIC: &[u8; 4] = b"CKWS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub feature_cfg: FeatureConfig,
    pub weights: Weights<f32>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    nbytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    feature: FeatureConfig,
    tensors: Vec<TensorEntry>,
    metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        feature_cfg: FeatureConfig,
        weights: Weights<f32>,
    ) -> Result<Self> {
        config.validate()?;
        weights.validate(&config)?;
        Ok(Self {
            config,
            feature_cfg,
            weights,
            metadata: BTreeMap::new(),
        })
    }

    /// Keyword posterior for one window of features.
    pub fn score(&self, x: &FeatureMatrix) -> Result<f64> {
        forward::score(x, &self.config, &self.weights)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let specs = tensor_specs(&self.config);
        let tensors = self.weights.tensors();
        if specs.len() != tensors.len() {
            return Err(KwsError::Dimension("weights do not match config".into()));
        }
        let mut entries = Vec::with_capacity(specs.len());
        let mut offset = 0u64;
        for (spec, t) in specs.iter().zip(&tensors) {
            if spec.len() != t.len() {
                return Err(KwsError::Dimension(format!(
                    "{} has {} values, expected {}",
                    spec.name,
                    t.len(),
                    spec.len()
                )));
            }
            let nbytes = 4 * t.len() as u64;
            entries.push(TensorEntry {
                name: spec.name.clone(),
                shape: spec.shape.clone(),
                offset,
                nbytes,
            });
            offset += nbytes;
        }
        let header = serde_json::to_vec(&Header {
            model: self.config,
            feature: self.feature_cfg.clone(),
            tensors: entries,
            metadata: self.metadata.clone(),
        })?;
        let mut out = Vec::with_capacity(12 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, u32_len(header.len(), "header length")?);
        out.extend_from_slice(&header);
        for t in tensors {
            put_f32s(&mut out, t.iter().copied());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.header(MAGIC, VERSION)?;
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| KwsError::Corruption(format!("header JSON: {e}")))?;
        header.model.validate()?;
        header.feature.validate()?;

        let specs = tensor_specs(&header.model);
        if specs.len() != header.tensors.len() {
            return Err(KwsError::Corruption(format!(
                "manifest lists {} tensors, config implies {}",
                header.tensors.len(),
                specs.len()
            )));
        }
        let payload_start = r.position();
        let mut weights: Weights<f32> = Weights::zeros(&header.model);
        let mut expected_offset = 0u64;
        for ((spec, entry), dst) in specs.iter().zip(&header.tensors).zip(weights.tensors_mut()) {
            if spec.name != entry.name || spec.shape != entry.shape {
                return Err(KwsError::Corruption(format!(
                    "manifest entry {} {:?} does not match expected {} {:?}",
                    entry.name, entry.shape, spec.name, spec.shape
                )));
            }
            if entry.offset != expected_offset || entry.nbytes != 4 * spec.len() as u64 {
                return Err(KwsError::Corruption(format!(
                    "tensor {} has offset {} / {} bytes, expected {} / {}",
                    entry.name,
                    entry.offset,
                    entry.nbytes,
                    expected_offset,
                    4 * spec.len()
                )));
            }
            debug_assert_eq!(r.position() - payload_start, entry.offset as usize);
            *dst = r.f32_vec(spec.len())?;
            expected_offset += entry.nbytes;
        }
        if r.remaining() != 0 {
            return Err(KwsError::Corruption(format!(
                "{} trailing bytes after tensors",
                r.remaining()
            )));
        }
        weights.validate(&header.model)?;
        Ok(Self {
            config: header.model,
            feature_cfg: header.feature,
            weights,
            metadata: header.metadata,
        })
    }
}

/// Keyword posterior of `ckpt` on `x`.
pub fn model_forward(x: &FeatureMatrix, ckpt: &Checkpoint) -> Result<f64> {
    ckpt.score(x)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, Matrix};
use crate::error::{KwsError, Result};

/// Per-channel energy normalization constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcenConfig {
    /// First-order IIR smoother coefficient `s`.
    pub smoother_coeff: f64,
    pub gain_exponent: f64,
    pub bias: f64,
    pub root: f64,
    pub floor: f64,
}

impl Default for PcenConfig {
    fn default() -> Self {
        Self {
            smoother_coeff: 0.025,
            gain_exponent: 0.98,
            bias: 2.0,
            root: 0.5,
            floor: 1e-6,
        }
    }
}

impl PcenConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.smoother_coeff > 0.0
            && self.smoother_coeff <= 1.0
            && self.gain_exponent > 0.0
            && self.gain_exponent <= 1.0
            && self.bias >= 0.0
            && self.root > 0.0
            && self.root <= 1.0
            && self.floor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(KwsError::Config(format!("invalid PCEN constants {self:?}")))
        }
    }
}

/// Applies PCEN along time for each channel (row) of `energies`.
///
/// The smoother starts at the first frame's energy rather than zero.
pub fn pcen(energies: &Matrix, cfg: &PcenConfig, hop_ms: f64) -> Result<FeatureMatrix> {
    cfg.validate()?;
    if let Some(v) = energies
        .data
        .iter()
        .find(|v| !(**v >= 0.0) || !v.is_finite())
    {
        return Err(KwsError::Domain(format!(
            "energy {v} is negative or non-finite"
        )));
    }
    let s = cfg.smoother_coeff;
    let offset = cfg.bias.powf(cfg.root);
    let mut values = vec![0.0f32; energies.rows * energies.cols];
    for f in 0..energies.rows {
        let row = energies.row(f);
        let out = &mut values[f * energies.cols..(f + 1) * energies.cols];
        let mut smooth = match row.first() {
            Some(&e) => e,
            None => continue,
        };
        for (t, &e) in row.iter().enumerate() {
            if t > 0 {
                smooth = (1.0 - s) * smooth + s * e;
            }
            let agc = e / (cfg.floor + smooth).powf(cfg.gain_exponent);
            out[t] = ((agc + cfg.bias).powf(cfg.root) - offset).max(0.0) as f32;
        }
    }
    Ok(FeatureMatrix {
        values,
        n_mels: energies.rows,
        n_frames: energies.cols,
        hop_ms,
        origin_time_s: 0.0,
    })
}

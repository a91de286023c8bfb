use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use kws_core::align::AlignConfig;
use kws_core::augment::AugmentSpec;
use kws_core::frontend::FeatureConfig;
use kws_core::model::ModelConfig;
use kws_core::streameval::StreamConfig;
use kws_core::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub toy_dir: PathBuf,
    pub train_manifest: PathBuf,
    pub eval_manifest: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        let toy = PathBuf::from("toy");
        Self {
            train_manifest: toy.join("train.jsonl"),
            eval_manifest: toy.join("eval.jsonl"),
            checkpoint: toy.join("model.ckpt"),
            metrics: toy.join("metrics.csv"),
            toy_dir: toy,
        }
    }
}

/// Everything a subcommand can be configured with. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub feature: FeatureConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentSpec,
    pub stream: StreamConfig,
    pub align: AlignConfig,
    pub paths: PathsConfig,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for f in [
            &mut p.toy_dir,
            &mut p.train_manifest,
            &mut p.eval_manifest,
            &mut p.checkpoint,
            &mut p.metrics,
        ] {
            if f.is_relative() && !base.as_os_str().is_empty() {
                *f = base.join(&*f);
            }
        }
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.augment.rng_seed = seed;
    }

    pub fn set_snr(&mut self, low: Option<f64>, high: Option<f64>) -> Result<()> {
        if let Some(l) = low {
            self.augment.snr_db_range[0] = l;
        }
        if let Some(h) = high {
            self.augment.snr_db_range[1] = h;
        }
        self.augment.validate()?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.augment.validate()?;
        self.stream.validate()?;
        self.align.validate()?;
        if self.feature.n_mels != self.model.input_mels {
            bail!(
                "feature.n_mels ({}) differs from model.input_mels ({})",
                self.feature.n_mels,
                self.model.input_mels
            );
        }
        let window = self.stream.window_samples(self.feature.sample_rate);
        if self.feature.frame_count(window) != self.model.input_frames {
            bail!(
                "a {} s window gives {} frames, model.input_frames is {}",
                self.stream.window_s,
                self.feature.frame_count(window),
                self.model.input_frames
            );
        }
        Ok(())
    }
}

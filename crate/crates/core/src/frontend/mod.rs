//! Audio frontend: WAV decoding, mel filterbank energies and PCEN.
//!
//! The default configuration turns a 1.5 s clip at 16 kHz into a 40 x 151
//! feature matrix (10 ms hop, 25 ms Hann window, 512-point FFT, 20 Hz to
//! 8 kHz mel range).

mod audio;
mod fmat;
mod mel;
mod pcen;

pub use audio::{load_wav, write_wav, AudioClip, WavEncoding};
pub use fmat::{fmat_from_bytes, fmat_to_bytes, read_fmat, write_fmat};
pub use mel::{hz_to_mel, mel_energies, mel_to_hz, MelFilterbank};
pub use pcen::{pcen, PcenConfig};

pub(crate) use audio::mean_square;

use serde::{Deserialize, Serialize};

use crate::error::{KwsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub pcen: PcenConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            window_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            n_mels: 40,
            fmin: 20.0,
            fmax: 8000.0,
            pcen: PcenConfig::default(),
        }
    }
}

fn samples_for(ms: f64, sample_rate: u32) -> f64 {
    ms * sample_rate as f64 / 1000.0
}

impl FeatureConfig {
    pub fn hop_samples(&self) -> usize {
        samples_for(self.hop_ms, self.sample_rate).round() as usize
    }

    pub fn window_samples(&self) -> usize {
        samples_for(self.window_ms, self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(KwsError::Config("sample_rate must be positive".into()));
        }
        let hop = samples_for(self.hop_ms, self.sample_rate);
        if hop < 1.0 || (hop - hop.round()).abs() > 1e-9 {
            return Err(KwsError::Config(format!(
                "hop of {} ms is not a whole number of samples",
                self.hop_ms
            )));
        }
        let win = self.window_samples();
        if win == 0 || win > self.fft_size {
            return Err(KwsError::Config(format!(
                "window of {win} samples does not fit FFT size {}",
                self.fft_size
            )));
        }
        if self.n_mels == 0 {
            return Err(KwsError::Config("n_mels must be at least 1".into()));
        }
        if !(self.fmin >= 0.0
            && self.fmin < self.fmax
            && self.fmax <= self.sample_rate as f64 / 2.0)
        {
            return Err(KwsError::Config(format!(
                "mel range [{}, {}] Hz invalid for {} Hz audio",
                self.fmin, self.fmax, self.sample_rate
            )));
        }
        self.pcen.validate()
    }

    /// Frames produced for a clip of `n_samples`.
    pub fn frame_count(&self, n_samples: usize) -> usize {
        n_samples / self.hop_samples() + 1
    }
}

/// Dense row-major matrix of doubles.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// PCEN mel spectrogram: `n_mels` rows by `n_frames` columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Vec<f32>,
    pub n_mels: usize,
    pub n_frames: usize,
    pub hop_ms: f64,
    pub origin_time_s: f64,
}

impl FeatureMatrix {
    pub fn zeros(n_mels: usize, n_frames: usize) -> Self {
        Self {
            values: vec![0.0; n_mels * n_frames],
            n_mels,
            n_frames,
            hop_ms: 10.0,
            origin_time_s: 0.0,
        }
    }

    pub fn get(&self, mel: usize, frame: usize) -> f32 {
        self.values[mel * self.n_frames + frame]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_mels, self.n_frames)
    }
}

/// Reusable frontend holding the filterbank and FFT plan.
#[derive(Debug, Clone)]
pub struct Featurizer {
    cfg: FeatureConfig,
    filterbank: MelFilterbank,
}

impl Featurizer {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        Ok(Self {
            cfg: cfg.clone(),
            filterbank: MelFilterbank::new(cfg)?,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn featurize(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        clip.validate()?;
        let energies = self.filterbank.energies(clip)?;
        pcen(&energies, &self.cfg.pcen, self.cfg.hop_ms)
    }
}

/// `pcen(mel_energies(clip))` under `cfg`.
pub fn featurize(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    Featurizer::new(cfg)?.featurize(clip)
}

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, FeatureConfig, Matrix};
use crate::error::{KwsError, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// One triangular filter stored sparsely over FFT bins.
#[derive(Debug, Clone)]
struct Triangle {
    first_bin: usize,
    weights: Vec<f64>,
}

/// Short-time power spectrum pooled through triangular mel filters.
///
/// Frames are centered on multiples of the hop, with zeros outside the clip,
/// so a clip of `n` samples yields `n / hop + 1` frames.
#[derive(Clone)]
pub struct MelFilterbank {
    n_mels: usize,
    fft_size: usize,
    win_len: usize,
    hop: usize,
    sample_rate: u32,
    window: Vec<f64>,
    filters: Vec<Triangle>,
    centers_hz: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MelFilterbank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFilterbank")
            .field("n_mels", &self.n_mels)
            .field("fft_size", &self.fft_size)
            .field("win_len", &self.win_len)
            .field("hop", &self.hop)
            .finish()
    }
}

impl MelFilterbank {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let win_len = cfg.window_samples();
        let hop = cfg.hop_samples();
        let fft_size = cfg.fft_size;
        let n_bins = fft_size / 2 + 1;

        // Periodic Hann.
        let window = (0..win_len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / win_len as f64).cos())
            .collect();

        let mel_lo = hz_to_mel(cfg.fmin);
        let mel_hi = hz_to_mel(cfg.fmax);
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bin_hz = cfg.sample_rate as f64 / fft_size as f64;

        let mut filters = Vec::with_capacity(cfg.n_mels);
        for m in 0..cfg.n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut first_bin = None;
            let mut weights = Vec::new();
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = ((f - lo) / (center - lo)).min((hi - f) / (hi - center));
                if w > 0.0 {
                    first_bin.get_or_insert(k);
                    weights.push(w);
                } else if first_bin.is_some() {
                    break;
                }
            }
            filters.push(Triangle {
                first_bin: first_bin.unwrap_or(0),
                weights,
            });
        }

        let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
        Ok(Self {
            n_mels: cfg.n_mels,
            fft_size,
            win_len,
            hop,
            sample_rate: cfg.sample_rate,
            window,
            filters,
            centers_hz: edges[1..=cfg.n_mels].to_vec(),
            fft,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Center frequency of each mel channel in Hz.
    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn frame_count(&self, n_samples: usize) -> usize {
        n_samples / self.hop + 1
    }

    pub fn energies(&self, clip: &AudioClip) -> Result<Matrix> {
        if clip.sample_rate != self.sample_rate {
            return Err(KwsError::ConfigMismatch(format!(
                "clip rate {} Hz, frontend expects {} Hz",
                clip.sample_rate, self.sample_rate
            )));
        }
        if clip.samples.len() < self.hop {
            return Err(KwsError::EmptyInput(format!(
                "{} samples is shorter than one hop ({})",
                clip.samples.len(),
                self.hop
            )));
        }
        let n_frames = self.frame_count(clip.samples.len());
        let n_bins = self.fft_size / 2 + 1;
        let mut out = Matrix::zeros(self.n_mels, n_frames);
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];
        let half = (self.win_len / 2) as isize;
        let samples = &clip.samples;

        for t in 0..n_frames {
            let start = (t * self.hop) as isize - half;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (n, w) in self.window.iter().enumerate() {
                let idx = start + n as isize;
                if idx >= 0 && (idx as usize) < samples.len() {
                    buf[n].re = samples[idx as usize] as f64 * w;
                }
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (m, tri) in self.filters.iter().enumerate() {
                let e: f64 = tri
                    .weights
                    .iter()
                    .zip(&power[tri.first_bin..])
                    .map(|(w, p)| w * p)
                    .sum();
                out.set(m, t, e);
            }
        }
        Ok(out)
    }
}

/// Mel energies for `clip` under `cfg`.
pub fn mel_energies(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Matrix> {
    MelFilterbank::new(cfg)?.energies(clip)
}

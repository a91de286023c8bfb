//! Training-time augmentation: additive noise at a drawn SNR, timing jitter
//! and impulse-response convolution.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KwsError, Result};
use crate::frontend::{load_wav, mean_square, AudioClip, Featurizer};
use crate::train::LabeledExample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSpec {
    pub snr_db_range: [f64; 2],
    pub jitter_max_ms: f64,
    pub rir_paths: Vec<PathBuf>,
    pub rng_seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            snr_db_range: [-5.0, 15.0],
            jitter_max_ms: 100.0,
            rir_paths: Vec::new(),
            rng_seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.snr_db_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(KwsError::Config(format!("bad SNR range [{lo}, {hi}]")));
        }
        if !(self.jitter_max_ms >= 0.0) {
            return Err(KwsError::Config("jitter_max_ms must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub label: String,
}

impl ImpulseResponse {
    pub fn new(samples: Vec<f32>, sample_rate: u32, label: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(KwsError::EmptyInput(
                "impulse response has no samples".into(),
            ));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(KwsError::Numeric("impulse response is not finite".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            label: label.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let clip = load_wav(path)?;
        Self::new(clip.samples, clip.sample_rate, path.display().to_string())
    }
}

/// Independent RNG stream for item `index` of a run seeded with `seed`.
pub fn derived_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Pieces of one mix, kept so the realized SNR can be measured.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixed: AudioClip,
    /// Noise gain before any peak normalization.
    pub gain: f64,
    pub noise_offset: usize,
    /// Factor applied to the whole mix; 1 unless it would have clipped.
    pub normalization: f64,
    pub signal_part: Vec<f64>,
    pub noise_part: Vec<f64>,
}

fn check_rates(a: u32, b: u32) -> Result<()> {
    if a != b {
        return Err(KwsError::Config(format!(
            "sample rates differ: {a} Hz vs {b} Hz"
        )));
    }
    Ok(())
}

fn peak_normalize(x: &mut [f64]) -> f64 {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        let k = 1.0 / peak;
        x.iter_mut().for_each(|v| *v *= k);
        k
    } else {
        1.0
    }
}

/// Adds a random slice of `noise` to `signal` scaled to the requested SNR.
pub fn mix_components<R: Rng + ?Sized>(
    signal: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    rng: &mut R,
) -> Result<Mixture> {
    check_rates(signal.sample_rate, noise.sample_rate)?;
    let n = signal.len();
    if noise.len() < n {
        return Err(KwsError::Dimension(format!(
            "noise has {} samples, signal needs {n}",
            noise.len()
        )));
    }
    let noise_offset = rng.gen_range(0..=noise.len() - n);
    let slice = &noise.samples[noise_offset..noise_offset + n];
    let p_sig = mean_square(&signal.samples);
    let p_noise = mean_square(slice);
    if p_noise == 0.0 {
        return Err(KwsError::DegenerateNoise);
    }
    if p_sig == 0.0 {
        return Err(KwsError::DegenerateSignal);
    }
    let gain = (p_sig / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut mixed: Vec<f64> = signal
        .samples
        .iter()
        .zip(slice)
        .map(|(&s, &v)| s as f64 + gain * v as f64)
        .collect();
    let normalization = peak_normalize(&mut mixed);
    Ok(Mixture {
        mixed: AudioClip {
            samples: mixed.iter().map(|&v| v as f32).collect(),
            sample_rate: signal.sample_rate,
        },
        gain,
        noise_offset,
        normalization,
        signal_part: signal
            .samples
            .iter()
            .map(|&s| normalization * s as f64)
            .collect(),
        noise_part: slice
            .iter()
            .map(|&v| normalization * gain * v as f64)
            .collect(),
    })
}

pub fn mix_at_snr<R: Rng + ?Sized>(
    signal: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    rng: &mut R,
) -> Result<AudioClip> {
    Ok(mix_components(signal, noise, snr_db, rng)?.mixed)
}

/// Translates the content by `shift` samples (positive = later), zero-filling
/// the vacated region.
pub fn shift_clip(clip: &AudioClip, shift: i64) -> AudioClip {
    let n = clip.len();
    let mut out = vec![0.0f32; n];
    let k = shift.unsigned_abs() as usize;
    if k < n {
        if shift >= 0 {
            out[k..].copy_from_slice(&clip.samples[..n - k]);
        } else {
            out[..n - k].copy_from_slice(&clip.samples[k..]);
        }
    }
    AudioClip {
        samples: out,
        sample_rate: clip.sample_rate,
    }
}

/// Uniform integer-sample shift within `±max_ms`. Returns the shift in ms.
pub fn random_jitter<R: Rng + ?Sized>(
    clip: &AudioClip,
    max_ms: f64,
    rng: &mut R,
) -> (AudioClip, f64) {
    let max = (max_ms.max(0.0) * clip.sample_rate as f64 / 1000.0).round() as i64;
    if max == 0 {
        return (clip.clone(), 0.0);
    }
    let shift = rng.gen_range(-max..=max);
    (
        shift_clip(clip, shift),
        shift as f64 * 1000.0 / clip.sample_rate as f64,
    )
}

/// Linear convolution with `rir`, truncated to the clip length.
pub fn apply_rir(clip: &AudioClip, rir: &ImpulseResponse) -> Result<AudioClip> {
    check_rates(clip.sample_rate, rir.sample_rate)?;
    let n = clip.len();
    let mut out = vec![0.0f64; n];
    for (j, &h) in rir.samples.iter().enumerate().take(n) {
        if h == 0.0 {
            continue;
        }
        let h = h as f64;
        for (o, &x) in out[j..].iter_mut().zip(&clip.samples) {
            *o += h * x as f64;
        }
    }
    peak_normalize(&mut out);
    Ok(AudioClip {
        samples: out.iter().map(|&v| v as f32).collect(),
        sample_rate: clip.sample_rate,
    })
}

pub fn draw_snr<R: Rng + ?Sized>(range: [f64; 2], rng: &mut R) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

/// A training window before augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSource {
    pub clip: AudioClip,
    pub label: u8,
    /// Keyword span relative to the window start, if known.
    pub span_s: Option<[f64; 2]>,
}

/// Label after translating the content by `shift_s`: a positive stays
/// positive only while its whole span remains inside the window.
pub fn window_label(label: u8, span_s: Option<[f64; 2]>, shift_s: f64, window_s: f64) -> u8 {
    match (label, span_s) {
        (0, _) => 0,
        (_, None) => 1,
        (_, Some([b, e])) => {
            let (b, e) = (b + shift_s, e + shift_s);
            u8::from(b >= -1e-9 && e <= window_s + 1e-9)
        }
    }
}

/// rir (if any) → jitter → noise mix → features.
pub fn make_training_example<R: Rng + ?Sized>(
    source: &TrainingSource,
    spec: &AugmentSpec,
    noise_pool: &[AudioClip],
    rirs: &[ImpulseResponse],
    featurizer: &Featurizer,
    rng: &mut R,
) -> Result<LabeledExample> {
    spec.validate()?;
    if noise_pool.is_empty() {
        return Err(KwsError::Config("noise pool is empty".into()));
    }
    let mut clip = source.clip.clone();
    if !rirs.is_empty() {
        let rir = &rirs[rng.gen_range(0..rirs.len())];
        clip = apply_rir(&clip, rir)?;
    }
    let (clip, shift_ms) = random_jitter(&clip, spec.jitter_max_ms, rng);
    let label = window_label(
        source.label,
        source.span_s,
        shift_ms / 1000.0,
        clip.duration_s(),
    );
    let noise = &noise_pool[rng.gen_range(0..noise_pool.len())];
    let noise = tile_to(noise, clip.len());
    let snr = draw_snr(spec.snr_db_range, rng);
    let mixed = match mix_components(&clip, &noise, snr, rng) {
        Ok(m) => m.mixed,
        // A silent negative window becomes pure noise.
        Err(KwsError::DegenerateSignal) if label == 0 => {
            let offset = rng.gen_range(0..=noise.len() - clip.len());
            AudioClip {
                samples: noise.samples[offset..offset + clip.len()].to_vec(),
                sample_rate: noise.sample_rate,
            }
        }
        Err(e) => return Err(e),
    };
    Ok(LabeledExample {
        features: featurizer.featurize(&mixed)?,
        label,
    })
}

/// Repeats `clip` until it has at least `len` samples.
pub fn tile_to(clip: &AudioClip, len: usize) -> AudioClip {
    if clip.len() >= len || clip.is_empty() {
        return clip.clone();
    }
    let samples = clip.samples.iter().copied().cycle().take(len).collect();
    AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    }
}

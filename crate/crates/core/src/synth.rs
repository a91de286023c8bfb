//! Deterministic synthetic audio for smoke tests and the bundled toy corpus:
//! a three-tone chirp pattern stands in for the keyword, broadband noise for
//! everything else.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::augment::derived_rng;
use crate::error::Result;
use crate::frontend::{write_wav, AudioClip, WavEncoding};
use crate::model::{Activation, CellKind, ModelConfig};
use crate::streameval::GroundTruth;
use crate::train::{write_manifest, ExampleLabel, ManifestRecord, RecordKind, Split};

pub const SAMPLE_RATE: u32 = 16000;
/// Tone frequencies of the keyword pattern, in order.
pub const PATTERN_HZ: [f64; 3] = [600.0, 1200.0, 2400.0];
const TONE_S: f64 = 0.12;
const GAP_S: f64 = 0.03;

/// Length of one keyword pattern in seconds.
pub fn pattern_duration_s() -> f64 {
    PATTERN_HZ.len() as f64 * TONE_S + (PATTERN_HZ.len() - 1) as f64 * GAP_S
}

fn white(n: usize, amp: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| amp * rng.gen_range(-1.0..1.0)).collect()
}

/// Adds the pattern starting at sample `start`, with Hann-shaped tone edges.
fn add_pattern(x: &mut [f64], start: usize, amp: f64) {
    let sr = SAMPLE_RATE as f64;
    let tone = (TONE_S * sr) as usize;
    let step = ((TONE_S + GAP_S) * sr) as usize;
    for (i, &hz) in PATTERN_HZ.iter().enumerate() {
        let s0 = start + i * step;
        for n in 0..tone {
            if let Some(v) = x.get_mut(s0 + n) {
                let env = 0.5 - 0.5 * (2.0 * PI * n as f64 / tone as f64).cos();
                *v += amp * env * (2.0 * PI * hz * n as f64 / sr).sin();
            }
        }
    }
}

fn clip(x: Vec<f64>) -> AudioClip {
    AudioClip {
        samples: x.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect(),
        sample_rate: SAMPLE_RATE,
    }
}

/// One synthetic training window and the keyword span inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthExample {
    pub clip: AudioClip,
    pub label: u8,
    pub span_s: Option<[f64; 2]>,
}

/// `n` windows of `window_s` seconds alternating keyword / noise-only.
pub fn toy_examples(n: usize, window_s: f64, seed: u64) -> Vec<SynthExample> {
    let len = (window_s * SAMPLE_RATE as f64).round() as usize;
    let pat = (pattern_duration_s() * SAMPLE_RATE as f64).ceil() as usize;
    (0..n)
        .map(|i| {
            let mut rng = derived_rng(seed, i as u64);
            let label = (i % 2 == 0) as u8;
            if label == 1 {
                let mut x = white(len, rng.gen_range(0.005..0.02), &mut rng);
                let start = rng.gen_range(0..=len.saturating_sub(pat));
                add_pattern(&mut x, start, rng.gen_range(0.3..0.6));
                let b = start as f64 / SAMPLE_RATE as f64;
                SynthExample {
                    clip: clip(x),
                    label,
                    span_s: Some([b, b + pattern_duration_s()]),
                }
            } else {
                SynthExample {
                    clip: clip(white(len, rng.gen_range(0.02..0.3), &mut rng)),
                    label,
                    span_s: None,
                }
            }
        })
        .collect()
}

/// A long recording with keyword patterns beginning at `starts_s`.
pub fn keyword_stream(duration_s: f64, starts_s: &[f64], seed: u64) -> (AudioClip, GroundTruth) {
    let len = (duration_s * SAMPLE_RATE as f64).round() as usize;
    let mut rng = derived_rng(seed, u64::MAX);
    let mut x = white(len, 0.01, &mut rng);
    let mut spans = Vec::new();
    for &s in starts_s {
        add_pattern(&mut x, (s * SAMPLE_RATE as f64).round() as usize, 0.5);
        spans.push([s, s + pattern_duration_s()]);
    }
    let negative = if spans.is_empty() { duration_s } else { 0.0 };
    (
        clip(x),
        GroundTruth {
            keyword_spans: spans,
            negative_audio_s: negative,
        },
    )
}

/// Noise-only recording.
pub fn noise_stream(duration_s: f64, amp: f64, seed: u64) -> AudioClip {
    let len = (duration_s * SAMPLE_RATE as f64).round() as usize;
    clip(white(len, amp, &mut derived_rng(seed, u64::MAX - 1)))
}

/// Scaled-down model used for the toy corpus.
pub fn toy_model_config() -> ModelConfig {
    ModelConfig {
        n_conv_filters: 4,
        kernel_time: 20,
        kernel_freq: 5,
        stride_time: 8,
        stride_freq: 4,
        n_rec_layers: 1,
        rec_hidden: 8,
        cell_kind: CellKind::Gru,
        fc_units: 16,
        rec_candidate_activation: Activation::Relu,
        input_mels: 40,
        input_frames: 151,
    }
}

/// Writes the toy corpus under `dir`: 32 training windows, a dev copy of
/// every fourth one, a noise file, and two evaluation streams. Produces
/// `train.jsonl` and `eval.jsonl`.
pub fn write_toy_corpus(dir: &Path, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir.join("wav"))?;
    let mut train = Vec::new();
    for (i, ex) in toy_examples(32, 1.5, seed).into_iter().enumerate() {
        let rel = format!("wav/toy_{i:02}.wav");
        write_wav(dir.join(&rel), &ex.clip, WavEncoding::Pcm16)?;
        let label = if ex.label == 1 {
            ExampleLabel::Positive
        } else {
            ExampleLabel::Negative
        };
        let mut rec = ManifestRecord::example(&rel, label);
        rec.span_s = ex.span_s;
        if i % 4 < 2 {
            let mut dev = rec.clone();
            dev.split = Some(Split::Dev);
            train.push(dev);
        }
        train.push(rec);
    }
    write_wav(
        dir.join("wav/noise.wav"),
        &noise_stream(5.0, 0.1, seed),
        WavEncoding::Pcm16,
    )?;
    train.push(ManifestRecord::pool("wav/noise.wav", RecordKind::Noise));
    write_manifest(
        &train,
        BufWriter::new(File::create(dir.join("train.jsonl"))?),
    )?;

    let (kw, truth) = keyword_stream(12.0, &[1.0, 4.5, 8.0], seed);
    write_wav(dir.join("wav/stream_kw.wav"), &kw, WavEncoding::Pcm16)?;
    let mut kw_rec = ManifestRecord::example("wav/stream_kw.wav", ExampleLabel::Positive);
    kw_rec.spans_s = Some(truth.keyword_spans);
    write_wav(
        dir.join("wav/stream_neg.wav"),
        &noise_stream(20.0, 0.05, seed + 1),
        WavEncoding::Pcm16,
    )?;
    let neg_rec = ManifestRecord::example("wav/stream_neg.wav", ExampleLabel::Negative);
    write_manifest(
        &[kw_rec, neg_rec],
        BufWriter::new(File::create(dir.join("eval.jsonl"))?),
    )?;
    Ok(())
}

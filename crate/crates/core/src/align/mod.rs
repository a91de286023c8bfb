//! Keyword boundaries from per-character posteriors by alternating decay
//! passes, and clip chopping around the found span.

mod cpst;

use serde::{Deserialize, Serialize};

use crate::error::{KwsError, Result};
use crate::frontend::{AudioClip, Matrix};

pub use cpst::{cpst_from_bytes, cpst_to_bytes, read_cpst, write_cpst};

/// Smoothed occupancy scores, one row per keyword character.
#[derive(Debug, Clone, PartialEq)]
pub struct CharPosteriorMatrix {
    pub chars: String,
    /// `K x T` with row `k` holding character `k`.
    pub scores: Matrix,
    pub frame_rate: f64,
    pub origin_time_s: f64,
}

impl CharPosteriorMatrix {
    pub fn new(
        chars: impl Into<String>,
        scores: Matrix,
        frame_rate: f64,
        origin_time_s: f64,
    ) -> Result<Self> {
        let p = Self {
            chars: chars.into(),
            scores,
            frame_rate,
            origin_time_s,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.chars.chars().count();
        if self.scores.rows == 0 || self.scores.cols == 0 {
            return Err(KwsError::EmptyInput("posterior matrix is empty".into()));
        }
        if k != self.scores.rows {
            return Err(KwsError::Dimension(format!(
                "{k} characters but {} score rows",
                self.scores.rows
            )));
        }
        if self
            .scores
            .data
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(KwsError::Domain(
                "posteriors must be finite and >= 0".into(),
            ));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(KwsError::Domain(format!("frame rate {}", self.frame_rate)));
        }
        Ok(())
    }

    pub fn n_chars(&self) -> usize {
        self.scores.rows
    }

    pub fn n_steps(&self) -> usize {
        self.scores.cols
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        self.origin_time_s + frame as f64 / self.frame_rate
    }

    pub fn smoothed(&self, window: usize) -> Result<Self> {
        Ok(Self {
            scores: smooth_scores(&self.scores, window)?,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub alpha: f64,
    pub n_iter: usize,
    pub smooth_window: usize,
    pub pad_s: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            n_iter: 1,
            smooth_window: 7,
            pad_s: 0.1,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(KwsError::Config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.n_iter == 0 {
            return Err(KwsError::Config("n_iter must be >= 1".into()));
        }
        check_window(self.smooth_window)?;
        if !(self.pad_s >= 0.0) {
            return Err(KwsError::Config("pad_s must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSpan {
    pub begin_frame: usize,
    pub end_frame: usize,
    pub begin_s: f64,
    pub end_s: f64,
    /// False when the decay passes put the end before the beginning.
    pub ordered: bool,
}

fn check_window(w: usize) -> Result<()> {
    if w.is_multiple_of(2) {
        return Err(KwsError::Config(format!(
            "smoothing window {w} must be odd and >= 1"
        )));
    }
    Ok(())
}

/// Centered moving average of width `window` along each row; windows cut by
/// an edge average over the samples they cover.
pub fn smooth_scores(raw: &Matrix, window: usize) -> Result<Matrix> {
    check_window(window)?;
    if raw.data.iter().any(|v| *v < 0.0) {
        return Err(KwsError::Domain("raw scores must be >= 0".into()));
    }
    let half = window / 2;
    let t_len = raw.cols;
    let mut out = Matrix::zeros(raw.rows, t_len);
    for k in 0..raw.rows {
        let row = raw.row(k);
        for t in 0..t_len {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(t_len - 1);
            let sum: f64 = row[lo..=hi].iter().sum();
            out.set(k, t, sum / (hi - lo + 1) as f64);
        }
    }
    Ok(out)
}

/// First index of the maximum.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (t, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = t;
        }
    }
    best
}

/// Alternating decay passes. The first pass walks forward through the
/// characters and damps each successor from the current peak onward; the
/// second walks backward and damps each predecessor up to the current peak.
/// Boundary frames come from the final working copies.
pub fn align_keyword(p: &CharPosteriorMatrix, cfg: &AlignConfig) -> Result<AlignmentSpan> {
    p.validate()?;
    cfg.validate()?;
    let k_len = p.n_chars();
    let t_len = p.n_steps();
    let rows: Vec<Vec<f64>> = (0..k_len).map(|k| p.scores.row(k).to_vec()).collect();
    let mut fwd = rows.clone();
    let mut bwd = rows;
    let alpha = cfg.alpha;

    for _ in 0..cfg.n_iter {
        for k in 0..k_len - 1 {
            let peak = argmax(&fwd[k]);
            fwd[k + 1][peak..].iter_mut().for_each(|v| *v *= alpha);
        }
        for k in (1..k_len).rev() {
            let peak = argmax(&bwd[k]);
            bwd[k - 1][..=peak].iter_mut().for_each(|v| *v *= alpha);
        }
    }

    let begin = argmax(&fwd[0]).min(argmax(&bwd[0]));
    let end = argmax(&fwd[k_len - 1]).max(argmax(&bwd[k_len - 1]));
    debug_assert!(begin < t_len && end < t_len);
    Ok(AlignmentSpan {
        begin_frame: begin,
        end_frame: end,
        begin_s: p.frame_time(begin),
        end_s: p.frame_time(end),
        ordered: begin <= end,
    })
}

/// Cuts `[begin_s - pad_s, end_s + pad_s]`, clamped to the clip.
pub fn chop_keyword(clip: &AudioClip, span: &AlignmentSpan, pad_s: f64) -> Result<AudioClip> {
    if !span.ordered || span.begin_s > span.end_s {
        return Err(KwsError::Alignment(format!(
            "span ends ({:.3} s) before it begins ({:.3} s)",
            span.end_s, span.begin_s
        )));
    }
    if !(pad_s >= 0.0) {
        return Err(KwsError::Config("pad_s must be >= 0".into()));
    }
    let sr = clip.sample_rate as f64;
    let n = clip.len();
    let to_sample = |s: f64| ((s * sr).round().max(0.0) as usize).min(n);
    let start = to_sample(span.begin_s - pad_s);
    let stop = to_sample(span.end_s + pad_s);
    Ok(AudioClip {
        samples: clip.samples[start..stop].to_vec(),
        sample_rate: clip.sample_rate,
    })
}

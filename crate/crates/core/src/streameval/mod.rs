//! Sliding-window scoring of long recordings and the detection metrics built
//! on it: thresholded events with a refractory period, keyword matching,
//! FRR / false alarms per hour and DET curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KwsError, Result};
use crate::frontend::{AudioClip, FeatureMatrix, Featurizer};
use crate::model::Checkpoint;

/// Slack for comparing window times that are sums of decimal hops.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub threshold: f64,
    pub refractory_s: f64,
    /// Half-width of the window around a keyword end that counts as a hit.
    pub match_tol_s: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            window_s: 1.5,
            hop_s: 0.1,
            threshold: 0.5,
            refractory_s: 1.0,
            match_tol_s: 0.75,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_s > 0.0 && self.hop_s <= self.window_s) {
            return Err(KwsError::Config(format!(
                "hop {} s must be positive and at most the window {} s",
                self.hop_s, self.window_s
            )));
        }
        if self.refractory_s < 0.0 || self.match_tol_s < 0.0 {
            return Err(KwsError::Config(
                "refractory and tolerance must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_s * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_s * sample_rate as f64).round() as usize
    }
}

/// Anything that maps one feature window to a keyword score in `[0, 1]`.
pub trait WindowScorer: Sync {
    fn score_window(&self, x: &FeatureMatrix) -> Result<f64>;
}

impl WindowScorer for Checkpoint {
    fn score_window(&self, x: &FeatureMatrix) -> Result<f64> {
        self.score(x)
    }
}

impl<F> WindowScorer for F
where
    F: Fn(&FeatureMatrix) -> f64 + Sync,
{
    fn score_window(&self, x: &FeatureMatrix) -> Result<f64> {
        Ok(self(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredWindow {
    pub start_s: f64,
    /// Window end time; detections are reported here.
    pub end_s: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub time_s: f64,
    pub score: f64,
}

/// Windows of `window` samples starting every `hop` samples that fit in `n`.
pub fn window_count(n: usize, window: usize, hop: usize) -> usize {
    if n < window || hop == 0 {
        0
    } else {
        (n - window) / hop + 1
    }
}

/// Scores every full window of `clip`. Windows are featurized independently
/// and scored in parallel; the output is in time order.
pub fn stream_scores<S: WindowScorer + ?Sized>(
    clip: &AudioClip,
    scorer: &S,
    featurizer: &Featurizer,
    cfg: &StreamConfig,
) -> Result<Vec<ScoredWindow>> {
    cfg.validate()?;
    let sr = clip.sample_rate;
    let win = cfg.window_samples(sr);
    let hop = cfg.hop_samples(sr);
    let n = window_count(clip.len(), win, hop);
    if n == 0 {
        log::warn!(
            "clip of {:.3} s is shorter than one {:.3} s window",
            clip.duration_s(),
            cfg.window_s
        );
        return Ok(Vec::new());
    }
    (0..n)
        .into_par_iter()
        .map(|k| {
            let start = k * hop;
            let window = AudioClip {
                samples: clip.samples[start..start + win].to_vec(),
                sample_rate: sr,
            };
            let x = featurizer.featurize(&window)?;
            Ok(ScoredWindow {
                start_s: start as f64 / sr as f64,
                end_s: (start + win) as f64 / sr as f64,
                score: scorer.score_window(&x)?,
            })
        })
        .collect()
}

/// Thresholds a time-ordered score sequence. An event is suppressed when it
/// falls within `refractory_s` of the previous emitted event.
pub fn detect(scores: &[ScoredWindow], threshold: f64, refractory_s: f64) -> Vec<DetectionEvent> {
    let mut events: Vec<DetectionEvent> = Vec::new();
    for w in scores {
        if w.score < threshold {
            continue;
        }
        if let Some(last) = events.last() {
            if w.end_s - last.time_s <= refractory_s + TIME_EPS {
                continue;
            }
        }
        events.push(DetectionEvent {
            time_s: w.end_s,
            score: w.score,
        });
    }
    events
}

/// Keyword occurrences in one recording plus the keyword-free audio it
/// contributes to the false-alarm denominator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub keyword_spans: Vec<[f64; 2]>,
    pub negative_audio_s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
    pub negative_audio_s: f64,
}

impl MatchCounts {
    pub fn frr_percent(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            100.0 * self.misses as f64 / total as f64
        }
    }

    pub fn fa_per_hour(&self) -> f64 {
        if self.false_alarms == 0 {
            0.0
        } else if self.negative_audio_s <= 0.0 {
            f64::INFINITY
        } else {
            self.false_alarms as f64 / (self.negative_audio_s / 3600.0)
        }
    }

    fn add(&mut self, o: &MatchCounts) {
        self.hits += o.hits;
        self.misses += o.misses;
        self.false_alarms += o.false_alarms;
        self.negative_audio_s += o.negative_audio_s;
    }
}

fn match_counts(events: &[DetectionEvent], truth: &GroundTruth, tol_s: f64) -> MatchCounts {
    let mut ends: Vec<f64> = truth.keyword_spans.iter().map(|s| s[1]).collect();
    ends.sort_by(|a, b| a.total_cmp(b));
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].time_s.total_cmp(&events[b].time_s));
    let mut used = vec![false; events.len()];
    let mut hits = 0;
    for end in &ends {
        let lo = end - tol_s - TIME_EPS;
        let hi = end + tol_s + TIME_EPS;
        if let Some(&i) = order
            .iter()
            .find(|&&i| !used[i] && events[i].time_s >= lo && events[i].time_s <= hi)
        {
            used[i] = true;
            hits += 1;
        }
    }
    MatchCounts {
        hits,
        misses: ends.len() - hits,
        false_alarms: used.iter().filter(|u| !**u).count(),
        negative_audio_s: truth.negative_audio_s,
    }
}

/// Matches events to keyword ends greedily in time order. Every event left
/// unmatched counts as a false alarm.
pub fn match_detections(
    events: &[DetectionEvent],
    truth: &GroundTruth,
    tol_s: f64,
) -> Result<MatchCounts> {
    if truth.keyword_spans.is_empty() && truth.negative_audio_s <= 0.0 {
        return Err(KwsError::EmptyEval);
    }
    if tol_s < 0.0 {
        return Err(KwsError::Config("match tolerance must be >= 0".into()));
    }
    Ok(match_counts(events, truth, tol_s))
}

/// Window scores and ground truth for one evaluation recording.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredStream {
    pub scores: Vec<ScoredWindow>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fa_per_hour: f64,
    pub frr_percent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub fa_per_hour: f64,
    /// `f64::INFINITY` when no operating point reaches the target.
    pub frr_percent: f64,
    pub accuracy_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Ordered by decreasing threshold.
    pub points: Vec<OperatingPoint>,
    pub targets: Vec<TargetResult>,
}

/// Total counts over all streams at one threshold.
pub fn evaluate_at(
    streams: &[ScoredStream],
    threshold: f64,
    refractory_s: f64,
    tol_s: f64,
) -> Result<MatchCounts> {
    let mut total = MatchCounts::default();
    for s in streams {
        let events = detect(&s.scores, threshold, refractory_s);
        total.add(&match_counts(&events, &s.truth, tol_s));
    }
    if total.hits + total.misses == 0 && total.negative_audio_s <= 0.0 {
        return Err(KwsError::EmptyEval);
    }
    Ok(total)
}

/// Sweeps the threshold over every distinct score (plus 1.0).
///
/// Refractory suppression can make raw counts non-monotone in the
/// threshold, so each point reports the worst FA rate at any higher
/// threshold and the worst FRR at any lower threshold.
pub fn det_curve(
    streams: &[ScoredStream],
    cfg: &StreamConfig,
    targets: &[f64],
) -> Result<EvalReport> {
    if streams.is_empty() {
        return Err(KwsError::EmptyEval);
    }
    let mut thresholds: Vec<f64> = streams
        .iter()
        .flat_map(|s| s.scores.iter().map(|w| w.score))
        .chain(std::iter::once(1.0))
        .collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let raw: Vec<MatchCounts> = thresholds
        .par_iter()
        .map(|&th| evaluate_at(streams, th, cfg.refractory_s, cfg.match_tol_s))
        .collect::<Result<_>>()?;

    let mut points: Vec<OperatingPoint> = thresholds
        .iter()
        .zip(&raw)
        .map(|(&threshold, c)| OperatingPoint {
            threshold,
            fa_per_hour: c.fa_per_hour(),
            frr_percent: c.frr_percent(),
        })
        .collect();
    let mut fa_max = 0.0f64;
    for p in points.iter_mut() {
        fa_max = fa_max.max(p.fa_per_hour);
        p.fa_per_hour = fa_max;
    }
    let mut frr_max = 0.0f64;
    for p in points.iter_mut().rev() {
        frr_max = frr_max.max(p.frr_percent);
        p.frr_percent = frr_max;
    }

    let mut report = EvalReport {
        points,
        targets: Vec::new(),
    };
    report.targets = targets
        .iter()
        .map(|&t| {
            let frr = frr_at_target_fa(&report, t);
            TargetResult {
                fa_per_hour: t,
                frr_percent: frr,
                accuracy_percent: 100.0 - frr,
            }
        })
        .collect();
    Ok(report)
}

/// Lowest FRR among operating points at or below `target` false alarms per
/// hour; `f64::INFINITY` if none qualifies.
pub fn frr_at_target_fa(report: &EvalReport, target: f64) -> f64 {
    report
        .points
        .iter()
        .filter(|p| p.fa_per_hour <= target)
        .map(|p| p.frr_percent)
        .fold(f64::INFINITY, f64::min)
}

/// Writes `threshold,fa_per_hour,frr_percent` rows.
pub fn write_report_csv<W: std::io::Write>(report: &EvalReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fa_per_hour", "frr_percent"])?;
    for p in &report.points {
        w.write_record([
            p.threshold.to_string(),
            p.fa_per_hour.to_string(),
            p.frr_percent.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

use std::path::PathBuf;

use super::manifest::{ExampleLabel, ManifestRecord, Split};
use crate::error::Result;
use crate::frontend::{load_wav, Featurizer};
use crate::streameval::{stream_scores, ScoredWindow, StreamConfig, WindowScorer};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MiningReport {
    /// New negative records, grouped by file, highest score first.
    pub additions: Vec<ManifestRecord>,
    pub scores: Vec<f64>,
    /// Files that could not be read or scored.
    pub skipped: Vec<PathBuf>,
}

/// Windows scoring at least `tau`, highest first (earlier first on ties),
/// at most `cap` of them.
pub fn select_hard_windows(scores: &[ScoredWindow], tau: f64, cap: usize) -> Vec<ScoredWindow> {
    let mut hits: Vec<ScoredWindow> = scores.iter().copied().filter(|w| w.score >= tau).collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score));
    hits.truncate(cap);
    hits
}

/// Scores each keyword-free recording and turns its hardest windows into
/// negative examples pointing at the window offset.
pub fn mine_hard_negatives<S: WindowScorer + ?Sized>(
    scorer: &S,
    featurizer: &Featurizer,
    corpus: &[PathBuf],
    cfg: &StreamConfig,
    tau: f64,
    cap: usize,
) -> Result<MiningReport> {
    cfg.validate()?;
    let mut report = MiningReport::default();
    for path in corpus {
        let scored = load_wav(path).and_then(|clip| stream_scores(&clip, scorer, featurizer, cfg));
        let windows = match scored {
            Ok(w) => w,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                report.skipped.push(path.clone());
                continue;
            }
        };
        for w in select_hard_windows(&windows, tau, cap) {
            let mut rec = ManifestRecord::example(path.clone(), ExampleLabel::Negative);
            rec.offset_s = Some(w.start_s);
            rec.split = Some(Split::Train);
            report.additions.push(rec);
            report.scores.push(w.score);
        }
    }
    Ok(report)
}

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{ExampleLabel, ManifestRecord, RecordKind, Split};
use super::{adam_step, backward_weights, ce_loss, AdamState, LabeledExample, TrainConfig};
use crate::augment::{
    apply_rir, derived_rng, make_training_example, random_jitter, window_label, AugmentSpec,
    ImpulseResponse, TrainingSource,
};
use crate::error::{KwsError, Result};
use crate::frontend::{load_wav, AudioClip, FeatureConfig, Featurizer};
use crate::model::{score, Checkpoint, ModelConfig, Param, Weights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    /// Updates taken so far.
    pub step: u64,
    pub train_loss: f64,
    pub dev_loss: f64,
    /// Rate in effect during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest dev loss.
    pub checkpoint: Checkpoint,
    pub log: Vec<MetricsRow>,
    pub best_epoch: usize,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMetrics {
    pub loss: f64,
    /// Fraction of examples on the right side of 0.5.
    pub accuracy: f64,
}

pub fn batch_metrics<T: Param>(
    cfg: &ModelConfig,
    w: &Weights<T>,
    batch: &[LabeledExample],
) -> Result<BatchMetrics> {
    if batch.is_empty() {
        return Err(KwsError::EmptyInput("empty batch".into()));
    }
    let per: Vec<(f64, bool)> = batch
        .par_iter()
        .map(|ex| {
            let p = score(&ex.features, cfg, w)?;
            Ok((ce_loss(p, ex.label), (p >= 0.5) == (ex.label != 0)))
        })
        .collect::<Result<_>>()?;
    let n = batch.len() as f64;
    Ok(BatchMetrics {
        loss: per.iter().map(|p| p.0).sum::<f64>() / n,
        accuracy: per.iter().filter(|p| p.1).count() as f64 / n,
    })
}

/// Trains from `init` (or a seeded Glorot init) on examples produced per
/// epoch by `epoch_data`. Without a dev set the epoch's own examples stand
/// in for it.
pub fn fit<F>(
    model_cfg: &ModelConfig,
    feature_cfg: &FeatureConfig,
    tcfg: &TrainConfig,
    init: Option<&Weights<f32>>,
    mut epoch_data: F,
    dev: Option<&[LabeledExample]>,
) -> Result<TrainOutcome>
where
    F: FnMut(usize) -> Result<Vec<LabeledExample>>,
{
    model_cfg.validate()?;
    tcfg.validate()?;
    let mut w: Weights<f64> = match init {
        Some(w0) => {
            w0.validate(model_cfg)?;
            w0.convert()
        }
        None => Weights::init(model_cfg, &mut derived_rng(tcfg.seed, u64::MAX)),
    };
    let adam = tcfg.adam();
    let mut state = AdamState::new(model_cfg);
    let mut lr = tcfg.lr_initial;
    let mut best: Option<(f64, usize, Weights<f64>)> = None;
    let mut since_best = 0usize;
    let mut log = Vec::new();
    let mut step = 0u64;

    for epoch in 0..tcfg.max_epochs {
        let mut data = epoch_data(epoch)?;
        if data.is_empty() {
            return Err(KwsError::Config("epoch produced no examples".into()));
        }
        data.shuffle(&mut derived_rng(tcfg.seed, epoch as u64));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in data.chunks(tcfg.batch_size) {
            if tcfg.max_steps.is_some_and(|m| step >= m) {
                break;
            }
            let (loss, grad) = backward_weights(model_cfg, &w, batch)?;
            adam_step(&mut w, &grad, &mut state, lr, &adam);
            step += 1;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        if seen == 0 {
            break;
        }
        let dev_loss = batch_metrics(model_cfg, &w, dev.unwrap_or(&data))?.loss;
        log.push(MetricsRow {
            epoch,
            step,
            train_loss: loss_sum / seen as f64,
            dev_loss,
            lr,
        });
        log::info!(
            "epoch {epoch} step {step} train {:.5} dev {dev_loss:.5} lr {lr}",
            loss_sum / seen as f64
        );

        if best.as_ref().is_none_or(|b| dev_loss < b.0) {
            best = Some((dev_loss, epoch, w.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.lr_drop_patience && lr > tcfg.lr_final {
                lr = tcfg.lr_final;
                since_best = 0;
            }
        }
        if tcfg.max_steps.is_some_and(|m| step >= m) {
            break;
        }
    }

    let (dev_loss, best_epoch, best_w) =
        best.ok_or_else(|| KwsError::Config("training ran no epochs".into()))?;
    let mut ckpt = Checkpoint::new(*model_cfg, feature_cfg.clone(), best_w.convert())?;
    ckpt.metadata
        .insert("best_epoch".into(), best_epoch.to_string());
    ckpt.metadata
        .insert("dev_loss".into(), dev_loss.to_string());
    ckpt.metadata.insert("steps".into(), step.to_string());
    ckpt.metadata.insert("seed".into(), tcfg.seed.to_string());
    Ok(TrainOutcome {
        checkpoint: ckpt,
        log,
        best_epoch,
        steps: step,
    })
}

/// Writes metrics rows as CSV, with a header line when `header` is set.
pub fn write_metrics_csv<W: std::io::Write>(
    rows: &[MetricsRow],
    out: W,
    header: bool,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(header)
        .from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
struct SourceItem {
    clip: Arc<AudioClip>,
    label: u8,
    span_s: Option<[f64; 2]>,
    offset_s: Option<f64>,
    split: Split,
}

/// Decoded audio for a training manifest.
#[derive(Debug, Clone)]
pub struct TrainData {
    items: Vec<SourceItem>,
    pub noise: Vec<AudioClip>,
    pub rirs: Vec<ImpulseResponse>,
}

impl TrainData {
    pub fn count(&self, split: Split) -> usize {
        self.items.iter().filter(|i| i.split == split).count()
    }
}

pub fn load_training_data(
    records: &[ManifestRecord],
    feature_cfg: &FeatureConfig,
) -> Result<TrainData> {
    let rate = |clip: &AudioClip, path: &std::path::Path| -> Result<()> {
        if clip.sample_rate != feature_cfg.sample_rate {
            return Err(KwsError::ConfigMismatch(format!(
                "{} is {} Hz, features expect {} Hz",
                path.display(),
                clip.sample_rate,
                feature_cfg.sample_rate
            )));
        }
        Ok(())
    };
    let mut data = TrainData {
        items: Vec::new(),
        noise: Vec::new(),
        rirs: Vec::new(),
    };
    for r in records {
        match r.kind {
            RecordKind::Example => {
                let clip = load_wav(&r.path)?;
                rate(&clip, &r.path)?;
                data.items.push(SourceItem {
                    clip: Arc::new(clip),
                    label: r.label.unwrap_or(ExampleLabel::Negative).as_u8(),
                    span_s: r.span_s,
                    offset_s: r.offset_s,
                    split: r.split.unwrap_or_default(),
                });
            }
            RecordKind::Noise => {
                let clip = load_wav(&r.path)?;
                rate(&clip, &r.path)?;
                data.noise.push(clip);
            }
            RecordKind::Rir => {
                let ir = ImpulseResponse::load(&r.path)?;
                if ir.sample_rate != feature_cfg.sample_rate {
                    return Err(KwsError::ConfigMismatch(format!(
                        "impulse response {} has the wrong rate",
                        r.path.display()
                    )));
                }
                data.rirs.push(ir);
            }
        }
    }
    Ok(data)
}

/// Cuts the training window for `item`: an explicit offset wins, positives
/// are centred on their span, longer negatives get a random start.
fn training_window<R: Rng + ?Sized>(item: &SourceItem, win: usize, rng: &mut R) -> TrainingSource {
    let clip = &item.clip;
    let sr = clip.sample_rate as f64;
    let slack = clip.len().saturating_sub(win);
    let start = if let Some(o) = item.offset_s {
        (o * sr).round() as usize
    } else if let (1, Some([b, e])) = (item.label, item.span_s) {
        let mid = 0.5 * (b + e) * sr;
        ((mid - 0.5 * win as f64).round().max(0.0) as usize).min(slack)
    } else if slack > 0 {
        rng.gen_range(0..=slack)
    } else {
        0
    };
    let start_s = start as f64 / sr;
    TrainingSource {
        clip: clip.window(start, win),
        label: item.label,
        span_s: item.span_s.map(|[b, e]| [b - start_s, e - start_s]),
    }
}

fn augmented_example<R: Rng + ?Sized>(
    src: &TrainingSource,
    spec: &AugmentSpec,
    data: &TrainData,
    featurizer: &Featurizer,
    rng: &mut R,
) -> Result<LabeledExample> {
    if !data.noise.is_empty() {
        return make_training_example(src, spec, &data.noise, &data.rirs, featurizer, rng);
    }
    let mut clip = src.clip.clone();
    if !data.rirs.is_empty() {
        clip = apply_rir(&clip, &data.rirs[rng.gen_range(0..data.rirs.len())])?;
    }
    let (clip, shift_ms) = random_jitter(&clip, spec.jitter_max_ms, rng);
    Ok(LabeledExample {
        label: window_label(src.label, src.span_s, shift_ms / 1000.0, clip.duration_s()),
        features: featurizer.featurize(&clip)?,
    })
}

/// Window length in samples implied by the model input and feature hop.
fn window_samples(model_cfg: &ModelConfig, feature_cfg: &FeatureConfig) -> Result<usize> {
    let win = (model_cfg.input_frames.max(1) - 1) * feature_cfg.hop_samples();
    if feature_cfg.frame_count(win) != model_cfg.input_frames
        || feature_cfg.n_mels != model_cfg.input_mels
    {
        return Err(KwsError::ConfigMismatch(format!(
            "model expects {}x{} features, the frontend produces {} mels at a {} ms hop",
            model_cfg.input_mels, model_cfg.input_frames, feature_cfg.n_mels, feature_cfg.hop_ms
        )));
    }
    Ok(win)
}

fn epoch_examples(
    data: &TrainData,
    spec: &AugmentSpec,
    featurizer: &Featurizer,
    win: usize,
    epoch: usize,
) -> Result<Vec<LabeledExample>> {
    let items: Vec<&SourceItem> = data
        .items
        .iter()
        .filter(|i| i.split == Split::Train)
        .collect();
    let n = items.len() as u64;
    items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let mut rng = derived_rng(spec.rng_seed, epoch as u64 * n + i as u64);
            let src = training_window(item, win, &mut rng);
            augmented_example(&src, spec, data, featurizer, &mut rng)
        })
        .collect()
}

/// The augmented training examples `train` would see in `epoch`.
pub fn augmented_epoch(
    data: &TrainData,
    model_cfg: &ModelConfig,
    feature_cfg: &FeatureConfig,
    spec: &AugmentSpec,
    epoch: usize,
) -> Result<Vec<LabeledExample>> {
    spec.validate()?;
    let win = window_samples(model_cfg, feature_cfg)?;
    epoch_examples(data, spec, &Featurizer::new(feature_cfg)?, win, epoch)
}

/// Trains on a manifest. Examples marked `"split": "dev"` form the dev set,
/// featurized without augmentation; train examples are re-augmented each
/// epoch from per-example seeds.
pub fn train(
    records: &[ManifestRecord],
    model_cfg: &ModelConfig,
    feature_cfg: &FeatureConfig,
    tcfg: &TrainConfig,
    spec: &AugmentSpec,
    init: Option<&Checkpoint>,
) -> Result<TrainOutcome> {
    spec.validate()?;
    let mut data = load_training_data(records, feature_cfg)?;
    for p in &spec.rir_paths {
        data.rirs.push(ImpulseResponse::load(p)?);
    }
    let train_items: Vec<&SourceItem> = data
        .items
        .iter()
        .filter(|i| i.split == Split::Train)
        .collect();
    if train_items.is_empty() {
        return Err(KwsError::Config("manifest has no training examples".into()));
    }
    if !train_items.iter().any(|i| i.label == 1) || !train_items.iter().any(|i| i.label == 0) {
        return Err(KwsError::Config(
            "manifest needs at least one positive and one negative example".into(),
        ));
    }
    let n_train = train_items.len();
    if let Some(c) = init {
        if c.config != *model_cfg {
            return Err(KwsError::ConfigMismatch(
                "initial checkpoint has a different model".into(),
            ));
        }
    }
    let featurizer = Featurizer::new(feature_cfg)?;
    let win = window_samples(model_cfg, feature_cfg)?;

    let dev: Vec<LabeledExample> = data
        .items
        .iter()
        .enumerate()
        .filter(|(_, i)| i.split == Split::Dev)
        .map(|(k, item)| {
            let src = training_window(item, win, &mut derived_rng(spec.rng_seed ^ 0xde5, k as u64));
            Ok(LabeledExample {
                features: featurizer.featurize(&src.clip)?,
                label: src.label,
            })
        })
        .collect::<Result<_>>()?;

    let dev_ref = (!dev.is_empty()).then_some(dev.as_slice());
    let mut out = fit(
        model_cfg,
        feature_cfg,
        tcfg,
        init.map(|c| &c.weights),
        |epoch| epoch_examples(&data, spec, &featurizer, win, epoch),
        dev_ref,
    )?;
    let meta = &mut out.checkpoint.metadata;
    meta.insert("train_examples".into(), n_train.to_string());
    meta.insert("dev_examples".into(), dev.len().to_string());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{write_wav, FeatureMatrix, WavEncoding};
    use crate::model::CellKind;
    use rand::SeedableRng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            input_mels: 6,
            input_frames: 8,
            ..ModelConfig::new(2, (3, 3), (2, 2), 1, 3, CellKind::Gru, 4)
        }
    }

    fn toy_examples(n: usize) -> Vec<LabeledExample> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let mut f = FeatureMatrix::zeros(6, 8);
                for v in f.values.iter_mut() {
                    *v = rng.gen_range(0.0..0.2) + if label == 1 { 0.6 } else { 0.0 };
                }
                LabeledExample { features: f, label }
            })
            .collect()
    }

    #[test]
    fn fit_learns_a_separable_set_and_is_reproducible() {
        let cfg = tiny_cfg();
        let data = toy_examples(16);
        let tcfg = TrainConfig {
            batch_size: 8,
            max_epochs: 60,
            lr_initial: 0.01,
            lr_final: 0.003,
            ..TrainConfig::default()
        };
        let run = || {
            fit(
                &cfg,
                &FeatureConfig::default(),
                &tcfg,
                None,
                |_| Ok(data.clone()),
                None,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.log, b.log);
        assert_eq!(a.checkpoint.weights, b.checkpoint.weights);
        let m = batch_metrics(&cfg, &a.checkpoint.weights, &data).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(a.log.last().unwrap().train_loss < a.log[0].train_loss);
        assert_eq!(a.log.last().unwrap().step, 120);
    }

    #[test]
    fn plateau_drops_the_rate() {
        let cfg = tiny_cfg();
        // Dev labels contradict train labels, so dev loss stops improving.
        let data = toy_examples(8);
        let dev: Vec<_> = data
            .iter()
            .map(|e| LabeledExample {
                features: e.features.clone(),
                label: 1 - e.label,
            })
            .collect();
        let tcfg = TrainConfig {
            batch_size: 8,
            max_epochs: 12,
            lr_drop_patience: 2,
            ..TrainConfig::default()
        };
        let out = fit(
            &cfg,
            &FeatureConfig::default(),
            &tcfg,
            None,
            |_| Ok(data.clone()),
            Some(&dev),
        )
        .unwrap();
        let drop = out
            .log
            .iter()
            .position(|r| r.lr == 0.0003)
            .expect("rate never dropped");
        assert!(drop >= 3);
        assert!(out.log[..drop].iter().all(|r| r.lr == 0.001));
        assert!(out.log[drop..].iter().all(|r| r.lr == 0.0003));
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn max_steps_stops_mid_epoch() {
        let cfg = tiny_cfg();
        let data = toy_examples(32);
        let tcfg = TrainConfig {
            batch_size: 4,
            max_epochs: 10,
            max_steps: Some(5),
            ..TrainConfig::default()
        };
        let out = fit(
            &cfg,
            &FeatureConfig::default(),
            &tcfg,
            None,
            |_| Ok(data.clone()),
            None,
        )
        .unwrap();
        assert_eq!(out.steps, 5);
        assert_eq!(out.log.len(), 1);
    }

    #[test]
    fn metrics_csv_layout() {
        let rows = vec![MetricsRow {
            epoch: 0,
            step: 3,
            train_loss: 0.5,
            dev_loss: 0.25,
            lr: 0.001,
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf, true).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,step,train_loss,dev_loss,lr\n0,3,0.5,0.25,0.001\n"
        );
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf, false).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0,3,0.5,0.25,0.001\n");
    }

    #[test]
    fn manifest_training_checks_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_wav(
            &p,
            &AudioClip::new(vec![0.1; 16000], 16000).unwrap(),
            WavEncoding::Pcm16,
        )
        .unwrap();
        let cfg = ModelConfig {
            input_frames: 151,
            input_mels: 40,
            ..tiny_cfg()
        };
        let fc = FeatureConfig::default();
        let only_pos = vec![ManifestRecord::example(&p, ExampleLabel::Positive)];
        let r = train(
            &only_pos,
            &cfg,
            &fc,
            &TrainConfig::default(),
            &AugmentSpec::default(),
            None,
        );
        assert!(matches!(r, Err(KwsError::Config(_))));
        let r = train(
            &[],
            &cfg,
            &fc,
            &TrainConfig::default(),
            &AugmentSpec::default(),
            None,
        );
        assert!(matches!(r, Err(KwsError::Config(_))));
    }

    #[test]
    fn windows_center_positives_and_honour_offsets() {
        let clip = Arc::new(
            AudioClip::new((0..48000).map(|i| i as f32 / 48000.0).collect(), 16000).unwrap(),
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let pos = SourceItem {
            clip: clip.clone(),
            label: 1,
            span_s: Some([1.25, 1.75]),
            offset_s: None,
            split: Split::Train,
        };
        let w = training_window(&pos, 24000, &mut rng);
        assert_eq!(w.clip.samples[0], clip.samples[12000]);
        assert_eq!(w.span_s, Some([0.5, 1.0]));
        let mined = SourceItem {
            label: 0,
            span_s: None,
            offset_s: Some(0.5),
            ..pos
        };
        let w = training_window(&mined, 24000, &mut rng);
        assert_eq!(w.clip.samples[0], clip.samples[8000]);
        assert_eq!(w.clip.len(), 24000);
    }
}

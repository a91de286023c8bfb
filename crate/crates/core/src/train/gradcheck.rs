//! Analytic gradients against central finite differences of the loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward_weights, mean_loss, LabeledExample};
use crate::frontend::FeatureMatrix;
use crate::model::{Activation, CellKind, ModelConfig, Weights};

/// Gradients smaller than this are compared absolutely.
const FLOOR: f64 = 1e-6;

fn random_case(seed: u64) -> (ModelConfig, Weights<f64>, Vec<LabeledExample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = if seed.is_multiple_of(2) {
        CellKind::Gru
    } else {
        CellKind::Lstm
    };
    let act = if (seed / 2).is_multiple_of(2) {
        Activation::Relu
    } else {
        Activation::Tanh
    };
    let cfg = ModelConfig {
        n_conv_filters: rng.gen_range(1..=3),
        kernel_time: rng.gen_range(1..=4),
        kernel_freq: rng.gen_range(1..=4),
        stride_time: rng.gen_range(1..=3),
        stride_freq: rng.gen_range(1..=3),
        n_rec_layers: rng.gen_range(1..=2),
        rec_hidden: rng.gen_range(1..=4),
        cell_kind: cell,
        fc_units: rng.gen_range(1..=4),
        rec_candidate_activation: act,
        input_mels: rng.gen_range(3..=7),
        input_frames: rng.gen_range(3..=9),
    };
    let mut w: Weights<f64> = Weights::zeros(&cfg);
    for t in w.tensors_mut() {
        t.iter_mut().for_each(|v| *v = rng.gen_range(-0.6..0.6));
    }
    let batch = (0..3)
        .map(|i| {
            let mut f = FeatureMatrix::zeros(cfg.input_mels, cfg.input_frames);
            f.values
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(0.0..1.5));
            LabeledExample {
                features: f,
                label: (i % 2) as u8,
            }
        })
        .collect();
    (cfg, w, batch)
}

/// Largest relative error over every parameter of the case.
fn max_rel_error(seed: u64) -> (f64, String) {
    let (cfg, w, batch) = random_case(seed);
    let (_, analytic) = backward_weights(&cfg, &w, &batch).unwrap();
    let names: Vec<String> = crate::model::tensor_specs(&cfg)
        .into_iter()
        .map(|s| s.name)
        .collect();
    let mut worst = (0.0, String::new());
    let mut probe = w.clone();
    for (ti, a_t) in analytic.tensors().into_iter().enumerate() {
        for (j, &a) in a_t.iter().enumerate() {
            let theta = w.tensors()[ti][j];
            let h = 1e-4 * (1.0 + theta.abs());
            probe.tensors_mut()[ti][j] = theta + h;
            let up = mean_loss(&cfg, &probe, &batch).unwrap();
            probe.tensors_mut()[ti][j] = theta - h;
            let down = mean_loss(&cfg, &probe, &batch).unwrap();
            probe.tensors_mut()[ti][j] = theta;
            let n = (up - down) / (2.0 * h);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(FLOOR);
            if rel > worst.0 {
                worst = (
                    rel,
                    format!("{}[{j}] analytic {a:e} numeric {n:e}", names[ti]),
                );
            }
        }
    }
    worst
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..16 {
        let (err, at) = max_rel_error(seed);
        assert!(err < 1e-4, "seed {seed}: rel error {err:e} at {at}");
    }
}

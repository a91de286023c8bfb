//! Reverse-mode gradients of the mean cross-entropy loss.

use rayon::prelude::*;

use super::loss::ce_loss;
use super::LabeledExample;
use crate::error::{KwsError, Result};
use crate::frontend::{FeatureMatrix, Matrix};
use crate::model::{
    forward_trace, same_padding, Activation, CellKind, DirTrace, DirectionWeights, GradSet,
    ModelConfig, Param, Trace, Weights,
};

/// Examples summed sequentially per work unit; units are reduced in order,
/// so the result does not depend on the thread count.
const REDUCE_CHUNK: usize = 8;

/// `grad[row, :] += scale_row[row] * x` over a row-major matrix.
#[inline]
fn outer_acc(grad: &mut [f64], rows: &[f64], x: &[f64]) {
    let cols = x.len();
    for (g_row, &r) in grad.chunks_exact_mut(cols).zip(rows) {
        if r == 0.0 {
            continue;
        }
        for (g, &v) in g_row.iter_mut().zip(x) {
            *g += r * v;
        }
    }
}

/// `out += mᵀ · v` for a row-major `v.len() x out.len()` matrix.
#[inline]
fn matvec_t_acc<T: Param>(out: &mut [f64], m: &[T], v: &[f64]) {
    let cols = out.len();
    for (row, &s) in m.chunks_exact(cols).zip(v) {
        if s == 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(row) {
            *o += w.to_f64() * s;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_direction<T: Param>(
    seq: &Matrix,
    tr: &DirTrace,
    w: &DirectionWeights<T>,
    g: &mut DirectionWeights<f64>,
    d_out: &Matrix,
    col0: usize,
    d_seq: &mut Matrix,
    cell: CellKind,
    act: Activation,
    hidden: usize,
) {
    let steps = seq.rows;
    let gh = cell.gates() * hidden;
    let zero = vec![0.0; hidden];
    let mut carry_h = vec![0.0; hidden];
    let mut carry_c = vec![0.0; hidden];
    let mut dpre = vec![0.0; gh];
    let mut dh_prev = vec![0.0; hidden];
    let mut rh = vec![0.0; hidden];
    let mut drh = vec![0.0; hidden];

    for s in (0..steps).rev() {
        let t = if tr.reverse { steps - 1 - s } else { s };
        let x = seq.row(t);
        let h_prev = if s > 0 {
            &tr.h[(s - 1) * hidden..s * hidden]
        } else {
            &zero[..]
        };
        let gates = &tr.gates[s * gh..(s + 1) * gh];
        let cand = &tr.pre_cand[s * hidden..(s + 1) * hidden];
        let dh: Vec<f64> = (0..hidden)
            .map(|k| d_out.get(t, col0 + k) + carry_h[k])
            .collect();

        match cell {
            CellKind::Gru => {
                let (z, rest) = gates.split_at(hidden);
                let (r, hc) = rest.split_at(hidden);
                for k in 0..hidden {
                    let dz = dh[k] * (hc[k] - h_prev[k]);
                    dpre[k] = dz * z[k] * (1.0 - z[k]);
                    dpre[2 * hidden + k] = dh[k] * z[k] * act.derivative(cand[k]);
                    dh_prev[k] = dh[k] * (1.0 - z[k]);
                    rh[k] = r[k] * h_prev[k];
                }
                let u_cand = &w.u[2 * hidden * hidden..];
                outer_acc(&mut g.u[2 * hidden * hidden..], &dpre[2 * hidden..], &rh);
                drh.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_acc(&mut drh, u_cand, &dpre[2 * hidden..]);
                for k in 0..hidden {
                    let dr = drh[k] * h_prev[k];
                    dpre[hidden + k] = dr * r[k] * (1.0 - r[k]);
                    dh_prev[k] += drh[k] * r[k];
                }
                outer_acc(&mut g.u[..2 * hidden * hidden], &dpre[..2 * hidden], h_prev);
                matvec_t_acc(
                    &mut dh_prev,
                    &w.u[..2 * hidden * hidden],
                    &dpre[..2 * hidden],
                );
            }
            CellKind::Lstm => {
                let c = &tr.cell[s * hidden..(s + 1) * hidden];
                let c_prev = if s > 0 {
                    &tr.cell[(s - 1) * hidden..s * hidden]
                } else {
                    &zero[..]
                };
                for k in 0..hidden {
                    let (i, f, gv, o) = (
                        gates[k],
                        gates[hidden + k],
                        gates[2 * hidden + k],
                        gates[3 * hidden + k],
                    );
                    let d_o = dh[k] * act.apply(c[k]);
                    let dc = carry_c[k] + dh[k] * o * act.derivative(c[k]);
                    dpre[k] = dc * gv * i * (1.0 - i);
                    dpre[hidden + k] = dc * c_prev[k] * f * (1.0 - f);
                    dpre[2 * hidden + k] = dc * i * act.derivative(cand[k]);
                    dpre[3 * hidden + k] = d_o * o * (1.0 - o);
                    carry_c[k] = dc * f;
                }
                outer_acc(&mut g.u, &dpre, h_prev);
                dh_prev.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_acc(&mut dh_prev, &w.u, &dpre);
            }
        }
        outer_acc(&mut g.w, &dpre, x);
        for (gb, d) in g.b.iter_mut().zip(&dpre) {
            *gb += d;
        }
        let dx = &mut d_seq.data[t * seq.cols..(t + 1) * seq.cols];
        matvec_t_acc(dx, &w.w, &dpre);
        carry_h.copy_from_slice(&dh_prev);
    }
}

/// Adds `scale * dLoss/dθ` for one example into `grad`; returns the loss.
pub(crate) fn accumulate_example<T: Param>(
    x: &FeatureMatrix,
    label: u8,
    cfg: &ModelConfig,
    w: &Weights<T>,
    grad: &mut GradSet,
    scale: f64,
) -> Result<f64> {
    let trace: Trace = forward_trace(x, cfg, w)?;
    let y = label as f64;
    let loss = ce_loss(trace.probs[1], label);
    let dlogits = [
        scale * (trace.probs[0] - (1.0 - y)),
        scale * (trace.probs[1] - y),
    ];

    // output layer
    grad.out_b[0] += dlogits[0];
    grad.out_b[1] += dlogits[1];
    outer_acc(&mut grad.out_w, &dlogits, &trace.fc_out);
    let mut d_fc = vec![0.0; cfg.fc_units];
    matvec_t_acc(&mut d_fc, &w.out_w, &dlogits);
    for (d, &a) in d_fc.iter_mut().zip(&trace.fc_out) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }

    // fully connected layer over the flattened recurrent output
    let last = trace.layers.last().expect("at least one recurrent layer");
    let flat = &last.output.data;
    for (gb, d) in grad.fc_b.iter_mut().zip(&d_fc) {
        *gb += d;
    }
    outer_acc(&mut grad.fc_w, &d_fc, flat);
    let mut d_out = Matrix::zeros(last.output.rows, last.output.cols);
    matvec_t_acc(&mut d_out.data, &w.fc_w, &d_fc);

    // recurrent stack, top to bottom
    let hidden = cfg.rec_hidden;
    for l in (0..trace.layers.len()).rev() {
        let input = if l == 0 {
            &trace.conv_out
        } else {
            &trace.layers[l - 1].output
        };
        let lt = &trace.layers[l];
        let mut d_in = Matrix::zeros(input.rows, input.cols);
        let gl = &mut grad.rnn[l];
        for (dir_tr, dir_w, dir_g, col0) in [
            (&lt.fw, &w.rnn[l].fw, &mut gl.fw, 0),
            (&lt.bw, &w.rnn[l].bw, &mut gl.bw, hidden),
        ] {
            backward_direction(
                input,
                dir_tr,
                dir_w,
                dir_g,
                &d_out,
                col0,
                &mut d_in,
                cfg.cell_kind,
                cfg.rec_candidate_activation,
                hidden,
            );
        }
        d_out = d_in;
    }

    // convolution (input gradient not needed)
    let (pad_t, time_out) = same_padding(cfg.input_frames, cfg.kernel_time, cfg.stride_time);
    let (pad_f, freq_out) = same_padding(cfg.input_mels, cfg.kernel_freq, cfg.stride_freq);
    let (lt, lf) = (cfg.kernel_time, cfg.kernel_freq);
    for c in 0..cfg.n_conv_filters {
        let kg = &mut grad.conv_w[c * lt * lf..(c + 1) * lt * lf];
        for to in 0..time_out {
            let t0 = (to * cfg.stride_time) as isize - pad_t as isize;
            for fo in 0..freq_out {
                let col = c * freq_out + fo;
                if trace.conv_out.get(to, col) <= 0.0 {
                    continue;
                }
                let d = d_out.get(to, col);
                if d == 0.0 {
                    continue;
                }
                grad.conv_b[c] += d;
                let f0 = (fo * cfg.stride_freq) as isize - pad_f as isize;
                for i in 0..lt {
                    let t = t0 + i as isize;
                    if t < 0 || t >= x.n_frames as isize {
                        continue;
                    }
                    for j in 0..lf {
                        let f = f0 + j as isize;
                        if f < 0 || f >= x.n_mels as isize {
                            continue;
                        }
                        kg[i * lf + j] += d * x.values[f as usize * x.n_frames + t as usize] as f64;
                    }
                }
            }
        }
    }
    Ok(loss)
}

/// Mean loss and exact gradient over a batch given raw weights.
pub fn backward_weights<T: Param>(
    cfg: &ModelConfig,
    w: &Weights<T>,
    batch: &[LabeledExample],
) -> Result<(f64, GradSet)> {
    if batch.is_empty() {
        return Err(KwsError::EmptyInput("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<Result<(f64, GradSet)>> = batch
        .par_chunks(REDUCE_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut g = GradSet::zeros(cfg);
            let mut loss = 0.0;
            for (k, ex) in chunk.iter().enumerate() {
                let l = accumulate_example(&ex.features, ex.label, cfg, w, &mut g, scale).map_err(
                    |e| match e {
                        KwsError::Numeric(m) => {
                            KwsError::Numeric(format!("example {}: {m}", ci * REDUCE_CHUNK + k))
                        }
                        other => other,
                    },
                )?;
                if !l.is_finite() {
                    return Err(KwsError::Numeric(format!(
                        "example {}: non-finite loss",
                        ci * REDUCE_CHUNK + k
                    )));
                }
                loss += l;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = GradSet::zeros(cfg);
    let mut loss = 0.0;
    for p in partials {
        let (l, g) = p?;
        loss += l;
        total.add_scaled(&g, 1.0);
    }
    Ok((loss * scale, total))
}

/// Mean loss and gradient for a checkpoint's weights.
pub fn backward(
    ckpt: &crate::model::Checkpoint,
    batch: &[LabeledExample],
) -> Result<(f64, GradSet)> {
    backward_weights(&ckpt.config, &ckpt.weights, batch)
}

/// Mean loss without gradients.
pub fn mean_loss<T: Param>(
    cfg: &ModelConfig,
    w: &Weights<T>,
    batch: &[LabeledExample],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(KwsError::EmptyInput("empty batch".into()));
    }
    let losses: Vec<Result<f64>> = batch
        .par_iter()
        .map(|ex| {
            Ok(ce_loss(
                crate::model::score(&ex.features, cfg, w)?,
                ex.label,
            ))
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / batch.len() as f64)
}

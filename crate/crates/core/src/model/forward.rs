//! Inference path. Parameters are read as `f64` and every accumulation runs
//! in double precision regardless of the storage type.

use super::config::{same_padding, Activation, CellKind, ModelConfig};
use super::weights::{DirectionWeights, LayerWeights, Param, Weights};
use crate::error::{KwsError, Result};
use crate::frontend::{FeatureMatrix, Matrix};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += m · x` for a row-major `rows x x.len()` matrix.
#[inline]
pub(crate) fn matvec_acc<T: Param>(out: &mut [f64], m: &[T], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// Dot product with four fixed accumulator lanes, summed in a fixed order.
#[inline]
pub(crate) fn dot<T: Param>(a: &[T], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let ac = a.chunks_exact(4);
    let bc = b.chunks_exact(4);
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for k in 0..4 {
            lanes[k] += x[k].to_f64() * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ar.iter().zip(br) {
        tail += x.to_f64() * y;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

fn check_finite(values: &[f64], stage: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(KwsError::Numeric(format!(
            "non-finite activation in {stage}"
        )))
    }
}

/// Strided "same" cross-correlation over (time, frequency) followed by ReLU.
///
/// Returns `time_out x (n_conv_filters * freq_out)`; within a time step the
/// features are ordered filter-major, frequency-minor.
pub fn conv_forward<T: Param>(
    x: &FeatureMatrix,
    cfg: &ModelConfig,
    w: &Weights<T>,
) -> Result<Matrix> {
    if x.shape() != (cfg.input_mels, cfg.input_frames) {
        return Err(KwsError::Dimension(format!(
            "features are {}x{}, model expects {}x{}",
            x.n_mels, x.n_frames, cfg.input_mels, cfg.input_frames
        )));
    }
    let (pad_t, time_out) = same_padding(cfg.input_frames, cfg.kernel_time, cfg.stride_time);
    let (pad_f, freq_out) = same_padding(cfg.input_mels, cfg.kernel_freq, cfg.stride_freq);
    let (lt, lf) = (cfg.kernel_time, cfg.kernel_freq);
    // Time-major copy with zeros around it, so every kernel row reads one
    // contiguous slice.
    let width = pad_f + x.n_mels + lf;
    let height = pad_t + x.n_frames + lt;
    let mut padded = vec![0.0f64; width * height];
    for f in 0..x.n_mels {
        for t in 0..x.n_frames {
            padded[(pad_t + t) * width + pad_f + f] = x.values[f * x.n_frames + t] as f64;
        }
    }
    let mut out = Matrix::zeros(time_out, cfg.n_conv_filters * freq_out);
    let mut patch = vec![0.0f64; lt * lf];
    for to in 0..time_out {
        let t0 = to * cfg.stride_time;
        for fo in 0..freq_out {
            let f0 = fo * cfg.stride_freq;
            for (i, dst) in patch.chunks_exact_mut(lf).enumerate() {
                let base = (t0 + i) * width + f0;
                dst.copy_from_slice(&padded[base..base + lf]);
            }
            for c in 0..cfg.n_conv_filters {
                let kernel = &w.conv_w[c * lt * lf..(c + 1) * lt * lf];
                let acc = w.conv_b[c].to_f64() + dot(kernel, &patch);
                out.set(to, c * freq_out + fo, acc.max(0.0));
            }
        }
    }
    Ok(out)
}

/// Everything the backward pass needs from one recurrent direction, indexed
/// by processing step (step `s` is time `s` forward, `T-1-s` backward).
#[derive(Debug, Clone)]
pub(crate) struct DirTrace {
    pub reverse: bool,
    /// Hidden state after each step, `T x H`.
    pub h: Vec<f64>,
    /// Post-activation gates, `T x (G*H)` in the layout's gate order.
    pub gates: Vec<f64>,
    /// Candidate pre-activation, `T x H`.
    pub pre_cand: Vec<f64>,
    /// LSTM cell state after each step, `T x H`; empty for GRU.
    pub cell: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerTrace {
    pub output: Matrix,
    pub fw: DirTrace,
    pub bw: DirTrace,
}

#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub conv_out: Matrix,
    pub layers: Vec<LayerTrace>,
    /// FC output after ReLU.
    pub fc_out: Vec<f64>,
    pub probs: [f64; 2],
}

pub(crate) fn run_direction<T: Param>(
    seq: &Matrix,
    d: &DirectionWeights<T>,
    cell: CellKind,
    act: Activation,
    hidden: usize,
    reverse: bool,
) -> DirTrace {
    let steps = seq.rows;
    let g = cell.gates();
    let gh = g * hidden;
    let mut tr = DirTrace {
        reverse,
        h: vec![0.0; steps * hidden],
        gates: vec![0.0; steps * gh],
        pre_cand: vec![0.0; steps * hidden],
        cell: if cell == CellKind::Lstm {
            vec![0.0; steps * hidden]
        } else {
            Vec::new()
        },
    };
    let mut h_prev = vec![0.0; hidden];
    let mut c_prev = vec![0.0; hidden];
    let mut pre = vec![0.0; gh];
    let mut rh = vec![0.0; hidden];

    for s in 0..steps {
        let t = if reverse { steps - 1 - s } else { s };
        let x = seq.row(t);
        for (p, b) in pre.iter_mut().zip(&d.b) {
            *p = b.to_f64();
        }
        matvec_acc(&mut pre, &d.w, x);
        let gates = &mut tr.gates[s * gh..(s + 1) * gh];
        let h_out = &mut tr.h[s * hidden..(s + 1) * hidden];
        let cand = &mut tr.pre_cand[s * hidden..(s + 1) * hidden];
        match cell {
            CellKind::Gru => {
                // z and r see U h_{t-1}; the candidate sees U (r * h_{t-1}).
                matvec_acc(&mut pre[..2 * hidden], &d.u[..2 * hidden * hidden], &h_prev);
                for k in 0..2 * hidden {
                    gates[k] = sigmoid(pre[k]);
                }
                for k in 0..hidden {
                    rh[k] = gates[hidden + k] * h_prev[k];
                }
                matvec_acc(&mut pre[2 * hidden..], &d.u[2 * hidden * hidden..], &rh);
                for k in 0..hidden {
                    let p = pre[2 * hidden + k];
                    cand[k] = p;
                    let hc = act.apply(p);
                    gates[2 * hidden + k] = hc;
                    let z = gates[k];
                    h_out[k] = (1.0 - z) * h_prev[k] + z * hc;
                }
            }
            CellKind::Lstm => {
                matvec_acc(&mut pre, &d.u, &h_prev);
                let c_out = &mut tr.cell[s * hidden..(s + 1) * hidden];
                for k in 0..hidden {
                    let i = sigmoid(pre[k]);
                    let f = sigmoid(pre[hidden + k]);
                    let gp = pre[2 * hidden + k];
                    let gv = act.apply(gp);
                    let o = sigmoid(pre[3 * hidden + k]);
                    gates[k] = i;
                    gates[hidden + k] = f;
                    gates[2 * hidden + k] = gv;
                    gates[3 * hidden + k] = o;
                    cand[k] = gp;
                    let c = f * c_prev[k] + i * gv;
                    c_out[k] = c;
                    h_out[k] = o * act.apply(c);
                }
                c_prev.copy_from_slice(c_out);
            }
        }
        h_prev.copy_from_slice(h_out);
    }
    tr
}

fn layer_trace<T: Param>(
    seq: &Matrix,
    layer: &LayerWeights<T>,
    cell: CellKind,
    act: Activation,
    hidden: usize,
) -> Result<LayerTrace> {
    let g = cell.gates() * hidden;
    for (name, d) in [("fw", &layer.fw), ("bw", &layer.bw)] {
        if d.w.len() != g * seq.cols || d.u.len() != g * hidden || d.b.len() != g {
            return Err(KwsError::Dimension(format!(
                "{name} recurrent weights do not fit input width {} and {hidden} units",
                seq.cols
            )));
        }
    }
    let fw = run_direction(seq, &layer.fw, cell, act, hidden, false);
    let bw = run_direction(seq, &layer.bw, cell, act, hidden, true);
    let steps = seq.rows;
    let mut output = Matrix::zeros(steps, 2 * hidden);
    for t in 0..steps {
        let row = &mut output.data[t * 2 * hidden..(t + 1) * 2 * hidden];
        row[..hidden].copy_from_slice(&fw.h[t * hidden..(t + 1) * hidden]);
        let sb = steps - 1 - t;
        row[hidden..].copy_from_slice(&bw.h[sb * hidden..(sb + 1) * hidden]);
    }
    check_finite(&output.data, "recurrent layer")?;
    Ok(LayerTrace { output, fw, bw })
}

/// One bidirectional recurrent layer. Returns `T x 2H` with the forward
/// direction's state in the first `H` columns of each row.
pub fn recurrent_forward<T: Param>(
    seq: &Matrix,
    layer: &LayerWeights<T>,
    cell: CellKind,
    act: Activation,
    hidden: usize,
) -> Result<Matrix> {
    Ok(layer_trace(seq, layer, cell, act, hidden)?.output)
}

pub(crate) fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

pub(crate) fn forward_trace<T: Param>(
    x: &FeatureMatrix,
    cfg: &ModelConfig,
    w: &Weights<T>,
) -> Result<Trace> {
    let conv_out = conv_forward(x, cfg, w)?;
    check_finite(&conv_out.data, "convolution")?;
    let mut layers: Vec<LayerTrace> = Vec::with_capacity(cfg.n_rec_layers);
    for (l, lw) in w.rnn.iter().enumerate() {
        let input = if l == 0 {
            &conv_out
        } else {
            &layers[l - 1].output
        };
        let tr = layer_trace(
            input,
            lw,
            cfg.cell_kind,
            cfg.rec_candidate_activation,
            cfg.rec_hidden,
        )?;
        layers.push(tr);
    }
    let flat = &layers
        .last()
        .ok_or_else(|| KwsError::Config("model has no recurrent layers".into()))?
        .output
        .data;
    if w.fc_w.len() != cfg.fc_units * flat.len() {
        return Err(KwsError::Dimension(format!(
            "fc.w has {} values for {} inputs",
            w.fc_w.len(),
            flat.len()
        )));
    }
    let mut fc_out: Vec<f64> = w.fc_b.iter().map(|b| b.to_f64()).collect();
    matvec_acc(&mut fc_out, &w.fc_w, flat);
    fc_out.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut logits = [w.out_b[0].to_f64(), w.out_b[1].to_f64()];
    matvec_acc(&mut logits, &w.out_w, &fc_out);
    check_finite(&logits, "output layer")?;
    Ok(Trace {
        conv_out,
        layers,
        fc_out,
        probs: softmax2(logits),
    })
}

/// Posteriors `[non-keyword, keyword]` for one feature window.
pub fn class_posteriors<T: Param>(
    x: &FeatureMatrix,
    cfg: &ModelConfig,
    w: &Weights<T>,
) -> Result<[f64; 2]> {
    Ok(forward_trace(x, cfg, w)?.probs)
}

/// Keyword posterior for one feature window.
pub fn score<T: Param>(x: &FeatureMatrix, cfg: &ModelConfig, w: &Weights<T>) -> Result<f64> {
    Ok(class_posteriors(x, cfg, w)?[1])
}

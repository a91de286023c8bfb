use rand::Rng;

use super::config::ModelConfig;
use crate::error::{KwsError, Result};

/// Scalar type a weight tensor can be stored in. All arithmetic happens in
/// `f64`; checkpoints hold `f32`.
pub trait Param: Copy + Default + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Param for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Param for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Weights of one recurrent direction. Rows are stacked by gate
/// (GRU: z, r, candidate; LSTM: i, f, g, o), each block `rec_hidden` tall.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionWeights<T> {
    /// `(gates * hidden) x input_dim`
    pub w: Vec<T>,
    /// `(gates * hidden) x hidden`
    pub u: Vec<T>,
    pub b: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub fw: DirectionWeights<T>,
    pub bw: DirectionWeights<T>,
}

/// All learned tensors of a CRNN, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T = f32> {
    /// `n_conv_filters x kernel_time x kernel_freq`
    pub conv_w: Vec<T>,
    pub conv_b: Vec<T>,
    pub rnn: Vec<LayerWeights<T>>,
    /// `fc_units x (time_out * 2 * rec_hidden)`
    pub fc_w: Vec<T>,
    pub fc_b: Vec<T>,
    /// `2 x fc_units`; row 1 is the keyword class.
    pub out_w: Vec<T>,
    pub out_b: Vec<T>,
}

/// Gradients share the weight layout, always in double precision.
pub type GradSet = Weights<f64>;

/// Name and shape of one tensor in checkpoint order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Canonical tensor list for `cfg`: conv.w, conv.b, rnn{l}.{fw|bw}.{W|U|b},
/// fc.w, fc.b, out.w, out.b.
pub fn tensor_specs(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let spec = |name: String, shape: Vec<usize>| TensorSpec { name, shape };
    let g = cfg.cell_kind.gates() * cfg.rec_hidden;
    let mut out = vec![
        spec(
            "conv.w".into(),
            vec![cfg.n_conv_filters, cfg.kernel_time, cfg.kernel_freq],
        ),
        spec("conv.b".into(), vec![cfg.n_conv_filters]),
    ];
    for l in 0..cfg.n_rec_layers {
        for dir in ["fw", "bw"] {
            out.push(spec(
                format!("rnn{l}.{dir}.W"),
                vec![g, cfg.rec_input_dim(l)],
            ));
            out.push(spec(format!("rnn{l}.{dir}.U"), vec![g, cfg.rec_hidden]));
            out.push(spec(format!("rnn{l}.{dir}.b"), vec![g]));
        }
    }
    out.push(spec("fc.w".into(), vec![cfg.fc_units, cfg.fc_input_dim()]));
    out.push(spec("fc.b".into(), vec![cfg.fc_units]));
    out.push(spec("out.w".into(), vec![2, cfg.fc_units]));
    out.push(spec("out.b".into(), vec![2]));
    out
}

impl<T: Param> Weights<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let mut specs = tensor_specs(cfg)
            .into_iter()
            .map(|s| vec![T::default(); s.len()]);
        let mut next = || specs.next().expect("tensor list matches layout");
        let conv_w = next();
        let conv_b = next();
        let rnn = (0..cfg.n_rec_layers)
            .map(|_| {
                let fw = DirectionWeights {
                    w: next(),
                    u: next(),
                    b: next(),
                };
                let bw = DirectionWeights {
                    w: next(),
                    u: next(),
                    b: next(),
                };
                LayerWeights { fw, bw }
            })
            .collect();
        Self {
            conv_w,
            conv_b,
            rnn,
            fc_w: next(),
            fc_b: next(),
            out_w: next(),
            out_b: next(),
        }
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut w = Self::zeros(cfg);
        let specs = tensor_specs(cfg);
        for (spec, t) in specs.iter().zip(w.tensors_mut()) {
            if spec.shape.len() < 2 {
                continue;
            }
            let (fan_out, fan_in) = if spec.name == "conv.w" {
                let k = spec.shape[1] * spec.shape[2];
                (spec.shape[0] * k, k)
            } else {
                (spec.shape[0], spec.shape[1])
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.iter_mut() {
                *v = T::from_f64(rng.gen_range(-limit..limit));
            }
        }
        w
    }

    /// Tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<&Vec<T>> {
        let mut out = vec![&self.conv_w, &self.conv_b];
        for layer in &self.rnn {
            for d in [&layer.fw, &layer.bw] {
                out.extend([&d.w, &d.u, &d.b]);
            }
        }
        out.extend([&self.fc_w, &self.fc_b, &self.out_w, &self.out_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = vec![&mut self.conv_w, &mut self.conv_b];
        for layer in &mut self.rnn {
            for d in [&mut layer.fw, &mut layer.bw] {
                out.push(&mut d.w);
                out.push(&mut d.u);
                out.push(&mut d.b);
            }
        }
        out.push(&mut self.fc_w);
        out.push(&mut self.fc_b);
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn convert<U: Param>(&self) -> Weights<U> {
        let map = |v: &Vec<T>| {
            v.iter()
                .map(|x| U::from_f64(x.to_f64()))
                .collect::<Vec<U>>()
        };
        let dir = |d: &DirectionWeights<T>| DirectionWeights {
            w: map(&d.w),
            u: map(&d.u),
            b: map(&d.b),
        };
        Weights {
            conv_w: map(&self.conv_w),
            conv_b: map(&self.conv_b),
            rnn: self
                .rnn
                .iter()
                .map(|l| LayerWeights {
                    fw: dir(&l.fw),
                    bw: dir(&l.bw),
                })
                .collect(),
            fc_w: map(&self.fc_w),
            fc_b: map(&self.fc_b),
            out_w: map(&self.out_w),
            out_b: map(&self.out_b),
        }
    }

    /// Checks every tensor length against `cfg` and that all values are finite.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let specs = tensor_specs(cfg);
        let tensors = self.tensors();
        if specs.len() != tensors.len() {
            return Err(KwsError::Dimension(format!(
                "{} tensors, config expects {}",
                tensors.len(),
                specs.len()
            )));
        }
        for (spec, t) in specs.iter().zip(tensors) {
            if spec.len() != t.len() {
                return Err(KwsError::Dimension(format!(
                    "{}: {} values, expected {:?}",
                    spec.name,
                    t.len(),
                    spec.shape
                )));
            }
            if t.iter().any(|v| !v.to_f64().is_finite()) {
                return Err(KwsError::Numeric(format!(
                    "{} holds non-finite values",
                    spec.name
                )));
            }
        }
        Ok(())
    }
}

impl Weights<f64> {
    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Weights<f64>, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{KwsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    /// Number of stacked gate blocks in W, U and b.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellKind::Gru => "GRU",
            CellKind::Lstm => "LSTM",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

/// CRNN hyperparameters: one convolution, `n_rec_layers` bidirectional
/// recurrent layers, one fully connected layer and a two-way softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_conv_filters: usize,
    pub kernel_time: usize,
    pub kernel_freq: usize,
    pub stride_time: usize,
    pub stride_freq: usize,
    pub n_rec_layers: usize,
    /// Hidden units per direction.
    pub rec_hidden: usize,
    pub cell_kind: CellKind,
    pub fc_units: usize,
    pub rec_candidate_activation: Activation,
    pub input_mels: usize,
    pub input_frames: usize,
}

impl Default for ModelConfig {
    /// The 229k-parameter GRU configuration.
    fn default() -> Self {
        Self {
            n_conv_filters: 32,
            kernel_time: 20,
            kernel_freq: 5,
            stride_time: 8,
            stride_freq: 2,
            n_rec_layers: 2,
            rec_hidden: 32,
            cell_kind: CellKind::Gru,
            fc_units: 64,
            rec_candidate_activation: Activation::Relu,
            input_mels: 40,
            input_frames: 151,
        }
    }
}

/// Leading padding and output length of a "same" padded strided axis.
pub(crate) fn same_padding(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(len);
    (total / 2, out)
}

impl ModelConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_conv_filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        n_rec_layers: usize,
        rec_hidden: usize,
        cell_kind: CellKind,
        fc_units: usize,
    ) -> Self {
        Self {
            n_conv_filters,
            kernel_time: kernel.0,
            kernel_freq: kernel.1,
            stride_time: stride.0,
            stride_freq: stride.1,
            n_rec_layers,
            rec_hidden,
            cell_kind,
            fc_units,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_conv_filters", self.n_conv_filters),
            ("kernel_time", self.kernel_time),
            ("kernel_freq", self.kernel_freq),
            ("stride_time", self.stride_time),
            ("stride_freq", self.stride_freq),
            ("n_rec_layers", self.n_rec_layers),
            ("rec_hidden", self.rec_hidden),
            ("fc_units", self.fc_units),
            ("input_mels", self.input_mels),
            ("input_frames", self.input_frames),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(KwsError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// `(time_out, freq_out)` of the "same" padded strided convolution.
    pub fn conv_output_shape(&self) -> (usize, usize) {
        (
            self.input_frames.div_ceil(self.stride_time),
            self.input_mels.div_ceil(self.stride_freq),
        )
    }

    /// Features per time step after flattening the convolution output.
    pub fn conv_features(&self) -> usize {
        self.n_conv_filters * self.conv_output_shape().1
    }

    /// Input width of recurrent layer `layer` (0-based).
    pub fn rec_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.conv_features()
        } else {
            2 * self.rec_hidden
        }
    }

    /// Width of the time-flattened recurrent output fed to the FC layer.
    pub fn fc_input_dim(&self) -> usize {
        self.conv_output_shape().0 * 2 * self.rec_hidden
    }
}

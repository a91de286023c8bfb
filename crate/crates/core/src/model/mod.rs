//! Convolutional recurrent network: strided 2-D convolution over the PCEN
//! spectrogram, stacked bidirectional GRU/LSTM layers, one fully connected
//! layer over the time-flattened recurrent output and a two-class softmax.

mod checkpoint;
mod config;
mod forward;
mod profile;
mod weights;

pub use checkpoint::{load_checkpoint, model_forward, save_checkpoint, Checkpoint};
pub use config::{Activation, CellKind, ModelConfig};
pub use forward::{class_posteriors, conv_forward, recurrent_forward, score};
pub use profile::{
    flops_estimate, param_count, reference_sweep, write_sweep_csv, FlopsEstimate, ReferenceRow,
    SweepRow, KNOWN_OUTLIERS_K, RECONCILE_TOLERANCE, REFERENCE_ROWS,
};
pub use weights::{
    tensor_specs, DirectionWeights, GradSet, LayerWeights, Param, TensorSpec, Weights,
};

pub(crate) use config::same_padding;
pub(crate) use forward::{forward_trace, DirTrace, Trace};

//! Small-footprint keyword spotting with a convolutional recurrent network.
//!
//! The crate covers the whole pipeline: PCEN mel features ([`frontend`]), the
//! CRNN and its footprint accounting ([`model`]), cross-entropy training with
//! Adam and hard negative mining ([`train`]), keyword alignment from
//! character posteriors ([`align`]), data augmentation ([`augment`]) and
//! streaming FRR / false-alarm evaluation ([`streameval`]).

// Negated float comparisons are how validation rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod codec;
pub mod error;

pub mod align;
pub mod augment;
pub mod frontend;
pub mod model;
pub mod streameval;
pub mod synth;
pub mod train;

pub use error::{KwsError, Result};

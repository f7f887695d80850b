//! Atlas-guided dual-path attention U-Net for white-matter-hyperintensity
//! segmentation of FLAIR slices, with the data pipeline, training loop and
//! lesion-wise evaluation around it.
//!
//! Numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! name the two concrete instantiations.

// Validation uses `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod params;
pub mod phantom;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod volume;

pub use error::{Error, ErrorCategory, Result};
pub use graph::{Gradients, NormMode, Tape, Var};
pub use model::{Checkpoint, ModelSpec, Network, Variant};
pub use params::{ParamId, ParameterSet};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use volume::{CaseRecord, SliceBatch, Volume3D, VolumeKind};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Network32 = Network<f32>;
pub type Network64 = Network<f64>;

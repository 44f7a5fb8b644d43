// `!(x > 0.0)` is used on purpose in validation so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod graph;
pub mod hands;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod stage1;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Number of annotated joints per hand.
pub const JOINT_COUNT: usize = 21;

/// `(x, y)` per joint; pixel or heatmap-cell units depending on context.
pub type Joints = [[f64; 2]; JOINT_COUNT];

/// `true` marks a joint annotated as occluded, i.e. at exactly `(0, 0)`.
pub type OcclusionMask = [bool; JOINT_COUNT];

/// Three-channel image with values in `[0, 1]`.
pub type Image = tensor::FeatureVolume<f32>;

/// Single-precision parameters, as used for training and checkpoints.
pub type ModelParamsF32 = model::ModelParams<f32>;
/// Double-precision parameters, as used for gradient checking.
pub type ModelParamsF64 = model::ModelParams<f64>;
/// Single-precision feature volume.
pub type FeatureVolumeF32 = tensor::FeatureVolume<f32>;
/// Double-precision feature volume.
pub type FeatureVolumeF64 = tensor::FeatureVolume<f64>;
/// Single-precision heatmap stack.
pub type HeatmapStackF32 = tensor::HeatmapStack<f32>;
/// Double-precision heatmap stack.
pub type HeatmapStackF64 = tensor::HeatmapStack<f64>;

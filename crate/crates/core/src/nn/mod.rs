//! Differentiable building blocks: convolution, resampling, attention, normalization.

pub mod conv;
pub mod ops;
pub mod params;
pub mod tape;

pub use ops::Activation;
pub use params::{ParamId, ParamStore, ParamTensor};
pub use tape::{NodeId, Tape};

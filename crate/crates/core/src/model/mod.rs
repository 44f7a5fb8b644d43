//! The two-stage network: shallow features followed by cascaded fusion modules.

pub mod config;
pub mod network;
pub mod params;

pub use config::ModelConfig;
pub use network::{
    branch_forward, channel_attention, decode_joints, forward_trace, fuse_transpose, heatmap_head, model_forward,
    msff_forward, sshfr_forward, transpose_permutation, ForwardTrace, StageNodes, Supervision,
};
pub use params::{init_model, layer_table, LayerSpec, ModelParams};

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::JOINT_COUNT;

/// Number of convolution layers in the shallow feature extractor.
pub const SSHFR_LAYERS: usize = 10;

/// Kernel size of each shallow feature layer.
pub const SSHFR_KERNELS: [usize; SSHFR_LAYERS] = [5, 5, 5, 5, 5, 3, 3, 3, 3, 3];

/// Stride of each shallow feature layer; the product is 4.
pub const SSHFR_STRIDES: [usize; SSHFR_LAYERS] = [2, 1, 2, 1, 1, 1, 1, 1, 1, 1];

/// Output width of each shallow feature layer at full scale.
pub const SSHFR_CHANNELS: [usize; SSHFR_LAYERS] = [32, 64, 64, 128, 128, 128, 256, 256, 256, 256];

/// Number of parallel resolution branches inside one fusion module.
pub const BRANCHES: usize = 3;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of cascaded fusion modules (N).
    pub num_msff: usize,
    /// Convolution blocks per feature-extraction group (p).
    pub blocks_per_fec: usize,
    /// Residual units per convolution block (q).
    pub units_per_block: usize,
    /// Channels produced by each branch (C); fused volumes carry 3C, then 6C.
    pub branch_channels: usize,
    pub crop_size: usize,
    pub heatmap_size: usize,
    pub joint_count: usize,
    pub activation: Activation,
    /// Output width of each of the ten shallow feature layers.
    pub sshfr_channels: Vec<usize>,
    pub use_sshfr: bool,
    pub use_transpose: bool,
    pub use_attention: bool,
    pub use_losswise: bool,
    pub use_aomr: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_msff: 3,
            blocks_per_fec: 1,
            units_per_block: 4,
            branch_channels: 96,
            crop_size: 256,
            heatmap_size: 64,
            joint_count: JOINT_COUNT,
            activation: Activation::Rectifier,
            sshfr_channels: SSHFR_CHANNELS.to_vec(),
            use_sshfr: true,
            use_transpose: true,
            use_attention: true,
            use_losswise: true,
            use_aomr: true,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration: 64 px crops, 16-cell heatmaps, C = 6, two
    /// fusion modules with one block of one residual unit, narrow shallow layers.
    pub fn micro() -> Self {
        Self {
            num_msff: 2,
            blocks_per_fec: 1,
            units_per_block: 1,
            branch_channels: 6,
            crop_size: 64,
            heatmap_size: 16,
            sshfr_channels: vec![8, 16, 16, 16, 16, 16, 16, 16, 16, 16],
            ..Self::default()
        }
    }

    /// Channel count fed into every fusion module.
    pub fn feature_channels(&self) -> usize {
        *self.sshfr_channels.last().unwrap_or(&0)
    }

    /// Channels after branch concatenation (c_i = 3C).
    pub fn fused_channels(&self) -> usize {
        BRANCHES * self.branch_channels
    }

    /// Channels after transpose-concatenation (6C).
    pub fn fusion_output_channels(&self) -> usize {
        2 * self.fused_channels()
    }

    /// Heatmap cell size in crop pixels.
    pub fn stride(&self) -> usize {
        self.crop_size / self.heatmap_size.max(1)
    }

    /// Spatial size of branch `j` (1-based).
    pub fn branch_size(&self, branch: usize) -> usize {
        self.heatmap_size >> (branch - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_msff < 1 {
            return Err(Error::config("num_msff", "must be at least 1"));
        }
        if !(1..=4).contains(&self.blocks_per_fec) {
            return Err(Error::config("blocks_per_fec", "must lie in [1, 4]"));
        }
        if !(1..=4).contains(&self.units_per_block) {
            return Err(Error::config("units_per_block", "must lie in [1, 4]"));
        }
        if self.branch_channels < 1 {
            return Err(Error::config("branch_channels", "must be at least 1"));
        }
        if self.joint_count != JOINT_COUNT {
            return Err(Error::config(
                "joint_count",
                format!("only {JOINT_COUNT}-joint hands are supported"),
            ));
        }
        if self.heatmap_size < 4 || !self.heatmap_size.is_multiple_of(4) {
            return Err(Error::config("heatmap_size", "must be a positive multiple of 4"));
        }
        if self.crop_size != 4 * self.heatmap_size {
            return Err(Error::config("crop_size", "must equal 4 x heatmap_size"));
        }
        if self.sshfr_channels.len() != SSHFR_LAYERS || self.sshfr_channels.contains(&0) {
            return Err(Error::config(
                "sshfr_channels",
                format!("expected {SSHFR_LAYERS} positive layer widths"),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::micro().validate().unwrap();
        assert_eq!(ModelConfig::default().feature_channels(), 256);
        assert_eq!(ModelConfig::default().fused_channels(), 288);
        assert_eq!(ModelConfig::default().fusion_output_channels(), 576);
        assert_eq!(SSHFR_STRIDES.iter().product::<usize>(), 4);
    }

    #[test]
    fn validation_names_the_field() {
        let cases: Vec<(&str, ModelConfig)> = vec![
            (
                "num_msff",
                ModelConfig {
                    num_msff: 0,
                    ..ModelConfig::micro()
                },
            ),
            (
                "blocks_per_fec",
                ModelConfig {
                    blocks_per_fec: 5,
                    ..ModelConfig::micro()
                },
            ),
            (
                "units_per_block",
                ModelConfig {
                    units_per_block: 0,
                    ..ModelConfig::micro()
                },
            ),
            (
                "crop_size",
                ModelConfig {
                    crop_size: 128,
                    ..ModelConfig::default()
                },
            ),
            (
                "joint_count",
                ModelConfig {
                    joint_count: 19,
                    ..ModelConfig::micro()
                },
            ),
            (
                "heatmap_size",
                ModelConfig {
                    heatmap_size: 18,
                    crop_size: 72,
                    ..ModelConfig::micro()
                },
            ),
            (
                "sshfr_channels",
                ModelConfig {
                    sshfr_channels: vec![8; 9],
                    ..ModelConfig::micro()
                },
            ),
        ];
        for (field, cfg) in cases {
            match cfg.validate() {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = ModelConfig::micro();
        let s = serde_json::to_string(&c).unwrap();
        let back: ModelConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
        let partial: ModelConfig = serde_json::from_str(r#"{"num_msff": 4}"#).unwrap();
        assert_eq!(partial.num_msff, 4);
        assert_eq!(partial.branch_channels, 96);
    }
}

//! Layer table and parameter initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::config::{ModelConfig, SSHFR_KERNELS};
use crate::nn::ParamStore;
use crate::scalar::Scalar;

/// Learnable weights of the whole network.
pub type ModelParams<S> = ParamStore<S>;

/// Kernel size of the single projection that replaces the shallow extractor
/// when it is ablated; applied with stride 4 and no padding.
pub const STEM_KERNEL: usize = 4;

/// Scale of the inter-module projections relative to He initialization.
pub const PROJ_INIT_GAIN: f64 = 0.1;

/// Heatmap heads start small so early training does not have to first
/// suppress large random responses.
pub const HEAD_INIT_GAIN: f64 = 0.1;

/// One convolution layer of the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl LayerSpec {
    fn new(name: String, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            name,
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }
}

pub(crate) fn unit_name(stage: usize, branch: usize, block: usize, unit: usize) -> String {
    format!("msff{stage}.branch{branch}.cb{block}.ru{unit}")
}

/// Every convolution of the network in forward order.
pub fn layer_table(config: &ModelConfig) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let c_in = config.feature_channels();
    let c = config.branch_channels;
    if config.use_sshfr {
        let mut prev = 3;
        for (i, (&width, &kernel)) in config.sshfr_channels.iter().zip(&SSHFR_KERNELS).enumerate() {
            layers.push(LayerSpec::new(format!("sshfr.conv{}", i + 1), prev, width, kernel));
            prev = width;
        }
    } else {
        layers.push(LayerSpec::new("stem".into(), 3, c_in, STEM_KERNEL));
    }
    for stage in 1..=config.num_msff {
        for branch in 1..=3 {
            let mut width = c_in;
            for d in 1..branch {
                layers.push(LayerSpec::new(
                    format!("msff{stage}.branch{branch}.dsc{d}"),
                    width,
                    c,
                    3,
                ));
                width = c;
            }
            for block in 1..=config.blocks_per_fec {
                for unit in 1..=config.units_per_block {
                    let name = unit_name(stage, branch, block, unit);
                    layers.push(LayerSpec::new(format!("{name}.conv1"), width, c, 3));
                    layers.push(LayerSpec::new(format!("{name}.conv2"), c, c, 3));
                    if width != c {
                        layers.push(LayerSpec::new(format!("{name}.shortcut"), width, c, 1));
                    }
                    width = c;
                }
            }
        }
        let fused = config.fusion_output_channels();
        layers.push(LayerSpec::new(
            format!("msff{stage}.head"),
            fused,
            config.joint_count,
            1,
        ));
        layers.push(LayerSpec::new(
            format!("msff{stage}.proj"),
            fused + config.joint_count,
            c_in,
            1,
        ));
    }
    layers
}

/// Deterministic He-normal initialization; biases start at zero.
pub fn init_model<S: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<S>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    for layer in layer_table(config) {
        let fan_in = (layer.in_channels * layer.kernel * layer.kernel) as f64;
        let gain = if layer.name.ends_with(".proj") {
            PROJ_INIT_GAIN
        } else if layer.name.ends_with(".head") {
            HEAD_INIT_GAIN
        } else {
            1.0
        };
        let normal = Normal::new(0.0, gain * (2.0 / fan_in).sqrt()).expect("finite std");
        let weights = (0..layer.weight_count())
            .map(|_| S::of(normal.sample(&mut rng)))
            .collect();
        params.insert(
            format!("{}.weight", layer.name),
            vec![layer.out_channels, layer.in_channels, layer.kernel, layer.kernel],
            weights,
        );
        params.insert(
            format!("{}.bias", layer.name),
            vec![layer.out_channels],
            vec![S::zero(); layer.out_channels],
        );
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = ModelConfig::micro();
        let a = init_model::<f32>(&cfg, 11).unwrap();
        let b = init_model::<f32>(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = init_model::<f32>(&cfg, 12).unwrap();
        assert_ne!(a, c);
        for (name, t) in a.iter() {
            if name.ends_with(".bias") {
                assert!(t.data.iter().all(|&v| v == 0.0), "{name}");
            }
        }
        assert!(a.all_finite());
    }

    #[test]
    fn micro_parameter_count_matches_hand_tally() {
        // C=6, N=1, p=q=1, shallow widths 8,16,...,16; every layer listed by hand:
        let sshfr = (8 * 3 * 25 + 8) + (16 * 8 * 25 + 16) + 3 * (16 * 16 * 25 + 16) + 5 * (16 * 16 * 9 + 16);
        let ru_first = (6 * 16 * 9 + 6) + (6 * 6 * 9 + 6) + (6 * 16 + 6); // conv1, conv2, shortcut
        let ru_inner = 2 * (6 * 6 * 9 + 6);
        let dsc_first = 6 * 16 * 9 + 6;
        let dsc_next = 6 * 6 * 9 + 6;
        let branch1 = ru_first;
        let branch2 = dsc_first + ru_inner;
        let branch3 = dsc_first + dsc_next + ru_inner;
        let head = 21 * 36 + 21;
        let proj = 16 * (36 + 21) + 16;
        let expected = sshfr + branch1 + branch2 + branch3 + head + proj;
        let cfg = ModelConfig {
            num_msff: 1,
            ..ModelConfig::micro()
        };
        assert_eq!(init_model::<f64>(&cfg, 0).unwrap().scalar_count(), expected);
    }

    #[test]
    fn attention_toggle_keeps_parameter_shapes() {
        let full = ModelConfig::micro();
        let del_at = ModelConfig {
            use_attention: false,
            ..full.clone()
        };
        let del_tp = ModelConfig {
            use_transpose: false,
            ..full.clone()
        };
        let a = init_model::<f32>(&full, 3).unwrap();
        assert!(a.same_layout(&init_model::<f32>(&del_at, 3).unwrap()));
        assert!(a.same_layout(&init_model::<f32>(&del_tp, 3).unwrap()));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ModelConfig {
            blocks_per_fec: 0,
            ..ModelConfig::micro()
        };
        assert!(init_model::<f32>(&cfg, 0).is_err());
    }
}

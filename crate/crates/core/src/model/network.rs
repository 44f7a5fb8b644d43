//! Forward pass: shallow features, cascaded fusion modules, heatmap decoding.
//!
//! Every function here builds on a [`Tape`], so the same code path serves
//! inference and gradient computation.

use crate::error::{ensure_contract, Result};
use crate::graph::{build_hand_skeleton, reweight_factors, SkeletonGraph};
use crate::model::config::{ModelConfig, BRANCHES, SSHFR_KERNELS, SSHFR_STRIDES};
use crate::model::params::{unit_name, ModelParams};
use crate::nn::{NodeId, ParamStore, Tape};
use crate::scalar::Scalar;
use crate::tensor::{FeatureVolume, HeatmapStack};
use crate::{Joints, OcclusionMask, JOINT_COUNT};

/// Ground truth available during training, in heatmap cell units.
#[derive(Debug, Clone, Copy)]
pub struct Supervision<'a> {
    pub gt: &'a Joints,
    pub occluded: &'a OcclusionMask,
    /// Reweighting factors to use instead of recomputing them from the
    /// current prediction, one entry per stage. Lets a caller hold the
    /// argmax-dependent factors fixed while perturbing parameters.
    pub frozen_factors: Option<&'a [[f64; JOINT_COUNT]]>,
}

impl<'a> Supervision<'a> {
    pub fn new(gt: &'a Joints, occluded: &'a OcclusionMask) -> Self {
        Self {
            gt,
            occluded,
            frozen_factors: None,
        }
    }
}

/// Nodes produced by one fusion module.
#[derive(Debug, Clone)]
pub struct StageNodes {
    pub branches: [NodeId; BRANCHES],
    pub fused: NodeId,
    pub attended: NodeId,
    pub head: NodeId,
    pub heatmaps: NodeId,
    pub next_input: NodeId,
    /// Factors applied to the heatmaps forwarded to the next stage, if any.
    pub reweight: Option<[f64; JOINT_COUNT]>,
}

/// A recorded forward pass.
pub struct ForwardTrace<'p, S: Scalar> {
    pub tape: Tape<'p, S>,
    pub features: NodeId,
    pub stages: Vec<StageNodes>,
}

impl<S: Scalar> ForwardTrace<'_, S> {
    pub fn heatmaps(&self) -> Vec<HeatmapStack<S>> {
        self.stages
            .iter()
            .map(|s| HeatmapStack::new(self.tape.value(s.heatmaps).clone()).expect("stage heatmaps have K maps"))
            .collect()
    }
}

fn check_crop<S: Scalar>(crop: &FeatureVolume<S>, config: &ModelConfig) -> Result<()> {
    ensure_contract!(
        crop.shape() == (3, config.crop_size, config.crop_size),
        "crop must be 3x{0}x{0}, got {1}x{2}x{3}",
        config.crop_size,
        crop.channels(),
        crop.height(),
        crop.width()
    );
    Ok(())
}

fn check_features<S: Scalar>(x: &FeatureVolume<S>, config: &ModelConfig) -> Result<()> {
    ensure_contract!(
        x.shape() == (config.feature_channels(), config.heatmap_size, config.heatmap_size),
        "fusion input must be {0}x{1}x{1}, got {2:?}",
        config.feature_channels(),
        config.heatmap_size,
        x.shape()
    );
    Ok(())
}

fn sshfr_node<S: Scalar>(tape: &mut Tape<'_, S>, input: NodeId, config: &ModelConfig) -> Result<NodeId> {
    let mut x = input;
    for i in 0..SSHFR_KERNELS.len() {
        let conv = tape.conv(
            x,
            &format!("sshfr.conv{}", i + 1),
            SSHFR_STRIDES[i],
            SSHFR_KERNELS[i] / 2,
        )?;
        x = tape.act(conv, config.activation);
    }
    Ok(x)
}

fn stem_node<S: Scalar>(tape: &mut Tape<'_, S>, input: NodeId, config: &ModelConfig) -> Result<NodeId> {
    let conv = tape.conv(input, "stem", 4, 0)?;
    Ok(tape.act(conv, config.activation))
}

fn residual_unit<S: Scalar>(tape: &mut Tape<'_, S>, x: NodeId, name: &str, config: &ModelConfig) -> Result<NodeId> {
    let h = tape.conv(x, &format!("{name}.conv1"), 1, 1)?;
    let h = tape.act(h, config.activation);
    let h = tape.conv(h, &format!("{name}.conv2"), 1, 1)?;
    let shortcut = format!("{name}.shortcut");
    let skip = if tape.params().id(&format!("{shortcut}.weight")).is_some() {
        tape.conv(x, &shortcut, 1, 0)?
    } else {
        x
    };
    tape.add(h, skip)
}

fn branch_node<S: Scalar>(
    tape: &mut Tape<'_, S>,
    input: NodeId,
    stage: usize,
    branch: usize,
    config: &ModelConfig,
) -> Result<NodeId> {
    ensure_contract!((1..=BRANCHES).contains(&branch), "branch index {branch} outside 1..=3");
    let mut x = input;
    for d in 1..branch {
        let conv = tape.conv(x, &format!("msff{stage}.branch{branch}.dsc{d}"), 2, 1)?;
        x = tape.act(conv, config.activation);
    }
    for block in 1..=config.blocks_per_fec {
        for unit in 1..=config.units_per_block {
            x = residual_unit(tape, x, &unit_name(stage, branch, block, unit), config)?;
        }
    }
    Ok(x)
}

/// Channel order of the transposed half: `(m=3, n=C)` reshaped to `(n, m)`.
pub fn transpose_permutation(branch_channels: usize) -> Vec<usize> {
    let mut perm = Vec::with_capacity(BRANCHES * branch_channels);
    for n in 0..branch_channels {
        for m in 0..BRANCHES {
            perm.push(m * branch_channels + n);
        }
    }
    perm
}

fn fuse_node<S: Scalar>(tape: &mut Tape<'_, S>, branches: [NodeId; BRANCHES], config: &ModelConfig) -> Result<NodeId> {
    let (c, h, w) = tape.value(branches[0]).shape();
    for &b in &branches[1..] {
        ensure_contract!(
            tape.value(b).channels() == c,
            "branch channel counts differ: {c} vs {}",
            tape.value(b).channels()
        );
    }
    let up2 = tape.resize(branches[1], h, w);
    let up3 = tape.resize(branches[2], h, w);
    let psi = tape.concat(&[branches[0], up2, up3])?;
    if config.use_transpose {
        let t = tape.permute_channels(psi, transpose_permutation(c))?;
        tape.concat(&[t, psi])
    } else {
        tape.concat(&[psi, psi])
    }
}

/// Location of the maximum of every map; ties go to the smallest row-major index.
pub fn decode_joints<S: Scalar>(heatmaps: &FeatureVolume<S>) -> Joints {
    let mut out = [[0.0; 2]; JOINT_COUNT];
    let w = heatmaps.width();
    for (k, o) in out.iter_mut().enumerate().take(heatmaps.channels().min(JOINT_COUNT)) {
        let plane = heatmaps.channel(k);
        let mut best = 0;
        for (i, &v) in plane.iter().enumerate() {
            if v > plane[best] {
                best = i;
            }
        }
        *o = [(best % w) as f64, (best / w) as f64];
    }
    out
}

fn msff_node<S: Scalar>(
    tape: &mut Tape<'_, S>,
    input: NodeId,
    stage: usize,
    config: &ModelConfig,
    graph: &SkeletonGraph,
    supervision: Option<&Supervision<'_>>,
) -> Result<StageNodes> {
    let branches = [
        branch_node(tape, input, stage, 1, config)?,
        branch_node(tape, input, stage, 2, config)?,
        branch_node(tape, input, stage, 3, config)?,
    ];
    let fused = fuse_node(tape, branches, config)?;
    let attended = if config.use_attention {
        tape.attention(fused)
    } else {
        fused
    };
    let head = tape.conv(attended, &format!("msff{stage}.head"), 1, 0)?;
    let mut heatmaps = tape.minmax(head);
    if config.use_aomr {
        heatmaps = tape.mix_channels(heatmaps, graph.reinforcement_matrix())?;
    }
    let mut forwarded = heatmaps;
    let mut reweight = None;
    if let (true, Some(sup)) = (config.use_aomr, supervision) {
        let factors = match sup.frozen_factors {
            Some(frozen) => *frozen
                .get(stage - 1)
                .ok_or_else(|| crate::Error::Contract(format!("no frozen factors for stage {stage}")))?,
            None => reweight_factors(&decode_joints(tape.value(heatmaps)), sup.gt, sup.occluded),
        };
        forwarded = tape.scale_channels(heatmaps, factors.iter().map(|&f| S::of(f)).collect())?;
        reweight = Some(factors);
    }
    let carried = tape.rms_normalize(attended);
    let cat = tape.concat(&[carried, forwarded])?;
    let proj = tape.conv(cat, &format!("msff{stage}.proj"), 1, 0)?;
    let next_input = tape.add(input, proj)?;
    Ok(StageNodes {
        branches,
        fused,
        attended,
        head,
        heatmaps,
        next_input,
        reweight,
    })
}

/// Records the full network on a tape.
pub fn forward_trace<'p, S: Scalar>(
    crop: &FeatureVolume<S>,
    params: &'p ModelParams<S>,
    config: &ModelConfig,
    supervision: Option<&Supervision<'_>>,
) -> Result<ForwardTrace<'p, S>> {
    config.validate()?;
    check_crop(crop, config)?;
    let graph = build_hand_skeleton();
    let mut tape = Tape::new(params);
    let input = tape.input(crop.clone());
    let features = if config.use_sshfr {
        sshfr_node(&mut tape, input, config)?
    } else {
        stem_node(&mut tape, input, config)?
    };
    check_features(tape.value(features), config)?;
    let mut stages = Vec::with_capacity(config.num_msff);
    let mut x = features;
    for stage in 1..=config.num_msff {
        let nodes = msff_node(&mut tape, x, stage, config, &graph, supervision)?;
        x = nodes.next_input;
        stages.push(nodes);
    }
    Ok(ForwardTrace { tape, features, stages })
}

/// Heatmaps of every fusion module for one crop.
pub fn model_forward<S: Scalar>(
    crop: &FeatureVolume<S>,
    params: &ModelParams<S>,
    config: &ModelConfig,
    supervision: Option<&Supervision<'_>>,
) -> Result<Vec<HeatmapStack<S>>> {
    Ok(forward_trace(crop, params, config, supervision)?.heatmaps())
}

/// Ten-layer shallow feature extractor: `3 x crop x crop -> C_in x crop/4 x crop/4`.
pub fn sshfr_forward<S: Scalar>(
    crop: &FeatureVolume<S>,
    params: &ModelParams<S>,
    config: &ModelConfig,
) -> Result<FeatureVolume<S>> {
    check_crop(crop, config)?;
    let mut tape = Tape::new(params);
    let input = tape.input(crop.clone());
    let out = sshfr_node(&mut tape, input, config)?;
    Ok(tape.value(out).clone())
}

/// One resolution branch (`branch` in 1..=3) of fusion module `stage`.
pub fn branch_forward<S: Scalar>(
    input: &FeatureVolume<S>,
    stage: usize,
    branch: usize,
    params: &ModelParams<S>,
    config: &ModelConfig,
) -> Result<FeatureVolume<S>> {
    ensure_contract!((1..=BRANCHES).contains(&branch), "branch index {branch} outside 1..=3");
    let mut tape = Tape::new(params);
    let x = tape.input(input.clone());
    let out = branch_node(&mut tape, x, stage, branch, config)?;
    Ok(tape.value(out).clone())
}

/// Upsample branches 2 and 3, concatenate, and append the channel-transposed copy.
pub fn fuse_transpose<S: Scalar>(
    psi1: &FeatureVolume<S>,
    psi2: &FeatureVolume<S>,
    psi3: &FeatureVolume<S>,
    config: &ModelConfig,
) -> Result<FeatureVolume<S>> {
    let empty = ParamStore::new();
    let mut tape = Tape::new(&empty);
    let ids = [
        tape.input(psi1.clone()),
        tape.input(psi2.clone()),
        tape.input(psi3.clone()),
    ];
    let out = fuse_node(&mut tape, ids, config)?;
    Ok(tape.value(out).clone())
}

/// Spatial max-plus-mean channel weighting; identity when attention is ablated.
pub fn channel_attention<S: Scalar>(x: &FeatureVolume<S>, config: &ModelConfig) -> FeatureVolume<S> {
    if config.use_attention {
        crate::nn::ops::channel_attention_forward(x).0
    } else {
        x.clone()
    }
}

/// 1x1 projection to one map per joint followed by per-map min-max normalization.
pub fn heatmap_head<S: Scalar>(x: &FeatureVolume<S>, stage: usize, params: &ModelParams<S>) -> Result<HeatmapStack<S>> {
    let mut tape = Tape::new(params);
    let input = tape.input(x.clone());
    let head = tape.conv(input, &format!("msff{stage}.head"), 1, 0)?;
    let out = tape.minmax(head);
    HeatmapStack::new(tape.value(out).clone())
}

/// One fusion module: returns the next module's input and this module's heatmaps.
pub fn msff_forward<S: Scalar>(
    input: &FeatureVolume<S>,
    stage: usize,
    params: &ModelParams<S>,
    config: &ModelConfig,
    supervision: Option<&Supervision<'_>>,
) -> Result<(FeatureVolume<S>, HeatmapStack<S>)> {
    check_features(input, config)?;
    ensure_contract!(
        (1..=config.num_msff).contains(&stage),
        "stage {stage} outside 1..={}",
        config.num_msff
    );
    let graph = build_hand_skeleton();
    let mut tape = Tape::new(params);
    let x = tape.input(input.clone());
    let nodes = msff_node(&mut tape, x, stage, config, &graph, supervision)?;
    Ok((
        tape.value(nodes.next_input).clone(),
        HeatmapStack::new(tape.value(nodes.heatmaps).clone())?,
    ))
}

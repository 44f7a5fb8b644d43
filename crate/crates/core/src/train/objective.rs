//! Loss of one hand example and its parameter gradient.

use crate::error::Result;
use crate::model::{decode_joints, forward_trace, ModelConfig, ModelParams, Supervision};
use crate::scalar::Scalar;
use crate::tensor::{FeatureVolume, HeatmapStack};
use crate::train::loss::{heatmap_mse, heatmap_mse_grad, mean_joint_error, msff_weights, total_loss, StageWeighting};
use crate::{Joints, OcclusionMask, JOINT_COUNT};

/// Everything the objective depends on through an argmax. Holding these
/// fixed makes the loss a smooth function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenTerms {
    pub weights: Vec<f64>,
    pub factors: Vec<[f64; JOINT_COUNT]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleLoss {
    pub stage_losses: Vec<f64>,
    pub weights: Vec<f64>,
    pub total: f64,
    /// Mean visible-joint error of each stage, in heatmap cells.
    pub stage_errors: Vec<f64>,
    /// Reweighting factors applied after each stage (empty when inactive).
    pub factors: Vec<[f64; JOINT_COUNT]>,
}

impl SampleLoss {
    pub fn frozen(&self) -> FrozenTerms {
        FrozenTerms {
            weights: self.weights.clone(),
            factors: self.factors.clone(),
        }
    }
}

/// Ground truth and targets for one hand, in heatmap cells.
#[derive(Debug, Clone, Copy)]
pub struct Labels<'a, S> {
    pub target: &'a HeatmapStack<S>,
    pub gt: &'a Joints,
    pub occluded: &'a OcclusionMask,
}

fn evaluate<S: Scalar>(
    params: &ModelParams<S>,
    crop: &FeatureVolume<S>,
    labels: Labels<'_, S>,
    config: &ModelConfig,
    weighting: StageWeighting,
    frozen: Option<&FrozenTerms>,
    with_grad: bool,
) -> Result<(SampleLoss, Option<ModelParams<S>>)> {
    let supervision = Supervision {
        gt: labels.gt,
        occluded: labels.occluded,
        frozen_factors: frozen.map(|f| f.factors.as_slice()),
    };
    let trace = forward_trace(crop, params, config, Some(&supervision))?;
    let heatmaps = trace.heatmaps();
    let preds: Vec<Joints> = heatmaps.iter().map(|h| decode_joints(h.volume())).collect();
    let stage_errors = preds
        .iter()
        .map(|p| mean_joint_error(p, labels.gt, labels.occluded))
        .collect();
    let weights = match frozen {
        Some(f) => f.weights.clone(),
        None => msff_weights(&preds, labels.gt, labels.occluded, weighting),
    };
    let stage_losses = trace
        .stages
        .iter()
        .map(|s| {
            heatmap_mse(
                &HeatmapStack::new(trace.tape.value(s.head).clone())?,
                labels.target,
                labels.occluded,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let total = total_loss(&stage_losses, &weights)?;
    let grads = with_grad.then(|| {
        let seeds = trace
            .stages
            .iter()
            .zip(&weights)
            .map(|(stage, &w)| {
                let pred = trace.tape.value(stage.head);
                (
                    stage.head,
                    heatmap_mse_grad(pred, labels.target.volume(), labels.occluded, w),
                )
            })
            .collect();
        trace.tape.backward(seeds)
    });
    let factors = trace.stages.iter().filter_map(|s| s.reweight).collect();
    Ok((
        SampleLoss {
            stage_losses,
            weights,
            total,
            stage_errors,
            factors,
        },
        grads,
    ))
}

/// Weighted multi-stage loss of one example.
pub fn sample_loss<S: Scalar>(
    params: &ModelParams<S>,
    crop: &FeatureVolume<S>,
    labels: Labels<'_, S>,
    config: &ModelConfig,
    weighting: StageWeighting,
    frozen: Option<&FrozenTerms>,
) -> Result<SampleLoss> {
    Ok(evaluate(params, crop, labels, config, weighting, frozen, false)?.0)
}

/// [`sample_loss`] plus its gradient, with stage weights and reweighting
/// factors treated as constants.
pub fn sample_loss_and_grad<S: Scalar>(
    params: &ModelParams<S>,
    crop: &FeatureVolume<S>,
    labels: Labels<'_, S>,
    config: &ModelConfig,
    weighting: StageWeighting,
    frozen: Option<&FrozenTerms>,
) -> Result<(SampleLoss, ModelParams<S>)> {
    let (loss, grads) = evaluate(params, crop, labels, config, weighting, frozen, true)?;
    Ok((loss, grads.expect("gradient requested")))
}

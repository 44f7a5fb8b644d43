//! Accuracy metrics, full-pipeline evaluation, ablation sweeps and report output.

mod ablation;
mod metrics;
mod output;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hands::prepare_hands;
use crate::model::{decode_joints, model_forward, ModelConfig, ModelParams};
use crate::stage1::{crop_hand, joints_to_source, HandDetector, HandRegion, DEFAULT_MARGIN};
use crate::synth::{Sample, DEFAULT_SIGMA};
use crate::tensor::FeatureVolume;
use crate::train::Checkpoint;
use crate::{Image, Joints, OcclusionMask, JOINT_COUNT};

pub use ablation::{run_ablation, AblationEntry, AblationOptions, AblationReport, Variant};
pub use metrics::{
    default_taus, pck, pck_curve, per_joint_pck, spread, spread_accuracy_bins, AccuracyStats, JointOutcome, PckPoint,
    SpreadBin, SPREAD_EPSILON,
};
pub use output::{
    draw_overlay, plot_msff_sweep, plot_pck_curves, plot_spread_bins, write_ablation_csv, write_json, write_pck_csv,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Ascending PCK thresholds.
    pub taus: Vec<f64>,
    /// Threshold used for per-joint rates and spread correctness.
    pub reference_tau: f64,
    pub spread_bins: usize,
    /// Oracle localizer margin.
    pub margin: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            taus: default_taus(),
            reference_tau: 0.2,
            spread_bins: 5,
            margin: DEFAULT_MARGIN,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::config("taus", "needs at least one threshold"));
        }
        if self.taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || self.taus.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config("taus", "must be nonnegative and ascending"));
        }
        if !(self.reference_tau >= 0.0 && self.reference_tau.is_finite()) {
            return Err(Error::config("reference_tau", "must be nonnegative"));
        }
        if self.spread_bins < 2 {
            return Err(Error::config("spread_bins", "must be at least 2"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::config("margin", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub seconds: f64,
    pub hands_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pck_curve: Vec<PckPoint>,
    pub reference_tau: f64,
    /// One entry per joint type; `None` where the joint was never visible.
    pub per_joint_pck: Vec<Option<f64>>,
    /// Mean error of visible joints in source pixels.
    pub mean_error_px: f64,
    pub spread_bins: Vec<SpreadBin>,
    pub images: usize,
    pub hands: usize,
    pub visible_joints: usize,
    pub model: ModelConfig,
    pub checkpoint_step: Option<usize>,
    pub runtime: Option<RuntimeStats>,
}

impl EvalReport {
    /// PCK at the threshold closest to `tau`.
    pub fn pck_at(&self, tau: f64) -> Option<f64> {
        self.pck_curve
            .iter()
            .min_by(|a, b| (a.tau - tau).abs().total_cmp(&(b.tau - tau).abs()))
            .map(|p| p.pck)
    }

    /// Equality of everything except wall-clock statistics.
    pub fn same_results(&self, other: &Self) -> bool {
        Self {
            runtime: None,
            ..self.clone()
        } == Self {
            runtime: None,
            ..other.clone()
        }
    }
}

/// Per-hand result of the full pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPrediction {
    pub region: HandRegion,
    /// Predicted joints in source pixels.
    pub joints: Joints,
    /// Final-stage heatmaps.
    pub heatmaps: FeatureVolume<f32>,
}

fn renormalized(map: &[f32]) -> Vec<f32> {
    let (lo, hi) = map.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if hi > lo {
        map.iter().map(|&v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; map.len()]
    }
}

/// Localizes, crops and runs the network on each region `detector` returns.
pub fn predict(
    image: &Image,
    detector: &dyn HandDetector,
    params: &ModelParams<f32>,
    model: &ModelConfig,
) -> Result<Vec<HandPrediction>> {
    detector
        .detect(image)?
        .into_par_iter()
        .map(|region| {
            let crop = crop_hand(image, &region, model.crop_size)?;
            let stages = model_forward(&crop.pixels, params, model, None)?;
            let heatmaps = stages.last().expect("at least one stage").volume().clone();
            let cells = decode_joints(&heatmaps);
            Ok(HandPrediction {
                region,
                joints: joints_to_source(&cells, &crop.transform, model),
                heatmaps,
            })
        })
        .collect()
}

struct HandResult {
    pred: Joints,
    gt: Joints,
    occluded: OcclusionMask,
    normalizer: f64,
    spreads: [f64; JOINT_COUNT],
}

/// Oracle-localized evaluation of `params` on every annotated hand.
pub fn evaluate(
    samples: &[Sample],
    params: &ModelParams<f32>,
    model: &ModelConfig,
    options: &EvalOptions,
) -> Result<EvalReport> {
    options.validate()?;
    if samples.is_empty() {
        return Err(Error::Argument("nothing to evaluate".into()));
    }
    let start = Instant::now();
    // targets are not needed here; any positive sigma will do
    let hands = prepare_hands(samples, model, options.margin, DEFAULT_SIGMA)?;
    let results = hands
        .par_iter()
        .map(|ex| {
            let stages = model_forward(&ex.crop, params, model, None)?;
            let maps = stages.last().expect("at least one stage").volume();
            let cells = decode_joints(maps);
            let mut spreads = [0.0; JOINT_COUNT];
            for (k, s) in spreads.iter_mut().enumerate() {
                *s = spread(&renormalized(maps.channel(k)), maps.width(), maps.height(), cells[k])?;
            }
            Ok(HandResult {
                pred: joints_to_source(&cells, &ex.transform, model),
                gt: ex.gt_source,
                occluded: ex.occluded,
                normalizer: ex.normalizer,
                spreads,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<Joints> = results.iter().map(|r| r.pred).collect();
    let gts: Vec<Joints> = results.iter().map(|r| r.gt).collect();
    let masks: Vec<OcclusionMask> = results.iter().map(|r| r.occluded).collect();
    let norms: Vec<f64> = results.iter().map(|r| r.normalizer).collect();
    let curve = pck_curve(&preds, &gts, &masks, &options.taus, &norms)?;
    let per_joint = per_joint_pck(&preds, &gts, &masks, options.reference_tau, &norms)?;
    let mut outcomes = Vec::new();
    let mut error_sum = 0.0;
    for r in &results {
        for k in (0..JOINT_COUNT).filter(|&k| !r.occluded[k]) {
            let d = (r.pred[k][0] - r.gt[k][0]).hypot(r.pred[k][1] - r.gt[k][1]);
            error_sum += d;
            outcomes.push(JointOutcome {
                spread: r.spreads[k],
                correct: d / r.normalizer < options.reference_tau,
            });
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(EvalReport {
        pck_curve: curve,
        reference_tau: options.reference_tau,
        per_joint_pck: per_joint,
        mean_error_px: error_sum / outcomes.len() as f64,
        spread_bins: spread_accuracy_bins(&outcomes, options.spread_bins)?,
        images: samples.len(),
        hands: results.len(),
        visible_joints: outcomes.len(),
        model: model.clone(),
        checkpoint_step: None,
        runtime: Some(RuntimeStats {
            seconds,
            hands_per_second: results.len() as f64 / seconds.max(1e-9),
        }),
    })
}

/// [`evaluate`] for a saved checkpoint, refusing a mismatched model.
pub fn evaluate_checkpoint(
    samples: &[Sample],
    checkpoint: &Checkpoint,
    model: &ModelConfig,
    options: &EvalOptions,
) -> Result<EvalReport> {
    checkpoint.ensure_model(model)?;
    let mut report = evaluate(samples, &checkpoint.state.params, model, options)?;
    report.checkpoint_step = Some(checkpoint.state.step);
    Ok(report)
}

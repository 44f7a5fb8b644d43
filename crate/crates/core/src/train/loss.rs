//! Per-stage heatmap loss and the error-proportional stage weighting.

use crate::error::{ensure_contract, Result};
use crate::scalar::Scalar;
use crate::tensor::{FeatureVolume, HeatmapStack};
use crate::{Joints, OcclusionMask};

/// How per-stage losses are combined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageWeighting {
    /// Mean joint error plus `epsilon`, normalized to sum to one.
    Normalized { epsilon: f64 },
    /// Raw mean joint error (in heatmap cells), unnormalized.
    Raw,
    /// Only the last stage contributes.
    LastOnly,
}

fn visible_maps(occluded: &OcclusionMask) -> usize {
    occluded.iter().filter(|&&o| !o).count()
}

/// Mean squared difference over the maps of visible joints.
pub fn heatmap_mse<S: Scalar>(
    pred: &HeatmapStack<S>,
    target: &HeatmapStack<S>,
    occluded: &OcclusionMask,
) -> Result<f64> {
    ensure_contract!(
        pred.shape() == target.shape(),
        "prediction {:?} and target {:?} differ in shape",
        pred.shape(),
        target.shape()
    );
    let visible = visible_maps(occluded);
    if visible == 0 {
        log::warn!("heatmap loss over a hand with no visible joints is 0");
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for k in (0..pred.channels()).filter(|&k| !occluded[k]) {
        for (p, t) in pred.channel(k).iter().zip(target.channel(k)) {
            let d = (*p - *t).as_f64();
            sum += d * d;
        }
    }
    Ok(sum / (visible * pred.plane_len()) as f64)
}

/// Gradient of `scale * heatmap_mse` with respect to the prediction.
pub fn heatmap_mse_grad<S: Scalar>(
    pred: &FeatureVolume<S>,
    target: &FeatureVolume<S>,
    occluded: &OcclusionMask,
    scale: f64,
) -> FeatureVolume<S> {
    let visible = visible_maps(occluded);
    let mut grad = FeatureVolume::zeros(pred.channels(), pred.height(), pred.width());
    if visible == 0 {
        return grad;
    }
    let factor = S::of(2.0 * scale / (visible * pred.plane_len()) as f64);
    for k in (0..pred.channels()).filter(|&k| !occluded[k]) {
        let g = grad.channel_mut(k);
        for ((g, p), t) in g.iter_mut().zip(pred.channel(k)).zip(target.channel(k)) {
            *g = (*p - *t) * factor;
        }
    }
    grad
}

/// Mean Euclidean distance over visible joints; 0 when none are visible.
pub fn mean_joint_error(pred: &Joints, gt: &Joints, occluded: &OcclusionMask) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for k in (0..pred.len()).filter(|&k| !occluded[k]) {
        sum += ((pred[k][0] - gt[k][0]).powi(2) + (pred[k][1] - gt[k][1]).powi(2)).sqrt();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-stage loss weights from each stage's decoded joints. The weights are
/// constants for differentiation: they come from an argmax.
pub fn msff_weights(stage_preds: &[Joints], gt: &Joints, occluded: &OcclusionMask, mode: StageWeighting) -> Vec<f64> {
    let n = stage_preds.len();
    assert!(n >= 1, "need at least one stage");
    let raw = stage_preds.iter().map(|p| mean_joint_error(p, gt, occluded));
    match mode {
        StageWeighting::LastOnly => (0..n).map(|i| if i + 1 == n { 1.0 } else { 0.0 }).collect(),
        StageWeighting::Raw => raw.collect(),
        StageWeighting::Normalized { epsilon } => {
            let shifted: Vec<f64> = raw.map(|w| w + epsilon).collect();
            let total: f64 = shifted.iter().sum();
            if total > 0.0 && total.is_finite() {
                shifted.iter().map(|w| w / total).collect()
            } else {
                vec![1.0 / n as f64; n]
            }
        }
    }
}

/// Weighted sum of per-stage losses.
pub fn total_loss(stage_losses: &[f64], weights: &[f64]) -> Result<f64> {
    ensure_contract!(
        stage_losses.len() == weights.len(),
        "{} stage losses but {} weights",
        stage_losses.len(),
        weights.len()
    );
    Ok(stage_losses.iter().zip(weights).map(|(l, w)| l * w).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::JOINT_COUNT;

    fn stack(f: impl Fn(usize, usize, usize) -> f64) -> HeatmapStack<f64> {
        HeatmapStack::new(FeatureVolume::from_fn(JOINT_COUNT, 4, 4, f)).unwrap()
    }

    #[test]
    fn mse_examples() {
        let t = stack(|k, y, x| ((k + y * x) % 5) as f64 / 5.0);
        let none = [false; JOINT_COUNT];
        assert_eq!(heatmap_mse(&t, &t, &none).unwrap(), 0.0);
        let p = stack(|k, y, x| ((k + y * x) % 5) as f64 / 5.0 + 0.1);
        assert!((heatmap_mse(&p, &t, &none).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(heatmap_mse(&p, &t, &[true; JOINT_COUNT]).unwrap(), 0.0);
    }

    #[test]
    fn occluded_maps_are_ignored() {
        let t = stack(|_, _, _| 0.0);
        let p = stack(|k, _, _| if k == 3 { 5.0 } else { 0.2 });
        let mut occ = [false; JOINT_COUNT];
        occ[3] = true;
        assert!((heatmap_mse(&p, &t, &occ).unwrap() - 0.04).abs() < 1e-12);
        let g = heatmap_mse_grad(&p, &t, &occ, 1.0);
        assert!(g.channel(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mse_gradient_matches_differences() {
        let t = stack(|k, y, x| ((k * 3 + y + x) % 7) as f64 / 7.0);
        let p = stack(|k, y, x| ((k + 2 * y + x) % 5) as f64 / 5.0);
        let mut occ = [false; JOINT_COUNT];
        occ[0] = true;
        let g = heatmap_mse_grad(&p, &t, &occ, 0.7);
        for &(k, y, x) in &[(1, 0, 0), (5, 2, 3), (20, 3, 1)] {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi.set(k, y, x, p.get(k, y, x) + 1e-6);
            lo.set(k, y, x, p.get(k, y, x) - 1e-6);
            let num = 0.7 * (heatmap_mse(&hi, &t, &occ).unwrap() - heatmap_mse(&lo, &t, &occ).unwrap()) / 2e-6;
            assert!((num - g.get(k, y, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = HeatmapStack::<f64>::zeros(4, 4);
        let b = HeatmapStack::<f64>::zeros(4, 5);
        assert!(heatmap_mse(&a, &b, &[false; JOINT_COUNT]).is_err());
    }

    #[test]
    fn weight_examples() {
        let gt = [[0.0, 1.0]; JOINT_COUNT];
        let occ = [false; JOINT_COUNT];
        let at = |d: f64| [[d, 1.0]; JOINT_COUNT];
        let w = msff_weights(
            &[at(2.0), at(6.0)],
            &gt,
            &occ,
            StageWeighting::Normalized { epsilon: 1e-15 },
        );
        assert!((w[0] - 0.25).abs() < 1e-12 && (w[1] - 0.75).abs() < 1e-12);
        let w = msff_weights(&[gt, gt, gt], &gt, &occ, StageWeighting::Normalized { epsilon: 1e-6 });
        assert!(w.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(
            msff_weights(&[at(4.0)], &gt, &occ, StageWeighting::Normalized { epsilon: 1e-6 }),
            vec![1.0]
        );
        assert_eq!(
            msff_weights(&[at(2.0), at(6.0)], &gt, &occ, StageWeighting::Raw),
            vec![2.0, 6.0]
        );
        assert_eq!(
            msff_weights(&[at(2.0), at(6.0), gt], &gt, &occ, StageWeighting::LastOnly),
            vec![0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn total_loss_examples() {
        assert!((total_loss(&[0.2, 0.4], &[0.25, 0.75]).unwrap() - 0.35).abs() < 1e-12);
        assert_eq!(total_loss(&[0.3, 0.9], &[0.0, 1.0]).unwrap(), 0.9);
        assert_eq!(total_loss(&[0.0, 0.0], &[0.5, 0.5]).unwrap(), 0.0);
        assert!(total_loss(&[0.1], &[0.5, 0.5]).is_err());
    }
}

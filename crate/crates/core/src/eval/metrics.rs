use serde::{Deserialize, Serialize};

use crate::error::{ensure_contract, Error, Result};
use crate::scalar::Scalar;
use crate::{Joints, OcclusionMask, JOINT_COUNT};

/// Cells at or below this value do not count as part of a heatmap's support.
pub const SPREAD_EPSILON: f64 = 1e-6;

/// `0.0, 0.1, ..., 0.5`.
pub fn default_taus() -> Vec<f64> {
    (0..=5).map(|i| i as f64 / 10.0).collect()
}

fn check_lengths(preds: &[Joints], gts: &[Joints], masks: &[OcclusionMask], normalizers: &[f64]) -> Result<()> {
    ensure_contract!(
        preds.len() == gts.len() && gts.len() == masks.len() && masks.len() == normalizers.len(),
        "pck inputs disagree in length: {} predictions, {} ground truths, {} masks, {} normalizers",
        preds.len(),
        gts.len(),
        masks.len(),
        normalizers.len()
    );
    Ok(())
}

/// Normalized error of every visible joint, sample-major.
fn normalized_errors(
    preds: &[Joints],
    gts: &[Joints],
    masks: &[OcclusionMask],
    normalizers: &[f64],
) -> Result<Vec<f64>> {
    check_lengths(preds, gts, masks, normalizers)?;
    let mut out = Vec::new();
    for (i, ((p, g), m)) in preds.iter().zip(gts).zip(masks).enumerate() {
        if m.iter().all(|&o| o) {
            continue;
        }
        let norm = normalizers[i];
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Argument(format!(
                "normalizer of sample {i} must be positive, got {norm}"
            )));
        }
        for k in (0..JOINT_COUNT).filter(|&k| !m[k]) {
            out.push((p[k][0] - g[k][0]).hypot(p[k][1] - g[k][1]) / norm);
        }
    }
    if out.is_empty() {
        return Err(Error::Undefined("pck over a set without visible joints".into()));
    }
    Ok(out)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Argument(format!("tau must be a nonnegative number, got {tau}")));
    }
    Ok(())
}

fn rate_below(errors: &[f64], tau: f64) -> f64 {
    errors.iter().filter(|&&e| e < tau).count() as f64 / errors.len() as f64
}

/// Fraction of visible joints whose error, divided by the sample's
/// normalizer, is strictly below `tau`.
pub fn pck(preds: &[Joints], gts: &[Joints], masks: &[OcclusionMask], tau: f64, normalizers: &[f64]) -> Result<f64> {
    check_tau(tau)?;
    Ok(rate_below(&normalized_errors(preds, gts, masks, normalizers)?, tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PckPoint {
    pub tau: f64,
    pub pck: f64,
}

/// PCK at each threshold; `taus` must be ascending.
pub fn pck_curve(
    preds: &[Joints],
    gts: &[Joints],
    masks: &[OcclusionMask],
    taus: &[f64],
    normalizers: &[f64],
) -> Result<Vec<PckPoint>> {
    for &t in taus {
        check_tau(t)?;
    }
    if taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Argument("thresholds must be ascending".into()));
    }
    let errors = normalized_errors(preds, gts, masks, normalizers)?;
    Ok(taus
        .iter()
        .map(|&tau| PckPoint {
            tau,
            pck: rate_below(&errors, tau),
        })
        .collect())
}

/// PCK of each joint type at `tau`; `None` for joints never visible.
pub fn per_joint_pck(
    preds: &[Joints],
    gts: &[Joints],
    masks: &[OcclusionMask],
    tau: f64,
    normalizers: &[f64],
) -> Result<Vec<Option<f64>>> {
    check_tau(tau)?;
    check_lengths(preds, gts, masks, normalizers)?;
    let mut hits = [0usize; JOINT_COUNT];
    let mut seen = [0usize; JOINT_COUNT];
    for (i, ((p, g), m)) in preds.iter().zip(gts).zip(masks).enumerate() {
        for k in (0..JOINT_COUNT).filter(|&k| !m[k]) {
            let norm = normalizers[i];
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Argument(format!(
                    "normalizer of sample {i} must be positive, got {norm}"
                )));
            }
            seen[k] += 1;
            if (p[k][0] - g[k][0]).hypot(p[k][1] - g[k][1]) / norm < tau {
                hits[k] += 1;
            }
        }
    }
    Ok((0..JOINT_COUNT)
        .map(|k| (seen[k] > 0).then(|| hits[k] as f64 / seen[k] as f64))
        .collect())
}

/// Mean distance from the support of `map` (cells above [`SPREAD_EPSILON`])
/// to `peak`, divided by the map diagonal. An empty support gives 0.
pub fn spread<S: Scalar>(map: &[S], width: usize, height: usize, peak: [f64; 2]) -> Result<f64> {
    ensure_contract!(
        map.len() == width * height && width > 0 && height > 0,
        "map of {} values is not {width}x{height}",
        map.len()
    );
    let (mut total, mut count) = (0.0, 0usize);
    for (i, v) in map.iter().enumerate() {
        if v.to_f64().unwrap_or(0.0) > SPREAD_EPSILON {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            total += (x - peak[0]).hypot(y - peak[1]);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(total / count as f64 / (width as f64).hypot(height as f64))
}

/// One joint's heatmap spread and whether its prediction was correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointOutcome {
    pub spread: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Joints whose spread falls in `[lower, upper)` (the last bin is closed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Absent for an empty bin.
    pub accuracy: Option<AccuracyStats>,
}

/// Buckets joints by spread quantile and summarizes correctness per bucket.
/// Bins whose quantile edges coincide stay empty, so repeated spreads
/// collapse into fewer occupied bins.
pub fn spread_accuracy_bins(outcomes: &[JointOutcome], n_bins: usize) -> Result<Vec<SpreadBin>> {
    if n_bins < 2 {
        return Err(Error::Argument(format!("need at least 2 bins, got {n_bins}")));
    }
    if outcomes.iter().any(|o| !o.spread.is_finite()) {
        return Err(Error::Argument("spread values must be finite".into()));
    }
    if outcomes.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted: Vec<f64> = outcomes.iter().map(|o| o.spread).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges = vec![sorted[0]];
    edges.extend((1..n_bins).map(|i| sorted[i * n / n_bins]));
    edges.push(sorted[n - 1]);
    let mut members: Vec<Vec<bool>> = vec![Vec::new(); n_bins];
    for o in outcomes {
        let bin = edges[1..n_bins].iter().filter(|&&e| e <= o.spread).count();
        members[bin].push(o.correct);
    }
    Ok(members
        .into_iter()
        .enumerate()
        .map(|(i, hits)| {
            let accuracy = (!hits.is_empty()).then(|| {
                let values: Vec<f64> = hits.iter().map(|&h| f64::from(u8::from(h))).collect();
                AccuracyStats {
                    mean: values.iter().sum::<f64>() / values.len() as f64,
                    min: values.iter().copied().fold(f64::INFINITY, f64::min),
                    max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            });
            SpreadBin {
                lower: edges[i],
                upper: edges[i + 1],
                count: hits.len(),
                accuracy,
            }
        })
        .collect())
}

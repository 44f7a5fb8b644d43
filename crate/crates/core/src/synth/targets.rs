use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{FeatureVolume, HeatmapStack};
use crate::{Joints, OcclusionMask, JOINT_COUNT};

/// Target spread in heatmap cells.
pub const DEFAULT_SIGMA: f64 = 2.0;

/// Unnormalized Gaussian with peak 1 at offset `(0, 0)`.
pub fn gaussian_value(dx: f64, dy: f64, sigma: f64) -> f64 {
    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
}

/// One Gaussian per joint, centered on the grid cell nearest the joint;
/// occluded joints get an all-zero map.
pub fn gaussian_targets<S: Scalar>(
    joints: &Joints,
    sigma: f64,
    size: usize,
    occluded: &OcclusionMask,
) -> Result<HeatmapStack<S>> {
    if !(sigma > 0.0) {
        return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
    }
    let last = size.saturating_sub(1) as f64;
    let centers: Vec<[f64; 2]> = joints
        .iter()
        .map(|p| [p[0].round().clamp(0.0, last), p[1].round().clamp(0.0, last)])
        .collect();
    let maps = FeatureVolume::from_fn(JOINT_COUNT, size, size, |k, y, x| {
        if occluded[k] {
            S::zero()
        } else {
            S::of(gaussian_value(
                x as f64 - centers[k][0],
                y as f64 - centers[k][1],
                sigma,
            ))
        }
    });
    HeatmapStack::new(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_half_value_and_occlusion() {
        let joints: Joints = std::array::from_fn(|k| [k as f64 % 16.0, 3.4]);
        let mut occ = [false; JOINT_COUNT];
        occ[4] = true;
        let t = gaussian_targets::<f64>(&joints, 2.0, 16, &occ).unwrap();
        assert_eq!(t.get(0, 3, 0), 1.0);
        assert_eq!(t.get(7, 3, 7), 1.0);
        assert!(t.channel(4).iter().all(|&v| v == 0.0));
        // sigma picked so the half-maximum radius is exactly 3 cells
        let sigma = 3.0 / (2.0 * 2f64.ln()).sqrt();
        let t = gaussian_targets::<f64>(&joints, sigma, 16, &occ).unwrap();
        assert!((t.get(5, 3, 8) - 0.5).abs() < 1e-12);
        assert!((gaussian_value(sigma * (2.0 * 2f64.ln()).sqrt(), 0.0, sigma) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sigma_must_be_positive() {
        let j = [[1.0; 2]; JOINT_COUNT];
        assert!(gaussian_targets::<f32>(&j, 0.0, 8, &[false; JOINT_COUNT]).is_err());
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GenConfig;
use crate::graph::{finger_joint, FINGER_COUNT, JOINTS_PER_FINGER, WRIST};
use crate::{Joints, OcclusionMask, JOINT_COUNT};

/// Redraws allowed before a pose with too few on-canvas joints is accepted anyway.
const MAX_ATTEMPTS: usize = 64;

/// Free parameters of one hand pose; angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub wrist: [f64; 2],
    pub rotation: f64,
    pub scale: f64,
    /// Mirrors the finger fan, giving left and right hands.
    pub mirrored: bool,
    pub abduction: [f64; FINGER_COUNT],
    pub flexion: [[f64; JOINTS_PER_FINGER - 1]; FINGER_COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    /// Annotated joints: off-canvas joints replaced by `(0, 0)`.
    pub joints: Joints,
    pub occluded: OcclusionMask,
    /// Joint positions before clipping, used for rendering.
    pub raw: Joints,
    pub params: PoseParams,
}

impl PoseParams {
    fn draw(rng: &mut ChaCha8Rng, config: &GenConfig) -> Self {
        let size = config.image_size as f64;
        let deg = std::f64::consts::PI / 180.0;
        let [flex_lo, flex_hi] = config.flexion_deg;
        let [scale_lo, scale_hi] = config.palm_scale;
        Self {
            wrist: [rng.random_range(0.15..0.85) * size, rng.random_range(0.15..0.85) * size],
            rotation: rng.random_range(0.0..std::f64::consts::TAU),
            scale: scale_lo + (scale_hi - scale_lo) * rng.random::<f64>(),
            mirrored: rng.random(),
            abduction: std::array::from_fn(|_| (rng.random::<f64>() * 2.0 - 1.0) * config.abduction_deg * deg),
            flexion: std::array::from_fn(|_| {
                std::array::from_fn(|_| (flex_lo + (flex_hi - flex_lo) * rng.random::<f64>()) * deg)
            }),
        }
    }

    /// Planar forward kinematics along the wrist-rooted skeleton.
    pub fn joints(&self, config: &GenConfig) -> Joints {
        let side = if self.mirrored { -1.0 } else { 1.0 };
        let mut out = [[0.0; 2]; JOINT_COUNT];
        out[WRIST] = self.wrist;
        for f in 0..FINGER_COUNT {
            let mut angle = self.rotation + side * (config.base_angles_deg[f].to_radians() + self.abduction[f]);
            let mut at = self.wrist;
            for s in 0..JOINTS_PER_FINGER {
                if s > 0 {
                    angle += side * self.flexion[f][s - 1];
                }
                let len = config.segment_lengths[f][s] * self.scale;
                at = [at[0] + len * angle.cos(), at[1] + len * angle.sin()];
                out[finger_joint(f, s)] = at;
            }
        }
        out
    }
}

fn on_canvas(p: [f64; 2], size: f64) -> bool {
    p[0] >= 0.0 && p[0] < size && p[1] >= 0.0 && p[1] < size && p != [0.0, 0.0]
}

/// Deterministic random hand pose. Joints leaving the canvas are marked
/// occluded; poses with fewer than `min_visible` on-canvas joints are redrawn.
pub fn sample_hand_pose(seed: u64, config: &GenConfig) -> PoseSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = config.image_size as f64;
    let mut best: Option<PoseSample> = None;
    for _ in 0..MAX_ATTEMPTS {
        let params = PoseParams::draw(&mut rng, config);
        let raw = params.joints(config);
        let occluded: OcclusionMask = std::array::from_fn(|k| !on_canvas(raw[k], size));
        let joints = std::array::from_fn(|k| if occluded[k] { [0.0, 0.0] } else { raw[k] });
        let visible = occluded.iter().filter(|&&o| !o).count();
        let sample = PoseSample {
            joints,
            occluded,
            raw,
            params,
        };
        if visible >= config.min_visible {
            return sample;
        }
        let best_visible = best.as_ref().map_or(0, |b| b.occluded.iter().filter(|&&o| !o).count());
        if best.is_none() || visible > best_visible {
            best = Some(sample);
        }
    }
    best.expect("at least one attempt")
}

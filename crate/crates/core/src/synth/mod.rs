//! Procedural hand images: pose sampling, rendering, heatmap targets, and the
//! on-disk dataset format (also usable as an import format for real data).

mod dataset;
mod pose;
mod render;
mod targets;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stage1::HandRegion;
use crate::{Joints, OcclusionMask};

pub use dataset::{generate_dataset, load_dataset, Dataset, Sample, MANIFEST_FILE, MANIFEST_VERSION};
pub use pose::{sample_hand_pose, PoseParams, PoseSample};
pub use render::{read_png, render_image, write_png};
pub use targets::{gaussian_targets, gaussian_value, DEFAULT_SIGMA};

/// Parameters of the procedural generator, echoed into every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Side of the square canvas in pixels.
    pub image_size: usize,
    pub min_hands: usize,
    pub max_hands: usize,
    /// Uniform range of the per-hand scale factor applied to all segments.
    pub palm_scale: [f64; 2],
    /// Per finger (thumb first): wrist-to-base, then three phalanx lengths, in pixels.
    pub segment_lengths: [[f64; 4]; 5],
    /// Direction of each finger's base segment relative to the hand axis.
    pub base_angles_deg: [f64; 5],
    /// Maximum absolute per-finger spread added to the base direction.
    pub abduction_deg: f64,
    /// Uniform range of each of the three per-finger bend angles.
    pub flexion_deg: [f64; 2],
    /// Finger thickness (capsule radius) at scale 1.
    pub bone_radius: f64,
    /// Poses with fewer joints on the canvas are redrawn.
    pub min_visible: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            min_hands: 1,
            max_hands: 2,
            palm_scale: [0.8, 1.2],
            segment_lengths: [
                [11.0, 9.0, 7.0, 6.0],
                [20.0, 10.0, 7.0, 6.0],
                [20.0, 11.0, 8.0, 6.0],
                [19.0, 10.0, 7.0, 6.0],
                [18.0, 8.0, 6.0, 5.0],
            ],
            base_angles_deg: [-62.0, -22.0, 0.0, 18.0, 36.0],
            abduction_deg: 8.0,
            flexion_deg: [0.0, 35.0],
            bone_radius: 2.2,
            min_visible: 12,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 {
            return Err(Error::config("image_size", "must be at least 16"));
        }
        if self.min_hands == 0 || self.min_hands > self.max_hands {
            return Err(Error::config("min_hands", "need 1 <= min_hands <= max_hands"));
        }
        if !(self.palm_scale[0] > 0.0 && self.palm_scale[0] <= self.palm_scale[1]) {
            return Err(Error::config("palm_scale", "need 0 < low <= high"));
        }
        if self
            .segment_lengths
            .iter()
            .flatten()
            .any(|&l| !(l > 0.0 && l.is_finite()))
        {
            return Err(Error::config("segment_lengths", "lengths must be positive"));
        }
        if !(self.flexion_deg[0] <= self.flexion_deg[1]) || !(self.abduction_deg >= 0.0) {
            return Err(Error::config("flexion_deg", "need a nonempty angle range"));
        }
        if !(self.bone_radius >= 1.0) {
            return Err(Error::config("bone_radius", "must be at least 1 px"));
        }
        if self.min_visible > crate::JOINT_COUNT {
            return Err(Error::config("min_visible", "at most 21"));
        }
        Ok(())
    }
}

/// One annotated hand; occluded joints sit at exactly `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandLabel {
    pub joints: Joints,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<HandRegion>,
}

impl HandLabel {
    pub fn new(joints: Joints, bbox: Option<HandRegion>) -> Self {
        Self { joints, bbox }
    }

    pub fn occlusion(&self) -> OcclusionMask {
        std::array::from_fn(|k| self.joints[k] == [0.0, 0.0])
    }

    pub fn visible_count(&self) -> usize {
        self.occlusion().iter().filter(|&&o| !o).count()
    }

    /// The stored box, or the tight box around the visible joints.
    pub fn bounding_box(&self) -> Option<HandRegion> {
        self.bbox
            .or_else(|| HandRegion::around_visible(&self.joints, &self.occlusion()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandAnnotation {
    /// Relative to the dataset root.
    pub image_path: String,
    pub hands: Vec<HandLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub image_size: usize,
    #[serde(default)]
    pub generator_params: GenConfig,
    pub samples: Vec<HandAnnotation>,
}

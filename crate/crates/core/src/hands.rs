//! Turns annotated images into network-ready hand crops with targets.

use rayon::prelude::*;

use crate::error::Result;
use crate::model::ModelConfig;
use crate::stage1::{crop_hand, detect_hands_oracle, map_to_heatmap, CropTransform};
use crate::synth::{gaussian_targets, Sample};
use crate::tensor::{FeatureVolume, HeatmapStack};
use crate::{Joints, OcclusionMask, JOINT_COUNT};

/// One localized hand.
#[derive(Debug, Clone, PartialEq)]
pub struct HandExample {
    pub image_index: usize,
    pub hand_index: usize,
    pub crop: FeatureVolume<f32>,
    pub transform: CropTransform,
    /// Ground truth in continuous heatmap cells; occluded joints at `(0, 0)`.
    pub gt_cells: Joints,
    /// Ground truth in source pixels.
    pub gt_source: Joints,
    pub occluded: OcclusionMask,
    pub target: HeatmapStack<f32>,
    /// Hand size in source pixels (larger side of the ground-truth box).
    pub normalizer: f64,
}

/// Oracle-localizes and crops every hand; hands without visible joints are
/// dropped (with a warning).
pub fn prepare_hands(samples: &[Sample], config: &ModelConfig, margin: f64, sigma: f64) -> Result<Vec<HandExample>> {
    config.validate()?;
    let per_image = samples
        .par_iter()
        .enumerate()
        .map(|(image_index, sample)| {
            let hands = &sample.annotation.hands;
            let found = detect_hands_oracle(hands, margin, sample.image.width(), sample.image.height());
            found
                .hands
                .iter()
                .map(|located| {
                    let label = &hands[located.hand_index];
                    let occluded = label.occlusion();
                    let crop = crop_hand(&sample.image, &located.region, config.crop_size)?;
                    let mut gt_cells = [[0.0; 2]; JOINT_COUNT];
                    for k in (0..JOINT_COUNT).filter(|&k| !occluded[k]) {
                        gt_cells[k] = map_to_heatmap(label.joints[k], &crop.transform, config);
                    }
                    let target = gaussian_targets(&gt_cells, sigma, config.heatmap_size, &occluded)?;
                    Ok(HandExample {
                        image_index,
                        hand_index: located.hand_index,
                        crop: crop.pixels,
                        transform: crop.transform,
                        gt_cells,
                        gt_source: label.joints,
                        occluded,
                        target,
                        normalizer: label.bounding_box().map_or(0.0, |b| b.size()),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

//! Hand localization and cropping.
//!
//! A [`HandDetector`] proposes square regions in a source image; [`crop_hand`]
//! resamples a region to the network's crop size and records the affine map
//! back to source pixels. Coordinates are continuous: pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::synth::HandLabel;
use crate::tensor::FeatureVolume;
use crate::{Image, Joints, OcclusionMask, JOINT_COUNT};

/// Default fraction of the tight joint box added on every side.
pub const DEFAULT_MARGIN: f64 = 0.25;

/// Regions thinner than this are rejected by [`crop_hand`].
pub const MIN_REGION_SIDE: f64 = 4.0;

/// Axis-aligned rectangle in source-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandRegion {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl HandRegion {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Tight box around the visible joints, `None` when every joint is occluded.
    pub fn around_visible(joints: &Joints, occluded: &OcclusionMask) -> Option<Self> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (p, _) in joints.iter().zip(occluded).filter(|(_, &o)| !o) {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        lo[0]
            .is_finite()
            .then(|| Self::new(lo[0], lo[1], hi[0] - lo[0], hi[1] - lo[1]))
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x + self.w / 2.0, self.y + self.h / 2.0]
    }

    /// Larger of width and height.
    pub fn size(&self) -> f64 {
        self.w.max(self.h)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x && p[0] <= self.x + self.w && p[1] >= self.y && p[1] <= self.y + self.h
    }

    fn is_inside(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x + self.w <= width && self.y + self.h <= height
    }
}

/// Crop-to-source mapping: `source = offset + crop * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub offset_x: f64,
    pub offset_y: f64,
    pub scale: f64,
}

impl CropTransform {
    pub const IDENTITY: Self = Self {
        offset_x: 0.0,
        offset_y: 0.0,
        scale: 1.0,
    };

    pub fn to_source(&self, p: [f64; 2]) -> [f64; 2] {
        [self.offset_x + p[0] * self.scale, self.offset_y + p[1] * self.scale]
    }

    pub fn to_crop(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.offset_x) / self.scale, (p[1] - self.offset_y) / self.scale]
    }
}

/// A resampled hand region and its mapping back to the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct HandCrop {
    pub pixels: Image,
    pub transform: CropTransform,
}

/// Anything that proposes hand regions for an image.
pub trait HandDetector {
    fn detect(&self, image: &Image) -> Result<Vec<HandRegion>>;
}

/// A region the oracle produced for one annotated hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocatedHand {
    pub hand_index: usize,
    pub region: HandRegion,
}

/// A hand the oracle could not localize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedHand {
    pub hand_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleDetections {
    pub hands: Vec<LocatedHand>,
    pub skipped: Vec<SkippedHand>,
}

/// Ground-truth region for one hand: tight visible-joint box grown by
/// `margin` of its extent on every side, padded to a square, then moved (and
/// if necessary shrunk) to lie inside a `width x height` image.
pub fn oracle_region(
    joints: &Joints,
    occluded: &OcclusionMask,
    margin: f64,
    width: usize,
    height: usize,
) -> Option<HandRegion> {
    let tight = HandRegion::around_visible(joints, occluded)?;
    let [cx, cy] = tight.center();
    let grown_w = tight.w * (1.0 + 2.0 * margin);
    let grown_h = tight.h * (1.0 + 2.0 * margin);
    let limit = width.min(height) as f64;
    let side = grown_w.max(grown_h).max(2.0 * MIN_REGION_SIDE).min(limit);
    let place = |c: f64, extent: f64| (c - side / 2.0).clamp(0.0, extent - side);
    Some(HandRegion::new(
        place(cx, width as f64),
        place(cy, height as f64),
        side,
        side,
    ))
}

/// Oracle localization of every annotated hand; hands without visible joints
/// are reported in `skipped` rather than failing the whole image.
pub fn detect_hands_oracle(hands: &[HandLabel], margin: f64, width: usize, height: usize) -> OracleDetections {
    let mut out = OracleDetections::default();
    for (hand_index, hand) in hands.iter().enumerate() {
        match oracle_region(&hand.joints, &hand.occlusion(), margin, width, height) {
            Some(region) => out.hands.push(LocatedHand { hand_index, region }),
            None => {
                log::warn!("hand {hand_index} has no visible joints; skipped");
                out.skipped.push(SkippedHand {
                    hand_index,
                    reason: "no visible joints".into(),
                });
            }
        }
    }
    out
}

/// Detector built from known annotations.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    pub hands: Vec<HandLabel>,
    pub margin: f64,
}

impl HandDetector for OracleDetector {
    fn detect(&self, image: &Image) -> Result<Vec<HandRegion>> {
        let found = detect_hands_oracle(&self.hands, self.margin, image.width(), image.height());
        Ok(found.hands.into_iter().map(|h| h.region).collect())
    }
}

/// Treats the whole image as one hand region (centered square).
#[derive(Debug, Clone, Copy, Default)]
pub struct WholeImageDetector;

impl HandDetector for WholeImageDetector {
    fn detect(&self, image: &Image) -> Result<Vec<HandRegion>> {
        let (w, h) = (image.width() as f64, image.height() as f64);
        let side = w.min(h);
        Ok(vec![HandRegion::new((w - side) / 2.0, (h - side) / 2.0, side, side)])
    }
}

fn sample_bilinear(image: &Image, c: usize, sx: f64, sy: f64) -> f32 {
    let (h, w) = (image.height(), image.width());
    let fx = (sx - 0.5).clamp(0.0, (w - 1) as f64);
    let fy = (sy - 0.5).clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
    let p = |y, x| image.get(c, y, x) as f64;
    let top = p(y0, x0) * (1.0 - ax) + p(y0, x1) * ax;
    let bottom = p(y1, x0) * (1.0 - ax) + p(y1, x1) * ax;
    (top * (1.0 - ay) + bottom * ay) as f32
}

/// Resample `region` to a `crop_size` square. A non-square region is
/// letterboxed: the longer side fills the crop and the rest is zero.
pub fn crop_hand(image: &Image, region: &HandRegion, crop_size: usize) -> Result<HandCrop> {
    if image.channels() != 3 || image.width() == 0 || image.height() == 0 {
        return Err(Error::Contract(format!(
            "expected a 3-channel image, got {:?}",
            image.shape()
        )));
    }
    if !(region.w >= MIN_REGION_SIDE && region.h >= MIN_REGION_SIDE) {
        return Err(Error::Argument(format!(
            "degenerate hand region {}x{} (minimum side {MIN_REGION_SIDE} px)",
            region.w, region.h
        )));
    }
    let eps = 1e-9;
    if !HandRegion::new(
        region.x + eps,
        region.y + eps,
        region.w - 2.0 * eps,
        region.h - 2.0 * eps,
    )
    .is_inside(image.width() as f64, image.height() as f64)
    {
        return Err(Error::Contract(format!(
            "region {region:?} lies outside the {}x{} image",
            image.width(),
            image.height()
        )));
    }
    let transform = CropTransform {
        offset_x: region.x,
        offset_y: region.y,
        scale: region.size() / crop_size as f64,
    };
    let pixels = FeatureVolume::from_fn(3, crop_size, crop_size, |c, v, u| {
        let [sx, sy] = transform.to_source([u as f64 + 0.5, v as f64 + 0.5]);
        if sx > region.x + region.w || sy > region.y + region.h {
            0.0
        } else {
            sample_bilinear(image, c, sx, sy).clamp(0.0, 1.0)
        }
    });
    Ok(HandCrop { pixels, transform })
}

/// Ratio between crop pixels and heatmap cells.
pub fn heatmap_stride(config: &ModelConfig) -> f64 {
    config.crop_size as f64 / config.heatmap_size as f64
}

/// Heatmap-cell coordinates to source pixels.
pub fn map_to_source(coords: [f64; 2], crop: &CropTransform, config: &ModelConfig) -> [f64; 2] {
    let stride = heatmap_stride(config);
    crop.to_source([coords[0] * stride, coords[1] * stride])
}

/// Source pixels to (continuous) heatmap-cell coordinates.
pub fn map_to_heatmap(coords: [f64; 2], crop: &CropTransform, config: &ModelConfig) -> [f64; 2] {
    let stride = heatmap_stride(config);
    let [u, v] = crop.to_crop(coords);
    [u / stride, v / stride]
}

/// Applies [`map_to_source`] to all joints of a hand.
pub fn joints_to_source(cells: &Joints, crop: &CropTransform, config: &ModelConfig) -> Joints {
    let mut out = [[0.0; 2]; JOINT_COUNT];
    for (o, c) in out.iter_mut().zip(cells) {
        *o = map_to_source(*c, crop, config);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joints_spanning(x0: f64, y0: f64, x1: f64, y1: f64) -> Joints {
        std::array::from_fn(|k| {
            let t = k as f64 / 20.0;
            [x0 + (x1 - x0) * t, y0 + (y1 - y0) * (1.0 - t)]
        })
    }

    #[test]
    fn tight_box_with_zero_margin() {
        let j = joints_spanning(10.0, 20.0, 50.0, 60.0);
        let r = oracle_region(&j, &[false; 21], 0.0, 200, 200).unwrap();
        assert_eq!(r, HandRegion::new(10.0, 20.0, 40.0, 40.0));
    }

    #[test]
    fn margin_grows_box_around_same_center() {
        let j = joints_spanning(60.0, 60.0, 100.0, 100.0);
        let r = oracle_region(&j, &[false; 21], 0.25, 200, 200).unwrap();
        assert_eq!((r.w, r.h), (60.0, 60.0));
        assert_eq!(r.center(), [80.0, 80.0]);
    }

    #[test]
    fn region_is_squared_and_shifted_inside() {
        let j = joints_spanning(0.0, 5.0, 10.0, 45.0);
        let r = oracle_region(&j, &[false; 21], 0.25, 64, 64).unwrap();
        assert_eq!((r.w, r.h), (60.0, 60.0));
        assert!(r.is_inside(64.0, 64.0));
        assert!(j.iter().all(|&p| r.contains(p)));
    }

    #[test]
    fn all_occluded_hand_is_skipped() {
        let hands = vec![
            HandLabel::new([[0.0; 2]; 21], None),
            HandLabel::new(joints_spanning(10.0, 10.0, 30.0, 30.0), None),
        ];
        let d = detect_hands_oracle(&hands, DEFAULT_MARGIN, 64, 64);
        assert_eq!(d.hands.len(), 1);
        assert_eq!(d.hands[0].hand_index, 1);
        assert_eq!(d.skipped.len(), 1);
        assert_eq!(d.skipped[0].hand_index, 0);
    }

    #[test]
    fn full_region_at_origin_is_identity() {
        let img = FeatureVolume::from_fn(3, 256, 256, |c, y, x| ((c + y + x) % 7) as f32 / 7.0);
        let crop = crop_hand(&img, &HandRegion::new(0.0, 0.0, 256.0, 256.0), 256).unwrap();
        assert_eq!(crop.transform, CropTransform::IDENTITY);
        assert_eq!(crop.pixels, img);
    }

    #[test]
    fn half_size_region_and_constant_color() {
        let img = FeatureVolume::filled(3, 300, 300, 0.4f32);
        let crop = crop_hand(&img, &HandRegion::new(10.0, 20.0, 128.0, 128.0), 256).unwrap();
        assert_eq!(crop.transform.scale, 0.5);
        assert!(crop.pixels.data().iter().all(|&v| (v - 0.4).abs() < 1e-6));
    }

    #[test]
    fn degenerate_region_is_rejected() {
        let img = FeatureVolume::filled(3, 64, 64, 0.0f32);
        let err = crop_hand(&img, &HandRegion::new(0.0, 0.0, 3.0, 40.0), 64).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
        assert!(crop_hand(&img, &HandRegion::new(40.0, 0.0, 40.0, 40.0), 64).is_err());
    }

    #[test]
    fn letterbox_pads_short_side() {
        let img = FeatureVolume::filled(3, 64, 64, 1.0f32);
        let crop = crop_hand(&img, &HandRegion::new(0.0, 0.0, 32.0, 16.0), 32).unwrap();
        assert_eq!(crop.pixels.get(0, 5, 5), 1.0);
        assert_eq!(crop.pixels.get(0, 20, 5), 0.0);
    }

    #[test]
    fn heatmap_to_source_examples() {
        let cfg = ModelConfig::default();
        let id = CropTransform::IDENTITY;
        assert_eq!(map_to_source([0.0, 0.0], &id, &cfg), [0.0, 0.0]);
        assert_eq!(map_to_source([32.0, 32.0], &id, &cfg), [128.0, 128.0]);
    }

    #[test]
    fn whole_image_detector_is_centered_square() {
        let img = FeatureVolume::filled(3, 40, 100, 0.0f32);
        let r = WholeImageDetector.detect(&img).unwrap();
        assert_eq!(r, vec![HandRegion::new(30.0, 0.0, 40.0, 40.0)]);
    }
}

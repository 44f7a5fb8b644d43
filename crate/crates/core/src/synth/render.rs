use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GenConfig, PoseSample};
use crate::error::{Error, Result};
use crate::graph::{finger_joint, parent, FINGER_COUNT};
use crate::tensor::FeatureVolume;
use crate::{Image, JOINT_COUNT};

/// Background values never exceed this, skin red never drops below
/// `SKIN_RED_MIN * JOINT_SHADE`; the gap is the guaranteed joint contrast.
const BACKGROUND_MAX: f32 = 0.45;
const SKIN_RED_MIN: f32 = 0.8;
const JOINT_SHADE: f32 = 0.88;
const NOISE_GRID: usize = 8;

fn background(size: usize, rng: &mut ChaCha8Rng) -> Image {
    let grid: Vec<f32> = (0..3 * (NOISE_GRID + 1) * (NOISE_GRID + 1))
        .map(|_| rng.random_range(0.05..0.4))
        .collect();
    let cell = size as f32 / NOISE_GRID as f32;
    let mut img = FeatureVolume::from_fn(3, size, size, |c, y, x| {
        let gx = (x as f32 + 0.5) / cell;
        let gy = (y as f32 + 0.5) / cell;
        let (x0, y0) = (
            (gx.floor() as usize).min(NOISE_GRID - 1),
            (gy.floor() as usize).min(NOISE_GRID - 1),
        );
        let (ax, ay) = (gx - x0 as f32, gy - y0 as f32);
        let g = |yy: usize, xx: usize| grid[(c * (NOISE_GRID + 1) + yy) * (NOISE_GRID + 1) + xx];
        let top = g(y0, x0) * (1.0 - ax) + g(y0, x0 + 1) * ax;
        let bottom = g(y0 + 1, x0) * (1.0 - ax) + g(y0 + 1, x0 + 1) * ax;
        top * (1.0 - ay) + bottom * ay
    });
    for v in img.data_mut() {
        *v = (*v + rng.random_range(-0.04..0.04)).clamp(0.0, BACKGROUND_MAX);
    }
    img
}

/// Distance from `p` to the segment `a`-`b`.
fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

/// Anti-aliased capsule (a disc when `a == b`) blended over the image.
fn draw_capsule(img: &mut Image, a: [f64; 2], b: [f64; 2], radius: f64, color: [f32; 3]) {
    let (h, w) = (img.height() as f64, img.width() as f64);
    let pad = radius + 1.0;
    let x0 = (a[0].min(b[0]) - pad).floor().max(0.0);
    let x1 = (a[0].max(b[0]) + pad).ceil().min(w);
    let y0 = (a[1].min(b[1]) - pad).floor().max(0.0);
    let y1 = (a[1].max(b[1]) + pad).ceil().min(h);
    if x0 >= x1 || y0 >= y1 {
        return;
    }
    for y in y0 as usize..y1 as usize {
        for x in x0 as usize..x1 as usize {
            let d = segment_distance([x as f64 + 0.5, y as f64 + 0.5], a, b);
            let cover = (radius + 0.5 - d).clamp(0.0, 1.0) as f32;
            if cover > 0.0 {
                for (c, &col) in color.iter().enumerate() {
                    let v = img.get(c, y, x);
                    img.set(c, y, x, v * (1.0 - cover) + col * cover);
                }
            }
        }
    }
}

fn draw_hand(img: &mut Image, hand: &PoseSample, config: &GenConfig, rng: &mut ChaCha8Rng) {
    let red = rng.random_range(SKIN_RED_MIN..0.95);
    let skin = [
        red,
        red * rng.random_range(0.6..0.8),
        red * rng.random_range(0.45..0.65),
    ];
    let joint_color = skin.map(|v| v * JOINT_SHADE);
    let r = config.bone_radius * hand.params.scale;
    let p = &hand.raw;
    for f in 0..FINGER_COUNT {
        draw_capsule(img, p[0], p[finger_joint(f, 0)], 1.6 * r, skin);
    }
    for k in 1..JOINT_COUNT {
        draw_capsule(img, p[parent(k).unwrap()], p[k], r, skin);
    }
    for &q in p.iter() {
        draw_capsule(img, q, q, (0.8 * r).max(1.5), joint_color);
    }
}

/// Renders hands over a textured background; deterministic in `seed`.
pub fn render_image(hands: &[PoseSample], config: &GenConfig, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = background(config.image_size, &mut rng);
    for hand in hands {
        draw_hand(&mut img, hand, config, &mut rng);
    }
    img
}

/// Saves a 3-channel image with values in `[0, 1]` as 8-bit RGB.
pub fn write_png(img: &Image, path: &Path) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::Contract(format!("cannot save {}-channel image", img.channels())));
    }
    let (h, w) = (img.height(), img.width());
    let buf = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        image::Rgb(std::array::from_fn(|c| {
            (img.get(c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8
        }))
    });
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format(path, "image", other.to_string()),
        })
}

/// Loads any PNG as a 3-channel image in `[0, 1]`.
pub fn read_png(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, "image", e.to_string()))?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    Ok(FeatureVolume::from_fn(3, h as usize, w as usize, |c, y, x| {
        decoded.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sample_hand_pose;

    #[test]
    fn joint_pixels_contrast_with_background() {
        let cfg = GenConfig::default();
        for seed in 0..40u64 {
            let hand = sample_hand_pose(seed, &cfg);
            let bg = render_image(&[], &cfg, seed);
            let img = render_image(std::slice::from_ref(&hand), &cfg, seed);
            for (k, p) in hand.joints.iter().enumerate() {
                if hand.occluded[k] {
                    continue;
                }
                let (x, y) = (p[0] as usize, p[1] as usize);
                let diff = (0..3)
                    .map(|c| (img.get(c, y, x) - bg.get(c, y, x)).abs())
                    .fold(0.0, f32::max);
                assert!(diff >= 0.2, "seed {seed} joint {k}: contrast {diff}");
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let cfg = GenConfig::default();
        let hands = [sample_hand_pose(1, &cfg), sample_hand_pose(2, &cfg)];
        assert_eq!(render_image(&hands, &cfg, 5), render_image(&hands, &cfg, 5));
    }

    #[test]
    fn no_hands_gives_pure_background() {
        let cfg = GenConfig::default();
        let img = render_image(&[], &cfg, 3);
        assert!(img.data().iter().all(|&v| (0.0..=BACKGROUND_MAX).contains(&v)));
    }

    #[test]
    fn png_round_trip_quantizes_to_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = FeatureVolume::from_fn(3, 5, 7, |c, y, x| ((c * 35 + y * 7 + x) % 256) as f32 / 255.0);
        write_png(&img, &path).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back.shape(), (3, 5, 7));
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

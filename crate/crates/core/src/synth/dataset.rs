use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    read_png, render_image, sample_hand_pose, write_png, DatasetManifest, GenConfig, HandAnnotation, HandLabel,
};
use crate::error::{Error, Result};
use crate::stage1::HandRegion;
use crate::Image;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
const IMAGE_DIR: &str = "images";

/// An image with its annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub annotation: HandAnnotation,
}

/// A loaded dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn generate_one(index: usize, seed: u64, config: &GenConfig) -> (Image, Vec<HandLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let count = rng.random_range(config.min_hands..=config.max_hands);
    let poses: Vec<_> = (0..count).map(|_| sample_hand_pose(rng.random(), config)).collect();
    let image = render_image(&poses, config, rng.random());
    let labels = poses
        .iter()
        .map(|p| HandLabel::new(p.joints, HandRegion::around_visible(&p.joints, &p.occluded)))
        .collect();
    (image, labels)
}

/// Writes `n` rendered images plus `manifest.json` under `out_dir`.
/// Output depends only on `(n, seed, config)`.
pub fn generate_dataset(n: usize, seed: u64, out_dir: &Path, config: &GenConfig) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::Argument("dataset size must be positive".into()));
    }
    config.validate()?;
    let image_dir = out_dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let (image, hands) = generate_one(i, seed, config);
            let image_path = format!("{IMAGE_DIR}/{i:06}.png");
            write_png(&image, &out_dir.join(&image_path))?;
            Ok(HandAnnotation { image_path, hands })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed,
        image_size: config.image_size,
        generator_params: config.clone(),
        samples,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn check_annotation(path: &Path, index: usize, ann: &HandAnnotation, width: usize, height: usize) -> Result<()> {
    for (h, hand) in ann.hands.iter().enumerate() {
        for (k, p) in hand.joints.iter().enumerate() {
            let field = || format!("samples[{index}].hands[{h}].joints[{k}]");
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::format(path, field(), "non-finite coordinate"));
            }
            let inside = p[0] >= 0.0 && p[0] <= width as f64 && p[1] >= 0.0 && p[1] <= height as f64;
            if !inside {
                return Err(Error::format(
                    path,
                    field(),
                    format!("({}, {}) outside the image", p[0], p[1]),
                ));
            }
        }
        if let Some(b) = hand.bbox {
            if !(b.w >= 0.0 && b.h >= 0.0) {
                return Err(Error::format(
                    path,
                    format!("samples[{index}].hands[{h}].bbox"),
                    "negative extent",
                ));
            }
        }
    }
    Ok(())
}

/// Reads and validates a dataset directory, decoding every image.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| {
        let field = if e.is_data() { "schema" } else { "syntax" };
        Error::format(&path, field, e.to_string())
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::format(
            &path,
            "version",
            format!("unsupported version {} (expected {MANIFEST_VERSION})", manifest.version),
        ));
    }
    let mut seen = HashSet::new();
    for (i, ann) in manifest.samples.iter().enumerate() {
        if !seen.insert(ann.image_path.as_str()) {
            return Err(Error::format(
                &path,
                format!("samples[{i}].image_path"),
                "duplicate image",
            ));
        }
    }
    let samples = manifest
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, ann)| {
            let image_path = dir.join(&ann.image_path);
            if !image_path.is_file() {
                return Err(Error::format(
                    &path,
                    format!("samples[{i}].image_path"),
                    format!("missing image {}", image_path.display()),
                ));
            }
            let image = read_png(&image_path)?;
            if image.width() != manifest.image_size || image.height() != manifest.image_size {
                return Err(Error::format(
                    &image_path,
                    "image_size",
                    format!(
                        "{}x{} image but manifest says {}",
                        image.width(),
                        image.height(),
                        manifest.image_size
                    ),
                ));
            }
            check_annotation(&path, i, ann, image.width(), image.height())?;
            Ok(Sample {
                image,
                annotation: ann.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        root: dir.to_path_buf(),
        manifest,
        samples,
    })
}

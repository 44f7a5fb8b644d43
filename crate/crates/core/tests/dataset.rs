use std::path::Path;

use msff_core::synth::{generate_dataset, load_dataset, GenConfig, MANIFEST_FILE};
use msff_core::Error;

fn small() -> GenConfig {
    GenConfig {
        image_size: 64,
        ..GenConfig::default()
    }
}

#[test]
fn generate_then_load_round_trips_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(4, 3, dir.path(), &small()).unwrap();
    let data = load_dataset(dir.path()).unwrap();
    assert_eq!(data.len(), 4);
    for (sample, ann) in data.samples.iter().zip(&manifest.samples) {
        assert_eq!(&sample.annotation, ann);
        assert_eq!(sample.image.shape(), (3, 64, 64));
        for hand in &ann.hands {
            for p in hand.joints.iter().filter(|p| **p != [0.0, 0.0]) {
                assert!(p[0] >= 0.0 && p[0] < 64.0 && p[1] >= 0.0 && p[1] < 64.0);
            }
        }
        assert!((1..=2).contains(&ann.hands.len()));
    }
}

#[test]
fn same_seed_gives_byte_identical_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_dataset(16, 7, a.path(), &small()).unwrap();
    generate_dataset(16, 7, b.path(), &small()).unwrap();
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), MANIFEST_FILE), read(b.path(), MANIFEST_FILE));
    assert_eq!(read(a.path(), "images/000011.png"), read(b.path(), "images/000011.png"));
    let c = tempfile::tempdir().unwrap();
    generate_dataset(16, 8, c.path(), &small()).unwrap();
    assert_ne!(read(a.path(), MANIFEST_FILE), read(c.path(), MANIFEST_FILE));
}

#[test]
fn zero_images_is_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        generate_dataset(0, 1, dir.path(), &small()),
        Err(Error::Argument(_))
    ));
}

#[test]
fn missing_image_is_reported_by_path() {
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(2, 1, dir.path(), &small()).unwrap();
    std::fs::remove_file(dir.path().join("images/000001.png")).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Format { .. }));
    assert!(err.to_string().contains("000001.png"), "{err}");
}

#[test]
fn unknown_version_and_corrupt_manifest() {
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(1, 1, dir.path(), &small()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"version\": 1", "\"version\": 9", 1)).unwrap();
    match load_dataset(dir.path()).unwrap_err() {
        Error::Format { field, .. } => assert_eq!(field, "version"),
        other => panic!("unexpected {other}"),
    }
    std::fs::write(&path, "{ not json").unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Format { .. })));
    std::fs::remove_file(&path).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let err = generate_dataset(1, 1, &blocker.join("sub"), &small()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

use super::*;
use crate::graph::{build_hand_skeleton, mutual_reinforce};
use crate::nn::Activation;
use crate::tensor::{FeatureVolume, HeatmapStack};
use crate::JOINT_COUNT;

fn crop(config: &ModelConfig, seed: u64) -> FeatureVolume<f64> {
    let s = config.crop_size;
    FeatureVolume::from_fn(3, s, s, |c, y, x| {
        (((c as u64 * 7919 + y as u64 * 104729 + x as u64 * 1299709 + seed) % 1000) as f64) / 1000.0
    })
}

#[test]
fn sshfr_zero_input_gives_zero_output() {
    let cfg = ModelConfig::micro();
    let p = init_model::<f64>(&cfg, 1).unwrap();
    let out = sshfr_forward(&FeatureVolume::zeros(3, 64, 64), &p, &cfg).unwrap();
    assert_eq!(out.shape(), (16, 16, 16));
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn sshfr_rejects_wrong_crop_size() {
    let cfg = ModelConfig::micro();
    let p = init_model::<f32>(&cfg, 1).unwrap();
    let err = sshfr_forward(&FeatureVolume::zeros(3, 32, 32), &p, &cfg).unwrap_err();
    assert!(matches!(err, crate::Error::Contract(_)));
    assert!(sshfr_forward(&FeatureVolume::zeros(1, 64, 64), &p, &cfg).is_err());
}

#[test]
fn branch_spatial_sizes() {
    let cfg = ModelConfig::micro();
    let p = init_model::<f64>(&cfg, 2).unwrap();
    let x = FeatureVolume::from_fn(16, 16, 16, |c, y, x| ((c + y + x) as f64 * 0.1).sin());
    for (j, size) in [(1, 16), (2, 8), (3, 4)] {
        let out = branch_forward(&x, 1, j, &p, &cfg).unwrap();
        assert_eq!(out.shape(), (6, size, size), "branch {j}");
    }
    assert!(matches!(
        branch_forward(&x, 1, 4, &p, &cfg),
        Err(crate::Error::Contract(_))
    ));
    assert!(branch_forward(&x, 1, 0, &p, &cfg).is_err());
}

#[test]
fn residual_unit_with_zero_weights_is_identity() {
    // shallow output width equals C so branch 1 has no projection shortcut
    let cfg = ModelConfig {
        sshfr_channels: vec![8, 8, 8, 8, 8, 8, 8, 8, 8, 6],
        units_per_block: 2,
        ..ModelConfig::micro()
    };
    let mut p = init_model::<f64>(&cfg, 3).unwrap();
    assert!(p.id("msff1.branch1.cb1.ru1.shortcut.weight").is_none());
    for unit in 1..=2 {
        for conv in ["conv1", "conv2"] {
            let id = p.id(&format!("msff1.branch1.cb1.ru{unit}.{conv}.weight")).unwrap();
            p.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let x = FeatureVolume::from_fn(6, 16, 16, |c, y, x| ((c * 3 + y * 5 + x) as f64 * 0.37).cos());
    let out = branch_forward(&x, 1, 1, &p, &cfg).unwrap();
    assert_eq!(out, x);
}

#[test]
fn transpose_interleaves_branch_channels() {
    // channels labelled a1..a3 | b1..b3 | c1..c3 as constants 11,12,13 | 21,22,23 | 31,32,33
    let cfg = ModelConfig {
        branch_channels: 3,
        ..ModelConfig::micro()
    };
    let label = |branch: usize, size: usize| {
        FeatureVolume::<f64>::from_fn(3, size, size, move |c, _, _| (10 * branch + c + 1) as f64)
    };
    let out = fuse_transpose(&label(1, 16), &label(2, 8), &label(3, 4), &cfg).unwrap();
    assert_eq!(out.shape(), (18, 16, 16));
    let got: Vec<f64> = (0..18).map(|c| out.get(c, 5, 7)).collect();
    assert_eq!(
        got,
        vec![
            11.0, 21.0, 31.0, 12.0, 22.0, 32.0, 13.0, 23.0, 33.0, // transposed half
            11.0, 12.0, 13.0, 21.0, 22.0, 23.0, 31.0, 32.0, 33.0, // original
        ]
    );
    let no_tp = ModelConfig {
        use_transpose: false,
        ..cfg
    };
    let dup = fuse_transpose(&label(1, 16), &label(2, 8), &label(3, 4), &no_tp).unwrap();
    assert_eq!(dup.shape(), (18, 16, 16));
    assert_eq!(dup.channel(0), dup.channel(9));
    assert_eq!(dup.channel(3), dup.channel(12));
}

#[test]
fn fused_channel_count_for_c96() {
    let cfg = ModelConfig::default();
    let v = |s| FeatureVolume::<f32>::zeros(96, s, s);
    let out = fuse_transpose(&v(8), &v(4), &v(2), &cfg).unwrap();
    assert_eq!(out.channels(), 576);
    assert!(fuse_transpose(&v(8), &FeatureVolume::zeros(95, 4, 4), &v(2), &cfg).is_err());
}

#[test]
fn attention_toggle() {
    let x = FeatureVolume::from_fn(4, 5, 5, |c, y, x| (c + y * x) as f64 * 0.1);
    let mut cfg = ModelConfig::micro();
    assert_ne!(channel_attention(&x, &cfg), x);
    cfg.use_attention = false;
    assert_eq!(channel_attention(&x, &cfg), x);
}

#[test]
fn heatmap_head_normalizes_and_preserves_argmax() {
    let cfg = ModelConfig::micro();
    let p = init_model::<f64>(&cfg, 4).unwrap();
    let x = FeatureVolume::from_fn(36, 16, 16, |c, y, x| ((c * 7 + y * 3 + x * 11) as f64 * 0.19).sin());
    let hm = heatmap_head(&x, 1, &p).unwrap();
    for k in 0..JOINT_COUNT {
        let m = hm.channel(k);
        assert_eq!(m.iter().cloned().fold(f64::MIN, f64::max), 1.0);
        assert_eq!(m.iter().cloned().fold(f64::MAX, f64::min), 0.0);
    }
    // pre-normalization maps via the same 1x1 convolution
    let w = &p.by_name("msff1.head.weight").unwrap().data;
    let raw = FeatureVolume::from_fn(JOINT_COUNT, 16, 16, |k, y, xx| {
        (0..36).map(|c| w[k * 36 + c] * x.get(c, y, xx)).sum::<f64>()
    });
    assert_eq!(decode_joints(&raw), decode_joints(hm.volume()));
}

#[test]
fn heatmap_head_constant_map_is_zero() {
    let cfg = ModelConfig::micro();
    let mut p = init_model::<f64>(&cfg, 4).unwrap();
    let id = p.id("msff1.head.weight").unwrap();
    p.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
    let bid = p.id("msff1.head.bias").unwrap();
    p.get_mut(bid).data.iter_mut().for_each(|v| *v = 0.3);
    let x = FeatureVolume::from_fn(36, 16, 16, |c, y, x| (c + y + x) as f64);
    let hm = heatmap_head(&x, 1, &p).unwrap();
    assert!(hm.data().iter().all(|&v| v == 0.0));
}

#[test]
fn msff_shapes_and_aomr_toggle() {
    let mut cfg = ModelConfig::micro();
    let p = init_model::<f64>(&cfg, 5).unwrap();
    let x = FeatureVolume::from_fn(16, 16, 16, |c, y, x| ((c * 5 + y + 2 * x) as f64 * 0.07).cos().abs());
    let (next, hm) = msff_forward(&x, 2, &p, &cfg, None).unwrap();
    assert_eq!(next.shape(), (16, 16, 16));
    assert_eq!(hm.shape(), (21, 16, 16));
    // reinforced output equals graph reinforcement of the head output
    let b: Vec<_> = (1..=3).map(|j| branch_forward(&x, 2, j, &p, &cfg).unwrap()).collect();
    let fused = fuse_transpose(&b[0], &b[1], &b[2], &cfg).unwrap();
    let head = heatmap_head(&channel_attention(&fused, &cfg), 2, &p).unwrap();
    let reinforced = mutual_reinforce(&head, &build_hand_skeleton()).unwrap();
    for (a, e) in hm.data().iter().zip(reinforced.data()) {
        assert!((a - e).abs() < 1e-12);
    }
    cfg.use_aomr = false;
    let (_, plain) = msff_forward(&x, 2, &p, &cfg, None).unwrap();
    assert_eq!(plain, head);
    assert!(msff_forward(&x, 3, &p, &cfg, None).is_err());
}

#[test]
fn model_forward_stage_count_and_determinism() {
    for n in [1, 3] {
        let cfg = ModelConfig {
            num_msff: n,
            ..ModelConfig::micro()
        };
        let p = init_model::<f32>(&cfg, 6).unwrap();
        let c = crop(&cfg, 1).cast::<f32>();
        let a = model_forward(&c, &p, &cfg, None).unwrap();
        assert_eq!(a.len(), n);
        for hm in &a {
            assert_eq!(hm.shape(), (21, 16, 16));
            assert!(hm.is_finite());
        }
        assert_eq!(a, model_forward(&c, &p, &cfg, None).unwrap());
    }
}

#[test]
fn del_sshfr_uses_stem_projection() {
    let cfg = ModelConfig {
        use_sshfr: false,
        ..ModelConfig::micro()
    };
    let p = init_model::<f64>(&cfg, 7).unwrap();
    assert!(p.id("stem.weight").is_some());
    assert!(p.id("sshfr.conv1.weight").is_none());
    let out = model_forward(&crop(&cfg, 2), &p, &cfg, None).unwrap();
    assert_eq!(out.len(), 2);
}

#[test]
fn supervision_reweights_forwarded_maps_only() {
    let cfg = ModelConfig::micro();
    let p = init_model::<f64>(&cfg, 8).unwrap();
    let c = crop(&cfg, 3);
    let gt: crate::Joints = std::array::from_fn(|k| [(k % 16) as f64, (k / 2) as f64]);
    let occ = [false; JOINT_COUNT];
    let sup = Supervision::new(&gt, &occ);
    let trace = forward_trace(&c, &p, &cfg, Some(&sup)).unwrap();
    let plain = model_forward(&c, &p, &cfg, None).unwrap();
    // stage 1 heatmaps do not depend on supervision, later stages do
    assert_eq!(trace.heatmaps()[0], plain[0]);
    let f = trace.stages[0].reweight.unwrap();
    assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_ne!(trace.heatmaps()[1], plain[1]);
}

#[test]
fn decode_tie_break_and_delta() {
    let mut v = FeatureVolume::<f64>::zeros(21, 32, 32);
    v.set(0, 20, 10, 1.0);
    let plane = v.channel_mut(1);
    plane[5] = 0.8;
    plane[9] = 0.8;
    let g = FeatureVolume::from_fn(21, 64, 64, |_, y, x| {
        (-(((x as f64 - 32.0).powi(2) + (y as f64 - 32.0).powi(2)) / 8.0)).exp()
    });
    let j = decode_joints(&v);
    assert_eq!(j[0], [10.0, 20.0]);
    assert_eq!(j[1], [5.0, 0.0]);
    assert_eq!(decode_joints(&g)[7], [32.0, 32.0]);
    let _ = HeatmapStack::new(g).unwrap();
}

#[test]
fn smooth_activation_is_selectable() {
    let cfg = ModelConfig {
        activation: Activation::Smooth,
        ..ModelConfig::micro()
    };
    let p = init_model::<f64>(&cfg, 9).unwrap();
    let out = sshfr_forward(&FeatureVolume::zeros(3, 64, 64), &p, &cfg).unwrap();
    assert!(out.data().iter().all(|&v| v > 0.0));
}

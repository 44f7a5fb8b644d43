use msff_core::model::{init_model, ModelConfig};
use msff_core::nn::Activation;
use msff_core::synth::gaussian_targets;
use msff_core::tensor::FeatureVolume;
use msff_core::train::{sample_loss, sample_loss_and_grad, Labels, StageWeighting};
use msff_core::{Joints, JOINT_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs())
}

#[test]
fn total_loss_gradient_matches_central_differences() {
    let config = ModelConfig {
        activation: Activation::Smooth,
        ..ModelConfig::micro()
    };
    let mut params = init_model::<f64>(&config, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let crop = FeatureVolume::from_fn(3, 64, 64, |_, _, _| rng.random::<f64>());
    let gt: Joints = std::array::from_fn(|_| [rng.random_range(0.0..15.0), rng.random_range(0.0..15.0)]);
    let mut occluded = [false; JOINT_COUNT];
    occluded[7] = true;
    let target = gaussian_targets(&gt, 2.0, 16, &occluded).unwrap();
    let labels = Labels {
        target: &target,
        gt: &gt,
        occluded: &occluded,
    };
    let weighting = StageWeighting::Normalized { epsilon: 1e-3 };
    let (base, grads) = sample_loss_and_grad(&params, &crop, labels, &config, weighting, None).unwrap();
    let frozen = base.frozen();
    let total = params.scalar_count();
    // gradients this far below the largest one are lost in the rounding of
    // the finite difference; those only need to agree in absolute terms
    let floor = 1e-6 * (0..total).fold(0.0f64, |m, i| m.max(grads.flat_get(i).abs()));
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 40 {
        let i = rng.random_range(0..total);
        let name = params.name(params.locate(i).unwrap().0).to_string();
        if name.starts_with("msff2.proj") {
            // the last module's projection feeds nothing
            assert_eq!(grads.flat_get(i), 0.0);
            continue;
        }
        let w = params.flat_get(i);
        params.flat_set(i, w + STEP);
        let up = sample_loss(&params, &crop, labels, &config, weighting, Some(&frozen))
            .unwrap()
            .total;
        params.flat_set(i, w - STEP);
        let down = sample_loss(&params, &crop, labels, &config, weighting, Some(&frozen))
            .unwrap()
            .total;
        params.flat_set(i, w);
        let numeric = (up - down) / (2.0 * STEP);
        if grads.flat_get(i).abs().max(numeric.abs()) < floor {
            assert!((grads.flat_get(i) - numeric).abs() < 1e-3 * floor, "{name}[{i}]");
            continue;
        }
        let err = relative_error(grads.flat_get(i), numeric);
        println!(
            "{name}[{i}] analytic {:.6e} numeric {:.6e} rel {:.2e}",
            grads.flat_get(i),
            numeric,
            err
        );
        worst = worst.max(err);
        checked += 1;
    }
    assert!(worst < 1e-3, "worst relative error {worst}");
}

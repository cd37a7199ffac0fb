use proptest::prelude::*;
use tfus_core::metrics::{
    composite_loss, describe, focal_position_error, gradient_loss, max_pressure_error, relative_l2, summarize,
    weighted_mse, FieldMetrics, MetricParams,
};
use tfus_core::rng::SplitMix64;
use tfus_core::{GridSpec, ScalarField3D, Units};

fn grid(n: usize) -> GridSpec {
    GridSpec::isotropic([n; 3], 0.5).unwrap()
}

fn random_field(n: usize, rng: &mut SplitMix64) -> ScalarField3D {
    ScalarField3D::from_fn(grid(n), Units::Pascal, |_, _, _| rng.uniform(0.0, 1.0) as f32).unwrap()
}

fn delta(n: usize, at: [usize; 3], value: f32) -> ScalarField3D {
    ScalarField3D::from_fn(grid(n), Units::Pascal, |i, j, k| if [i, j, k] == at { value } else { 0.1 }).unwrap()
}

fn scaled(f: &ScalarField3D, s: f32) -> ScalarField3D {
    f.with_values(f.values().iter().map(|v| v * s).collect()).unwrap()
}

fn plain_mse(a: &ScalarField3D, b: &ScalarField3D) -> f64 {
    let sum: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
    sum / a.values().len() as f64
}

#[test]
fn relative_l2_examples() {
    let gt = random_field(8, &mut SplitMix64::new(3));
    assert_eq!(relative_l2(&gt, &gt).unwrap(), 0.0);
    let zero = ScalarField3D::zeros(*gt.grid(), Units::Pascal);
    assert!((relative_l2(&zero, &gt).unwrap() - 1.0).abs() < 1e-12);
    assert!((relative_l2(&scaled(&gt, 2.0), &gt).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn focal_position_error_examples() {
    let gt = delta(24, [10, 10, 10], 5.0);
    let pred = delta(24, [13, 14, 10], 5.0);
    assert_eq!(focal_position_error(&gt, &gt, [0.5; 3]).unwrap(), 0.0);
    assert!((focal_position_error(&pred, &gt, [0.5; 3]).unwrap() - 2.5).abs() < 1e-12);
}

#[test]
fn focal_position_error_ignores_monotone_transforms() {
    let mut rng = SplitMix64::new(11);
    let a = random_field(10, &mut rng);
    let b = random_field(10, &mut rng);
    let cube = |f: &ScalarField3D| f.with_values(f.values().iter().map(|v| v * v * v + 2.0).collect()).unwrap();
    let before = focal_position_error(&a, &b, [0.5; 3]).unwrap();
    assert_eq!(focal_position_error(&cube(&a), &cube(&b), [0.5; 3]).unwrap(), before);
}

#[test]
fn max_pressure_error_examples() {
    let gt = delta(8, [2, 3, 4], 1.0);
    assert_eq!(max_pressure_error(&gt, &gt).unwrap(), 0.0);
    let low = delta(8, [2, 3, 4], 0.8);
    assert!((max_pressure_error(&low, &gt).unwrap() - 20.0).abs() < 1e-4);
    assert!((max_pressure_error(&scaled(&gt, 2.0), &gt).unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn weighted_mse_examples() {
    let mut rng = SplitMix64::new(5);
    let gt = random_field(8, &mut rng);
    let pred = random_field(8, &mut rng);
    assert_eq!(weighted_mse(&gt, &gt, 5.0).unwrap(), 0.0);
    assert!((weighted_mse(&pred, &gt, 0.0).unwrap() - plain_mse(&pred, &gt)).abs() < 1e-12);
    let flat = ScalarField3D::filled(grid(8), 0.7, Units::Pascal);
    for alpha in [0.5, 5.0, 20.0] {
        let got = weighted_mse(&pred, &flat, alpha).unwrap();
        assert!((got - plain_mse(&pred, &flat)).abs() < 1e-12 * got.max(1.0), "alpha {alpha}");
    }
}

#[test]
fn weighted_mse_with_zero_alpha_is_plain_mse_on_random_pairs() {
    let mut rng = SplitMix64::new(2024);
    for _ in 0..100 {
        let a = random_field(6, &mut rng);
        let b = random_field(6, &mut rng);
        let w = weighted_mse(&a, &b, 0.0).unwrap();
        assert!((w - plain_mse(&a, &b)).abs() <= 1e-9);
    }
}

#[test]
fn gradient_loss_examples() {
    let gt = random_field(12, &mut SplitMix64::new(8));
    assert_eq!(gradient_loss(&gt, &gt, None).unwrap(), 0.0);
    let shifted = gt.with_values(gt.values().iter().map(|v| v + 3.0).collect()).unwrap();
    assert!(gradient_loss(&shifted, &gt, None).unwrap() < 1e-10);
    let s = 0.25;
    let ramp = ScalarField3D::from_fn(*gt.grid(), Units::Pascal, |i, j, k| gt.get(i, j, k) + (s * i as f64) as f32).unwrap();
    let got = gradient_loss(&ramp, &gt, None).unwrap();
    assert!((got - s * s / 3.0).abs() < 1e-6, "{got}");
}

#[test]
fn composite_loss_examples() {
    let mut rng = SplitMix64::new(9);
    let gt = random_field(8, &mut rng);
    let pred = random_field(8, &mut rng);
    let defaults = MetricParams::default();
    assert_eq!((defaults.alpha_weight, defaults.lambda), (5.0, 0.1));
    assert_eq!(composite_loss(&gt, &gt, &defaults).unwrap(), 0.0);
    let no_grad = MetricParams { lambda: 0.0, ..defaults };
    assert_eq!(composite_loss(&pred, &gt, &no_grad).unwrap(), weighted_mse(&pred, &gt, 5.0).unwrap());
}

#[test]
fn summary_examples() {
    let one = describe(&[4.5]).unwrap();
    assert_eq!((one.median, one.mean, one.std), (4.5, 4.5, 0.0));
    let three = describe(&[1.0, 2.0, 3.0]).unwrap();
    assert_eq!((three.median, three.mean), (2.0, 2.0));
    assert!((three.std - 0.816_496_580_927_726).abs() < 1e-12);
    let sample = |v: f64| FieldMetrics { relative_l2: v, composite: 2.0 * v, ..FieldMetrics::default() };
    let a = summarize(&[sample(0.3), sample(0.1), sample(0.7)]).unwrap();
    let b = summarize(&[sample(0.7), sample(0.3), sample(0.1)]).unwrap();
    assert_eq!(a, b);
    assert!(summarize(&[]).is_err());
}

proptest! {
    #[test]
    fn relative_l2_is_scale_invariant(seed in any::<u64>(), s in 0.01f32..100.0) {
        let mut rng = SplitMix64::new(seed);
        let a = random_field(4, &mut rng);
        let b = random_field(4, &mut rng);
        let base = relative_l2(&a, &b).unwrap();
        let both = relative_l2(&scaled(&a, s), &scaled(&b, s)).unwrap();
        prop_assert!((base - both).abs() < 1e-5 * base.max(1e-6));
    }

    #[test]
    fn describe_is_permutation_invariant(mut v in prop::collection::vec(-1e3f64..1e3, 1..40), seed in any::<u64>()) {
        let before = describe(&v).unwrap();
        let mut rng = SplitMix64::new(seed);
        for i in (1..v.len()).rev() {
            let j = rng.range_inclusive(0, i as i64) as usize;
            v.swap(i, j);
        }
        prop_assert_eq!(describe(&v).unwrap(), before);
    }
}

use proptest::prelude::*;

use labeldp::losses::{auc_risk, ber_risk, symmetry_defect};
use labeldp::{LabelVector, LossSpec};

fn fd(spec: &LossSpec, z: f64) -> f64 {
    let h = 1e-6 * z.abs().max(1.0);
    (spec.value(z + h) - spec.value(z - h)) / (2.0 * h)
}

fn near_kink(spec: &LossSpec, z: f64) -> bool {
    spec.kinks().iter().any(|k| (z - k).abs() < 1e-3)
}

#[test]
fn barrier_closed_form() {
    let l = LossSpec::barrier(200.0, 50.0).unwrap();
    assert_eq!(l.value(0.0), 50.0);
    assert_eq!(l.value(50.0), 0.0);
    assert_eq!(l.value(-50.0), 100.0);
    assert_eq!(l.value(60.0), 2000.0);
    // steep wall past the left kink
    assert_eq!(l.value(-60.0), -200.0 * (50.0 - 60.0) + 50.0);
    assert_eq!(l.grad(10.0).unwrap(), -1.0);
    assert_eq!(l.grad(60.0).unwrap(), 200.0);
    assert_eq!(l.grad(50.0).unwrap(), (200.0 - 1.0) / 2.0);
}

#[test]
fn symmetric_losses() {
    let barrier = LossSpec::barrier(3.0, 2.0).unwrap();
    assert!(symmetry_defect(&barrier, 2.0, 4001).unwrap() <= 1e-12);
    assert!(symmetry_defect(&LossSpec::Sigmoid, 30.0, 4001).unwrap() <= 1e-12);
    assert!(symmetry_defect(&LossSpec::Unhinged, 1e3, 4001).unwrap() <= 1e-12);
    // a tie counts as an error, so only the off-zero pairs sum to 1
    assert!([0.1, 2.0, 7.5].iter().all(|&x| LossSpec::ZeroOne.value(x) + LossSpec::ZeroOne.value(-x) == 1.0));
    for l in [LossSpec::Logistic, LossSpec::Squared, LossSpec::Hinge, LossSpec::Savage] {
        assert!(symmetry_defect(&l, 2.0, 401).unwrap() > 1e-3, "{l}");
    }
    // outside [-r, r] the barrier is no longer symmetric
    assert!(symmetry_defect(&barrier, 3.0, 401).unwrap() > 1e-3);
}

#[test]
fn zero_one_has_no_gradient() {
    assert!(LossSpec::ZeroOne.grad(0.3).is_err());
    assert!(!LossSpec::ZeroOne.is_trainable());
    assert!(LossSpec::trainable().iter().all(|l| l.is_trainable()));
    assert_eq!(LossSpec::ZeroOne.value(0.0), 1.0);
}

#[test]
fn parse_round_trip() {
    for l in LossSpec::trainable().iter().chain([&LossSpec::ZeroOne, &LossSpec::barrier(200.0, 50.0).unwrap()]) {
        assert_eq!(l.to_string().parse::<LossSpec>().unwrap(), *l);
        let json = serde_json::to_string(l).unwrap();
        assert_eq!(serde_json::from_str::<LossSpec>(&json).unwrap(), *l);
    }
    assert_eq!("barrier".parse::<LossSpec>().unwrap(), LossSpec::DEFAULT_BARRIER);
    assert!("barrier:b=0.5".parse::<LossSpec>().is_err());
    assert!("hinge:b=2".parse::<LossSpec>().is_err());
    assert!("cosh".parse::<LossSpec>().is_err());
}

#[test]
fn pairwise_risk_hand_value() {
    let r = auc_risk(&[1.0, 2.0], &[0.0], &LossSpec::Hinge).unwrap();
    assert!((r - 0.0).abs() < 1e-15);
    let r = auc_risk(&[0.0], &[0.5, 1.0], &LossSpec::ZeroOne).unwrap();
    assert_eq!(r, 1.0);
    assert!(auc_risk(&[], &[0.0], &LossSpec::Hinge).is_err());
}

fn finite_z() -> impl Strategy<Value = f64> {
    -20.0f64..20.0
}

fn barrier_params() -> impl Strategy<Value = LossSpec> {
    (1.01f64..300.0, 0.01f64..100.0).prop_map(|(b, r)| LossSpec::barrier(b, r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn gradients_match_finite_differences(z in finite_z(), idx in 0usize..7) {
        let spec = LossSpec::trainable()[idx];
        prop_assume!(!near_kink(&spec, z));
        let g = spec.grad(z).unwrap();
        let f = fd(&spec, z);
        prop_assert!((g - f).abs() <= 1e-6 * g.abs().max(1.0), "{spec} z={z}: {g} vs {f}");
    }

    #[test]
    fn barrier_gradient_matches(spec in barrier_params(), z in -500.0f64..500.0) {
        prop_assume!(!near_kink(&spec, z));
        let g = spec.grad(z).unwrap();
        prop_assert!((g - fd(&spec, z)).abs() <= 1e-6 * g.abs().max(1.0));
    }

    #[test]
    fn barrier_convex_and_nonnegative(spec in barrier_params(), x in -500.0f64..500.0, y in -500.0f64..500.0, t in 0.0f64..=1.0) {
        let m = t * x + (1.0 - t) * y;
        let lhs = spec.value(m);
        let rhs = t * spec.value(x) + (1.0 - t) * spec.value(y);
        prop_assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
        prop_assert!(spec.value(x) >= 0.0);
    }

    #[test]
    fn barrier_symmetric_in_window(spec in barrier_params(), u in -1.0f64..=1.0) {
        let LossSpec::Barrier { r, .. } = spec else { unreachable!() };
        let z = u * r;
        prop_assert!((spec.value(z) + spec.value(-z) - 2.0 * r).abs() <= 1e-9 * r.max(1.0));
    }

    #[test]
    fn zero_one_scale_invariant(scores in prop::collection::vec(-5.0f64..5.0, 2..40), c in 0.01f64..100.0) {
        let n = scores.len();
        let labels = LabelVector::new((0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect()).unwrap();
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        let a = ber_risk(&scores, &labels, &LossSpec::ZeroOne).unwrap();
        let b = ber_risk(&scaled, &labels, &LossSpec::ZeroOne).unwrap();
        prop_assert_eq!(a, b);
    }

    /// For a symmetric loss the risks under a label vector and its negation
    /// always sum to the symmetry constant.
    #[test]
    fn symmetric_risk_duality(spec in barrier_params(), u in prop::collection::vec(-1.0f64..=1.0, 2..40)) {
        let LossSpec::Barrier { r, .. } = spec else { unreachable!() };
        let scores: Vec<f64> = u.iter().map(|x| x * r).collect();
        let labels = LabelVector::new((0..scores.len()).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect()).unwrap();
        let a = ber_risk(&scores, &labels, &spec).unwrap();
        let b = ber_risk(&scores, &labels.negated(), &spec).unwrap();
        prop_assert!((a + b - 2.0 * r).abs() <= 1e-9 * r.max(1.0));
    }
}

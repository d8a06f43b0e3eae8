use approx::assert_abs_diff_eq;

use super::*;
use crate::horseshoe::{make_affine_example, make_baker, make_baker_with, CustomBranch, FiberLaw};
use crate::numeric::Interval;
use crate::symbolic::{cylinder_diameter, Word};
use crate::{Execution, GhmError, GhmSpec};

fn w(s: &[u16]) -> Word {
    Word::from(s)
}

fn curved() -> GhmSpec {
    let law = |c: f64| FiberLaw { slope0: 0.45, slope1: 0.0, quad: 0.1, offset0: c, offset1: 0.0 };
    GhmSpec::custom_skew(
        &[CustomBranch { base: [0.0, 0.5], fiber: law(0.0) }, CustomBranch { base: [0.5, 1.0], fiber: law(0.4) }],
        0.5,
        None,
        Interval::new(-0.1, 1.1),
    )
    .unwrap()
}

#[test]
fn baker_unstable_direction_is_horizontal() {
    let spec = make_baker(0.7).unwrap();
    let h = Word(vec![0, 1, 1, 0, 1, 0, 0, 0, 1, 1]);
    let z = point_on_cylinder(&spec, &h, 0.3, 0.4).unwrap();
    for depth in [0, 1, 10] {
        let u = unstable_direction(&spec, &h, z, depth).unwrap();
        assert_eq!(u.vector, [1.0, 0.0]);
        assert_eq!(u.slope, 0.0);
    }
    assert!(unstable_direction(&spec, &w(&[0]), z, 3).is_err());
}

#[test]
fn affine_unstable_direction_converges_within_bound() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let h = Word(vec![1; 20]);
    let z = point_on_cylinder(&spec, &h, 0.3, 0.2).unwrap();
    let d10 = unstable_direction(&spec, &h, z, 10).unwrap();
    let d20 = unstable_direction(&spec, &h, z, 20).unwrap();
    assert!((d10.slope - d20.slope).abs() <= d10.error_bound);
    assert!(d10.slope.abs() <= spec.alpha);
    assert!(d20.error_bound < d10.error_bound);
}

#[test]
fn stable_distortion_examples() {
    let baker = make_baker(0.6).unwrap();
    let word = w(&[1, 0, 1, 1]);
    let p = |spec: &GhmSpec, word: &Word, x: f64, y: f64| point_on_cylinder(spec, word, x, y).unwrap();
    assert_eq!(stable_distortion_ratio(&baker, &word, p(&baker, &word, 0.4, 0.1), p(&baker, &word, 0.4, 0.5)).unwrap(), 1.0);
    let affine = make_affine_example(0.8, 0.55).unwrap();
    let ones = w(&[1, 1, 1]);
    assert_eq!(stable_distortion_ratio(&affine, &ones, p(&affine, &ones, 0.3, 0.1), p(&affine, &ones, 0.3, 0.9)).unwrap(), 1.0);
    assert!(matches!(
        stable_distortion_ratio(&affine, &word, [0.3, 0.1], [0.4, 0.1]),
        Err(GhmError::DifferentFibers(..))
    ));

    // y-dependent contraction: distortion appears but stays bounded
    let spec = curved();
    let ratio = |n: usize| {
        let word = Word(vec![0; n]);
        let u = crate::symbolic::fiber_image(&spec, &word, 0.3, false).unwrap().unwrap();
        stable_distortion_ratio(&spec, &word, [0.3, u.lerp(0.05)], [0.3, u.lerp(0.95)]).unwrap()
    };
    let (r10, r20) = (ratio(10), ratio(20));
    assert!(r10 > 1.0);
    assert!((r20 - r10).abs() < 0.05 * r10, "{r10} {r20}");
}

#[test]
fn fiber_ratio_examples() {
    let baker = make_baker(0.7).unwrap();
    assert_eq!(fiber_ratio_constant(&baker, &w(&[0, 1, 1, 0]), 129).unwrap(), 1.0);
    let (a, b) = (0.8, 0.55);
    let affine = make_affine_example(a, b).unwrap();
    for s in [0, 1] {
        assert_abs_diff_eq!(fiber_ratio_constant(&affine, &w(&[s]), 129).unwrap(), a / b, epsilon = 1e-12);
    }
}

#[test]
fn fiber_ratio_is_stable_in_depth() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let sup = |n: usize| {
        (1..=n)
            .flat_map(|k| Word::all_of_length(2, k))
            .map(|w| fiber_ratio_constant(&spec, &w, 129).unwrap())
            .fold(1.0, f64::max)
    };
    let (k8, k12) = (sup(8), sup(12));
    assert!(k8 >= 1.0 && (k12 - k8).abs() < 0.05 * k8, "{k8} {k12}");
}

#[test]
fn baker_margins_are_scale_free() {
    let spec = make_baker(0.6).unwrap();
    let m0 = margin_constants(&spec, &Word::empty(), 33).unwrap();
    assert_abs_diff_eq!(m0.lower, 0.1 / 1.2, epsilon = 1e-12);
    assert_abs_diff_eq!(m0.upper, 0.1 / 1.2, epsilon = 1e-12);
    for n in 1..=6 {
        for word in Word::all_of_length(2, n) {
            assert_abs_diff_eq!(margin_constants(&spec, &word, 33).unwrap().k3, 0.1 / 1.2, epsilon = 1e-12);
        }
    }
    let thin = make_baker_with(0.5, Interval::new(-1e-14, 1.0 + 1e-14)).unwrap();
    assert!(matches!(margin_constants(&thin, &w(&[0]), 33), Err(GhmError::Degenerate(_))));
}

#[test]
fn corollary_holds_below_threshold_and_fails_above() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let word = w(&[0, 1, 1, 0, 1]);
    let k3 = margin_constants(&spec, &word, 129).unwrap().k3;
    let k2 = fiber_ratio_constant(&spec, &word, 129).unwrap();
    let d = cylinder_diameter(&spec, &word, 257).unwrap();
    let safe = 0.9 * k3 / k2 * d;
    assert_eq!(corollary_check(&spec, &word, safe, 1000, 1).unwrap().violations, 0);
    assert!(corollary_check(&spec, &word, 10.0 * k3 / k2 * d, 1000, 1).unwrap().violations > 0);
}

#[test]
fn baker_adapted_derivative_is_diagonal() {
    for lambda in [0.3, 0.5, 0.7] {
        let spec = make_baker(lambda).unwrap();
        let z = spec.branches[1].forward([0.7, 0.5]);
        let d = adapted_derivative(&spec, 1, z, 0.0, 1e-3).unwrap();
        for m in [d.at_z, d.at_w] {
            assert_abs_diff_eq!(m[0][0], 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(m[1][1], 1.0 / lambda, epsilon = 1e-12);
            assert_eq!(m[0][1], 0.0);
            assert_eq!(m[1][0], 0.0);
        }
        let s = adapted_lattice(&spec, 16, 12, 1e-3, Execution::Sequential).unwrap();
        assert_eq!(s.c4, 0.0);
        assert_abs_diff_eq!(s.cone_ratio, lambda / 2.0, epsilon = 1e-12);
        assert!(s.cone_margin >= -1e-12);
        assert!(s.matrix_mismatch < 1e-12);
    }
}

#[test]
fn affine_adapted_frame_splits_the_derivative() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let s = adapted_lattice(&spec, 64, 24, 1e-3, Execution::Parallel).unwrap();
    assert_eq!(s.samples, 2 * 64 * 64);
    assert!(s.g1y_at_z < 1e-12);
    assert!(s.matrix_mismatch < 1e-12);
    assert!(s.c3 > 0.0 && s.c2 > 0.0);
    assert!(s.cone_margin >= 0.0, "{s:?}");
    assert!(!s.c4_k0_feasible);
    assert_eq!(s, adapted_lattice(&spec, 64, 24, 1e-3, Execution::Sequential).unwrap());
}

#[test]
fn baker_report_is_exact() {
    let spec = make_baker(0.6).unwrap();
    let opts = DiagnosticsOptions { depth: 6, lattice_n: 16, ..Default::default() };
    let r = diagnostics_report(&spec, &opts).unwrap();
    assert_abs_diff_eq!(r.k_stable, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(r.k2, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(r.k4, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(r.k3, 0.1 / 1.2, epsilon = 1e-12);
    assert_abs_diff_eq!(r.c2, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(r.c3, 1.0 / 0.6, epsilon = 1e-12);
    assert_eq!(r.c4, 0.0);
    assert_eq!(r.corollary.violations, 0);
    assert!(r.to_json().contains("\"k2\""));
}

#[test]
fn affine_report_constants_are_bounded() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let opts = DiagnosticsOptions { depth: 8, lattice_n: 16, ..Default::default() };
    let r = diagnostics_report(&spec, &opts).unwrap();
    assert!(r.k_stable >= 1.0 && r.k2 >= 1.0 && r.k4 >= 1.0);
    assert!(r.k3 > 0.0 && r.c3 > 0.0);
    assert_eq!(r.corollary.violations, 0);
}

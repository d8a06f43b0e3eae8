use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::horseshoe::{make_affine_example, make_baker};
use crate::symbolic::{cylinder_diameter, EnumerateOptions, Word};
use crate::Execution;

fn w(s: &[u16]) -> Word {
    Word::from(s)
}

fn fit(spec: &crate::GhmSpec, depth: usize) -> FatnessFit {
    fatness_fit(spec, depth, &FatnessOptions { x_grid_n: 65, ..Default::default() }).unwrap()
}

#[test]
fn baker_fatness_exponent() {
    let oracle = 2f64.ln() / (1.0 / 0.7f64).ln() - 1.0;
    let f = fit(&make_baker(0.7).unwrap(), 12);
    assert!(f.passed);
    assert_abs_diff_eq!(f.epsilon.unwrap(), oracle, epsilon = 0.02);
    assert!(f.per_word_slack >= 0.0);
    assert_eq!(f.words_used, (1..=12).map(|n| 1usize << n).sum::<usize>());
}

#[test]
fn thin_baker_is_not_fat() {
    let f = fit(&make_baker(0.4).unwrap(), 10);
    assert!(!f.passed);
    assert_eq!(f.epsilon, None);
}

#[test]
fn affine_example_is_fat() {
    let f = fit(&make_affine_example(0.8, 0.55).unwrap(), 12);
    assert!(f.passed, "{f:?}");
    assert!(f.epsilon.unwrap() > 0.0);
}

#[test]
fn fatness_fit_is_scale_consistent() {
    for spec in [make_baker(0.7).unwrap(), make_affine_example(0.8, 0.55).unwrap()] {
        let opts = FatnessOptions { min_depth: 2, x_grid_n: 65, ..Default::default() };
        let a = fatness_fit(&spec, 8, &opts).unwrap().epsilon.unwrap();
        let b = fatness_fit(&spec, 12, &opts).unwrap().epsilon.unwrap();
        assert!((a - b).abs() < 0.05, "{a} vs {b}");
    }
}

#[test]
fn fatness_rejects_shallow_depth() {
    assert!(fatness_fit(&make_baker(0.7).unwrap(), 1, &FatnessOptions::default()).is_err());
}

#[test]
fn fatness_budget_flags_partial_fit() {
    let opts = FatnessOptions { max_words: 100, x_grid_n: 33, ..Default::default() };
    let f = fatness_fit(&make_baker(0.7).unwrap(), 10, &opts).unwrap();
    assert!(f.partial);
    assert!(f.depth_used < 10);
}

#[test]
fn baker_first_strips_are_not_transversal() {
    for lambda in [0.5, 0.7, 0.9] {
        let spec = make_baker(lambda).unwrap();
        let v = classify_transversal(&spec, &w(&[0]), &w(&[1]), &TransversalityOptions::new(0.05)).unwrap();
        assert_eq!(v.status, TransversalStatus::NonTransversal, "lambda {lambda}");
        let wit = v.witness.unwrap();
        assert!(wit.position_gap <= 0.05 && wit.slope_gap <= 0.05);
    }
}

#[test]
fn huge_delta_is_trivially_non_transversal() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let v = classify_transversal(&spec, &w(&[0, 1]), &w(&[1, 1]), &TransversalityOptions::new(1.5)).unwrap();
    assert_eq!(v.status, TransversalStatus::NonTransversal);
}

#[test]
fn affine_first_strips_at_quarter_gap() {
    // at a point where both leaves meet, their slopes differ by (a-b)(1-a),
    // far below (a-b)/4, so no envelope can separate them
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let v = classify_transversal(&spec, &w(&[0]), &w(&[1]), &TransversalityOptions::new(0.0625)).unwrap();
    assert_ne!(v.status, TransversalStatus::Transversal);
}

#[test]
fn separated_words_are_transversal_and_subwords_agree() {
    // a thin baker has gaps between its strips
    let spec = make_baker(0.4).unwrap();
    let opts = TransversalityOptions::new(0.05);
    let words = Word::all_of_length(2, 3);
    let mut found = 0;
    for a in &words {
        for b in &words {
            let v = classify_transversal(&spec, a, b, &opts).unwrap();
            if v.status == TransversalStatus::Transversal {
                found += 1;
                let wit = v.witness.unwrap();
                assert!(wit.position_gap > 0.05 || wit.slope_gap > 0.05);
                // every older extension inherits the classification
                for s in 0..2u16 {
                    let (ea, eb) = (Word::from(&[&[s], a.symbols()].concat()[..]), Word::from(&[&[1 - s], b.symbols()].concat()[..]));
                    assert_eq!(classify_transversal(&spec, &ea, &eb, &opts).unwrap().status, TransversalStatus::Transversal);
                }
            }
            assert_eq!(subword_violation(&spec, a, b, &opts).unwrap(), None, "{a:?} {b:?}");
        }
    }
    assert!(found > 0);
}

#[test]
fn classify_rejects_bad_delta() {
    let spec = make_baker(0.7).unwrap();
    assert!(classify_transversal(&spec, &w(&[0]), &w(&[1]), &TransversalityOptions::new(0.0)).is_err());
    assert!(classify_transversal(&spec, &w(&[0]), &w(&[7]), &TransversalityOptions::new(0.1)).is_err());
}

#[test]
fn overlap_volume_examples() {
    let half = make_baker(0.5).unwrap();
    assert_abs_diff_eq!(overlap_volume(&half, &w(&[0]), &w(&[1]), 256, FiberSet::Core).unwrap(), 0.0);
    // identical words give the area of the extended image: λ|J|
    let v = overlap_volume(&half, &w(&[1]), &w(&[1]), 256, FiberSet::Extended).unwrap();
    assert_abs_diff_eq!(v, 0.5 * 1.2, epsilon = 1e-12);
    assert!(overlap_volume(&half, &w(&[0]), &w(&[1]), 32, FiberSet::Core).is_err());

    // affine strips over x: [c(x), c(x)+s(x)] and [0, s(x)] with
    // s = a + (b−a)x, c = (1−a)(a−b)x; the overlap integrates in closed form
    let (a, b) = (0.8, 0.55);
    let spec = make_affine_example(a, b).unwrap();
    let oracle = a + (b - a) / 2.0 - (1.0 - a) * (a - b) / 2.0;
    let v = overlap_volume(&spec, &w(&[0]), &w(&[1]), 1024, FiberSet::Core).unwrap();
    assert_abs_diff_eq!(v, oracle, epsilon = 1e-9);
}

#[test]
fn tail_envelope_contracts_into_cone() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let s0 = tail_slope_envelope(&spec, 0);
    let s6 = tail_slope_envelope(&spec, 6);
    assert!(s6.len() < s0.len());
    assert!(s6.lo >= -spec.alpha && s6.hi <= spec.alpha);
    // baker leaves are horizontal: the cone collapses towards 0
    let baker = tail_slope_envelope(&make_baker(0.7).unwrap(), 8);
    assert!(baker.lo.abs() < 0.5 * 0.35f64.powi(8) + 1e-12 && baker.hi.abs() < 0.5 * 0.35f64.powi(8) + 1e-12);
}

fn enum_opts() -> EnumerateOptions {
    EnumerateOptions { x_grid_n: 65, ..Default::default() }
}

#[test]
fn half_baker_ntr_sum_vanishes() {
    let spec = make_baker(0.5).unwrap();
    let rep = ntr_sum(&spec, 1.0 / 16.0, &NtrOptions::new(0.05), &enum_opts()).unwrap();
    assert_eq!(rep.sum, 0.0);
    assert!(!rep.sampled);
    // the diagonal alone gives Σ|I|² |U|, with |U| = 2⁻ⁿ per word of length n
    assert!(rep.full_sum > 0.0);
}

#[test]
fn coarse_ntr_sum_is_bounded_by_overlap_budget() {
    // at r close to |J| the sum is at most r⁻² Σ|I_A||I_B| vol ≤ r⁻²
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let r = 0.7;
    let rep = ntr_sum(&spec, r, &NtrOptions::new(0.0625), &enum_opts()).unwrap();
    assert!(rep.words <= 4);
    assert!(rep.sum.is_finite() && rep.sum >= 0.0 && rep.sum <= r.powi(-2));
}

#[test]
fn ntr_sum_execution_independent_and_sampling_consistent() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let r = 1.0 / 32.0;
    let mut opts = NtrOptions::new(0.0625);
    opts.exec = Execution::Sequential;
    let seq = ntr_sum(&spec, r, &opts, &enum_opts()).unwrap();
    opts.exec = Execution::Parallel;
    let par = ntr_sum(&spec, r, &opts, &enum_opts()).unwrap();
    assert_eq!(seq, par);
    assert!(!seq.sampled);

    opts.pair_budget = (seq.n_pairs / 4) as usize;
    opts.strata = 8;
    let sub = ntr_sum(&spec, r, &opts, &enum_opts()).unwrap();
    assert!(sub.sampled && sub.rows_used < sub.words);
    assert!(sub.sum_stderr.is_finite() && sub.sum_stderr > 0.0);
    assert!((sub.sum - seq.sum).abs() <= 4.0 * sub.sum_stderr, "{} vs {} ± {}", sub.sum, seq.sum, sub.sum_stderr);
}

#[test]
fn transversal_pairs_satisfy_volume_bound() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let rep = ntr_sum(&spec, 1.0 / 16.0, &NtrOptions::new(0.0625), &enum_opts()).unwrap();
    assert_eq!(rep.vol_violations, 0, "worst ratio {}", rep.worst_vol_ratio);
    // direct check on the pair used above
    let thin = make_baker(0.4).unwrap();
    let (a, b) = (w(&[0, 1]), w(&[1, 0]));
    let v = classify_transversal(&thin, &a, &b, &TransversalityOptions::new(0.05)).unwrap();
    assert_eq!(v.status, TransversalStatus::Transversal);
    let vol = overlap_volume(&thin, &a, &b, 512, FiberSet::Extended).unwrap();
    let bound = cylinder_diameter(&thin, &a, 257).unwrap() * cylinder_diameter(&thin, &b, 257).unwrap() / 0.05;
    assert!(vol <= bound * 1.02);
}

#[test]
fn sweep_exponent_recovers_power_law() {
    let reps: Vec<NtrSumReport> = [0.5, 0.25, 0.125, 0.0625]
        .iter()
        .map(|&r| {
            let mut rep = ntr_sum(&make_baker(0.5).unwrap(), 0.5, &NtrOptions::new(0.1), &enum_opts()).unwrap();
            rep.r = r;
            rep.sum = 3.0 * f64::powf(r, 1.7);
            rep
        })
        .collect();
    assert_abs_diff_eq!(sweep_exponent(&reps).unwrap(), 1.7, epsilon = 1e-12);
    assert!(sweep_csv(&reps).lines().count() == 5);
}

fn small_word() -> impl Strategy<Value = Word> {
    prop::collection::vec(0u16..2, 1..5).prop_map(Word::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn refinement_never_contradicts(a in small_word(), b in small_word(), delta in 0.005f64..0.2) {
        let spec = make_affine_example(0.8, 0.55).unwrap();
        let coarse = TransversalityOptions { x_grid_n: 9, tail_depth: 1, ..TransversalityOptions::new(delta) };
        let fine = TransversalityOptions { x_grid_n: 65, tail_depth: 6, ..TransversalityOptions::new(delta) };
        let c = classify_transversal(&spec, &a, &b, &coarse).unwrap().status;
        let f = classify_transversal(&spec, &a, &b, &fine).unwrap().status;
        prop_assert!(!(c == TransversalStatus::Transversal && f == TransversalStatus::NonTransversal));
        prop_assert!(!(f == TransversalStatus::Transversal && c == TransversalStatus::NonTransversal));
    }
}

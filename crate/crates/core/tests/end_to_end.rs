use ghm_core::conditions::{fatness_fit, ntr_sum_for, FatnessOptions, NtrOptions};
use ghm_core::horseshoe::{make_baker, validate_hyperbolicity};
use ghm_core::measure::{lift_srb, tsujii_criterion, ulam_acip, BaseMap, CriterionOptions, LiftOptions, WindowVerdict};
use ghm_core::numeric::compensated_sum;
use ghm_core::symbolic::{enumerate_m, EnumerateOptions};
use proptest::prelude::*;

#[test]
fn fat_baker_passes_every_check() {
    let spec = make_baker(0.7).unwrap();
    assert!(validate_hyperbolicity(&spec, 33, false).passed());
    let fit = fatness_fit(&spec, 10, &FatnessOptions::default()).unwrap();
    assert!(fit.passed);

    let density = ulam_acip(&BaseMap::from_spec(&spec).unwrap(), 256, 1e-12).unwrap();
    let opts = LiftOptions { x_bins: 32, y_bins: 2048, ..LiftOptions::default() };
    let srb = lift_srb(&spec, &density, 40, 200_000, 3, &opts).unwrap();
    let table = tsujii_criterion(&srb, &[0.125, 0.0625, 0.03125], &CriterionOptions::default()).unwrap();
    assert_eq!(table.verdict, WindowVerdict::Bounded);

    // baker leaves are horizontal and never separate in slope, so only
    // disjoint strips escape the non-transversal sum
    let words = enumerate_m(&spec, 0.125, &EnumerateOptions::default()).unwrap();
    let rep = ntr_sum_for(&spec, 0.125, &words, &NtrOptions::new(0.05)).unwrap();
    assert_eq!(rep.n_transversal, 0);
    assert!(rep.sum > 0.0 && rep.sum.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn base_cylinders_partition_the_base(lambda in 0.3f64..0.75, k in 2i32..7) {
        let spec = make_baker(lambda).unwrap();
        let words = enumerate_m(&spec, 0.5f64.powi(k), &EnumerateOptions::default()).unwrap();
        let total = compensated_sum(words.iter().map(|m| m.base.len()));
        prop_assert!((total - 1.0).abs() < 1e-12);
        let mut bases: Vec<_> = words.iter().map(|m| m.base).collect();
        bases.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        prop_assert_eq!(bases[0].lo, 0.0);
        for w in bases.windows(2) {
            prop_assert!((w[0].hi - w[1].lo).abs() < 1e-15);
        }
    }
}


use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::horseshoe::{make_affine_example, make_baker};
use crate::numeric::{compensated_sum, Interval};
use crate::GhmError;

fn w(s: &[u16]) -> Word {
    Word::from(s)
}

#[test]
fn dyadic_base_cylinders() {
    let spec = make_baker(0.5).unwrap();
    // 1-based (1,2,1) is 0-based (0,1,0)
    let iv = base_cylinder(&spec, &w(&[0, 1, 0])).unwrap();
    assert_eq!((iv.lo, iv.hi), (0.25, 0.375));
    for word in Word::all_of_length(2, 6) {
        assert_eq!(base_cylinder(&spec, &word).unwrap().len(), 1.0 / 64.0);
    }
    assert_eq!(base_cylinder(&spec, &Word::empty()).unwrap(), Interval::UNIT);
    assert!(matches!(
        base_cylinder(&spec, &w(&[0, 2])),
        Err(GhmError::SymbolOutOfRange { symbol: 2, .. })
    ));
}

#[test]
fn baker_fiber_images_contract_uniformly() {
    let lambda = 0.6;
    let spec = make_baker(lambda).unwrap();
    let j = spec.fiber_len();
    let u = fiber_image(&spec, &w(&[0]), 0.3, false).unwrap().unwrap();
    assert_abs_diff_eq!(u.len(), lambda, epsilon = 1e-15);
    for word in Word::all_of_length(2, 5) {
        for x in [0.0, 0.17, 0.5, 0.99, 1.0] {
            let u = fiber_image(&spec, &word, x, true).unwrap().unwrap();
            assert_abs_diff_eq!(u.len(), lambda.powi(5) * j, epsilon = 1e-14);
        }
    }
}

#[test]
fn affine_fiber_slope_at_preimage() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let u = fiber_image(&spec, &w(&[1]), 1.0, false).unwrap().unwrap();
    assert_abs_diff_eq!(u.len(), 0.55, epsilon = 1e-15);
    assert!(fiber_image(&spec, &w(&[1]), 1.5, false).is_err());
}

#[test]
fn baker_diameters() {
    let spec = make_baker(0.6).unwrap();
    let j = spec.fiber_len();
    assert_abs_diff_eq!(cylinder_diameter(&spec, &w(&[0, 1, 1]), 257).unwrap(), 0.216 * j, epsilon = 1e-14);
    assert_eq!(cylinder_diameter(&spec, &Word::empty(), 257).unwrap(), j);
    assert!(cylinder_diameter(&spec, &Word::empty(), 1).is_err());
}

/// Brute-force width of `Û_{(1,1)}(x)` from the closed-form fiber slope.
fn affine_11_width_oracle(a: f64, b: f64, j: f64, x: f64) -> f64 {
    let s = |t: f64| a + (2.0 * t - 1.0) * (b - a);
    let x1 = (x + 1.0) / 2.0;
    let x0 = (x1 + 1.0) / 2.0;
    s(x0) * s(x1) * j
}

#[test]
fn affine_diameter_matches_brute_force() {
    let (a, b) = (0.8, 0.55);
    let spec = make_affine_example(a, b).unwrap();
    let j = spec.fiber_len();
    let oracle = (0..=100_000)
        .map(|k| affine_11_width_oracle(a, b, j, k as f64 / 100_000.0))
        .fold(0.0f64, f64::max);
    let d = cylinder_diameter(&spec, &w(&[1, 1]), 257).unwrap();
    assert_abs_diff_eq!(d, oracle, epsilon = 1e-9);
    assert!(d >= b * b * j && d <= a * a * j);
}

#[test]
fn baker_m_of_r_examples() {
    let spec = make_baker(0.6).unwrap();
    let j = spec.fiber_len();
    let opts = EnumerateOptions::default();
    let m = enumerate_m(&spec, 0.5 * j, &opts).unwrap();
    let words: Vec<Word> = m.iter().map(|e| e.word.clone()).collect();
    assert_eq!(words, vec![w(&[0]), w(&[1])]);
    let m = enumerate_m(&spec, 0.3 * j, &opts).unwrap();
    assert_eq!(m.len(), 4);
    assert!(m.iter().all(|e| e.word.len() == 2));
    assert!(matches!(enumerate_m(&spec, j, &opts), Err(GhmError::Degenerate(_))));
    assert!(enumerate_m(&spec, 0.0, &opts).is_err());
}

/// Reference enumeration: the stopping rule applied to every word up to
/// `depth`, with diameters from a dense grid.
fn m_of_r_oracle(spec: &crate::GhmSpec, r: f64, depth: usize) -> BTreeSet<Word> {
    let j = spec.extended_fiber;
    let d = |word: &Word| -> f64 {
        (0..=20_000)
            .map(|k| push_fiber(&spec.branches, word.symbols(), k as f64 / 20_000.0, j).len())
            .fold(0.0f64, f64::max)
    };
    let mut out = BTreeSet::new();
    let mut level = vec![Word::empty()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for word in level {
            let kids: Vec<Word> = (0..spec.alphabet() as u16).map(|s| word.child(s)).collect();
            if kids.iter().any(|k| d(k) < r) {
                out.insert(word);
            } else {
                next.extend(kids);
            }
        }
        level = next;
    }
    assert!(level.is_empty(), "oracle depth too small");
    out
}

#[test]
fn affine_m_of_r_has_mixed_lengths() {
    let (a, b) = (0.8, 0.55);
    let spec = make_affine_example(a, b).unwrap();
    let r = b * b * spec.fiber_len();
    let got: BTreeSet<Word> = enumerate_m(&spec, r, &EnumerateOptions::default())
        .unwrap()
        .into_iter()
        .map(|e| e.word)
        .collect();
    assert_eq!(got, m_of_r_oracle(&spec, r, 6));
    let lengths: BTreeSet<usize> = got.iter().map(Word::len).collect();
    // slopes near a keep some length-3 words above b²|J|
    assert_eq!(lengths, BTreeSet::from([3, 4]));
}

fn assert_partition(m: &[MEntry]) {
    let total = compensated_sum(m.iter().map(|e| e.base.len()));
    assert!((total - 1.0).abs() <= 1e-12, "Σ|I| = {total}");
    // sorted lexicographically, so a prefix would sit right before its extension
    for pair in m.windows(2) {
        assert!(!pair[0].word.is_prefix_of(&pair[1].word));
    }
}

#[test]
fn partition_identity_for_builtins() {
    let opts = EnumerateOptions::default();
    for spec in [make_baker(0.7).unwrap(), make_affine_example(0.8, 0.55).unwrap()] {
        let m = enumerate_m(&spec, 2f64.powi(-6), &opts).unwrap();
        assert_partition(&m);
        assert!(m.iter().all(|e| e.d >= 2f64.powi(-6)));
    }
}

#[test]
fn enumeration_is_independent_of_execution() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let mut opts = EnumerateOptions::default();
    let par = enumerate_m(&spec, 0.02, &opts).unwrap();
    opts.exec = crate::Execution::Sequential;
    let seq = enumerate_m(&spec, 0.02, &opts).unwrap();
    assert_eq!(par, seq);
}

#[test]
fn budget_is_enforced() {
    let spec = make_baker(0.9).unwrap();
    let opts = EnumerateOptions { max_words: 100, ..EnumerateOptions::default() };
    assert!(matches!(enumerate_m(&spec, 0.01, &opts), Err(GhmError::Budget(_))));
}

#[test]
fn counting_bound_for_doubling_base() {
    // Σ_{c1 < d < c2} |I| ≤ 1 + (log c2 − log c1)/log m with m = 2
    let spec = make_baker(0.6).unwrap();
    let (c1, c2): (f64, f64) = (0.25, 0.5);
    let bound = 1.0 + (c2.ln() - c1.ln()) / 2f64.ln();
    assert_abs_diff_eq!(bound, 2.0, epsilon = 1e-15);
    let mut total = 0.0;
    for n in 0..12 {
        for word in Word::all_of_length(2, n) {
            let d = cylinder_diameter(&spec, &word, 9).unwrap();
            if c1 < d && d < c2 {
                total += base_cylinder(&spec, &word).unwrap().len();
            }
        }
    }
    assert!(total <= bound, "{total}");
}

#[test]
fn past_extension_nests_fibers() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    for word in Word::all_of_length(2, 4) {
        for s in 0..2u16 {
            let longer = w(&[s]).concat(&word);
            for k in 0..=32 {
                let x = k as f64 / 32.0;
                let outer = fiber_image(&spec, &word, x, false).unwrap().unwrap();
                let inner = fiber_image(&spec, &longer, x, false).unwrap().unwrap();
                assert!(outer.contains_interval(&inner, 1e-14));
                let hat = fiber_image(&spec, &word, x, true).unwrap().unwrap();
                assert!(hat.contains_interval(&outer, 0.0));
                assert!(spec.extended_fiber.contains_interval(&hat, 1e-14));
            }
        }
    }
}

#[test]
fn truncation_examples() {
    assert_eq!(truncate_alphabet([0.6, 0.55], 0.5), 2);
    assert_eq!(truncate_alphabet((1..).map(|i| 2f64.powi(-i)), 0.1), 3);
    assert_eq!(truncate_alphabet([0.6, 0.55], 0.7), 0);
    let spec = make_affine_example(0.8, 0.55).unwrap();
    assert_eq!(truncate_spec_alphabet(&spec, 0.3), 2);
}

#[test]
fn cylinder_geom_invariants() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let g = cylinder_geom(&spec, &w(&[0, 1, 1]), 65).unwrap();
    let max_hat = g.hat_fiber_image.iter().map(Interval::len).fold(0.0, f64::max);
    assert!(g.diameter >= max_hat && g.diameter - max_hat < 1e-4);
    for (u, uh) in g.fiber_image.iter().zip(&g.hat_fiber_image) {
        assert!(uh.contains_interval(u, 0.0));
    }
}

#[test]
fn inverse_branch_derivative_equals_cylinder_length() {
    let spec = make_baker(0.5).unwrap();
    for word in Word::all_of_length(2, 4) {
        let dg = inverse_branch_derivative(&spec, &word).unwrap();
        assert_eq!(dg, base_cylinder(&spec, &word).unwrap().len());
    }
}

#[test]
fn cache_round_trip_and_corruption() {
    let spec = make_affine_example(0.8, 0.55).unwrap();
    let store = CylinderStore::new(spec.map_hash(), 65);
    let opts = EnumerateOptions { x_grid_n: 65, ..EnumerateOptions::default() };
    let m = enumerate_m_with_store(&spec, 2f64.powi(-6), &opts, Some(&store)).unwrap();
    assert!(!store.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cyl.bin");
    store.save(&path).unwrap();
    let loaded = CylinderStore::load(&path, Some(&spec.map_hash())).unwrap();
    assert_eq!(loaded.snapshot(), store.snapshot());
    // resumed enumeration reads from the cache and agrees
    let again = enumerate_m_with_store(&spec, 2f64.powi(-6), &opts, Some(&loaded)).unwrap();
    assert_eq!(again, m);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
    assert!(matches!(CylinderStore::load(&path, None), Err(GhmError::Digest { .. })));
    let mut bumped = bytes.clone();
    bumped[8] = 99;
    std::fs::write(&path, &bumped).unwrap();
    let err = CylinderStore::load(&path, None).unwrap_err();
    assert!(matches!(err, GhmError::Version { found: 99, .. }));
    assert!(err.to_string().contains("regenerate"));
    std::fs::write(&path, &bytes).unwrap();
    assert!(CylinderStore::load(&path, Some("ffffffffffffffff")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn baker_m_of_r_is_a_partitioning_antichain(lambda in 0.3f64..0.9, r in 0.01f64..1.0) {
        let spec = make_baker(lambda).unwrap();
        let m = enumerate_m(&spec, r, &EnumerateOptions::default()).unwrap();
        assert_partition(&m);
        for e in &m {
            prop_assert!(e.d >= r);
            prop_assert!(e.d * lambda < r);
        }
    }
}

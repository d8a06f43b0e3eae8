use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adapted::{adapted_lattice, AdaptedSummary};
use crate::error::{GhmError, Result};
use crate::exec::Execution;
use crate::horseshoe::{apply_branch, Direction, GhmSpec, Point};
use crate::numeric::{linspace, Interval};
use crate::symbolic::{check_word, cylinder_diameter, push_fiber, Word};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnstableDirection {
    /// Unit vector (Euclidean).
    pub vector: [f64; 2],
    /// `dy/dx`.
    pub slope: f64,
    /// Width of the cone image after `depth` steps; the true direction's
    /// slope lies within this distance.
    pub error_bound: f64,
}

/// Point of `U_A` over `x` whose backward orbit along `word` starts at
/// fiber height `y_seed`; it has a valid backward itinerary of length `|A|`.
pub fn point_on_cylinder(spec: &GhmSpec, word: &Word, x: f64, y_seed: f64) -> Result<Point> {
    check_word(spec, word)?;
    let y = push_fiber(&spec.branches, word.symbols(), x, Interval::new(y_seed, y_seed)).lo;
    Ok([x, y])
}

/// `E^u` at `z` by pushing the horizontal vector forward along the last
/// `depth` symbols of `history` (newest last).
pub fn unstable_direction(spec: &GhmSpec, history: &Word, z: Point, depth: usize) -> Result<UnstableDirection> {
    spec.require_skew("unstable_direction")?;
    check_word(spec, history)?;
    if history.len() < depth {
        return Err(GhmError::InvalidInput(format!(
            "history of length {} is shorter than depth {depth}",
            history.len()
        )));
    }
    let steps = &history.symbols()[history.len() - depth..];
    let mut orbit = Vec::with_capacity(depth);
    let mut cur = z;
    for &s in steps.iter().rev() {
        cur = apply_branch(spec, s as usize, cur, Direction::Inverse)?;
        orbit.push((s as usize, cur));
    }
    let mut v = [1.0, 0.0];
    let mut lo = -spec.alpha;
    let mut hi = spec.alpha;
    for &(s, p) in orbit.iter().rev() {
        let j = spec.branches[s].first_derivatives(p);
        let u = j.apply(v);
        let n = u[0].hypot(u[1]);
        v = [u[0] / n, u[1] / n];
        // slopes transform monotonically for skew products
        let push = |t: f64| (j.f2x() + j.f2y() * t) / j.f1x();
        let (a, b) = (push(lo), push(hi));
        lo = a.min(b);
        hi = a.max(b);
    }
    Ok(UnstableDirection { vector: v, slope: v[1] / v[0], error_bound: hi - lo })
}

/// `max_{i ≤ n} max(ρ_i, 1/ρ_i)` with `ρ_i = |D^s_z F⁻¹_i| / |D^s_w F⁻¹_i|`,
/// the stable derivatives of the last `i` inverse steps of `word`.
pub fn stable_distortion_ratio(spec: &GhmSpec, word: &Word, z: Point, w: Point) -> Result<f64> {
    spec.require_skew("stable_distortion_ratio")?;
    check_word(spec, word)?;
    if (z[0] - w[0]).abs() > 1e-12 {
        return Err(GhmError::DifferentFibers(z[0], w[0]));
    }
    let (mut pz, mut pw) = (z, w);
    let (mut log_z, mut log_w) = (0.0f64, 0.0f64);
    let mut worst = 1.0f64;
    for &s in word.symbols().iter().rev() {
        let b = &spec.branches[s as usize];
        pz = apply_branch(spec, s as usize, pz, Direction::Inverse)?;
        pw = apply_branch(spec, s as usize, pw, Direction::Inverse)?;
        log_z -= b.fiber.dy(pz[0], pz[1]).ln();
        log_w -= b.fiber.dy(pw[0], pw[1]).ln();
        worst = worst.max((log_z - log_w).abs().exp());
    }
    Ok(worst)
}

/// `max_x |Û_A(x)| / min_x |Û_A(x)|` on a uniform grid.
pub fn fiber_ratio_constant(spec: &GhmSpec, word: &Word, x_grid_n: usize) -> Result<f64> {
    spec.require_skew("fiber_ratio_constant")?;
    check_word(spec, word)?;
    if x_grid_n < 2 {
        return Err(GhmError::InvalidInput(format!("x grid of {x_grid_n} points")));
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for x in linspace(0.0, 1.0, x_grid_n) {
        let l = push_fiber(&spec.branches, word.symbols(), x, spec.extended_fiber).len();
        lo = lo.min(l);
        hi = hi.max(l);
    }
    Ok(hi / lo)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginConstants {
    /// Smaller of the two components of `Û_A(x) ∖ U_A(x)` relative to `|Û_A(x)|`, minimised over x.
    pub k3: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn margin_constants(spec: &GhmSpec, word: &Word, x_grid_n: usize) -> Result<MarginConstants> {
    spec.require_skew("margin_constants")?;
    check_word(spec, word)?;
    if x_grid_n < 2 {
        return Err(GhmError::InvalidInput(format!("x grid of {x_grid_n} points")));
    }
    let (mut lower, mut upper) = (f64::INFINITY, f64::INFINITY);
    for x in linspace(0.0, 1.0, x_grid_n) {
        let u = push_fiber(&spec.branches, word.symbols(), x, Interval::UNIT);
        let uh = push_fiber(&spec.branches, word.symbols(), x, spec.extended_fiber);
        lower = lower.min((u.lo - uh.lo) / uh.len());
        upper = upper.min((uh.hi - u.hi) / uh.len());
    }
    let k3 = lower.min(upper);
    if !(k3 > 1e-12) {
        return Err(GhmError::Degenerate(format!("extension margin {k3} vanishes; widen J")));
    }
    Ok(MarginConstants { k3, lower, upper })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryCheck {
    pub r: f64,
    pub samples: usize,
    pub violations: usize,
}

/// Draws points within max-norm distance `r` of `U_A` and counts those
/// outside `Û_A`. With `r < K₃ K₂⁻¹ d(A)` there should be none.
pub fn corollary_check(spec: &GhmSpec, word: &Word, r: f64, samples: usize, seed: u64) -> Result<CorollaryCheck> {
    spec.require_skew("corollary_check")?;
    check_word(spec, word)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..samples {
        let x0: f64 = rng.gen();
        let u = push_fiber(&spec.branches, word.symbols(), x0, Interval::UNIT);
        let y0 = u.lerp(rng.gen());
        let x = (x0 + r * (2.0 * rng.gen::<f64>() - 1.0)).clamp(0.0, 1.0);
        let y = y0 + r * (2.0 * rng.gen::<f64>() - 1.0);
        if !push_fiber(&spec.branches, word.symbols(), x, spec.extended_fiber).contains(y) {
            violations += 1;
        }
    }
    Ok(CorollaryCheck { r, samples, violations })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsOptions {
    /// Words of every length up to this are sampled.
    pub depth: usize,
    pub x_grid_n: usize,
    pub lattice_n: usize,
    /// Cone iterations for unstable directions.
    pub cone_depth: usize,
    /// Arc-length offset of `w` from `z`.
    pub offset: f64,
    /// Fraction of `K₃ K₂⁻¹ d(A)` used as `r` in the corollary check.
    pub corollary_fraction: f64,
    pub corollary_samples: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            depth: 8,
            x_grid_n: 129,
            lattice_n: 64,
            cone_depth: 24,
            offset: 1e-3,
            corollary_fraction: 0.5,
            corollary_samples: 1000,
            seed: 0,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub k_stable: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub cone_ratio: f64,
    pub cone_margin: f64,
    pub c4_k0_feasible: bool,
    pub g1y_at_z: f64,
    pub matrix_mismatch: f64,
    pub corollary: CorollaryCheck,
    pub depth: usize,
    pub samples_used: usize,
}

impl DiagnosticsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Copy)]
struct WordStats {
    k_stable: f64,
    k2: f64,
    k3: f64,
    d: f64,
}

fn word_stats(spec: &GhmSpec, word: &Word, opts: &DiagnosticsOptions) -> Result<WordStats> {
    let k2 = fiber_ratio_constant(spec, word, opts.x_grid_n)?;
    let k3 = margin_constants(spec, word, opts.x_grid_n)?.k3;
    let d = cylinder_diameter(spec, word, opts.x_grid_n)?;
    let mut k_stable = 1.0f64;
    for x in linspace(0.0, 1.0, 9) {
        let u = push_fiber(&spec.branches, word.symbols(), x, Interval::UNIT);
        let z = [x, u.lerp(0.01)];
        let w = [x, u.lerp(0.99)];
        k_stable = k_stable.max(stable_distortion_ratio(spec, word, z, w)?);
    }
    Ok(WordStats { k_stable, k2, k3, d })
}

/// Empirical sups of the distortion constants over every word of length
/// `1..=depth`, plus the adapted-frame lattice.
pub fn diagnostics_report(spec: &GhmSpec, opts: &DiagnosticsOptions) -> Result<DiagnosticsReport> {
    spec.require_skew("diagnostics_report")?;
    if opts.depth == 0 {
        return Err(GhmError::InvalidInput("diagnostics depth must be positive".into()));
    }
    let words: Vec<Word> = (1..=opts.depth).flat_map(|n| Word::all_of_length(spec.alphabet(), n)).collect();
    let stats: Vec<WordStats> = opts.exec.map_slice(&words, |w| word_stats(spec, w, opts)).into_iter().collect::<Result<_>>()?;
    let (mut k_stable, mut k2, mut k3) = (1.0f64, 1.0f64, f64::INFINITY);
    for s in &stats {
        k_stable = k_stable.max(s.k_stable);
        k2 = k2.max(s.k2);
        k3 = k3.min(s.k3);
    }

    // d(AB)|J| / (d(A) d(B)) over pairs whose concatenation stays within depth
    let j = spec.fiber_len();
    let index = |w: &Word| -> usize {
        let n = w.len();
        let offset: usize = (1..n).map(|k| spec.alphabet().pow(k as u32)).sum();
        offset + w.symbols().iter().fold(0usize, |acc, &s| acc * spec.alphabet() + s as usize)
    };
    let mut k4 = 1.0f64;
    for a in words.iter().filter(|w| 2 * w.len() <= opts.depth) {
        for b in words.iter().filter(|w| w.len() + a.len() <= opts.depth) {
            let ab = a.concat(b);
            let ratio = stats[index(&ab)].d * j / (stats[index(a)].d * stats[index(b)].d);
            k4 = k4.max(ratio).max(1.0 / ratio);
        }
    }

    // corollary check on the last (deepest) sampled word
    let probe = &words[words.len() - 1];
    let ps = stats[words.len() - 1];
    let r = opts.corollary_fraction * ps.k3 / ps.k2 * ps.d;
    let corollary = corollary_check(spec, probe, r, opts.corollary_samples, opts.seed)?;

    let AdaptedSummary { c2, c3, c4, g1y_at_z, cone_ratio, cone_margin, c4_k0_feasible, matrix_mismatch, samples } =
        adapted_lattice(spec, opts.lattice_n, opts.cone_depth, opts.offset, opts.exec)?;
    Ok(DiagnosticsReport {
        k_stable,
        k2,
        k3,
        k4,
        c2,
        c3,
        c4,
        cone_ratio,
        cone_margin,
        c4_k0_feasible,
        g1y_at_z,
        matrix_mismatch,
        corollary,
        depth: opts.depth,
        samples_used: words.len() + samples,
    })
}

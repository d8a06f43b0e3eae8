use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::transversal::{envelope_separation, tail_slope_envelope, FiberSet, LeafEnvelope, WordProfile};
use crate::error::{GhmError, Result};
use crate::exec::Execution;
use crate::horseshoe::GhmSpec;
use crate::numeric::{linear_fit, linspace, Interval, KahanSum};
use crate::symbolic::{enumerate_m, EnumerateOptions, MEntry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NtrOptions {
    pub delta: f64,
    pub x_grid_n: usize,
    pub tail_depth: usize,
    pub margin: f64,
    /// Fiber sets whose overlap is charged.
    pub fiber_set: FiberSet,
    /// Ordered pairs examined before switching to stratified row sampling.
    pub pair_budget: usize,
    pub strata: usize,
    pub seed: u64,
    /// Relative slack allowed on the overlap bound check.
    pub vol_tolerance: f64,
    pub exec: Execution,
}

impl NtrOptions {
    pub fn new(delta: f64) -> Self {
        NtrOptions {
            delta,
            x_grid_n: 33,
            tail_depth: 4,
            margin: 1e-9,
            fiber_set: FiberSet::Core,
            pair_budget: 20_000_000,
            strata: 32,
            seed: 0,
            vol_tolerance: 0.02,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NtrSumReport {
    pub r: f64,
    pub delta: f64,
    pub fiber_set: FiberSet,
    pub words: usize,
    /// Ordered pairs with overlapping fibers and differing newest symbols.
    pub n_pairs: u64,
    /// Of those, pairs not certified transversal (charged to the sum).
    pub n_ntr: u64,
    pub n_transversal: u64,
    /// `r⁻² Σ vol(X_A ∩ X_B)|I_A||I_B|` over charged pairs with differing newest symbols.
    pub sum: f64,
    pub sum_stderr: f64,
    /// Same sum over all ordered pairs, the diagonal included.
    pub full_sum: f64,
    pub full_sum_stderr: f64,
    /// Transversal pairs whose measured extended overlap exceeds `δ⁻¹ d(A) d(B)`.
    pub vol_violations: u64,
    /// Largest `vol / (δ⁻¹ d(A) d(B))` over transversal pairs.
    pub worst_vol_ratio: f64,
    pub sampled: bool,
    pub rows_used: usize,
    pub exponent_fit: Option<f64>,
}

impl NtrSumReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Flattened per-word envelopes on a shared grid.
struct Profiles {
    n: usize,
    core: Vec<Interval>,
    ext: Vec<Interval>,
    slope: Vec<Interval>,
    base_len: Vec<f64>,
    d: Vec<f64>,
    newest: Vec<u16>,
}

impl Profiles {
    fn build(spec: &GhmSpec, words: &[MEntry], xs: &[f64], tail: Interval, exec: Execution) -> Self {
        let per = exec.map_slice(words, |e| WordProfile::build(spec, &e.word, xs, tail));
        let mut p = Profiles {
            n: xs.len(),
            core: Vec::with_capacity(words.len() * xs.len()),
            ext: Vec::with_capacity(words.len() * xs.len()),
            slope: Vec::with_capacity(words.len() * xs.len()),
            base_len: words.iter().map(|e| e.base.len()).collect(),
            d: words.iter().map(|e| e.d).collect(),
            newest: per.iter().map(|w| w.newest().unwrap_or(u16::MAX)).collect(),
        };
        for w in per {
            p.core.extend(w.position);
            p.ext.extend(w.extended);
            p.slope.extend(w.slope);
        }
        p
    }

    fn fibers(&self, set: FiberSet, i: usize) -> &[Interval] {
        let v = match set {
            FiberSet::Core => &self.core,
            FiberSet::Extended => &self.ext,
        };
        &v[i * self.n..(i + 1) * self.n]
    }

    fn envelope(&self, i: usize) -> LeafEnvelope<'_> {
        LeafEnvelope {
            position: &self.core[i * self.n..(i + 1) * self.n],
            slope: &self.slope[i * self.n..(i + 1) * self.n],
        }
    }
}

/// Trapezoid rule on a uniform grid over `[0,1]`.
fn trapezoid(a: &[Interval], b: &[Interval]) -> f64 {
    let n = a.len();
    let h = 1.0 / (n - 1) as f64;
    let mut acc = KahanSum::new();
    for k in 0..n {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc.add(w * a[k].overlap(&b[k]));
    }
    acc.value() * h
}

/// Per-column index of words ordered by the lower fiber end.
struct ColumnIndex {
    order: Vec<Vec<u32>>,
    max_width: Vec<f64>,
}

impl ColumnIndex {
    fn build(p: &Profiles, set: FiberSet, words: usize) -> Self {
        let mut order = Vec::with_capacity(p.n);
        let mut max_width = Vec::with_capacity(p.n);
        for k in 0..p.n {
            let at = |i: usize| p.fibers(set, i)[k];
            let mut o: Vec<u32> = (0..words as u32).collect();
            o.sort_by(|&i, &j| at(i as usize).lo.total_cmp(&at(j as usize).lo).then(i.cmp(&j)));
            max_width.push((0..words).map(|i| at(i).len()).fold(0.0, f64::max));
            order.push(o);
        }
        ColumnIndex { order, max_width }
    }
}

#[derive(Clone, Copy, Default)]
struct RowStats {
    pairs: u64,
    ntr: u64,
    transversal: u64,
    sum: f64,
    full: f64,
    violations: u64,
    worst: f64,
}

// `k` indexes the profile, the column index and the width table together
#[allow(clippy::needless_range_loop)]
fn row(
    i: usize,
    p: &Profiles,
    idx: &ColumnIndex,
    xs: &[f64],
    opts: &NtrOptions,
    stamp: &mut [u32],
    cand: &mut Vec<u32>,
) -> RowStats {
    let set = opts.fiber_set;
    let a = p.fibers(set, i);
    cand.clear();
    for k in 0..p.n {
        let col = &idx.order[k];
        let lo_bound = a[k].lo - idx.max_width[k];
        let start = col.partition_point(|&j| p.fibers(set, j as usize)[k].lo < lo_bound);
        for &j in &col[start..] {
            let f = p.fibers(set, j as usize)[k];
            if f.lo > a[k].hi {
                break;
            }
            if f.hi > a[k].lo && stamp[j as usize] != i as u32 + 1 {
                stamp[j as usize] = i as u32 + 1;
                cand.push(j);
            }
        }
    }
    cand.sort_unstable();
    let pa = p.envelope(i);
    let mut s = RowStats::default();
    let mut sum = KahanSum::new();
    let mut full = KahanSum::new();
    for &j in cand.iter() {
        let j = j as usize;
        let vol = trapezoid(a, p.fibers(set, j));
        if vol <= 0.0 {
            continue;
        }
        let weight = vol * p.base_len[i] * p.base_len[j];
        let distinct = p.newest[i] != p.newest[j];
        let transversal = j != i && envelope_separation(pa, p.envelope(j), xs, opts.delta, opts.margin).is_some();
        if transversal {
            if distinct {
                s.transversal += 1;
                let ev = trapezoid(p.fibers(FiberSet::Extended, i), p.fibers(FiberSet::Extended, j));
                let bound = p.d[i] * p.d[j] / opts.delta;
                let ratio = ev / bound;
                s.worst = s.worst.max(ratio);
                if ratio > 1.0 + opts.vol_tolerance {
                    s.violations += 1;
                }
            }
            continue;
        }
        full.add(weight);
        if distinct {
            s.pairs += 1;
            s.ntr += 1;
            sum.add(weight);
        }
    }
    s.pairs += s.transversal;
    s.sum = sum.value();
    s.full = full.value();
    s
}

/// Stratum accumulator: running moments of the row statistics.
#[derive(Clone, Default)]
struct Stratum {
    rows: Vec<u32>,
    used: usize,
    sum: [KahanSum; 2],
    sq: [KahanSum; 2],
}

/// `r⁻² Σ_{NTr} vol(X_A ∩ X_B)|I_A||I_B|` over ordered pairs of `M(r)`.
///
/// Pairs not certified transversal by [`envelope_separation`] are charged.
/// Rows are processed in seeded round-robin batches across lexicographic
/// strata; once the pair budget is spent the sum is extrapolated per stratum
/// and reported with a standard error.
pub fn ntr_sum(spec: &GhmSpec, r: f64, opts: &NtrOptions, enum_opts: &EnumerateOptions) -> Result<NtrSumReport> {
    let words = enumerate_m(spec, r, enum_opts)?;
    ntr_sum_for(spec, r, &words, opts)
}

pub fn ntr_sum_for(spec: &GhmSpec, r: f64, words: &[MEntry], opts: &NtrOptions) -> Result<NtrSumReport> {
    spec.require_skew("ntr_sum")?;
    if !(opts.delta > 0.0) {
        return Err(GhmError::domain("delta", opts.delta, "delta > 0"));
    }
    if opts.x_grid_n < 2 || opts.strata == 0 {
        return Err(GhmError::InvalidInput("ntr_sum needs x_grid_n >= 2 and at least one stratum".into()));
    }
    let xs = linspace(0.0, 1.0, opts.x_grid_n);
    let tail = tail_slope_envelope(spec, opts.tail_depth);
    let p = Profiles::build(spec, words, &xs, tail, opts.exec);
    let idx = ColumnIndex::build(&p, opts.fiber_set, words.len());
    let nw = words.len();

    let strata_n = opts.strata.min(nw.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut strata: Vec<Stratum> = (0..strata_n)
        .map(|h| {
            let (lo, hi) = (h * nw / strata_n, (h + 1) * nw / strata_n);
            let mut rows: Vec<u32> = (lo as u32..hi as u32).collect();
            rows.shuffle(&mut rng);
            Stratum { rows, ..Default::default() }
        })
        .collect();

    let batch = 16usize;
    let mut pairs_seen = 0u64;
    let mut totals = RowStats::default();
    loop {
        let jobs: Vec<(usize, u32)> = strata
            .iter()
            .enumerate()
            .flat_map(|(h, s)| s.rows[s.used..(s.used + batch).min(s.rows.len())].iter().map(move |&i| (h, i)))
            .collect();
        if jobs.is_empty() {
            break;
        }
        let chunks: Vec<&[(usize, u32)]> = jobs.chunks(64).collect();
        let results = opts.exec.map_slice(&chunks, |chunk| {
            let mut stamp = vec![0u32; nw];
            let mut cand = Vec::new();
            chunk.iter().map(|&(h, i)| (h, row(i as usize, &p, &idx, &xs, opts, &mut stamp, &mut cand))).collect::<Vec<_>>()
        });
        for (h, s) in results.into_iter().flatten() {
            let st = &mut strata[h];
            st.used += 1;
            for (k, v) in [s.sum, s.full].into_iter().enumerate() {
                st.sum[k].add(v);
                st.sq[k].add(v * v);
            }
            pairs_seen += s.pairs + s.transversal;
            totals.pairs += s.pairs;
            totals.ntr += s.ntr;
            totals.transversal += s.transversal;
            totals.violations += s.violations;
            totals.worst = totals.worst.max(s.worst);
        }
        if pairs_seen as usize >= opts.pair_budget {
            break;
        }
    }

    let rows_used: usize = strata.iter().map(|s| s.used).sum();
    let sampled = rows_used < nw;
    let mut est = [KahanSum::new(), KahanSum::new()];
    let mut var = [0.0f64; 2];
    for s in &strata {
        let (big_n, n) = (s.rows.len() as f64, s.used as f64);
        if s.used == 0 {
            continue;
        }
        for k in 0..2 {
            let mean = s.sum[k].value() / n;
            est[k].add(big_n * mean);
            if s.used > 1 && s.used < s.rows.len() {
                let s2 = ((s.sq[k].value() - n * mean * mean) / (n - 1.0)).max(0.0);
                var[k] += big_n * big_n * (1.0 - n / big_n) * s2 / n;
            }
        }
    }
    let unvisited = strata.iter().any(|s| s.used == 0 && !s.rows.is_empty());
    let scale = r.powi(-2);
    let scale_counts = |c: u64| if sampled { (c as f64 * nw as f64 / rows_used as f64).round() as u64 } else { c };
    Ok(NtrSumReport {
        r,
        delta: opts.delta,
        fiber_set: opts.fiber_set,
        words: nw,
        n_pairs: scale_counts(totals.pairs),
        n_ntr: scale_counts(totals.ntr),
        n_transversal: scale_counts(totals.transversal),
        sum: scale * est[0].value(),
        sum_stderr: if unvisited { f64::INFINITY } else { scale * var[0].sqrt() },
        full_sum: scale * est[1].value(),
        full_sum_stderr: if unvisited { f64::INFINITY } else { scale * var[1].sqrt() },
        vol_violations: totals.violations,
        worst_vol_ratio: totals.worst,
        sampled,
        rows_used,
        exponent_fit: None,
    })
}

/// Runs [`ntr_sum`] over a list of scales and fills in the log-log exponent
/// `−d log(sum)/d log(1/r)`, skipping zero sums. A positive exponent means the
/// sum decays as `r → 0`.
pub fn ntr_sweep(spec: &GhmSpec, r_values: &[f64], opts: &NtrOptions, enum_opts: &EnumerateOptions) -> Result<Vec<NtrSumReport>> {
    let mut out = Vec::with_capacity(r_values.len());
    for &r in r_values {
        out.push(ntr_sum(spec, r, opts, enum_opts)?);
    }
    let fit = sweep_exponent(&out);
    for rep in &mut out {
        rep.exponent_fit = fit;
    }
    Ok(out)
}

/// Slope of `log sum` against `log r`, over reports with a positive sum.
pub fn sweep_exponent(reports: &[NtrSumReport]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) =
        reports.iter().filter(|r| r.sum > 0.0).map(|r| (r.r.ln(), r.sum.ln())).unzip();
    (x.len() >= 2).then(|| linear_fit(&x, &y).0)
}

pub fn sweep_csv(reports: &[NtrSumReport]) -> String {
    let mut s = String::from("r,delta,words,n_pairs,n_ntr,sum,sum_stderr,full_sum,sampled\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.r, r.delta, r.words, r.n_pairs, r.n_ntr, r.sum, r.sum_stderr, r.full_sum, r.sampled
        ));
    }
    s
}

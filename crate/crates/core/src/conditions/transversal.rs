use serde::{Deserialize, Serialize};

use crate::error::{GhmError, Result};
use crate::horseshoe::{BranchMap, GhmSpec};
use crate::numeric::{Interval, KahanSum};
use crate::symbolic::{check_word, Word};

/// Which fiber sets the cylinders are built from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberSet {
    /// `U_A(x)`, pushed from the unit fiber.
    #[default]
    Core,
    /// `Û_A(x)`, pushed from the extended fiber `J`.
    Extended,
}

impl FiberSet {
    pub fn start(self, spec: &GhmSpec) -> Interval {
        match self {
            FiberSet::Core => Interval::UNIT,
            FiberSet::Extended => spec.extended_fiber,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransversalityOptions {
    pub delta: f64,
    pub x_grid_n: usize,
    /// Steps of unknown history used to narrow the unstable cone.
    pub tail_depth: usize,
    /// Safety margin on both sides of `δ`.
    pub margin: f64,
    /// Older symbols that may be prepended while refining a witness.
    pub max_witness_depth: usize,
}

impl TransversalityOptions {
    pub fn new(delta: f64) -> Self {
        TransversalityOptions { delta, x_grid_n: 33, tail_depth: 4, margin: 1e-9, max_witness_depth: 64 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransversalStatus {
    Transversal,
    NonTransversal,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairWitness {
    pub x: f64,
    pub position_gap: f64,
    pub slope_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransversalityVerdict {
    pub pair: (Word, Word),
    pub status: TransversalStatus,
    /// Tightest grid point for transversal pairs, the certifying point otherwise.
    pub witness: Option<PairWitness>,
    pub delta: f64,
}

/// Cell-centred grid on `[0,1]`.
pub fn midpoint_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect()
}

fn fx_range(b: &BranchMap, y: Interval) -> Interval {
    let f = &b.fiber;
    y.scale(f.slope1).shift(f.offset1)
}

fn fy_range(b: &BranchMap, x: Interval, y: Interval) -> Interval {
    let f = &b.fiber;
    Interval::hull(f.slope0, f.slope0).add(&x.scale(f.slope1)).add(&y.scale(2.0 * f.quad))
}

/// Slope of the image of a graph with slope in `s` through branch `b` at
/// base point(s) `x` and fiber position(s) `y`.
fn push_slope(b: &BranchMap, x: Interval, y: Interval, s: Interval) -> Interval {
    fx_range(b, y).add(&fy_range(b, x, y).mul(&s)).scale(1.0 / b.base_slope())
}

/// Slopes of unstable leaves after `depth` steps of arbitrary history,
/// starting from the unstable cone.
pub fn tail_slope_envelope(spec: &GhmSpec, depth: usize) -> Interval {
    let mut s = Interval::new(-spec.alpha, spec.alpha);
    for _ in 0..depth {
        let mut next: Option<Interval> = None;
        for b in &spec.branches {
            let img = push_slope(b, b.base, Interval::UNIT, s);
            next = Some(next.map_or(img, |n| n.union(&img)));
        }
        s = next.expect("at least one branch");
    }
    s
}

/// Position and slope envelopes of every unstable leaf through a word's
/// cylinder, sampled on an x-grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WordProfile {
    pub word: Word,
    pub position: Vec<Interval>,
    pub extended: Vec<Interval>,
    pub slope: Vec<Interval>,
}

impl WordProfile {
    pub fn build(spec: &GhmSpec, word: &Word, xs: &[f64], tail: Interval) -> Self {
        let syms = word.symbols();
        let n = syms.len();
        let mut itinerary = vec![0.0; n];
        let mut position = Vec::with_capacity(xs.len());
        let mut extended = Vec::with_capacity(xs.len());
        let mut slope = Vec::with_capacity(xs.len());
        for &x in xs {
            let mut cur = x;
            for k in (0..n).rev() {
                cur = spec.branches[syms[k] as usize].base_inverse(cur);
                itinerary[k] = cur;
            }
            let mut y = Interval::UNIT;
            let mut yh = spec.extended_fiber;
            let mut s = tail;
            for (k, &sym) in syms.iter().enumerate() {
                let b = &spec.branches[sym as usize];
                let xk = itinerary[k];
                s = push_slope(b, Interval::new(xk, xk), y, s);
                y = b.fiber.image(xk, y);
                yh = b.fiber.image(xk, yh);
            }
            position.push(y);
            extended.push(yh);
            slope.push(s);
        }
        WordProfile { word: word.clone(), position, extended, slope }
    }

    pub fn fibers(&self, set: FiberSet) -> &[Interval] {
        match set {
            FiberSet::Core => &self.position,
            FiberSet::Extended => &self.extended,
        }
    }

    pub fn envelope(&self) -> LeafEnvelope<'_> {
        LeafEnvelope { position: &self.position, slope: &self.slope }
    }

    pub fn newest(&self) -> Option<u16> {
        self.word.symbols().last().copied()
    }
}

/// Position and slope envelopes over a shared grid.
#[derive(Clone, Copy, Debug)]
pub struct LeafEnvelope<'a> {
    pub position: &'a [Interval],
    pub slope: &'a [Interval],
}

/// Classifies a pair from envelopes alone: `Some(witness)` with the tightest
/// cell when every cell separates by more than `δ + margin`, `None` otherwise.
///
/// Between grid points a leaf moves by at most `max|slope| · h/2` away from
/// the chord, so cell envelopes widen the endpoint hulls by that much.
pub fn envelope_separation(a: LeafEnvelope, b: LeafEnvelope, xs: &[f64], delta: f64, margin: f64) -> Option<PairWitness> {
    let need = delta + margin;
    let mut tightest: Option<PairWitness> = None;
    let n = xs.len();
    let cells = if n == 1 { 1 } else { n - 1 };
    for c in 0..cells {
        let (i, j) = if n == 1 { (0, 0) } else { (c, c + 1) };
        let h = (xs[j] - xs[i]).abs();
        let env = |p: LeafEnvelope| {
            let s = p.slope[i].union(&p.slope[j]);
            let lip = s.lo.abs().max(s.hi.abs());
            let pos = p.position[i].union(&p.position[j]);
            (Interval::new(pos.lo - lip * h / 2.0, pos.hi + lip * h / 2.0), s)
        };
        let (pa, sa) = env(a);
        let (pb, sb) = env(b);
        let pos_gap = pa.gap(&pb);
        let slope_gap = sa.gap(&sb);
        if pos_gap <= need && slope_gap <= need {
            return None;
        }
        let w = PairWitness { x: 0.5 * (xs[i] + xs[j]), position_gap: pos_gap, slope_gap };
        let score = |w: &PairWitness| w.position_gap.max(w.slope_gap);
        if tightest.is_none_or(|t| score(&w) < score(&t)) {
            tightest = Some(w);
        }
    }
    tightest
}

/// Enclosure of every unstable leaf through the cylinder of `word` over `x`:
/// position and slope intervals valid for all older histories.
fn leaf_enclosure(spec: &GhmSpec, word: &[u16], x: f64, tail: Interval) -> (Interval, Interval) {
    const STACK: usize = 128;
    let mut buf = [0.0f64; STACK];
    let mut heap = Vec::new();
    let itin: &mut [f64] = if word.len() <= STACK {
        &mut buf[..word.len()]
    } else {
        heap.resize(word.len(), 0.0);
        &mut heap
    };
    let mut cur = x;
    for k in (0..word.len()).rev() {
        cur = spec.branches[word[k] as usize].base_inverse(cur);
        itin[k] = cur;
    }
    let mut y = Interval::UNIT;
    let mut s = tail;
    for (&sym, &xk) in word.iter().zip(itin.iter()) {
        let b = &spec.branches[sym as usize];
        s = push_slope(b, Interval::new(xk, xk), y, s);
        y = b.fiber.image(xk, y);
    }
    (y, s)
}

/// Cap on enclosure refinements per base point.
const WITNESS_NODES: usize = 20_000;

/// Branch and bound over older extensions of `a` and `b`, looking for two
/// leaves certified to lie within `δ − margin` of each other in position and
/// in slope over `x`. The wider enclosure is split first, closest child first.
fn find_close_leaves(
    spec: &GhmSpec,
    a: &[u16],
    b: &[u16],
    x: f64,
    opts: &TransversalityOptions,
    tail: Interval,
) -> Option<PairWitness> {
    let allow = opts.delta - opts.margin;
    if allow <= 0.0 {
        return None;
    }
    let alphabet = spec.alphabet() as u16;
    let max_len = a.len().max(b.len()) + opts.max_witness_depth;
    let ea = leaf_enclosure(spec, a, x, tail);
    let eb = leaf_enclosure(spec, b, x, tail);
    let mut stack = vec![(a.to_vec(), ea, b.to_vec(), eb)];
    let mut nodes = 0;
    while let Some((wa, (pa, sa), wb, (pb, sb))) = stack.pop() {
        nodes += 1;
        if nodes > WITNESS_NODES {
            return None;
        }
        if pa.gap(&pb) > allow || sa.gap(&sb) > allow {
            continue;
        }
        let (pos, slope) = (pa.spread(&pb), sa.spread(&sb));
        if pos <= allow && slope <= allow {
            return Some(PairWitness { x, position_gap: pos, slope_gap: slope });
        }
        let split_a = pa.len() + sa.len() >= pb.len() + sb.len();
        let (grow, keep) = if split_a { (&wa, &wb) } else { (&wb, &wa) };
        if grow.len() >= max_len {
            continue;
        }
        let keep_env = if split_a { (pb, sb) } else { (pa, sa) };
        let mut kids: Vec<(Vec<u16>, (Interval, Interval))> = (0..alphabet)
            .map(|s| {
                let mut w = Vec::with_capacity(grow.len() + 1);
                w.push(s);
                w.extend_from_slice(grow);
                let e = leaf_enclosure(spec, &w, x, tail);
                (w, e)
            })
            .collect();
        // farthest first so the closest child is popped next
        kids.sort_by(|p, q| q.1 .0.gap(&keep_env.0).total_cmp(&p.1 .0.gap(&keep_env.0)));
        for (w, e) in kids {
            if split_a {
                stack.push((w, e, keep.clone(), keep_env));
            } else {
                stack.push((keep.clone(), keep_env, w, e));
            }
        }
    }
    None
}

/// Conservative three-way classification of a pair of finite words.
pub fn classify_transversal(spec: &GhmSpec, a: &Word, b: &Word, opts: &TransversalityOptions) -> Result<TransversalityVerdict> {
    spec.require_skew("classify_transversal")?;
    check_word(spec, a)?;
    check_word(spec, b)?;
    if !(opts.delta > 0.0) {
        return Err(GhmError::ParameterDomain { name: "delta", value: opts.delta, expected: "delta > 0" });
    }
    if opts.x_grid_n < 2 {
        return Err(GhmError::InvalidInput("transversality needs an x-grid of at least 2 points".into()));
    }
    let xs = crate::numeric::linspace(0.0, 1.0, opts.x_grid_n);
    let tail = tail_slope_envelope(spec, opts.tail_depth);
    let pa = WordProfile::build(spec, a, &xs, tail);
    let pb = WordProfile::build(spec, b, &xs, tail);
    let verdict = |status, witness| TransversalityVerdict { pair: (a.clone(), b.clone()), status, witness, delta: opts.delta };
    if let Some(w) = envelope_separation(pa.envelope(), pb.envelope(), &xs, opts.delta, opts.margin) {
        return Ok(verdict(TransversalStatus::Transversal, Some(w)));
    }
    // closest-looking grid points first
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let score = |k: usize| pa.position[k].gap(&pb.position[k]) + pa.slope[k].gap(&pb.slope[k]);
    order.sort_by(|&i, &j| score(i).total_cmp(&score(j)).then(i.cmp(&j)));
    for &k in order.iter().take(8) {
        if let Some(w) = find_close_leaves(spec, a.symbols(), b.symbols(), xs[k], opts, tail) {
            return Ok(verdict(TransversalStatus::NonTransversal, Some(w)));
        }
    }
    let k = order[0];
    let w = PairWitness { x: xs[k], position_gap: pa.position[k].gap(&pb.position[k]), slope_gap: pa.slope[k].gap(&pb.slope[k]) };
    Ok(verdict(TransversalStatus::Inconclusive, Some(w)))
}

/// `∫ |X_A(x) ∩ X_B(x)| dx` by the midpoint rule, with `X` the chosen fiber set.
pub fn overlap_volume(spec: &GhmSpec, a: &Word, b: &Word, resolution: usize, set: FiberSet) -> Result<f64> {
    spec.require_skew("overlap_volume")?;
    check_word(spec, a)?;
    check_word(spec, b)?;
    if resolution < 64 {
        return Err(GhmError::ParameterDomain {
            name: "resolution",
            value: resolution as f64,
            expected: "resolution >= 64",
        });
    }
    let xs = midpoint_grid(resolution);
    let start = set.start(spec);
    let mut acc = KahanSum::new();
    for &x in &xs {
        let ua = crate::symbolic::push_fiber(&spec.branches, a.symbols(), x, start);
        let ub = crate::symbolic::push_fiber(&spec.branches, b.symbols(), x, start);
        acc.add(ua.overlap(&ub));
    }
    Ok(acc.value() / resolution as f64)
}

/// Checks inheritance along newest suffixes: leaves through `A` are a subset
/// of the leaves through any newest suffix of `A`, so a transversal suffix
/// pair forbids a non-transversal certificate for the full pair. Returns the
/// first offending suffix pair.
pub fn subword_violation(spec: &GhmSpec, a: &Word, b: &Word, opts: &TransversalityOptions) -> Result<Option<(Word, Word)>> {
    let full = classify_transversal(spec, a, b, opts)?;
    if full.status != TransversalStatus::NonTransversal {
        return Ok(None);
    }
    let (sa, sb) = (a.symbols(), b.symbols());
    for k in 1..=sa.len().min(sb.len()) {
        let (wa, wb) = (Word::from(&sa[sa.len() - k..]), Word::from(&sb[sb.len() - k..]));
        if classify_transversal(spec, &wa, &wb, opts)?.status == TransversalStatus::Transversal {
            return Ok(Some((wa, wb)));
        }
    }
    Ok(None)
}

use serde::{Deserialize, Serialize};

use super::Word;
use crate::error::{GhmError, Result};
use crate::horseshoe::{BranchMap, GhmSpec};
use crate::numeric::{golden_max, linspace, Interval};

/// Default number of base points on the shared x-grid.
pub const DEFAULT_X_GRID: usize = 257;

pub(crate) fn check_word(spec: &GhmSpec, word: &Word) -> Result<()> {
    let n = spec.alphabet();
    match word.symbols().iter().find(|&&s| s as usize >= n) {
        Some(&symbol) => Err(GhmError::SymbolOutOfRange { symbol, alphabet: n }),
        None => Ok(()),
    }
}

/// `I_[A]n`: base points whose factor-map itinerary follows `word`.
pub fn base_cylinder(spec: &GhmSpec, word: &Word) -> Result<Interval> {
    spec.require_skew("base_cylinder")?;
    check_word(spec, word)?;
    Ok(base_cylinder_unchecked(&spec.branches, word.symbols()))
}

pub(crate) fn base_cylinder_unchecked(branches: &[BranchMap], word: &[u16]) -> Interval {
    word.iter().rev().fold(Interval::UNIT, |iv, &s| {
        let b = &branches[s as usize];
        Interval::new(b.base_inverse(iv.lo), b.base_inverse(iv.hi))
    })
}

/// Fiber interval over the image point `x` after pushing `start` through the
/// word's fiber maps along the unique compatible backward itinerary.
#[inline]
pub(crate) fn push_fiber(branches: &[BranchMap], word: &[u16], x: f64, start: Interval) -> Interval {
    const STACK: usize = 64;
    let n = word.len();
    if n <= STACK {
        let mut xs = [0.0f64; STACK];
        push_fiber_with(branches, word, x, start, &mut xs[..n])
    } else {
        let mut xs = vec![0.0f64; n];
        push_fiber_with(branches, word, x, start, &mut xs)
    }
}

#[inline]
fn push_fiber_with(
    branches: &[BranchMap],
    word: &[u16],
    x: f64,
    start: Interval,
    xs: &mut [f64],
) -> Interval {
    let mut cur = x;
    for k in (0..word.len()).rev() {
        cur = branches[word[k] as usize].base_inverse(cur);
        xs[k] = cur;
    }
    let mut iv = start;
    for (k, &s) in word.iter().enumerate() {
        let f = &branches[s as usize].fiber;
        iv = Interval::new(f.apply(xs[k], iv.lo), f.apply(xs[k], iv.hi));
    }
    iv
}

/// `U_[A]n(x)` (or `Û_[A]n(x)` when `hat`). Returns `None` when the fiber over
/// `x` misses the cylinder, which cannot happen for full-branch skew products.
pub fn fiber_image(spec: &GhmSpec, word: &Word, x: f64, hat: bool) -> Result<Option<Interval>> {
    spec.require_skew("fiber_image")?;
    check_word(spec, word)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(GhmError::OutOfDomain { strip: usize::MAX, x, y: f64::NAN });
    }
    let start = if hat { spec.extended_fiber } else { Interval::UNIT };
    Ok(Some(push_fiber(&spec.branches, word.symbols(), x, start)))
}

/// `d([A]n) = max_x |Û_[A]n(x)|`: a coarse scan of the grid, the full grid
/// when the coarse profile is not unimodal, then golden-section refinement on
/// the cells around the maximum.
pub fn cylinder_diameter(spec: &GhmSpec, word: &Word, x_grid_n: usize) -> Result<f64> {
    spec.require_skew("cylinder_diameter")?;
    check_word(spec, word)?;
    if x_grid_n < 2 {
        return Err(GhmError::InvalidInput(format!("x grid of {x_grid_n} points")));
    }
    let grid = linspace(0.0, 1.0, x_grid_n);
    Ok(diameter_on_grid(&spec.branches, spec.extended_fiber, word.symbols(), &grid))
}

pub(crate) fn diameter_on_grid(
    branches: &[BranchMap],
    fiber: Interval,
    word: &[u16],
    grid: &[f64],
) -> f64 {
    if word.is_empty() {
        return fiber.len();
    }
    let width = |x: f64| push_fiber(branches, word, x, fiber).len();
    let last = grid.len() - 1;
    let stride = (last / COARSE_CELLS).max(1);
    let coarse: Vec<usize> = (0..=last).step_by(stride).chain((!last.is_multiple_of(stride)).then_some(last)).collect();
    let coarse_w: Vec<f64> = coarse.iter().map(|&k| width(grid[k])).collect();
    let (best, scan) = if unimodal(&coarse_w) {
        let k = argmax(&coarse_w);
        ((coarse[k], coarse_w[k]), (coarse[k.saturating_sub(1)], coarse[(k + 1).min(coarse.len() - 1)]))
    } else {
        let all: Vec<f64> = grid.iter().map(|&x| width(x)).collect();
        let k = argmax(&all);
        ((k, all[k]), (k.saturating_sub(1), (k + 1).min(last)))
    };
    if coarse_w.iter().all(|&w| w == coarse_w[0]) {
        return best.1;
    }
    let (_, refined) = golden_max(width, grid[scan.0], grid[scan.1], 48);
    refined.max(best.1)
}

/// Coarse cells scanned before deciding whether the full grid is needed.
const COARSE_CELLS: usize = 16;

fn argmax(v: &[f64]) -> usize {
    let mut k = 0;
    for (i, &w) in v.iter().enumerate() {
        if w > v[k] {
            k = i;
        }
    }
    k
}

/// Non-decreasing then non-increasing.
fn unimodal(v: &[f64]) -> bool {
    let mut falling = false;
    for w in v.windows(2) {
        if w[1] < w[0] {
            falling = true;
        } else if falling && w[1] > w[0] {
            return false;
        }
    }
    true
}

/// Geometry of one cylinder sampled on a shared x-grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderGeom {
    pub word: Word,
    pub base_interval: Interval,
    pub x_grid: Vec<f64>,
    pub fiber_image: Vec<Interval>,
    pub hat_fiber_image: Vec<Interval>,
    pub diameter: f64,
}

pub fn cylinder_geom(spec: &GhmSpec, word: &Word, x_grid_n: usize) -> Result<CylinderGeom> {
    let base_interval = base_cylinder(spec, word)?;
    let diameter = cylinder_diameter(spec, word, x_grid_n)?;
    let x_grid = linspace(0.0, 1.0, x_grid_n);
    let w = word.symbols();
    let fiber_image = x_grid.iter().map(|&x| push_fiber(&spec.branches, w, x, Interval::UNIT)).collect();
    let hat_fiber_image =
        x_grid.iter().map(|&x| push_fiber(&spec.branches, w, x, spec.extended_fiber)).collect();
    Ok(CylinderGeom {
        word: word.clone(),
        base_interval,
        x_grid,
        fiber_image,
        hat_fiber_image,
        diameter,
    })
}

/// Derivative of the inverse-branch composition `g_[A]n = g_{a₁} ∘ ⋯ ∘ g_{aₙ}`.
pub fn inverse_branch_derivative(spec: &GhmSpec, word: &Word) -> Result<f64> {
    check_word(spec, word)?;
    Ok(word.symbols().iter().map(|&s| spec.branches[s as usize].base.len()).product())
}

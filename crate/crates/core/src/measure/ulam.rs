use serde::{Deserialize, Serialize};

use super::factor::BaseMap;
use crate::error::{GhmError, Result};
use crate::horseshoe::GhmSpec;
use crate::numeric::{compensated_sum, Interval, KahanSum};
use crate::symbolic::{base_cylinder, Word};

pub const MAX_SWEEPS: usize = 100_000;
const HISTORY: usize = 16;

/// Piecewise-constant invariant density of the base map on equal cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density1D {
    pub bins: usize,
    pub masses: Vec<f64>,
    pub l_bound: f64,
    #[serde(rename = "L_bound")]
    pub upper_bound: f64,
    pub sweeps: usize,
    /// Total-variation change over the final sweep.
    pub residual: f64,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl Density1D {
    pub fn from_masses(masses: Vec<f64>, sweeps: usize, residual: f64) -> Result<Self> {
        let bins = masses.len();
        if bins == 0 || masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(GhmError::InvalidInput("masses must be finite and nonnegative".into()));
        }
        let total = compensated_sum(masses.iter().copied());
        let masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let n = bins as f64;
        let l_bound = masses.iter().fold(f64::INFINITY, |a, &m| a.min(n * m));
        let upper_bound = masses.iter().fold(0.0f64, |a, &m| a.max(n * m));
        let mut acc = KahanSum::new();
        let mut cumulative = Vec::with_capacity(bins + 1);
        cumulative.push(0.0);
        for &m in &masses {
            acc.add(m);
            cumulative.push(acc.value());
        }
        Ok(Density1D { bins, masses, l_bound, upper_bound, sweeps, residual, cumulative })
    }

    pub fn uniform(bins: usize) -> Self {
        Density1D::from_masses(vec![1.0; bins], 0, 0.0).expect("uniform masses are valid")
    }

    /// Density value on cell `k`.
    pub fn density(&self, k: usize) -> f64 {
        self.masses[k] * self.bins as f64
    }

    pub fn cell_of(&self, x: f64) -> usize {
        ((x * self.bins as f64) as usize).min(self.bins - 1)
    }

    /// Inverse CDF: maps `u ∈ [0,1)` to a point distributed by the density.
    pub fn sample(&self, u: f64) -> f64 {
        let total = self.cumulative[self.bins];
        let u = u * total;
        // first k with cumulative[k+1] > u
        let k = self.cumulative[1..].partition_point(|&c| c <= u).min(self.bins - 1);
        let m = self.masses[k];
        let t = if m > 0.0 { ((u - self.cumulative[k]) / m).clamp(0.0, 1.0) } else { 0.5 };
        ((k as f64 + t) / self.bins as f64).min(1.0)
    }

    pub fn sup_distance_to_uniform(&self) -> f64 {
        (0..self.bins).map(|k| (self.density(k) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Restores the derived lookup table after deserialization.
    pub fn rebuild(self) -> Result<Self> {
        let (sweeps, residual) = (self.sweeps, self.residual);
        Density1D::from_masses(self.masses, sweeps, residual)
    }
}

/// Cell-to-cell transfer fractions, stored by source cell.
fn ulam_rows(map: &BaseMap, bins: usize) -> Vec<Vec<(u32, f64)>> {
    let n = bins as f64;
    (0..bins)
        .map(|k| {
            let cell = Interval::new(k as f64 / n, (k + 1) as f64 / n);
            let mut row = Vec::new();
            for p in &map.pieces {
                let Some(sub) = cell.intersect(&p.domain) else { continue };
                if sub.len() <= 0.0 {
                    continue;
                }
                let share = sub.len() * n;
                let img = p.map_interval(sub);
                let first = ((img.lo * n) as usize).min(bins - 1);
                let last = (((img.hi * n).ceil() as usize).max(first + 1)).min(bins);
                for j in first..last {
                    let target = Interval::new(j as f64 / n, (j + 1) as f64 / n);
                    let frac = img.overlap(&target) / img.len();
                    if frac > 0.0 {
                        row.push((j as u32, share * frac));
                    }
                }
            }
            row
        })
        .collect()
}

/// Stationary vector of the Ulam matrix by power iteration from the uniform
/// vector, stopped once the total-variation change of a sweep is `≤ tol`.
pub fn ulam_acip(map: &BaseMap, bins: usize, tol: f64) -> Result<Density1D> {
    ulam_acip_capped(map, bins, tol, MAX_SWEEPS)
}

pub fn ulam_acip_capped(map: &BaseMap, bins: usize, tol: f64, max_sweeps: usize) -> Result<Density1D> {
    if bins < 16 || !bins.is_power_of_two() {
        return Err(GhmError::ParameterDomain {
            name: "bins",
            value: bins as f64,
            expected: "a power of 2 that is at least 16",
        });
    }
    if !(tol > 0.0) {
        return Err(GhmError::ParameterDomain { name: "tol", value: tol, expected: "tol > 0" });
    }
    let rows = ulam_rows(map, bins);
    let mut m = vec![1.0 / bins as f64; bins];
    let mut next = vec![0.0; bins];
    let mut history = Vec::with_capacity(HISTORY);
    for sweep in 1..=max_sweeps {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (k, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                next[j as usize] += m[k] * w;
            }
        }
        let total = compensated_sum(next.iter().copied());
        next.iter_mut().for_each(|v| *v /= total);
        let residual = 0.5 * compensated_sum(next.iter().zip(&m).map(|(a, b)| (a - b).abs()));
        std::mem::swap(&mut m, &mut next);
        if history.len() == HISTORY {
            history.remove(0);
        }
        history.push(residual);
        if residual <= tol {
            return Density1D::from_masses(m, sweep, residual);
        }
    }
    Err(GhmError::NonConvergence {
        sweeps: max_sweeps,
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// Outcome of the bounded-distortion checks on inverse base branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseDistortionCheck {
    pub words_checked: usize,
    pub pairs_checked: usize,
    /// Extremes over words and sample points of `(d/dx g_A) / |I_A|`.
    pub derivative_ratio_min: f64,
    pub derivative_ratio_max: f64,
    /// Max over pairs of `|I_AB| / (|I_A| |I_B|)`.
    pub concatenation_ratio_max: f64,
    pub lower: f64,
    pub upper: f64,
    pub passed: bool,
}

/// Inverse branch `g_A = h_{a1} ∘ … ∘ h_{an}`.
fn inverse_branch(spec: &GhmSpec, word: &Word, x: f64) -> f64 {
    word.symbols().iter().rev().fold(x, |x, &s| spec.branches[s as usize].base_inverse(x))
}

/// Checks `(l/L)|I_A| ≤ (g_A)' ≤ (L/l)|I_A|` by central differences and
/// `|I_AB| ≤ (L/l)|I_A||I_B|` on all words up to `depth`.
pub fn check_base_distortion(spec: &GhmSpec, density: &Density1D, depth: usize) -> Result<BaseDistortionCheck> {
    spec.require_skew("check_base_distortion")?;
    let ratio = density.upper_bound / density.l_bound;
    let words: Vec<Word> = (1..=depth).flat_map(|n| Word::all_of_length(spec.alphabet(), n)).collect();
    let h = 1e-6;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for w in &words {
        let len = base_cylinder(spec, w)?.len();
        for k in 0..=8 {
            let x = (k as f64 / 8.0).clamp(h, 1.0 - h);
            let d = (inverse_branch(spec, w, x + h) - inverse_branch(spec, w, x - h)) / (2.0 * h);
            lo = lo.min(d / len);
            hi = hi.max(d / len);
        }
    }
    let short: Vec<&Word> = words.iter().filter(|w| 2 * w.len() <= depth.max(2)).collect();
    let mut concat = 0.0f64;
    for a in &short {
        for b in &short {
            let ab = base_cylinder(spec, &a.concat(b))?.len();
            let prod = base_cylinder(spec, a)?.len() * base_cylinder(spec, b)?.len();
            concat = concat.max(ab / prod);
        }
    }
    // central differences of affine compositions are exact up to rounding
    let slack = 1e-6;
    Ok(BaseDistortionCheck {
        words_checked: words.len(),
        pairs_checked: short.len() * short.len(),
        derivative_ratio_min: lo,
        derivative_ratio_max: hi,
        concatenation_ratio_max: concat,
        lower: 1.0 / ratio,
        upper: ratio,
        passed: lo >= (1.0 - slack) / ratio && hi <= ratio * (1.0 + slack) && concat <= ratio * (1.0 + 1e-12),
    })
}

use serde::{Deserialize, Serialize};

use super::{GhmSpec, Point};
use crate::numeric::linspace;

/// Margins below this magnitude are reported as inconclusive.
pub const INCONCLUSIVE_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Pass,
    Inconclusive,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub strip: usize,
    pub x: f64,
    pub y: f64,
}

/// Worst observed value of one inequality over the lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub observed: f64,
    pub bound: f64,
    /// Positive when the inequality holds.
    pub margin: f64,
    pub status: BoundStatus,
    pub witness: Option<Witness>,
}

impl Bound {
    fn from_margin(observed: f64, bound: f64, margin: f64, witness: Option<Witness>) -> Self {
        let status = if margin == 0.0 || margin >= INCONCLUSIVE_MARGIN {
            BoundStatus::Pass
        } else if margin > -INCONCLUSIVE_MARGIN {
            BoundStatus::Inconclusive
        } else {
            BoundStatus::Fail
        };
        Bound { observed, bound, margin, status, witness }
    }

    /// `observed ≤ bound`.
    fn upper(observed: f64, bound: f64, witness: Option<Witness>) -> Self {
        Self::from_margin(observed, bound, bound - observed, witness)
    }

    /// `observed ≥ bound`.
    fn lower(observed: f64, bound: f64, witness: Option<Witness>) -> Self {
        Self::from_margin(observed, bound, observed - bound, witness)
    }

    pub fn holds(&self) -> bool {
        self.status != BoundStatus::Fail
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub h1_pass: bool,
    pub h2_pass: bool,
    /// `min (α|w₁| − |w₂|)` over images of unstable cone edges.
    pub h1_unstable: Bound,
    /// `min (α|w₂| − |w₁|)` over preimages of stable cone edges.
    pub h1_stable: Bound,
    pub h2_unstable: Bound,
    pub h2_stable: Bound,
    pub eq5: Bound,
    pub eq6: Bound,
    pub eq7: Bound,
    pub eq8: Bound,
    /// `C₀ = sup |D²F|`.
    pub a1: Bound,
    /// `sup J_F`.
    pub a2: Bound,
    pub a3: Bound,
    pub a4: Bound,
    pub c0: f64,
    pub c1: f64,
    pub grid_resolution: usize,
    pub strict_a4: bool,
}

impl HyperbolicityReport {
    /// Cone conditions hold; in strict mode A4 must hold as well.
    pub fn passed(&self) -> bool {
        self.h1_pass && self.h2_pass && (!self.strict_a4 || self.a4.holds())
    }
}

struct Worst {
    value: f64,
    at: Option<Witness>,
    maximize: bool,
}

impl Worst {
    fn max() -> Self {
        Worst { value: f64::NEG_INFINITY, at: None, maximize: true }
    }
    fn min() -> Self {
        Worst { value: f64::INFINITY, at: None, maximize: false }
    }
    fn offer(&mut self, v: f64, strip: usize, z: Point) {
        let better = if self.maximize { v > self.value } else { v < self.value };
        if better || self.at.is_none() {
            self.value = v;
            self.at = Some(Witness { strip, x: z[0], y: z[1] });
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num.abs() / den.abs()
    }
}

/// Evaluates the cone conditions, the derivative ratio bounds and the
/// special assumptions on a `grid_n × grid_n` lattice over each extended strip.
pub fn validate_hyperbolicity(spec: &GhmSpec, grid_n: usize, strict_a4: bool) -> HyperbolicityReport {
    let grid_n = grid_n.max(2);
    let alpha = spec.alpha;
    let j = spec.extended_fiber;
    let ys = linspace(j.lo, j.hi, grid_n);

    let mut h1u = Worst::min();
    let mut h1s = Worst::min();
    let mut h2u = Worst::min();
    let mut h2s = Worst::min();
    let mut eq5 = Worst::max();
    let mut eq6 = Worst::max();
    let mut eq7 = Worst::max();
    let mut eq8 = Worst::max();
    let mut a1 = Worst::max();
    let mut a2 = Worst::max();
    let mut a3 = Worst::max();
    let mut a4 = Worst::max();

    for (i, b) in spec.branches.iter().enumerate() {
        let xs = linspace(b.base.lo, b.base.hi, grid_n);
        for &y in &ys {
            let mut prev_f1x: Option<f64> = None;
            for &x in &xs {
                let z = [x, y];
                let jac = b.first_derivatives(z);
                let inv = jac.inverse();
                for s in [-1.0, 1.0] {
                    let w = jac.apply([1.0, s * alpha]);
                    h1u.offer(alpha * w[0].abs() - w[1].abs(), i, z);
                    h2u.offer(w[0].abs().max(w[1].abs()), i, z);
                    let v = [inv[0][0] * s * alpha + inv[0][1], inv[1][0] * s * alpha + inv[1][1]];
                    h1s.offer(alpha * v[1].abs() - v[0].abs(), i, z);
                    h2s.offer(v[0].abs().max(v[1].abs()), i, z);
                }
                eq5.offer(ratio(jac.f1y(), jac.f1x()), i, z);
                eq6.offer(ratio(jac.f2x(), jac.f1x()), i, z);
                eq7.offer(ratio(jac.f2y(), jac.f1x()), i, z);
                if let Some(p) = prev_f1x {
                    eq8.offer((jac.f1x() / p).abs().max((p / jac.f1x()).abs()), i, z);
                }
                prev_f1x = Some(jac.f1x());
                a1.offer(b.second_derivatives(z).norm(), i, z);
                a2.offer(jac.det(), i, z);
                a4.offer(jac.f1y().abs().max(jac.f2x().abs()), i, z);
                // A3 pairs z ∈ S_i with its preimage w, F_i(w) = z
                if b.fiber.image(b.base_inverse(x), j).contains(y) {
                    let w = b.inverse(z);
                    let jw = b.first_derivatives(w);
                    a3.offer(ratio(jac.f1y() * jw.f2x(), jac.f2y()), i, z);
                }
            }
        }
    }

    let c0 = a1.value.max(0.0);
    let c1 = std::f64::consts::SQRT_2 * (1.0 + alpha) * c0;
    let k0 = spec.k0;
    let h1_unstable = Bound::lower(h1u.value, 0.0, h1u.at);
    let h1_stable = Bound::lower(h1s.value, 0.0, h1s.at);
    let h2_unstable = Bound::lower(h2u.value, k0, h2u.at);
    let h2_stable = Bound::lower(h2s.value, k0, h2s.at);
    let a3_value = if a3.at.is_some() { a3.value } else { 0.0 };
    HyperbolicityReport {
        h1_pass: h1_unstable.holds() && h1_stable.holds(),
        h2_pass: h2_unstable.holds() && h2_stable.holds(),
        h1_unstable,
        h1_stable,
        h2_unstable,
        h2_stable,
        eq5: Bound::upper(eq5.value, alpha, eq5.at),
        eq6: Bound::upper(eq6.value, alpha, eq6.at),
        eq7: Bound::upper(eq7.value, 1.0 / (k0 * k0) + alpha * alpha, eq7.at),
        eq8: Bound::upper(eq8.value.max(1.0), c1.exp(), eq8.at),
        a1: Bound::upper(c0, f64::INFINITY, a1.at),
        a2: Bound::upper(a2.value, f64::INFINITY, a2.at),
        a3: Bound::upper(a3_value, f64::INFINITY, a3.at),
        a4: Bound::upper(a4.value, 0.125, a4.at),
        c0,
        c1,
        grid_resolution: grid_n,
        strict_a4,
    }
}

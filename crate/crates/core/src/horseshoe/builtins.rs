use serde::{Deserialize, Serialize};

use super::{BranchMap, Family, FiberLaw, Frame, GhmSpec};
use crate::error::{GhmError, Result};
use crate::numeric::{linspace, Interval};

/// Default extended fiber `J` shared by the built-in instances.
pub const DEFAULT_FIBER: Interval = Interval { lo: -0.1, hi: 1.1 };

/// Generalized baker map, conjugated from `[-1,1]²` to `[0,1] × J` by
/// `X = 2x − 1`, `Y = 2y − 1`. Strip 0 is `x < 1/2` (the `X < 0` branch).
pub fn make_baker(lambda: f64) -> Result<GhmSpec> {
    make_baker_with(lambda, DEFAULT_FIBER)
}

pub fn make_baker_with(lambda: f64, fiber: Interval) -> Result<GhmSpec> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(GhmError::domain("lambda", lambda, "0 < lambda < 1"));
    }
    let branches = vec![
        BranchMap { base: Interval::new(0.0, 0.5), fiber: FiberLaw::affine(lambda, 0.0, 0.0, 0.0) },
        BranchMap {
            base: Interval::new(0.5, 1.0),
            fiber: FiberLaw::affine(lambda, 0.0, 1.0 - lambda, 0.0),
        },
    ];
    let frame = Frame { x_scale: 2.0, x_shift: -1.0, y_scale: 2.0, y_shift: -1.0 };
    GhmSpec::skew_product(
        Family::Baker { lambda },
        branches,
        0.5,
        2.0f64.min(1.0 / lambda),
        fiber,
        frame,
    )
}

/// Two-strip piecewise affine example with fiber slopes interpolating
/// between `a` and `b`; requires `1/2 < b < a < 1`.
pub fn make_affine_example(a: f64, b: f64) -> Result<GhmSpec> {
    make_affine_example_with(a, b, DEFAULT_FIBER, 0.5)
}

pub fn make_affine_example_with(a: f64, b: f64, fiber: Interval, alpha: f64) -> Result<GhmSpec> {
    if !(0.5 < b && b < a && a < 1.0) {
        return Err(GhmError::InvalidInput(format!(
            "affine example needs 1/2 < b < a < 1, got a = {a}, b = {b}"
        )));
    }
    // strip 0: y ↦ (a + 2x(b−a))·y + (1−a)·2x·(a−b)
    // strip 1: y ↦ (a + (2x−1)(b−a))·y
    let branches = vec![
        BranchMap {
            base: Interval::new(0.0, 0.5),
            fiber: FiberLaw::affine(a, 2.0 * (b - a), 0.0, 2.0 * (1.0 - a) * (a - b)),
        },
        BranchMap {
            base: Interval::new(0.5, 1.0),
            fiber: FiberLaw::affine(2.0 * a - b, 2.0 * (b - a), 0.0, 0.0),
        },
    ];
    let k0 = lattice_k0(&branches, alpha, fiber)?;
    GhmSpec::skew_product(Family::AffineExample { a, b }, branches, alpha, k0, fiber, Frame::IDENTITY)
}

/// User-supplied strip of a custom skew product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomBranch {
    pub base: [f64; 2],
    #[serde(flatten)]
    pub fiber: FiberLaw,
}

impl GhmSpec {
    /// Custom skew product. When `k0` is omitted it is taken from the cone
    /// expansion measured on a lattice.
    pub fn custom_skew(
        branches: &[CustomBranch],
        alpha: f64,
        k0: Option<f64>,
        fiber: Interval,
    ) -> Result<GhmSpec> {
        let maps: Vec<BranchMap> = branches
            .iter()
            .map(|c| BranchMap { base: Interval::new(c.base[0], c.base[1]), fiber: c.fiber })
            .collect();
        let k0 = match k0 {
            Some(k) => k,
            None => lattice_k0(&maps, alpha, fiber)?,
        };
        GhmSpec::skew_product(Family::CustomSkew, maps, alpha, k0, fiber, Frame::IDENTITY)
    }
}

/// Largest admissible expansion constant measured on a 65² lattice per
/// strip, shaved by 1% of its excess over 1.
fn lattice_k0(branches: &[BranchMap], alpha: f64, fiber: Interval) -> Result<f64> {
    let mut min_exp = f64::INFINITY;
    for b in branches {
        for x in linspace(b.base.lo, b.base.hi, 65) {
            for y in linspace(fiber.lo, fiber.hi, 65) {
                let jac = b.first_derivatives([x, y]);
                let inv = jac.inverse();
                for s in [-1.0, 1.0] {
                    let u = jac.apply([1.0, s * alpha]);
                    min_exp = min_exp.min(u[0].abs().max(u[1].abs()));
                    let v = [inv[0][0] * s * alpha + inv[0][1], inv[1][0] * s * alpha + inv[1][1]];
                    min_exp = min_exp.min(v[0].abs().max(v[1].abs()));
                }
            }
        }
    }
    if !(min_exp > 1.0) {
        return Err(GhmError::InvalidInput(format!(
            "cone expansion {min_exp} does not exceed 1; no admissible k0 for alpha = {alpha}"
        )));
    }
    Ok(1.0 + 0.99 * (min_exp - 1.0))
}

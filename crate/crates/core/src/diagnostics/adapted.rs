use serde::{Deserialize, Serialize};

use crate::error::{GhmError, Result};
use crate::exec::Execution;
use crate::horseshoe::{GhmSpec, Jacobian, Point};
use crate::numeric::linspace;

use super::constants::{point_on_cylinder, unstable_direction};
use crate::symbolic::Word;

/// `D F̃⁻¹` in the frames adapted to `E^u ⊕ E^s` at `z` and at its preimage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedDerivative {
    pub z: Point,
    pub w: Point,
    /// Unstable slopes at `z` and at `F⁻¹(z)`.
    pub a_z: f64,
    pub a_pre: f64,
    /// Stable slopes (`dx/dy`); zero for skew products.
    pub b_z: f64,
    pub b_pre: f64,
    /// `[[g̃1x, g̃1y], [g̃2x, g̃2y]]` at `z` from the explicit entry formulas.
    pub at_z: [[f64; 2]; 2],
    /// The same at `w`, frames still anchored at `z`.
    pub at_w: [[f64; 2]; 2],
    /// Largest entry difference between the formulas and `A⁻¹ DF⁻¹ A`.
    pub matrix_mismatch: f64,
}

impl AdaptedDerivative {
    /// `|g̃2x(w)| / |g̃2y(w)|`.
    pub fn c4_ratio(&self) -> f64 {
        self.at_w[1][0].abs() / self.at_w[1][1].abs()
    }

    /// `|g̃1x(w)| / |g̃2y(w)|`.
    pub fn cone_ratio(&self) -> f64 {
        self.at_w[0][0].abs() / self.at_w[1][1].abs()
    }
}

/// Entry formulas; partials of `F` at the preimage point.
fn entries(j: &Jacobian, a_z: f64, b_z: f64, a_p: f64, b_p: f64) -> Result<[[f64; 2]; 2]> {
    let (f1x, f1y, f2x, f2y) = (j.f1x(), j.f1y(), j.f2x(), j.f2y());
    let scale = j.det() * (1.0 - a_p * b_p);
    if scale.abs() < 1e-10 {
        return Err(GhmError::NearDegenerateFrame(scale));
    }
    let g1x = f2y + b_p * f2x - a_z * f1y - a_z * b_p * f1x;
    let g1y = b_z * f2y + b_z * b_p * f2x - f1y - b_p * f1x;
    let g2x = -a_p * f2y - f2x + a_z * a_p * f1y + a_z * f1x;
    let g2y = -a_p * b_z * f2y - b_z * f2x + a_p * f1y + f1x;
    Ok([[g1x / scale, g1y / scale], [g2x / scale, g2y / scale]])
}

fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            m[i][k] = a[i][0] * b[0][k] + a[i][1] * b[1][k];
        }
    }
    m
}

fn frame(a: f64, b: f64) -> [[f64; 2]; 2] {
    [[1.0, b], [a, 1.0]]
}

fn frame_inverse(a: f64, b: f64) -> [[f64; 2]; 2] {
    let d = 1.0 - a * b;
    [[1.0 / d, -b / d], [-a / d, 1.0 / d]]
}

/// Adapted derivative of `F_i⁻¹` at `z ∈ U_i`, with `w` taken `offset` along
/// the unstable direction. `a_pre` is the unstable slope at `F_i⁻¹(z)`; the
/// slope at `z` is its image.
pub fn adapted_derivative(spec: &GhmSpec, strip: usize, z: Point, a_pre: f64, offset: f64) -> Result<AdaptedDerivative> {
    spec.require_skew("adapted_derivative")?;
    let b = spec.branches.get(strip).ok_or(GhmError::SymbolOutOfRange {
        symbol: strip.min(u16::MAX as usize) as u16,
        alphabet: spec.alphabet(),
    })?;
    let p = crate::horseshoe::apply_branch(spec, strip, z, crate::horseshoe::Direction::Inverse)?;
    let jp = b.first_derivatives(p);
    let a_z = (jp.f2x() + jp.f2y() * a_pre) / jp.f1x();
    // vertical stable leaves
    let (b_z, b_pre) = (0.0, 0.0);
    let at_z = entries(&jp, a_z, b_z, a_pre, b_pre)?;

    let norm = (1.0 + a_z * a_z).sqrt();
    let w = [z[0] + offset / norm, z[1] + offset * a_z / norm];
    let q = b.inverse(w);
    let jq = b.first_derivatives(q);
    let at_w = entries(&jq, a_z, b_z, a_pre, b_pre)?;

    let inv = jp.inverse();
    let route = mat_mul(frame_inverse(a_pre, b_pre), mat_mul(inv, frame(a_z, b_z)));
    let matrix_mismatch = (0..2)
        .flat_map(|i| (0..2).map(move |k| (i, k)))
        .map(|(i, k)| (route[i][k] - at_z[i][k]).abs())
        .fold(0.0, f64::max);
    Ok(AdaptedDerivative { z, w, a_z, a_pre, b_z, b_pre, at_z, at_w, matrix_mismatch })
}

/// Lattice extremes of the adapted-frame quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedSummary {
    /// `max |g̃1x(z)|`.
    pub c2: f64,
    /// `min |g̃2y(w)|`.
    pub c3: f64,
    /// `max |g̃2x(w)| / |g̃2y(w)|`.
    pub c4: f64,
    /// `max |g̃1y(z)|`; zero when the frames split the derivative.
    pub g1y_at_z: f64,
    pub cone_ratio: f64,
    /// `1/K₀² − cone_ratio`.
    pub cone_margin: f64,
    /// `C₄ < 1/4` and `K₀ > 3`.
    pub c4_k0_feasible: bool,
    pub matrix_mismatch: f64,
    pub samples: usize,
}

/// Evaluates [`adapted_derivative`] on an `n × n` lattice per strip: `n`
/// base points (cell centres) times `n` seed heights in `[0,1]`. Each
/// preimage point is reached from its seed along a `depth`-symbol history,
/// which also fixes its unstable slope.
pub fn adapted_lattice(spec: &GhmSpec, n: usize, depth: usize, offset: f64, exec: Execution) -> Result<AdaptedSummary> {
    spec.require_skew("adapted_lattice")?;
    if n == 0 {
        return Err(GhmError::InvalidInput("empty lattice".into()));
    }
    let cells: Vec<(usize, f64, f64)> = (0..spec.alphabet())
        .flat_map(|i| {
            let base = spec.branches[i].base;
            let xs: Vec<f64> = (0..n).map(|k| base.lerp((k as f64 + 0.5) / n as f64)).collect();
            let ys = linspace(0.0, 1.0, n);
            xs.into_iter().flat_map(move |x| ys.clone().into_iter().map(move |y| (i, x, y)))
        })
        .collect();
    let results = exec.map_slice(&cells, |&(i, x, y)| -> Result<AdaptedDerivative> {
        let history = seed_history(spec.alphabet(), depth, y);
        let p = point_on_cylinder(spec, &history, x, y)?;
        let a_pre = unstable_direction(spec, &history, p, depth)?.slope;
        let z = spec.branches[i].forward(p);
        adapted_derivative(spec, i, z, a_pre, offset)
    });
    let mut s = AdaptedSummary {
        c2: 0.0,
        c3: f64::INFINITY,
        c4: 0.0,
        g1y_at_z: 0.0,
        cone_ratio: 0.0,
        cone_margin: 0.0,
        c4_k0_feasible: false,
        matrix_mismatch: 0.0,
        samples: 0,
    };
    for r in results {
        let d = r?;
        s.c2 = s.c2.max(d.at_z[0][0].abs());
        s.c3 = s.c3.min(d.at_w[1][1].abs());
        s.c4 = s.c4.max(d.c4_ratio());
        s.g1y_at_z = s.g1y_at_z.max(d.at_z[0][1].abs());
        s.cone_ratio = s.cone_ratio.max(d.cone_ratio());
        s.matrix_mismatch = s.matrix_mismatch.max(d.matrix_mismatch);
        s.samples += 1;
    }
    s.cone_margin = spec.k0.powi(-2) - s.cone_ratio;
    s.c4_k0_feasible = s.c4 < 0.25 && spec.k0 > 3.0;
    Ok(s)
}

/// Deterministic history varying with the seed height.
fn seed_history(alphabet: usize, depth: usize, y: f64) -> Word {
    let mut code = (y * 1e6) as u64 ^ 0x9e37_79b9_7f4a_7c15;
    Word(
        (0..depth)
            .map(|_| {
                code = code.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((code >> 33) % alphabet as u64) as u16
            })
            .collect(),
    )
}

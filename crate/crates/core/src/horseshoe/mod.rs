//! Generalized horseshoe maps: data model, built-in instances and
//! hyperbolicity validation.
//!
//! All shipped instances are skew products `F(x, y) = (g_i(x), f_i(x, y))` on
//! full-height vertical strips of `[0,1] × J`. Strip boundaries may be given
//! as graphs `y ↦ x` in the data model, but every computation downstream
//! assumes vertical boundaries and returns [`GhmError::Unsupported`] otherwise.

mod builtins;
mod validate;

pub use builtins::{
    make_affine_example, make_affine_example_with, make_baker, make_baker_with, CustomBranch,
    DEFAULT_FIBER,
};
pub use validate::{validate_hyperbolicity, Bound, BoundStatus, HyperbolicityReport, Witness};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GhmError, Result};
use crate::numeric::Interval;

/// Tolerance used for strip membership and round-trip checks.
pub const DOMAIN_TOL: f64 = 1e-12;

/// Point of the plane.
pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    SkewProduct,
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// A left or right strip boundary, the graph of a function `y ↦ x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Vertical(f64),
    /// Polynomial in `y`, lowest degree first.
    Graph(Vec<f64>),
}

impl Boundary {
    pub fn at(&self, y: f64) -> f64 {
        match self {
            Boundary::Vertical(x) => *x,
            Boundary::Graph(c) => c.iter().rev().fold(0.0, |acc, &k| acc * y + k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    /// `I_i`, the stable projection of the strip.
    pub base: Interval,
    pub left: Boundary,
    pub right: Boundary,
    /// Base of the extension to `[0,1] × J`; equal to `base` for skew products.
    pub extended_base: Interval,
}

impl Strip {
    pub fn vertical(base: Interval) -> Self {
        Strip {
            base,
            left: Boundary::Vertical(base.lo),
            right: Boundary::Vertical(base.hi),
            extended_base: base,
        }
    }

    pub fn is_vertical(&self) -> bool {
        matches!((&self.left, &self.right), (Boundary::Vertical(_), Boundary::Vertical(_)))
    }
}

/// Fiber map `y ↦ (s0 + s1·x)·y + q·y² + c0 + c1·x`, where `x` is the base
/// point before the step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberLaw {
    pub slope0: f64,
    pub slope1: f64,
    #[serde(default)]
    pub quad: f64,
    #[serde(default)]
    pub offset0: f64,
    #[serde(default)]
    pub offset1: f64,
}

impl FiberLaw {
    pub fn affine(slope0: f64, slope1: f64, offset0: f64, offset1: f64) -> Self {
        FiberLaw { slope0, slope1, quad: 0.0, offset0, offset1 }
    }

    #[inline]
    pub fn linear_slope(&self, x: f64) -> f64 {
        self.slope0 + self.slope1 * x
    }

    #[inline]
    pub fn offset(&self, x: f64) -> f64 {
        self.offset0 + self.offset1 * x
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> f64 {
        self.linear_slope(x) * y + self.quad * y * y + self.offset(x)
    }

    /// `∂f/∂y`.
    #[inline]
    pub fn dy(&self, x: f64, y: f64) -> f64 {
        self.linear_slope(x) + 2.0 * self.quad * y
    }

    /// `∂f/∂x`.
    #[inline]
    pub fn dx(&self, _x: f64, y: f64) -> f64 {
        self.slope1 * y + self.offset1
    }

    pub fn is_affine(&self) -> bool {
        self.quad == 0.0
    }

    /// Solves `apply(x, y) = v` for `y` on the increasing branch.
    pub fn invert(&self, x: f64, v: f64) -> f64 {
        let s = self.linear_slope(x);
        let c = self.offset(x) - v;
        if self.quad == 0.0 {
            return -c / s;
        }
        // q y² + s y + c = 0, root continuous in q at q = 0
        let disc = s * s - 4.0 * self.quad * c;
        (-2.0 * c) / (s + disc.max(0.0).sqrt())
    }

    /// Image of a fiber interval; the law is monotone increasing on `J`.
    #[inline]
    pub fn image(&self, x: f64, iv: Interval) -> Interval {
        Interval::hull(self.apply(x, iv.lo), self.apply(x, iv.hi))
    }
}

/// First partials `[[F1x, F1y], [F2x, F2y]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jacobian(pub [[f64; 2]; 2]);

impl Jacobian {
    pub fn f1x(&self) -> f64 {
        self.0[0][0]
    }
    pub fn f1y(&self) -> f64 {
        self.0[0][1]
    }
    pub fn f2x(&self) -> f64 {
        self.0[1][0]
    }
    pub fn f2y(&self) -> f64 {
        self.0[1][1]
    }

    /// `J_F = F1x F2y − F1y F2x`.
    pub fn det(&self) -> f64 {
        self.f1x() * self.f2y() - self.f1y() * self.f2x()
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn inverse(&self) -> [[f64; 2]; 2] {
        let d = self.det();
        let m = &self.0;
        [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
    }
}

/// The six second partials `F_{jkl}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SecondPartials {
    pub f1xx: f64,
    pub f1xy: f64,
    pub f1yy: f64,
    pub f2xx: f64,
    pub f2xy: f64,
    pub f2yy: f64,
}

impl SecondPartials {
    /// `|D²F| = max_{j,(k,l)} |F_{jkl}|`.
    pub fn norm(&self) -> f64 {
        [self.f1xx, self.f1xy, self.f1yy, self.f2xx, self.f2xy, self.f2yy]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Derivative {
    First(Jacobian),
    Second(SecondPartials),
}

/// One branch `F_i : Ŝ_i → Û_i` of a skew product. The base map is the
/// increasing affine bijection `I_i → [0,1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchMap {
    pub base: Interval,
    pub fiber: FiberLaw,
}

impl BranchMap {
    /// `g_i'`, constant on the strip.
    #[inline]
    pub fn base_slope(&self) -> f64 {
        1.0 / self.base.len()
    }

    #[inline]
    pub fn base_forward(&self, x: f64) -> f64 {
        (x - self.base.lo) / self.base.len()
    }

    /// Inverse branch `h_i : [0,1] → I_i`.
    #[inline]
    pub fn base_inverse(&self, x: f64) -> f64 {
        self.base.lo + x * self.base.len()
    }

    #[inline]
    pub fn forward(&self, z: Point) -> Point {
        [self.base_forward(z[0]), self.fiber.apply(z[0], z[1])]
    }

    #[inline]
    pub fn inverse(&self, z: Point) -> Point {
        let x = self.base_inverse(z[0]);
        [x, self.fiber.invert(x, z[1])]
    }

    pub fn first_derivatives(&self, z: Point) -> Jacobian {
        Jacobian([
            [self.base_slope(), 0.0],
            [self.fiber.dx(z[0], z[1]), self.fiber.dy(z[0], z[1])],
        ])
    }

    pub fn second_derivatives(&self, _z: Point) -> SecondPartials {
        SecondPartials {
            f2xy: self.fiber.slope1,
            f2yy: 2.0 * self.fiber.quad,
            ..SecondPartials::default()
        }
    }
}

/// Affine change of coordinates between the internal frame `[0,1] × J` and
/// the coordinates an instance is usually written in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub x_scale: f64,
    pub x_shift: f64,
    pub y_scale: f64,
    pub y_shift: f64,
}

impl Frame {
    pub const IDENTITY: Frame = Frame { x_scale: 1.0, x_shift: 0.0, y_scale: 1.0, y_shift: 0.0 };

    pub fn to_native(&self, z: Point) -> Point {
        [self.x_scale * z[0] + self.x_shift, self.y_scale * z[1] + self.y_shift]
    }

    pub fn from_native(&self, z: Point) -> Point {
        [(z[0] - self.x_shift) / self.x_scale, (z[1] - self.y_shift) / self.y_scale]
    }
}

/// Named family and its parameters, used for hashing and reporting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Baker { lambda: f64 },
    AffineExample { a: f64, b: f64 },
    CustomSkew,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhmSpec {
    pub family: Family,
    pub strips: Vec<Strip>,
    pub branches: Vec<BranchMap>,
    pub alpha: f64,
    pub k0: f64,
    /// `J`, strictly containing `[0,1]`.
    pub extended_fiber: Interval,
    pub kind: MapKind,
    /// Internal-to-native conjugation.
    pub frame: Frame,
}

impl GhmSpec {
    /// Assembles a skew product from branches ordered left to right and checks
    /// the structural invariants.
    pub fn skew_product(
        family: Family,
        branches: Vec<BranchMap>,
        alpha: f64,
        k0: f64,
        extended_fiber: Interval,
        frame: Frame,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GhmError::domain("alpha", alpha, "0 < alpha < 1"));
        }
        if !(k0 > 1.0) {
            return Err(GhmError::domain("k0", k0, "k0 > 1"));
        }
        if !(extended_fiber.lo < 0.0 && extended_fiber.hi > 1.0) {
            return Err(GhmError::InvalidInput(format!(
                "extended fiber [{}, {}] must strictly contain [0, 1]",
                extended_fiber.lo, extended_fiber.hi
            )));
        }
        if branches.is_empty() {
            return Err(GhmError::InvalidInput("at least one strip is required".into()));
        }
        let mut edge = 0.0;
        for (i, b) in branches.iter().enumerate() {
            if !(b.base.len() > 0.0) || (b.base.lo - edge).abs() > DOMAIN_TOL {
                return Err(GhmError::InvalidInput(format!(
                    "strip {i} base [{}, {}] does not continue the partition at {edge}",
                    b.base.lo, b.base.hi
                )));
            }
            edge = b.base.hi;
            for x in [b.base.lo, b.base.mid(), b.base.hi] {
                for y in [extended_fiber.lo, extended_fiber.hi] {
                    if !(b.fiber.dy(x, y) > 0.0) {
                        return Err(GhmError::InvalidInput(format!(
                            "strip {i}: fiber map is not increasing at ({x}, {y})"
                        )));
                    }
                }
                let img = b.fiber.image(x, extended_fiber);
                if !extended_fiber.contains_interval(&img, DOMAIN_TOL) {
                    return Err(GhmError::InvalidInput(format!(
                        "strip {i}: fiber image [{}, {}] at x = {x} leaves J",
                        img.lo, img.hi
                    )));
                }
            }
        }
        if (edge - 1.0).abs() > DOMAIN_TOL {
            return Err(GhmError::InvalidInput(format!("strips end at {edge}, not 1")));
        }
        let strips = branches.iter().map(|b| Strip::vertical(b.base)).collect();
        Ok(GhmSpec {
            family,
            strips,
            branches,
            alpha,
            k0,
            extended_fiber,
            kind: MapKind::SkewProduct,
            frame,
        })
    }

    pub fn alphabet(&self) -> usize {
        self.branches.len()
    }

    pub fn fiber_len(&self) -> f64 {
        self.extended_fiber.len()
    }

    pub fn require_skew(&self, op: &'static str) -> Result<()> {
        match self.kind {
            MapKind::SkewProduct if self.strips.iter().all(Strip::is_vertical) => Ok(()),
            _ => Err(GhmError::Unsupported(op)),
        }
    }

    /// Strip whose interior contains `x`; boundary points are reported.
    pub fn locate(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(GhmError::OutOfDomain { strip: usize::MAX, x, y: f64::NAN });
        }
        let n = self.branches.len();
        for (i, b) in self.branches.iter().enumerate() {
            if x > b.base.lo && x < b.base.hi {
                return Ok(i);
            }
            if x == b.base.hi && i + 1 < n {
                return Err(GhmError::Boundary { x, left: i, right: i + 1 });
            }
        }
        // the outer edges 0 and 1 belong to the first and last strip
        Ok(if x <= 0.5 { 0 } else { n - 1 })
    }

    /// Sup of `∂f/∂y` over `Ŝ`; the stable contraction bound `M`.
    pub fn max_fiber_contraction(&self) -> f64 {
        self.fiber_contraction_range().1
    }

    /// `(inf, sup)` of `∂f/∂y` over all strips.
    pub fn fiber_contraction_range(&self) -> (f64, f64) {
        self.branches
            .iter()
            .map(|b| Self::branch_contraction_range(b, self.extended_fiber))
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
    }

    fn branch_contraction_range(b: &BranchMap, j: Interval) -> (f64, f64) {
        // dy is bilinear in (x, y), extrema sit on the corners
        let c = [
            b.fiber.dy(b.base.lo, j.lo),
            b.fiber.dy(b.base.lo, j.hi),
            b.fiber.dy(b.base.hi, j.lo),
            b.fiber.dy(b.base.hi, j.hi),
        ];
        (
            c.iter().copied().fold(f64::INFINITY, f64::min),
            c.iter().copied().fold(0.0, f64::max),
        )
    }

    /// `inf_{z ∈ S_i} D^s F(z)` for each strip in order.
    pub fn strip_contractions(&self) -> Vec<f64> {
        self.branches
            .iter()
            .map(|b| Self::branch_contraction_range(b, self.extended_fiber).0)
            .collect()
    }

    /// Minimum of `g'` over all strips.
    pub fn min_base_expansion(&self) -> f64 {
        self.branches.iter().map(BranchMap::base_slope).fold(f64::INFINITY, f64::min)
    }

    /// Short content hash identifying the map.
    pub fn map_hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&canon);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_strip(&self, i: usize) -> Result<&BranchMap> {
        self.branches.get(i).ok_or(GhmError::SymbolOutOfRange {
            symbol: i.min(u16::MAX as usize) as u16,
            alphabet: self.branches.len(),
        })
    }

    fn in_strip(&self, i: usize, z: Point) -> bool {
        let b = &self.branches[i];
        z[0] >= b.base.lo - DOMAIN_TOL
            && z[0] <= b.base.hi + DOMAIN_TOL
            && z[1] >= self.extended_fiber.lo - DOMAIN_TOL
            && z[1] <= self.extended_fiber.hi + DOMAIN_TOL
    }

    fn in_image(&self, i: usize, z: Point) -> bool {
        let b = &self.branches[i];
        if !(z[0] >= -DOMAIN_TOL && z[0] <= 1.0 + DOMAIN_TOL) {
            return false;
        }
        let img = b.fiber.image(b.base_inverse(z[0]), self.extended_fiber);
        z[1] >= img.lo - DOMAIN_TOL && z[1] <= img.hi + DOMAIN_TOL
    }
}

/// Applies branch `i` (0-based) forward on `Ŝ_i` or backward on `Û_i`.
pub fn apply_branch(spec: &GhmSpec, i: usize, z: Point, direction: Direction) -> Result<Point> {
    spec.require_skew("apply_branch")?;
    let b = spec.check_strip(i)?;
    let out_of_domain = || GhmError::OutOfDomain { strip: i, x: z[0], y: z[1] };
    match direction {
        Direction::Forward => {
            if !spec.in_strip(i, z) {
                return Err(out_of_domain());
            }
            Ok(b.forward(z))
        }
        Direction::Inverse => {
            if !spec.in_image(i, z) {
                return Err(out_of_domain());
            }
            Ok(b.inverse(z))
        }
    }
}

/// First (`order = 1`) or second (`order = 2`) partial derivatives of branch `i`.
pub fn branch_derivative(spec: &GhmSpec, i: usize, z: Point, order: u8) -> Result<Derivative> {
    spec.require_skew("branch_derivative")?;
    let b = spec.check_strip(i)?;
    if !spec.in_strip(i, z) {
        return Err(GhmError::OutOfDomain { strip: i, x: z[0], y: z[1] });
    }
    match order {
        1 => Ok(Derivative::First(b.first_derivatives(z))),
        2 => Ok(Derivative::Second(b.second_derivatives(z))),
        _ => Err(GhmError::InvalidInput(format!("derivative order {order} not in {{1, 2}}"))),
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{GhmError, Result};
use crate::horseshoe::GhmSpec;
use crate::numeric::Interval;

/// Base coordinate of `F(x, 0)`, i.e. the factor map `g`.
///
/// A point on an interior strip edge yields [`GhmError::Boundary`]; the caller
/// picks a side.
pub fn factor_map_eval(spec: &GhmSpec, x: f64) -> Result<f64> {
    spec.require_skew("factor_map_eval")?;
    let i = spec.locate(x)?;
    Ok(spec.branches[i].base_forward(x))
}

/// One affine branch of a piecewise-affine interval map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub domain: Interval,
    pub image: Interval,
    pub increasing: bool,
}

impl AffinePiece {
    pub fn slope(&self) -> f64 {
        self.image.len() / self.domain.len()
    }

    fn eval(&self, x: f64) -> f64 {
        let t = (x - self.domain.lo) / self.domain.len();
        if self.increasing {
            self.image.lerp(t)
        } else {
            self.image.lerp(1.0 - t)
        }
    }

    /// Image of a sub-interval of the domain.
    pub fn map_interval(&self, iv: Interval) -> Interval {
        Interval::hull(self.eval(iv.lo), self.eval(iv.hi))
    }
}

/// Piecewise-affine map of `[0,1]` into itself, the input of the Ulam
/// discretization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseMap {
    pub pieces: Vec<AffinePiece>,
}

impl BaseMap {
    pub fn new(pieces: Vec<AffinePiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(GhmError::InvalidInput("base map needs at least one piece".into()));
        }
        let mut edge = 0.0;
        for (i, p) in pieces.iter().enumerate() {
            if p.domain.lo != edge || p.domain.len() <= 0.0 {
                return Err(GhmError::InvalidInput(format!(
                    "piece {i} domain {:?} does not continue the partition at {edge}",
                    p.domain
                )));
            }
            if !Interval::UNIT.contains_interval(&p.image, 0.0) || p.image.len() <= 0.0 {
                return Err(GhmError::InvalidInput(format!("piece {i} image {:?} leaves [0,1]", p.image)));
            }
            edge = p.domain.hi;
        }
        if edge != 1.0 {
            return Err(GhmError::InvalidInput(format!("pieces end at {edge}, not 1")));
        }
        Ok(BaseMap { pieces })
    }

    /// Full increasing branches `I_i → [0,1]` of a skew product.
    pub fn from_spec(spec: &GhmSpec) -> Result<Self> {
        spec.require_skew("BaseMap::from_spec")?;
        BaseMap::new(
            spec.branches
                .iter()
                .map(|b| AffinePiece { domain: b.base, image: Interval::UNIT, increasing: true })
                .collect(),
        )
    }

    pub fn doubling() -> Self {
        BaseMap::new(vec![
            AffinePiece { domain: Interval::new(0.0, 0.5), image: Interval::UNIT, increasing: true },
            AffinePiece { domain: Interval::new(0.5, 1.0), image: Interval::UNIT, increasing: true },
        ])
        .expect("doubling map is valid")
    }
}

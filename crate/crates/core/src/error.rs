use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GhmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GhmError {
    #[error("parameter `{name}` = {value} outside its domain: {expected}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point ({x}, {y}) outside the domain of strip {strip}")]
    OutOfDomain { strip: usize, x: f64, y: f64 },

    #[error("base point {x} lies on the boundary between strips {left} and {right}")]
    Boundary { x: f64, left: usize, right: usize },

    #[error("symbol {symbol} out of range for an alphabet of {alphabet} strips")]
    SymbolOutOfRange { symbol: u16, alphabet: usize },

    #[error("degenerate request: {0}")]
    Degenerate(String),

    #[error("Ulam iteration did not converge after {sweeps} sweeps (last residual {last:e})")]
    NonConvergence { sweeps: usize, last: f64, history: Vec<f64> },

    #[error("radius {r:e} is below the histogram resolution {bin_width:e}")]
    Resolution { r: f64, bin_width: f64 },

    #[error("{discarded} of {total} orbits escaped the domain")]
    ExcessiveDiscards { discarded: usize, total: usize },

    #[error("near-degenerate adapted frame: |J_F J_A| = {0:e}")]
    NearDegenerateFrame(f64),

    #[error("points lie on different stable fibers (x = {0} vs {1})")]
    DifferentFibers(f64, f64),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("operation not supported for curvilinear (non skew-product) maps: {0}")]
    Unsupported(&'static str),

    #[error("cache {path}: digest mismatch, refusing to load")]
    Digest { path: PathBuf },

    #[error("cache {path}: format version {found} but this build reads {expected}; regenerate the cache with `ghm enumerate`")]
    Version { path: PathBuf, found: u32, expected: u32 },

    #[error("cache {path}: {reason}")]
    CacheFormat { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GhmError {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        GhmError::ParameterDomain { name, value, expected }
    }
}

//! Generalized horseshoe maps and the numerical machinery around their SRB
//! measure: cylinder geometry, Ulam discretization of the factor map, orbit
//! lifting, the `I(r)` energy criterion, fatness and transversality checks,
//! and distortion diagnostics.
//!
//! Symbols and strip indices are 0-based throughout.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod binfmt;
pub mod conditions;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod horseshoe;
pub mod measure;
pub mod numeric;
pub mod symbolic;

pub use error::{GhmError, Result};
pub use exec::Execution;
pub use horseshoe::{GhmSpec, MapKind};

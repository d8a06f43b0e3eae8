//! Distortion constants and the adapted-frame derivative bounds, measured on
//! concrete instances.

mod adapted;
mod constants;

pub use adapted::{adapted_derivative, adapted_lattice, AdaptedDerivative, AdaptedSummary};
pub use constants::{
    corollary_check, diagnostics_report, point_on_cylinder, fiber_ratio_constant, margin_constants, stable_distortion_ratio,
    unstable_direction, CorollaryCheck, DiagnosticsOptions, DiagnosticsReport, MarginConstants, UnstableDirection,
};

#[cfg(test)]
mod tests;

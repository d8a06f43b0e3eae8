//! Fatness and δ-transversality checks.

mod fatness;
mod ntr;
mod transversal;

pub use fatness::{fatness_fit, FatnessFit, FatnessOptions};
pub use ntr::{ntr_sum, ntr_sum_for, ntr_sweep, sweep_csv, sweep_exponent, NtrOptions, NtrSumReport};
pub use transversal::{
    classify_transversal, envelope_separation, midpoint_grid, overlap_volume, subword_violation, tail_slope_envelope,
    FiberSet, LeafEnvelope, PairWitness, TransversalStatus, TransversalityOptions, TransversalityVerdict, WordProfile,
};

#[cfg(test)]
mod tests;

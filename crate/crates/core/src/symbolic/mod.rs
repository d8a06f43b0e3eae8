//! Words, cylinder geometry and the maximal-word families `M(r)`.

pub mod cache;
mod cylinder;
mod enumerate;
mod word;

pub use cache::{CylinderStore, CylinderSummary};
pub use cylinder::{
    base_cylinder, cylinder_diameter, cylinder_geom, fiber_image, inverse_branch_derivative,
    CylinderGeom, DEFAULT_X_GRID,
};
#[allow(unused_imports)]
pub(crate) use cylinder::{base_cylinder_unchecked, check_word, diameter_on_grid, push_fiber};
pub use enumerate::{
    enumerate_m, enumerate_m_with_store, truncate_alphabet, truncate_spec_alphabet,
    EnumerateOptions, MEntry,
};
pub use word::Word;

#[cfg(test)]
mod tests;

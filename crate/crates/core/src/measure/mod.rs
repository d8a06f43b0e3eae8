//! Factor map, Ulam approximation of its invariant density, the lifted SRB
//! estimate and the `I(r)` energy criterion.

mod criterion;
mod factor;
mod lift;
mod ulam;

pub use criterion::{
    fiber_l2_norm, histogram_l2_norm, tsujii_criterion, CriterionOptions, CriterionTable, WindowVerdict,
};
pub use factor::{factor_map_eval, AffinePiece, BaseMap};
pub use lift::{
    density_grid, iterations_for_resolution, lift_srb, DensityGrid, LiftOptions, SrbEstimate, GRID_RES,
    SRB_MAGIC, SRB_VERSION,
};
pub use ulam::{check_base_distortion, ulam_acip, ulam_acip_capped, BaseDistortionCheck, Density1D, MAX_SWEEPS};

impl Density1D {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,x_lo,x_hi,mass,density\n");
        let n = self.bins as f64;
        for (k, m) in self.masses.iter().enumerate() {
            s.push_str(&format!("{k},{},{},{m:e},{:e}\n", k as f64 / n, (k + 1) as f64 / n, self.density(k)));
        }
        s
    }
}

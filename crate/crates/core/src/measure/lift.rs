use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ulam::Density1D;
use crate::binfmt::{Reader, Writer};
use crate::error::{GhmError, Result};
use crate::exec::Execution;
use crate::horseshoe::{GhmSpec, DOMAIN_TOL};
use crate::numeric::Interval;

pub const SRB_MAGIC: &[u8; 8] = b"GHMSRB\0\0";
pub const SRB_VERSION: u32 = 1;
/// Side of the fine square histogram kept for [`density_grid`].
pub const GRID_RES: usize = 1024;
pub const BOUNDARY_JITTER: f64 = 1e-12;
pub const MAX_DISCARD_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftOptions {
    pub x_bins: usize,
    pub y_bins: usize,
    /// Number of orbit endpoints retained verbatim.
    pub keep_samples: usize,
    pub block_size: usize,
    pub exec: Execution,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions { x_bins: 256, y_bins: 8192, keep_samples: 10_000, block_size: 1 << 16, exec: Execution::Parallel }
    }
}

/// Finite-`n` realization of the lifted measure.
///
/// Base coordinates are the internal `[0,1]`; the fiber coordinate of
/// `samples` is internal, while `conditionals` bin the fiber in the map's
/// native coordinates over `y_window`, the native image of `J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrbEstimate {
    pub map_hash: String,
    pub seed: u64,
    pub requested: u64,
    pub iterations_used: usize,
    /// `Mⁿ|J|`, the fiber width left after `n` contractions.
    pub contraction_budget: f64,
    pub fiber_bins: usize,
    pub y_bins: usize,
    pub y_window: Interval,
    /// Row-major `fiber_bins × y_bins` counts.
    pub conditionals: Vec<u32>,
    pub x_counts: Vec<u64>,
    /// Row-major `GRID_RES × GRID_RES` counts over the unit square, `x` major.
    pub grid: Vec<u32>,
    pub kept: u64,
    pub discarded: u64,
    pub jittered: u64,
    /// `(x, y, weight)` for the first retained endpoints.
    pub samples: Vec<[f64; 3]>,
}

impl SrbEstimate {
    pub fn y_bin_width(&self) -> f64 {
        self.y_window.len() / self.y_bins as f64
    }

    pub fn bin_counts(&self, x_bin: usize) -> &[u32] {
        &self.conditionals[x_bin * self.y_bins..(x_bin + 1) * self.y_bins]
    }

    /// Normalized conditional histogram of a fiber bin, `None` when empty.
    pub fn conditional(&self, x_bin: usize) -> Option<Vec<f64>> {
        let n = self.x_counts[x_bin];
        (n > 0).then(|| self.bin_counts(x_bin).iter().map(|&c| c as f64 / n as f64).collect())
    }

    /// Share of retained orbits landing in each fiber bin.
    pub fn bin_weights(&self) -> Vec<f64> {
        self.x_counts.iter().map(|&c| c as f64 / self.kept as f64).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Writer::new(SRB_MAGIC, SRB_VERSION);
        out.ascii(&self.map_hash, 16);
        out.u64(self.seed);
        out.u64(self.requested);
        out.u64(self.iterations_used as u64);
        out.f64(self.contraction_budget);
        out.u32(self.fiber_bins as u32);
        out.u32(self.y_bins as u32);
        out.f64(self.y_window.lo);
        out.f64(self.y_window.hi);
        for v in [self.kept, self.discarded, self.jittered] {
            out.u64(v);
        }
        self.conditionals.iter().for_each(|&c| out.u32(c));
        self.x_counts.iter().for_each(|&c| out.u64(c));
        self.grid.iter().for_each(|&c| out.u32(c));
        out.u64(self.samples.len() as u64);
        for s in &self.samples {
            s.iter().for_each(|&v| out.f64(v));
        }
        out.finish(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rd = Reader::open(path, SRB_MAGIC, SRB_VERSION, "SRB checkpoint")?;
        let map_hash = rd.ascii(16)?;
        let seed = rd.u64()?;
        let requested = rd.u64()?;
        let iterations_used = rd.u64()? as usize;
        let contraction_budget = rd.f64()?;
        let fiber_bins = rd.u32()? as usize;
        let y_bins = rd.u32()? as usize;
        let y_window = Interval::new(rd.f64()?, rd.f64()?);
        let (kept, discarded, jittered) = (rd.u64()?, rd.u64()?, rd.u64()?);
        let conditionals = (0..fiber_bins * y_bins).map(|_| rd.u32()).collect::<Result<_>>()?;
        let x_counts = (0..fiber_bins).map(|_| rd.u64()).collect::<Result<_>>()?;
        let grid = (0..GRID_RES * GRID_RES).map(|_| rd.u32()).collect::<Result<_>>()?;
        let n = rd.u64()? as usize;
        let samples = (0..n)
            .map(|_| Ok([rd.f64()?, rd.f64()?, rd.f64()?]))
            .collect::<Result<_>>()?;
        rd.done()?;
        Ok(SrbEstimate {
            map_hash,
            seed,
            requested,
            iterations_used,
            contraction_budget,
            fiber_bins,
            y_bins,
            y_window,
            conditionals,
            x_counts,
            grid,
            kept,
            discarded,
            jittered,
            samples,
        })
    }
}

/// Smallest `n` with `Mⁿ|J| < resolution`.
pub fn iterations_for_resolution(spec: &GhmSpec, resolution: f64) -> Result<usize> {
    if !(resolution > 0.0) {
        return Err(GhmError::ParameterDomain { name: "resolution", value: resolution, expected: "> 0" });
    }
    let m = spec.max_fiber_contraction();
    let j = spec.fiber_len();
    if j < resolution {
        return Ok(1);
    }
    Ok(((resolution / j).ln() / m.ln()).floor() as usize + 1)
}

struct Endpoint {
    x: f64,
    y: f64,
}

#[derive(Default)]
struct BlockOutcome {
    points: Vec<Endpoint>,
    discarded: u64,
    jittered: u64,
}

fn run_orbit(spec: &GhmSpec, mut z: [f64; 2], n_iter: usize, jittered: &mut u64) -> Option<[f64; 2]> {
    let j = spec.extended_fiber;
    for _ in 0..n_iter {
        let i = match spec.locate(z[0]) {
            Ok(i) => i,
            Err(GhmError::Boundary { .. }) => {
                *jittered += 1;
                z[0] += BOUNDARY_JITTER;
                spec.locate(z[0]).ok()?
            }
            Err(_) => return None,
        };
        z = spec.branches[i].forward(z);
        if !(z[1] >= j.lo - DOMAIN_TOL && z[1] <= j.hi + DOMAIN_TOL) || !(0.0..=1.0).contains(&z[0]) {
            return None;
        }
    }
    Some(z)
}

fn run_block(spec: &GhmSpec, density: &Density1D, seed: u64, block: usize, count: usize, n_iter: usize) -> BlockOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    let y0 = spec.frame.from_native([0.0, 0.0])[1].clamp(spec.extended_fiber.lo, spec.extended_fiber.hi);
    let mut out = BlockOutcome { points: Vec::with_capacity(count), ..Default::default() };
    for _ in 0..count {
        let x = density.sample(rng.gen::<f64>());
        match run_orbit(spec, [x, y0], n_iter, &mut out.jittered) {
            Some(z) => out.points.push(Endpoint { x: z[0], y: z[1] }),
            None => out.discarded += 1,
        }
    }
    out
}

fn cell(v: f64, lo: f64, width: f64, n: usize) -> usize {
    let k = ((v - lo) / width * n as f64).floor();
    if k < 0.0 {
        0
    } else {
        (k as usize).min(n - 1)
    }
}

/// Draws `x ~ μ_g`, pushes `(x, 0)` forward `n_iter` times and bins the
/// endpoints. Orbit blocks use independent seeded streams and are merged in
/// block order, so the result does not depend on the worker count.
pub fn lift_srb(
    spec: &GhmSpec,
    density: &Density1D,
    n_iter: usize,
    n_samples: u64,
    seed: u64,
    opts: &LiftOptions,
) -> Result<SrbEstimate> {
    spec.require_skew("lift_srb")?;
    if n_iter < 1 {
        return Err(GhmError::ParameterDomain { name: "n_iter", value: 0.0, expected: "n_iter >= 1" });
    }
    if n_samples < 1 {
        return Err(GhmError::ParameterDomain { name: "n_samples", value: 0.0, expected: "n_samples >= 1" });
    }
    if opts.x_bins == 0 || opts.y_bins == 0 || opts.block_size == 0 {
        return Err(GhmError::InvalidInput("bin counts and block size must be positive".into()));
    }
    let y_window = {
        let a = spec.frame.to_native([0.0, spec.extended_fiber.lo])[1];
        let b = spec.frame.to_native([0.0, spec.extended_fiber.hi])[1];
        Interval::hull(a, b)
    };
    let n_blocks = n_samples.div_ceil(opts.block_size as u64) as usize;
    let mut est = SrbEstimate {
        map_hash: spec.map_hash(),
        seed,
        requested: n_samples,
        iterations_used: n_iter,
        contraction_budget: spec.max_fiber_contraction().powi(n_iter as i32) * spec.fiber_len(),
        fiber_bins: opts.x_bins,
        y_bins: opts.y_bins,
        y_window,
        conditionals: vec![0; opts.x_bins * opts.y_bins],
        x_counts: vec![0; opts.x_bins],
        grid: vec![0; GRID_RES * GRID_RES],
        kept: 0,
        discarded: 0,
        jittered: 0,
        samples: Vec::new(),
    };
    // bounded batches keep the per-block buffers from piling up
    let batch = 16usize;
    let mut start = 0;
    while start < n_blocks {
        let end = (start + batch).min(n_blocks);
        let outcomes = opts.exec.map_indexed(end - start, |i| {
            let b = start + i;
            let lo = b as u64 * opts.block_size as u64;
            let count = (n_samples - lo).min(opts.block_size as u64) as usize;
            run_block(spec, density, seed, b, count, n_iter)
        });
        for o in outcomes {
            est.discarded += o.discarded;
            est.jittered += o.jittered;
            for p in o.points {
                let xb = cell(p.x, 0.0, 1.0, opts.x_bins);
                let yn = spec.frame.to_native([p.x, p.y])[1];
                let yb = cell(yn, y_window.lo, y_window.len(), opts.y_bins);
                est.conditionals[xb * opts.y_bins + yb] += 1;
                est.x_counts[xb] += 1;
                let gx = cell(p.x, 0.0, 1.0, GRID_RES);
                let gy = cell(p.y, 0.0, 1.0, GRID_RES);
                est.grid[gx * GRID_RES + gy] += 1;
                est.kept += 1;
                if est.samples.len() < opts.keep_samples {
                    est.samples.push([p.x, p.y, 0.0]);
                }
            }
        }
        start = end;
    }
    if est.discarded as f64 > MAX_DISCARD_FRACTION * n_samples as f64 {
        return Err(GhmError::ExcessiveDiscards { discarded: est.discarded as usize, total: n_samples as usize });
    }
    let w = 1.0 / est.samples.len().max(1) as f64;
    est.samples.iter_mut().for_each(|s| s[2] = w);
    Ok(est)
}

/// Weight-normalized histogram over the unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub nx: usize,
    pub ny: usize,
    /// `mass[ix * ny + iy]`.
    pub mass: Vec<f64>,
    pub total_count: u64,
}

impl DensityGrid {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.mass[ix * self.ny + iy]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("ix,iy,x_lo,y_lo,mass\n");
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                s.push_str(&format!(
                    "{ix},{iy},{},{},{:e}\n",
                    ix as f64 / self.nx as f64,
                    iy as f64 / self.ny as f64,
                    self.at(ix, iy)
                ));
            }
        }
        s
    }
}

/// Aggregates the fine square histogram into `nx × ny` cells, assigning each
/// fine cell by its center (exact when `nx` and `ny` divide the fine grid).
pub fn density_grid(srb: &SrbEstimate, nx: usize, ny: usize) -> Result<DensityGrid> {
    if nx == 0 || ny == 0 {
        return Err(GhmError::InvalidInput("density grid needs nx, ny >= 1".into()));
    }
    let mut counts = vec![0u64; nx * ny];
    let map = |k: usize, n: usize| ((2 * k + 1) * n / (2 * GRID_RES)).min(n - 1);
    for gx in 0..GRID_RES {
        let ix = map(gx, nx);
        for gy in 0..GRID_RES {
            counts[ix * ny + map(gy, ny)] += srb.grid[gx * GRID_RES + gy] as u64;
        }
    }
    let total: u64 = counts.iter().sum();
    let mass = counts.iter().map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 }).collect();
    Ok(DensityGrid { nx, ny, mass, total_count: total })
}

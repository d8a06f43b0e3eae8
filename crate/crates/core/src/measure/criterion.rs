use serde::{Deserialize, Serialize};

use super::lift::SrbEstimate;
use crate::error::{GhmError, Result};
use crate::exec::Execution;
use crate::numeric::{compensated_sum, linear_fit, KahanSum};

/// `‖μ‖_r² = ∫ μ(B_r(z))² dz` for a histogram on equal cells of width `h`
/// starting at `lo`, with mass spread uniformly inside each cell.
///
/// The CDF is piecewise linear, so `z ↦ μ([z−r, z+r])` is piecewise linear
/// with knots at the cell edges shifted by `±r`, and the integral is exact.
pub fn histogram_l2_norm(probs: &[f64], lo: f64, h: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) || r < h {
        return Err(GhmError::Resolution { r, bin_width: h });
    }
    let Some(first) = probs.iter().position(|&p| p > 0.0) else {
        return Err(GhmError::InvalidInput("empty histogram".into()));
    };
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap();
    let p = &probs[first..=last];
    let n = p.len();
    let lo = lo + first as f64 * h;
    let mut cum = Vec::with_capacity(n + 1);
    let mut acc = KahanSum::new();
    cum.push(0.0);
    for &v in p {
        acc.add(v);
        cum.push(acc.value());
    }
    let cdf = |z: f64| -> f64 {
        let t = (z - lo) / h;
        if t <= 0.0 {
            return 0.0;
        }
        if t >= n as f64 {
            return cum[n];
        }
        let k = (t as usize).min(n - 1);
        cum[k] + p[k] * (t - k as f64)
    };
    let window = |z: f64| cdf(z + r) - cdf(z - r);
    // merge the two shifted edge sequences
    let edge = |k: usize| lo + k as f64 * h;
    let mut knots = Vec::with_capacity(2 * n + 2);
    let (mut i, mut j) = (0usize, 0usize);
    while i <= n || j <= n {
        let a = if i <= n { edge(i) - r } else { f64::INFINITY };
        let b = if j <= n { edge(j) + r } else { f64::INFINITY };
        if a <= b {
            knots.push(a);
            i += 1;
        } else {
            knots.push(b);
            j += 1;
        }
    }
    let mut total = KahanSum::new();
    let mut g0 = window(knots[0]);
    for w in knots.windows(2) {
        let len = w[1] - w[0];
        let g1 = window(w[1]);
        if len > 0.0 {
            total.add(len / 3.0 * (g0 * g0 + g0 * g1 + g1 * g1));
        }
        g0 = g1;
    }
    Ok(total.value())
}

/// `‖μ_x‖_r²` for one fiber bin, in native fiber coordinates.
pub fn fiber_l2_norm(srb: &SrbEstimate, x_bin: usize, r: f64) -> Result<f64> {
    if x_bin >= srb.fiber_bins {
        return Err(GhmError::InvalidInput(format!("fiber bin {x_bin} out of range")));
    }
    let h = srb.y_bin_width();
    if !(r > 0.0) || r < h {
        return Err(GhmError::Resolution { r, bin_width: h });
    }
    let probs = srb
        .conditional(x_bin)
        .ok_or_else(|| GhmError::InvalidInput(format!("fiber bin {x_bin} holds no samples")))?;
    histogram_l2_norm(&probs, srb.y_window.lo, h, r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOptions {
    /// "bounded" when max/min of `I(r)` over the three smallest radii is below this.
    pub bounded_ratio: f64,
    /// "diverging" when the log-log slope of `I(r)` is at or below this.
    pub diverging_slope: f64,
    pub exec: Execution,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        CriterionOptions { bounded_ratio: 3.0, diverging_slope: -0.2, exec: Execution::Parallel }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowVerdict {
    Bounded,
    Diverging,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionTable {
    pub r_values: Vec<f64>,
    pub i_of_r: Vec<f64>,
    /// `fiber_norms[k][b]`: `‖μ_x‖²` at `r_values[k]` for fiber bin `b` (0 if empty).
    pub fiber_norms: Vec<Vec<f64>>,
    pub bin_weights: Vec<f64>,
    /// max/min of `I(r)` over the three smallest radii.
    pub window_ratio: f64,
    pub loglog_slope: f64,
    pub verdict: WindowVerdict,
}

impl CriterionTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,I_r\n");
        for (r, i) in self.r_values.iter().zip(&self.i_of_r) {
            s.push_str(&format!("{r:e},{i:e}\n"));
        }
        s
    }

    /// max/min of `I(r)` over the whole sweep.
    pub fn sweep_ratio(&self) -> f64 {
        let max = self.i_of_r.iter().copied().fold(0.0, f64::max);
        let min = self.i_of_r.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// `I(r) = r⁻² Σ_b ‖μ_b‖_r² w_b` over the fiber bins, with `w_b` the share of
/// orbits in bin `b`.
pub fn tsujii_criterion(srb: &SrbEstimate, r_list: &[f64], opts: &CriterionOptions) -> Result<CriterionTable> {
    if r_list.is_empty() {
        return Err(GhmError::InvalidInput("r_list is empty".into()));
    }
    if r_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GhmError::InvalidInput("r_list must be strictly decreasing".into()));
    }
    let h = srb.y_bin_width();
    if let Some(&r) = r_list.iter().find(|&&r| !(r > 0.0) || r < h) {
        return Err(GhmError::Resolution { r, bin_width: h });
    }
    let weights = srb.bin_weights();
    let mut fiber_norms = Vec::with_capacity(r_list.len());
    let mut i_of_r = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let norms = opts.exec.map_indexed(srb.fiber_bins, |b| {
            if srb.x_counts[b] == 0 {
                Ok(0.0)
            } else {
                fiber_l2_norm(srb, b, r)
            }
        });
        let norms = norms.into_iter().collect::<Result<Vec<f64>>>()?;
        i_of_r.push(compensated_sum(norms.iter().zip(&weights).map(|(n, w)| n * w)) / (r * r));
        fiber_norms.push(norms);
    }
    let tail = &i_of_r[i_of_r.len().saturating_sub(3)..];
    let max = tail.iter().copied().fold(0.0, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let window_ratio = max / min;
    let loglog_slope = if r_list.len() >= 2 {
        let lx: Vec<f64> = r_list.iter().map(|r| r.ln()).collect();
        let ly: Vec<f64> = i_of_r.iter().map(|i| i.ln()).collect();
        linear_fit(&lx, &ly).0
    } else {
        0.0
    };
    let verdict = if r_list.len() >= 2 && loglog_slope <= opts.diverging_slope {
        WindowVerdict::Diverging
    } else if window_ratio < opts.bounded_ratio {
        WindowVerdict::Bounded
    } else {
        WindowVerdict::Undetermined
    };
    Ok(CriterionTable { r_values: r_list.to_vec(), i_of_r, fiber_norms, bin_weights: weights, window_ratio, loglog_slope, verdict })
}

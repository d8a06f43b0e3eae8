use serde::{Deserialize, Serialize};

use crate::error::{GhmError, Result};
use crate::exec::Execution;
use crate::horseshoe::GhmSpec;
use crate::symbolic::{base_cylinder, cylinder_diameter, Word, DEFAULT_X_GRID};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FatnessOptions {
    pub min_depth: usize,
    pub x_grid_n: usize,
    /// Word count above which deeper levels are dropped and the fit is flagged partial.
    pub max_words: usize,
    pub exec: Execution,
}

impl Default for FatnessOptions {
    fn default() -> Self {
        FatnessOptions { min_depth: 1, x_grid_n: DEFAULT_X_GRID, max_words: 1 << 21, exec: Execution::Parallel }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FatnessFit {
    pub k1: f64,
    /// Largest feasible exponent; `None` when no `ε > 0` is feasible.
    pub epsilon: Option<f64>,
    /// `min_A log(K₁ d(A)^{1+ε}) − log|I_A|` at the fitted constants (at ε = 0 on failure).
    pub per_word_slack: f64,
    pub words_used: usize,
    pub depth_used: usize,
    pub partial: bool,
    pub passed: bool,
}

struct Sample {
    len: usize,
    log_i: f64,
    log_d: f64,
}

/// `log K₁(ε)`: the smallest constant making the inequality hold on the
/// shortest words used. Anchoring `K₁` there keeps the problem bounded, since
/// with a free constant any finite word set admits arbitrarily large `ε`.
fn anchored_k(samples: &[Sample], min_len: usize, eps: f64) -> f64 {
    samples
        .iter()
        .filter(|s| s.len == min_len)
        .map(|s| s.log_i - (1.0 + eps) * s.log_d)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn slack(samples: &[Sample], min_len: usize, eps: f64) -> f64 {
    let k = anchored_k(samples, min_len, eps);
    samples
        .iter()
        .map(|s| k + (1.0 + eps) * s.log_d - s.log_i)
        .fold(f64::INFINITY, f64::min)
}

/// Largest `ε` with `|I_A| ≤ K₁ d(A)^{1+ε}` on every word of length
/// `min_depth..=depth_max`, `K₁` anchored on the length-`min_depth` words.
pub fn fatness_fit(spec: &GhmSpec, depth_max: usize, opts: &FatnessOptions) -> Result<FatnessFit> {
    spec.require_skew("fatness_fit")?;
    if depth_max < 2 || opts.min_depth < 1 || opts.min_depth >= depth_max {
        return Err(GhmError::ParameterDomain {
            name: "depth_max",
            value: depth_max as f64,
            expected: "depth_max >= 2 and above min_depth",
        });
    }
    let mut words = Vec::new();
    let mut depth_used = opts.min_depth - 1;
    let mut partial = false;
    for n in opts.min_depth..=depth_max {
        let count = spec.alphabet().checked_pow(n as u32).unwrap_or(usize::MAX);
        if words.len().saturating_add(count) > opts.max_words {
            partial = true;
            break;
        }
        words.extend(Word::all_of_length(spec.alphabet(), n));
        depth_used = n;
    }
    if depth_used < opts.min_depth + 1 {
        return Err(GhmError::Budget(format!("fatness fit needs more than {} words", opts.max_words)));
    }
    let samples = opts
        .exec
        .map_slice(&words, |w| -> Result<Sample> {
            Ok(Sample {
                len: w.len(),
                log_i: base_cylinder(spec, w)?.len().ln(),
                log_d: cylinder_diameter(spec, w, opts.x_grid_n)?.ln(),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let min_len = opts.min_depth;
    let base_slack = slack(&samples, min_len, 0.0);
    let fail = |slack| FatnessFit {
        k1: anchored_k(&samples, min_len, 0.0).exp(),
        epsilon: None,
        per_word_slack: slack,
        words_used: samples.len(),
        depth_used,
        partial,
        passed: false,
    };
    let tiny = 1e-12;
    if base_slack < -tiny || slack(&samples, min_len, tiny) < -tiny {
        return Ok(fail(base_slack));
    }
    // bracket the feasibility edge, then bisect
    let mut lo = tiny;
    let mut hi = 1.0;
    while slack(&samples, min_len, hi) >= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(GhmError::Degenerate("fatness exponent unbounded on this word set".into()));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if slack(&samples, min_len, mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eps = lo;
    let s = slack(&samples, min_len, eps);
    Ok(FatnessFit {
        k1: anchored_k(&samples, min_len, eps).exp(),
        epsilon: Some(eps),
        per_word_slack: s,
        words_used: samples.len(),
        depth_used,
        partial,
        passed: s >= 0.0 && eps > 0.0,
    })
}

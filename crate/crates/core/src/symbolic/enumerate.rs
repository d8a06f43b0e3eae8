use serde::{Deserialize, Serialize};

use super::cache::{CylinderStore, CylinderSummary};
use super::cylinder::{base_cylinder_unchecked, diameter_on_grid};
use super::Word;
use crate::error::{GhmError, Result};
use crate::exec::Execution;
use crate::horseshoe::GhmSpec;
use crate::numeric::{linspace, Interval};

/// A member of `M(r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MEntry {
    pub word: Word,
    pub base: Interval,
    pub d: f64,
}

#[derive(Clone, Debug)]
pub struct EnumerateOptions {
    pub x_grid_n: usize,
    /// Abort with [`GhmError::Budget`] once this many words are collected.
    pub max_words: usize,
    pub max_depth: usize,
    pub exec: Execution,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions {
            x_grid_n: super::DEFAULT_X_GRID,
            max_words: 5_000_000,
            max_depth: 64,
            exec: Execution::Parallel,
        }
    }
}

struct Ctx<'a> {
    spec: &'a GhmSpec,
    grid: Vec<f64>,
    r: f64,
    contraction: f64,
    opts: &'a EnumerateOptions,
    store: Option<&'a CylinderStore>,
}

impl Ctx<'_> {
    fn diameter(&self, word: &[u16]) -> f64 {
        if let Some(store) = self.store {
            if let Some(s) = store.get(word) {
                return s.d;
            }
        }
        let d = diameter_on_grid(&self.spec.branches, self.spec.extended_fiber, word, &self.grid);
        if let Some(store) = self.store {
            store.insert(
                Word::from(word),
                CylinderSummary {
                    base: base_cylinder_unchecked(&self.spec.branches, word),
                    d,
                    fiber_samples: Vec::new(),
                },
            );
        }
        d
    }

    fn entry(&self, word: Word, d: f64) -> MEntry {
        let base = base_cylinder_unchecked(&self.spec.branches, word.symbols());
        MEntry { word, base, d }
    }

    /// Expands `word` (which satisfies `d ≥ r`) one level: either the word is
    /// terminal, or the returned children all satisfy `d ≥ r`.
    fn expand(&self, word: &Word, d: f64) -> Result<Option<Vec<(Word, f64)>>> {
        if self.contraction * d < self.r {
            return Ok(None);
        }
        if word.len() >= self.opts.max_depth {
            return Err(GhmError::Budget(format!(
                "word depth {} reached before d < r = {}",
                word.len(),
                self.r
            )));
        }
        let mut kids = Vec::with_capacity(self.spec.alphabet());
        for s in 0..self.spec.alphabet() as u16 {
            let child = word.child(s);
            let dc = self.diameter(child.symbols());
            if dc < self.r {
                return Ok(None);
            }
            kids.push((child, dc));
        }
        Ok(Some(kids))
    }

    fn dfs(&self, word: Word, d: f64, out: &mut Vec<MEntry>) -> Result<()> {
        match self.expand(&word, d)? {
            None => {
                out.push(self.entry(word, d));
                if out.len() > self.opts.max_words {
                    return Err(GhmError::Budget(format!(
                        "more than {} words in M({})",
                        self.opts.max_words, self.r
                    )));
                }
                Ok(())
            }
            Some(kids) => {
                for (w, dc) in kids {
                    self.dfs(w, dc, out)?;
                }
                Ok(())
            }
        }
    }
}

/// Enumerates `M(r)`: the antichain of words with `d ≥ r` at which the tree
/// search stops because some one-symbol extension has `d < r`. Results are
/// sorted lexicographically and do not depend on the execution strategy.
pub fn enumerate_m(spec: &GhmSpec, r: f64, opts: &EnumerateOptions) -> Result<Vec<MEntry>> {
    enumerate_m_with_store(spec, r, opts, None)
}

pub fn enumerate_m_with_store(
    spec: &GhmSpec,
    r: f64,
    opts: &EnumerateOptions,
    store: Option<&CylinderStore>,
) -> Result<Vec<MEntry>> {
    spec.require_skew("enumerate_m")?;
    if !(r > 0.0) || r >= spec.fiber_len() {
        return Err(GhmError::Degenerate(format!(
            "scale r = {r} must satisfy 0 < r < |J| = {}",
            spec.fiber_len()
        )));
    }
    if opts.x_grid_n < 2 {
        return Err(GhmError::InvalidInput(format!("x grid of {} points", opts.x_grid_n)));
    }
    let ctx = Ctx {
        spec,
        grid: linspace(0.0, 1.0, opts.x_grid_n),
        r,
        contraction: spec.max_fiber_contraction(),
        opts,
        store,
    };

    // breadth-first until there is enough independent work, then one
    // depth-first search per frontier node
    let mut done = Vec::new();
    let mut frontier = vec![(Word::empty(), spec.fiber_len())];
    while !frontier.is_empty() && frontier.len() < 256 {
        let mut next = Vec::new();
        for (w, d) in frontier {
            match ctx.expand(&w, d)? {
                None => done.push(ctx.entry(w, d)),
                Some(kids) => next.extend(kids),
            }
        }
        frontier = next;
    }
    let parts = opts.exec.map_slice(&frontier, |(w, d)| {
        let mut out = Vec::new();
        ctx.dfs(w.clone(), *d, &mut out).map(|_| out)
    });
    for p in parts {
        done.extend(p?);
    }
    if done.len() > opts.max_words {
        return Err(GhmError::Budget(format!("more than {} words in M({r})", opts.max_words)));
    }
    done.sort_by(|a, b| a.word.cmp(&b.word));
    Ok(done)
}

/// `N(r)`: length of the leading run of strips whose fiber contraction
/// infimum exceeds `r`.
pub fn truncate_alphabet<I>(contractions: I, r: f64) -> usize
where
    I: IntoIterator<Item = f64>,
{
    contractions.into_iter().take_while(|&c| c > r).count()
}

/// [`truncate_alphabet`] over the strips of a finite spec.
pub fn truncate_spec_alphabet(spec: &GhmSpec, r: f64) -> usize {
    truncate_alphabet(spec.strip_contractions(), r)
}

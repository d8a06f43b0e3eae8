//! Memo table for cylinder geometry and its versioned on-disk form.
//!
//! File layout (little endian):
//!
//! ```text
//! magic      8 bytes  "GHMCYL\0\0"
//! version    u32
//! map hash   16 ascii bytes
//! grid size  u32
//! samples    u32      fiber samples per entry
//! count      u64
//! entries    count × { len u16, symbols u16×len, I.lo f64, I.hi f64, d f64,
//!                      samples × (lo f64, hi f64) }
//! digest     32 bytes SHA-256 of everything above
//! ```

use std::collections::HashMap;
use std::path::Path;
use std::sync::RwLock;

use super::Word;
use crate::binfmt::{Reader, Writer};
use crate::error::{GhmError, Result};
use crate::numeric::Interval;

pub const CACHE_MAGIC: &[u8; 8] = b"GHMCYL\0\0";
pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CylinderSummary {
    pub base: Interval,
    pub d: f64,
    /// `Û(x)` at equally spaced base points; may be empty.
    pub fiber_samples: Vec<Interval>,
}

/// Concurrent insert-or-get table keyed by word, tied to one map and grid.
#[derive(Debug)]
pub struct CylinderStore {
    pub map_hash: String,
    pub grid_n: u32,
    entries: RwLock<HashMap<Word, CylinderSummary>>,
}

impl CylinderStore {
    pub fn new(map_hash: impl Into<String>, grid_n: usize) -> Self {
        CylinderStore {
            map_hash: map_hash.into(),
            grid_n: grid_n as u32,
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn get(&self, word: &[u16]) -> Option<CylinderSummary> {
        let map = self.entries.read().expect("cylinder store poisoned");
        map.get(&Word::from(word)).cloned()
    }

    /// Keeps the first value stored for a word.
    pub fn insert(&self, word: Word, summary: CylinderSummary) {
        let mut map = self.entries.write().expect("cylinder store poisoned");
        map.entry(word).or_insert(summary);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cylinder store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries sorted by word.
    pub fn snapshot(&self) -> Vec<(Word, CylinderSummary)> {
        let map = self.entries.read().expect("cylinder store poisoned");
        let mut v: Vec<_> = map.iter().map(|(w, s)| (w.clone(), s.clone())).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let entries = self.snapshot();
        let samples = entries.first().map_or(0, |(_, s)| s.fiber_samples.len());
        let mut out = Writer::new(CACHE_MAGIC, CACHE_VERSION);
        out.ascii(&self.map_hash, 16);
        out.u32(self.grid_n);
        out.u32(samples as u32);
        out.u64(entries.len() as u64);
        for (w, s) in &entries {
            if s.fiber_samples.len() != samples {
                return Err(GhmError::InvalidInput("entries carry unequal sample counts".into()));
            }
            out.u16(w.len() as u16);
            for &sym in w.symbols() {
                out.u16(sym);
            }
            for v in [s.base.lo, s.base.hi, s.d] {
                out.f64(v);
            }
            for iv in &s.fiber_samples {
                out.f64(iv.lo);
                out.f64(iv.hi);
            }
        }
        out.finish(path)
    }

    /// Loads a cache file, verifying version and digest. `expect_hash` guards
    /// against reusing a cache written for a different map.
    pub fn load(path: &Path, expect_hash: Option<&str>) -> Result<Self> {
        let mut rd = Reader::open(path, CACHE_MAGIC, CACHE_VERSION, "cylinder cache")?;
        let hash = rd.ascii(16)?;
        if let Some(expect) = expect_hash {
            if hash != expect {
                return Err(rd.format_error(format!("written for map {hash}, expected {expect}")));
            }
        }
        let grid_n = rd.u32()?;
        let samples = rd.u32()? as usize;
        let count = rd.u64()?;
        let store = CylinderStore::new(hash, grid_n as usize);
        {
            let mut map = store.entries.write().expect("cylinder store poisoned");
            for _ in 0..count {
                let len = rd.u16()? as usize;
                let syms = (0..len).map(|_| rd.u16()).collect::<Result<Vec<u16>>>()?;
                let base = Interval::new(rd.f64()?, rd.f64()?);
                let d = rd.f64()?;
                let fiber_samples = (0..samples)
                    .map(|_| Ok(Interval::new(rd.f64()?, rd.f64()?)))
                    .collect::<Result<Vec<_>>>()?;
                map.insert(Word(syms), CylinderSummary { base, d, fiber_samples });
            }
        }
        rd.done()?;
        Ok(store)
    }
}

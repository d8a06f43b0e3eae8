use std::fmt;

use serde::{Deserialize, Serialize};

/// Finite itinerary `(a₁, …, aₙ)` of 0-based strip indices; `a₁` is applied
/// first. The empty word denotes the whole space.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(pub Vec<u16>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u16] {
        &self.0
    }

    /// `self` followed by `symbol`, applied last.
    pub fn child(&self, symbol: u16) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(symbol);
        Word(v)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Every word of length `n` over `alphabet` symbols in lexicographic order.
    pub fn all_of_length(alphabet: usize, n: usize) -> Vec<Word> {
        let mut out = vec![Word::empty()];
        for _ in 0..n {
            out = out
                .iter()
                .flat_map(|w| (0..alphabet as u16).map(move |s| w.child(s)))
                .collect();
        }
        out
    }
}

impl From<Vec<u16>> for Word {
    fn from(v: Vec<u16>) -> Self {
        Word(v)
    }
}

impl From<&[u16]> for Word {
    fn from(v: &[u16]) -> Self {
        Word(v.to_vec())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("()");
        }
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(".")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

//! Candidate subsets and include/exclude transforms.

use crate::error::{Error, Result};

/// A subset of an `n`-candidate population, stored as a dense indicator
/// vector so populations larger than 64 are supported.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Selection {
    bits: Vec<bool>,
}

impl Selection {
    /// The empty subset over `n` candidates.
    pub fn empty(n: usize) -> Self {
        Selection { bits: vec![false; n] }
    }

    /// The full subset over `n` candidates.
    pub fn full(n: usize) -> Self {
        Selection { bits: vec![true; n] }
    }

    /// Build from explicit candidate indices.
    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::Argument(format!(
                    "candidate index {i} out of range for population of {n}"
                )));
            }
            bits[i] = true;
        }
        Ok(Selection { bits })
    }

    /// Build from a bit mask (bit `k` = candidate `k`); requires `n` ≤ 64 and
    /// no bits set above `n`.
    pub fn from_mask(n: usize, mask: u64) -> Result<Self> {
        if n > 64 {
            return Err(Error::Capacity(format!("bit masks cover at most 64 candidates, got {n}")));
        }
        if n < 64 && mask >> n != 0 {
            return Err(Error::Argument(format!("mask {mask:#x} has bits above candidate {n}")));
        }
        let bits = (0..n).map(|i| mask & (1 << i) != 0).collect();
        Ok(Selection { bits })
    }

    /// The subset as a bit mask; fails for populations above 64.
    pub fn mask(&self) -> Result<u64> {
        if self.bits.len() > 64 {
            return Err(Error::Capacity(format!(
                "bit masks cover at most 64 candidates, got {}",
                self.bits.len()
            )));
        }
        let mut m = 0u64;
        for (i, b) in self.bits.iter().enumerate() {
            if *b {
                m |= 1 << i;
            }
        }
        Ok(m)
    }

    /// Population size this subset ranges over.
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    /// True when the population is empty (not when the subset is empty).
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of selected candidates.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Whether candidate `i` is selected.
    pub fn contains(&self, i: usize) -> bool {
        self.bits.get(i).copied().unwrap_or(false)
    }

    /// Iterator over selected candidate indices, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| i)
    }

    /// Add candidate `i` in place.
    pub fn insert(&mut self, i: usize) {
        self.bits[i] = true;
    }

    /// Remove candidate `i` in place.
    pub fn remove(&mut self, i: usize) {
        self.bits[i] = false;
    }

    /// Copy with candidate `i` included.
    pub fn with(&self, i: usize) -> Selection {
        let mut s = self.clone();
        s.insert(i);
        s
    }

    /// Copy with candidate `i` excluded.
    pub fn without(&self, i: usize) -> Selection {
        let mut s = self.clone();
        s.remove(i);
        s
    }

    /// Apply an include/exclude transform: forced-in candidates are added,
    /// forced-out candidates removed. Idempotent.
    pub fn forced(&self, force: &Force) -> Selection {
        let mut s = self.clone();
        for &i in force.include() {
            assert!(i < s.bits.len(), "forced index {i} out of range");
            s.bits[i] = true;
        }
        for &i in force.exclude() {
            assert!(i < s.bits.len(), "forced index {i} out of range");
            s.bits[i] = false;
        }
        s
    }
}

/// A set-level transform that pins some candidates in and others out of every
/// drawn subset. Used for forced policy utilities U(π + i − j).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Force {
    include: Vec<usize>,
    exclude: Vec<usize>,
}

impl Force {
    /// Build a transform; the include and exclude sets must be disjoint.
    pub fn new(include: Vec<usize>, exclude: Vec<usize>) -> Result<Self> {
        for i in &include {
            if exclude.contains(i) {
                return Err(Error::Argument(format!(
                    "candidate {i} cannot be forced both in and out"
                )));
            }
        }
        Ok(Force { include, exclude })
    }

    /// Candidates pinned into every subset.
    pub fn include(&self) -> &[usize] {
        &self.include
    }

    /// Candidates pinned out of every subset.
    pub fn exclude(&self) -> &[usize] {
        &self.exclude
    }

    /// True when the transform changes nothing.
    pub fn is_empty(&self) -> bool {
        self.include.is_empty() && self.exclude.is_empty()
    }
}

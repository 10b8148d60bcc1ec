//! Sparse row vectors.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SparseError {
    #[error("indices must be strictly increasing and below {dim}")]
    BadIndex { dim: usize },
    #[error("non-finite value at column {0}")]
    NonFinite(usize),
}

/// Sorted `(column, value)` pairs with no explicit zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn new(dim: usize, entries: Vec<(u32, f64)>) -> Result<Self, SparseError> {
        let mut prev: Option<u32> = None;
        for &(i, v) in &entries {
            if (i as usize) >= dim || prev.is_some_and(|p| p >= i) {
                return Err(SparseError::BadIndex { dim });
            }
            if !v.is_finite() {
                return Err(SparseError::NonFinite(i as usize));
            }
            prev = Some(i);
        }
        Ok(Self {
            dim,
            entries: entries.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        })
    }

    pub fn from_dense(values: &[f64]) -> Result<Self, SparseError> {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .collect();
        Self::new(values.len(), entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn get(&self, column: usize) -> f64 {
        match self
            .entries
            .binary_search_by_key(&(column as u32), |&(i, _)| i)
        {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    /// Keep only the columns with `Some(new_index)` in `remap`, renumbered.
    /// `remap` must be monotone over the kept columns.
    pub fn project(&self, remap: &[Option<u32>], new_dim: usize) -> FeatureVector {
        let entries = self
            .entries
            .iter()
            .filter_map(|&(i, v)| remap[i as usize].map(|j| (j, v)))
            .collect();
        FeatureVector {
            dim: new_dim,
            entries,
        }
    }

    /// `index:value` pairs separated by spaces, for debugging dumps.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, &(i, v)) in self.entries.iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            write!(s, "{i}:{v}").unwrap();
        }
        s
    }
}

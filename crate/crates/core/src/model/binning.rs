//! Per-feature histogram bins computed once from the training matrix.
//!
//! Bin 0 of every feature is the default bin: it collects zeros (absent
//! sparse entries) and NaNs. Non-zero values fall into bins `1..=k`, ordered
//! by value, separated by `k - 1` split points.

use rayon::prelude::*;

use crate::sparse::FeatureVector;

#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    /// Split points between consecutive non-default bins, strictly increasing.
    uppers: Vec<f64>,
    /// Number of non-default bins; 0 when the feature is never non-zero.
    bins: usize,
}

impl BinMapper {
    /// Build from the feature's non-zero values. At most `max_nondefault` bins.
    pub fn from_values(mut values: Vec<f64>, max_nondefault: usize) -> Self {
        values.retain(|v| *v != 0.0 && !v.is_nan());
        if values.is_empty() || max_nondefault == 0 {
            return Self {
                uppers: Vec::new(),
                bins: 0,
            };
        }
        values.sort_by(f64::total_cmp);
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for v in values.iter().copied() {
            match distinct.last_mut() {
                Some((last, c)) if *last == v => *c += 1,
                _ => distinct.push((v, 1)),
            }
        }
        let mut uppers = Vec::new();
        if distinct.len() <= max_nondefault {
            for w in distinct.windows(2) {
                uppers.push(midpoint(w[0].0, w[1].0));
            }
        } else {
            // Equal-frequency bins over the distinct values.
            let total = values.len() as f64;
            let per_bin = total / max_nondefault as f64;
            let mut seen = 0usize;
            for i in 0..distinct.len() - 1 {
                seen += distinct[i].1;
                let remaining_values = distinct.len() - 1 - i;
                let remaining_bins = max_nondefault - 1 - uppers.len();
                if remaining_bins == 0 {
                    break;
                }
                if seen as f64 >= per_bin * (uppers.len() + 1) as f64 || remaining_values <= remaining_bins {
                    uppers.push(midpoint(distinct[i].0, distinct[i + 1].0));
                }
            }
        }
        let bins = uppers.len() + 1;
        Self { uppers, bins }
    }

    pub fn nondefault_bins(&self) -> usize {
        self.bins
    }

    /// 0 for zero/NaN, otherwise `1..=nondefault_bins()`.
    pub fn bin(&self, v: f64) -> usize {
        if v == 0.0 || v.is_nan() || self.bins == 0 {
            return 0;
        }
        1 + self.uppers.partition_point(|&u| u < v)
    }

    /// The threshold such that `v <= threshold` exactly when `bin(v) <= j`,
    /// for non-zero `v`. `j == 0` sends every non-zero value right.
    pub fn threshold(&self, j: usize) -> f64 {
        if j == 0 {
            f64::MIN
        } else {
            self.uppers[j - 1]
        }
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// The training matrix in binned CSR form, with only non-default entries stored.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub mappers: Vec<BinMapper>,
    /// Offset of each feature's bin 0 in a flat histogram.
    pub offsets: Vec<usize>,
    pub total_bins: usize,
    row_ptr: Vec<usize>,
    features: Vec<u32>,
    bins: Vec<u16>,
}

impl BinnedMatrix {
    pub fn build(rows: &[FeatureVector], dim: usize, max_bins: usize) -> Self {
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); dim];
        for row in rows {
            for &(i, v) in row.entries() {
                columns[i as usize].push(v);
            }
        }
        let max_nondefault = max_bins.saturating_sub(1);
        let mappers: Vec<BinMapper> = columns
            .into_par_iter()
            .map(|vals| BinMapper::from_values(vals, max_nondefault))
            .collect();
        let mut offsets = Vec::with_capacity(dim);
        let mut total_bins = 0;
        for m in &mappers {
            offsets.push(total_bins);
            total_bins += m.nondefault_bins() + 1;
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut features = Vec::new();
        let mut bins = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for &(i, v) in row.entries() {
                let b = mappers[i as usize].bin(v);
                if b != 0 {
                    features.push(i);
                    bins.push(b as u16);
                }
            }
            row_ptr.push(features.len());
        }
        Self {
            mappers,
            offsets,
            total_bins,
            row_ptr,
            features,
            bins,
        }
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.mappers.len()
    }

    /// Non-default `(feature, bin)` entries of a row, by increasing feature.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.features[span.clone()]
            .iter()
            .zip(&self.bins[span])
            .map(|(&f, &b)| (f as usize, b as usize))
    }

    /// Bin of one cell.
    pub fn bin(&self, r: usize, feature: usize) -> usize {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.features[span.clone()].binary_search(&(feature as u32)) {
            Ok(p) => self.bins[span.start + p] as usize,
            Err(_) => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distinct_values_get_own_bins() {
        let m = BinMapper::from_values(vec![3.0, 1.0, 0.0, 1.0, 2.0], 254);
        assert_eq!(m.nondefault_bins(), 3);
        assert_eq!(m.bin(0.0), 0);
        assert_eq!(m.bin(1.0), 1);
        assert_eq!(m.bin(2.0), 2);
        assert_eq!(m.bin(3.0), 3);
        assert_eq!(m.threshold(1), 1.5);
    }

    #[test]
    fn empty_feature() {
        let m = BinMapper::from_values(vec![0.0, 0.0], 254);
        assert_eq!(m.nondefault_bins(), 0);
        assert_eq!(m.bin(5.0), 0);
    }

    #[test]
    fn caps_bin_count() {
        let vals: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let m = BinMapper::from_values(vals, 10);
        assert_eq!(m.nondefault_bins(), 10);
    }

    proptest! {
        #[test]
        fn threshold_agrees_with_bins(
            vals in proptest::collection::vec(-50i32..50, 1..200),
            cap in 1usize..20,
            probe in -60i32..60,
        ) {
            let vals: Vec<f64> = vals.into_iter().map(|v| v as f64 / 4.0).collect();
            let m = BinMapper::from_values(vals, cap);
            prop_assert!(m.nondefault_bins() <= cap);
            let v = probe as f64 / 4.0;
            if v != 0.0 && m.nondefault_bins() > 0 {
                for j in 0..m.nondefault_bins() {
                    prop_assert_eq!(v <= m.threshold(j), m.bin(v) <= j);
                }
            }
        }
    }

    #[test]
    fn matrix_lookup() {
        let rows = vec![
            FeatureVector::new(3, vec![(0, 1.0), (2, 5.0)]).unwrap(),
            FeatureVector::new(3, vec![(1, 2.0)]).unwrap(),
        ];
        let m = BinnedMatrix::build(&rows, 3, 255);
        assert_eq!(m.rows(), 2);
        assert_eq!(m.bin(0, 2), 1);
        assert_eq!(m.bin(0, 1), 0);
        assert_eq!(m.row(1).collect::<Vec<_>>(), vec![(1, 1)]);
        assert_eq!(m.offsets, vec![0, 2, 4]);
        assert_eq!(m.total_bins, 6);
    }
}

//! Histogram split search.

use std::ops::{Add, AddAssign, Sub};

/// Gradient, hessian and row count accumulated in one histogram bin.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStats {
    pub grad: f64,
    pub hess: f64,
    pub count: usize,
}

impl BinStats {
    pub fn new(grad: f64, hess: f64, count: usize) -> Self {
        Self { grad, hess, count }
    }
}

impl Add for BinStats {
    type Output = BinStats;

    fn add(self, o: BinStats) -> BinStats {
        BinStats::new(self.grad + o.grad, self.hess + o.hess, self.count + o.count)
    }
}

impl AddAssign for BinStats {
    fn add_assign(&mut self, o: BinStats) {
        *self = *self + o;
    }
}

impl Sub for BinStats {
    type Output = BinStats;

    fn sub(self, o: BinStats) -> BinStats {
        BinStats::new(self.grad - o.grad, self.hess - o.hess, self.count - o.count)
    }
}

/// One feature's histogram: the default (zero/missing) bin plus the
/// non-default bins in increasing value order.
#[derive(Debug, Clone, Copy)]
pub struct FeatureHistogram<'a> {
    pub feature: usize,
    pub default: BinStats,
    pub bins: &'a [BinStats],
}

/// A split of a leaf: non-default bins `1..=bin` go left, the rest right; the
/// default bin follows `default_left`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub bin: usize,
    pub default_left: bool,
    pub gain: f64,
    pub left: BinStats,
    pub right: BinStats,
}

/// ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)].
pub fn split_gain(left: BinStats, right: BinStats, parent: BinStats, lambda: f64) -> f64 {
    0.5 * (left.grad * left.grad / (left.hess + lambda) + right.grad * right.grad / (right.hess + lambda)
        - parent.grad * parent.grad / (parent.hess + lambda))
}

/// Best split over every boundary of every histogram.
///
/// Candidates per feature with `k` non-default bins are `bin ∈ 0..k` with both
/// default directions, except that `bin == 0` only exists with the default bin
/// on the left (otherwise the left side would be empty). Histograms are taken in
/// the given order; ties keep the earliest feature, then the lower bin, then
/// `default_left = true`. Returns `None` unless the best gain is strictly
/// positive with at least `min_data_in_leaf` rows on each side.
pub fn find_best_split(
    histograms: &[FeatureHistogram<'_>],
    lambda: f64,
    min_data_in_leaf: usize,
) -> Option<SplitCandidate> {
    let mut best: Option<SplitCandidate> = None;
    for h in histograms {
        let mut total = h.default;
        for b in h.bins {
            total += *b;
        }
        let mut prefix = BinStats::default();
        for j in 0..h.bins.len() {
            if j > 0 {
                prefix += h.bins[j - 1];
            }
            for default_left in [true, false] {
                if j == 0 && !default_left {
                    continue;
                }
                let left = if default_left { h.default + prefix } else { prefix };
                let right = total - left;
                if left.count < min_data_in_leaf || right.count < min_data_in_leaf {
                    continue;
                }
                let gain = split_gain(left, right, total, lambda);
                if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate {
                        feature: h.feature,
                        bin: j,
                        default_left,
                        gain,
                        left,
                        right,
                    });
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(feature: usize, default: BinStats, bins: &[BinStats]) -> FeatureHistogram<'_> {
        FeatureHistogram { feature, default, bins }
    }

    #[test]
    fn all_zero_gradients() {
        let bins = [BinStats::new(0.0, 1.0, 5), BinStats::new(0.0, 1.0, 5)];
        assert_eq!(find_best_split(&[hist(0, BinStats::new(0.0, 1.0, 5), &bins)], 0.0, 1), None);
    }

    #[test]
    fn two_bin_example() {
        // Default bin holds (−1, 1); the single non-default bin holds (+1, 1).
        let bins = [BinStats::new(1.0, 1.0, 1)];
        let s = find_best_split(&[hist(0, BinStats::new(-1.0, 1.0, 1), &bins)], 0.0, 1).unwrap();
        assert_eq!(s.gain, 1.0);
        assert_eq!((s.bin, s.default_left), (0, true));
    }

    #[test]
    fn min_data_blocks_split() {
        let bins = [BinStats::new(1.0, 1.0, 1)];
        assert_eq!(find_best_split(&[hist(0, BinStats::new(-1.0, 1.0, 1), &bins)], 0.0, 2), None);
    }

    #[test]
    fn tie_prefers_lower_feature() {
        let bins = [BinStats::new(1.0, 1.0, 1)];
        let d = BinStats::new(-1.0, 1.0, 1);
        let s = find_best_split(&[hist(3, d, &bins), hist(5, d, &bins)], 0.0, 1).unwrap();
        assert_eq!(s.feature, 3);
    }

    /// Every partition of every feature, enumerated from scratch: each side's
    /// sums are recomputed from the bins it contains.
    fn oracle(hists: &[(usize, BinStats, Vec<BinStats>)], lambda: f64, min_data: usize) -> Option<(usize, usize, bool, f64)> {
        let mut best: Option<(usize, usize, bool, f64)> = None;
        for (feature, default, bins) in hists {
            let parent = bins.iter().fold(*default, |a, b| a + *b);
            for j in 0..bins.len() {
                for dl in [true, false] {
                    if j == 0 && !dl {
                        continue;
                    }
                    let mut left = BinStats::default();
                    let mut right = BinStats::default();
                    if dl {
                        left = left + *default;
                    } else {
                        right = right + *default;
                    }
                    for (i, b) in bins.iter().enumerate() {
                        if i < j {
                            left = left + *b;
                        } else {
                            right = right + *b;
                        }
                    }
                    if left.count < min_data || right.count < min_data {
                        continue;
                    }
                    let gain = 0.5
                        * (left.grad.powi(2) / (left.hess + lambda) + right.grad.powi(2) / (right.hess + lambda)
                            - parent.grad.powi(2) / (parent.hess + lambda));
                    let better = match best {
                        None => gain > 0.0,
                        Some((bf, bj, bdl, bg)) => {
                            gain > bg
                                || (gain == bg && (*feature, j, !dl) < (bf, bj, !bdl))
                        }
                    };
                    if better {
                        best = Some((*feature, j, dl, gain));
                    }
                }
            }
        }
        best
    }

    fn stats_strategy() -> impl Strategy<Value = BinStats> {
        // Dyadic values keep every partial sum exact, so both sides agree bit for bit.
        (-32i32..=32, 1i32..=32, 0usize..6).prop_map(|(g, h, c)| BinStats::new(g as f64 / 8.0, h as f64 / 8.0, c))
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_exhaustive_enumeration(
            hists in proptest::collection::vec(
                (stats_strategy(), proptest::collection::vec(stats_strategy(), 1..=7)),
                1..=4,
            ),
            lambda_idx in 0usize..3,
            min_data in 0usize..4,
        ) {
            let lambda = [0.0, 0.01, 1.0][lambda_idx];
            let owned: Vec<(usize, BinStats, Vec<BinStats>)> =
                hists.into_iter().enumerate().map(|(f, (d, b))| (f, d, b)).collect();
            let views: Vec<FeatureHistogram<'_>> =
                owned.iter().map(|(f, d, b)| hist(*f, *d, b)).collect();
            let got = find_best_split(&views, lambda, min_data).map(|s| (s.feature, s.bin, s.default_left, s.gain));
            prop_assert_eq!(got, oracle(&owned, lambda, min_data));
        }
    }
}

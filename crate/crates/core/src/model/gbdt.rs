//! Multiclass gradient-boosted trees with histogram splits and leaf-wise growth.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::objective::{log_priors, softmax, softmax_grad_hess, NUM_CLASSES};
use super::split::{find_best_split, BinStats, FeatureHistogram, SplitCandidate};
use super::tree::{Node, Tree};
use super::{check_training_data, ModelError};
use crate::corpus::Label;
use crate::sparse::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub min_data_in_leaf: usize,
    pub feature_fraction: f64,
    pub bagging_fraction: f64,
    /// Resample the bag every this many rounds; 0 disables bagging.
    pub bagging_freq: usize,
    pub lambda_l2: f64,
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.1,
            num_leaves: 31,
            min_data_in_leaf: 20,
            feature_fraction: 0.7,
            bagging_fraction: 0.7,
            bagging_freq: 1,
            lambda_l2: 0.01,
            max_bins: 255,
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParams(m.to_string()));
        let frac = |f: f64| f > 0.0 && f <= 1.0;
        if self.rounds < 1 {
            return bad("rounds must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.num_leaves < 2 {
            return bad("num_leaves must be at least 2");
        }
        if !frac(self.feature_fraction) || !frac(self.bagging_fraction) {
            return bad("fractions must lie in (0, 1]");
        }
        if !(self.lambda_l2 >= 0.0 && self.lambda_l2.is_finite()) {
            return bad("lambda_l2 must be non-negative");
        }
        if !(2..=65536).contains(&self.max_bins) {
            return bad("max_bins must lie in [2, 65536]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub params: GbdtParams,
    pub dimension: usize,
    pub init_scores: [f64; NUM_CLASSES],
    /// One tree per class per round, classes in `Label::ALL` order.
    pub trees: Vec<[Tree; NUM_CLASSES]>,
}

impl GbdtModel {
    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    /// The model after only the first `k` rounds.
    pub fn truncated(&self, k: usize) -> GbdtModel {
        GbdtModel {
            trees: self.trees[..k.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn predict_raw(&self, x: &FeatureVector) -> Result<[f64; NUM_CLASSES], ModelError> {
        if x.dim() != self.dimension {
            return Err(ModelError::DimensionMismatch {
                expected: self.dimension,
                found: x.dim(),
            });
        }
        let mut s = self.init_scores;
        for round in &self.trees {
            for (k, tree) in round.iter().enumerate() {
                s[k] += tree.predict(x);
            }
        }
        Ok(s)
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<[f64; NUM_CLASSES], ModelError> {
        self.predict_raw(x).map(|s| softmax(&s))
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        self.params.validate().map_err(|e| e.to_string())?;
        if self.init_scores.iter().any(|v| !v.is_finite()) {
            return Err("non-finite initial score".into());
        }
        for (r, round) in self.trees.iter().enumerate() {
            for (k, tree) in round.iter().enumerate() {
                tree.validate(self.dimension)
                    .map_err(|e| format!("round {r} class {k}: {e}"))?;
                if tree.num_leaves() > self.params.num_leaves {
                    return Err(format!("round {r} class {k}: too many leaves"));
                }
            }
        }
        Ok(())
    }
}

pub fn train_gbdt(rows: &[FeatureVector], labels: &[Label], params: &GbdtParams) -> Result<GbdtModel, ModelError> {
    params.validate()?;
    let dim = check_training_data(rows, labels)?;
    let n = rows.len();
    let matrix = BinnedMatrix::build(rows, dim, params.max_bins);
    let init_scores = log_priors(labels);
    let mut scores = vec![init_scores; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut bag: Vec<usize> = (0..n).collect();
    let bag_size = ((params.bagging_fraction * n as f64).round() as usize).clamp(1, n);
    let feat_size = ((params.feature_fraction * dim as f64).round() as usize).clamp(1, dim.max(1));
    let mut trees = Vec::with_capacity(params.rounds);

    for round in 0..params.rounds {
        if params.bagging_freq > 0 && round % params.bagging_freq == 0 && bag_size < n {
            bag = sample(&mut rng, n, bag_size).into_vec();
            bag.sort_unstable();
        }
        let features: Vec<Vec<usize>> = (0..NUM_CLASSES)
            .map(|_| {
                let mut f = if feat_size < dim {
                    sample(&mut rng, dim, feat_size).into_vec()
                } else {
                    (0..dim).collect()
                };
                f.sort_unstable();
                f
            })
            .collect();
        let gh: Vec<_> = scores
            .iter()
            .zip(labels)
            .map(|(s, l)| softmax_grad_hess(s, l.index()))
            .collect();
        let round_trees: Vec<Tree> = (0..NUM_CLASSES)
            .into_par_iter()
            .map(|k| {
                let grad: Vec<f64> = gh.iter().map(|(g, _)| g[k]).collect();
                let hess: Vec<f64> = gh.iter().map(|(_, h)| h[k]).collect();
                TreeGrower::new(&matrix, &grad, &hess, &features[k], params).grow(&bag)
            })
            .collect();
        let round_trees: [Tree; NUM_CLASSES] = round_trees.try_into().expect("one tree per class");
        scores.par_iter_mut().zip(rows).for_each(|(s, x)| {
            for (k, tree) in round_trees.iter().enumerate() {
                s[k] += tree.predict(x);
            }
        });
        trees.push(round_trees);
    }
    Ok(GbdtModel {
        params: params.clone(),
        dimension: dim,
        init_scores,
        trees,
    })
}

struct PendingLeaf {
    node: usize,
    rows: Vec<usize>,
    totals: BinStats,
    split: Option<SplitCandidate>,
}

struct TreeGrower<'a> {
    matrix: &'a BinnedMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    sampled: Vec<bool>,
    params: &'a GbdtParams,
    hist: Vec<BinStats>,
    touched: Vec<bool>,
    touched_list: Vec<usize>,
}

impl<'a> TreeGrower<'a> {
    fn new(
        matrix: &'a BinnedMatrix,
        grad: &'a [f64],
        hess: &'a [f64],
        features: &[usize],
        params: &'a GbdtParams,
    ) -> Self {
        let mut sampled = vec![false; matrix.dim()];
        for &f in features {
            sampled[f] = true;
        }
        Self {
            matrix,
            grad,
            hess,
            sampled,
            params,
            hist: vec![BinStats::default(); matrix.total_bins],
            touched: vec![false; matrix.dim()],
            touched_list: Vec::new(),
        }
    }

    fn leaf(&mut self, node: usize, rows: Vec<usize>) -> PendingLeaf {
        let mut totals = BinStats::default();
        for &r in &rows {
            let s = BinStats::new(self.grad[r], self.hess[r], 1);
            totals += s;
            for (f, b) in self.matrix.row(r) {
                if !self.sampled[f] {
                    continue;
                }
                if !self.touched[f] {
                    self.touched[f] = true;
                    self.touched_list.push(f);
                }
                self.hist[self.matrix.offsets[f] + b] += s;
            }
        }
        self.touched_list.sort_unstable();
        let mut defaults = Vec::with_capacity(self.touched_list.len());
        for &f in &self.touched_list {
            let off = self.matrix.offsets[f];
            let k = self.matrix.mappers[f].nondefault_bins();
            let mut nondefault = BinStats::default();
            for b in &self.hist[off + 1..=off + k] {
                nondefault += *b;
            }
            defaults.push(totals - nondefault);
        }
        let views: Vec<FeatureHistogram<'_>> = self
            .touched_list
            .iter()
            .zip(&defaults)
            .map(|(&f, &default)| {
                let off = self.matrix.offsets[f];
                let k = self.matrix.mappers[f].nondefault_bins();
                FeatureHistogram {
                    feature: f,
                    default,
                    bins: &self.hist[off + 1..=off + k],
                }
            })
            .collect();
        let split = find_best_split(&views, self.params.lambda_l2, self.params.min_data_in_leaf);
        for &f in &self.touched_list {
            let off = self.matrix.offsets[f];
            let k = self.matrix.mappers[f].nondefault_bins();
            self.hist[off..=off + k].fill(BinStats::default());
            self.touched[f] = false;
        }
        self.touched_list.clear();
        PendingLeaf {
            node,
            rows,
            totals,
            split,
        }
    }

    fn grow(mut self, bag: &[usize]) -> Tree {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut leaves = vec![self.leaf(0, bag.to_vec())];
        let mut done: Vec<PendingLeaf> = Vec::new();
        while leaves.len() + done.len() < self.params.num_leaves {
            let mut pick: Option<usize> = None;
            for (i, l) in leaves.iter().enumerate() {
                if let Some(s) = l.split {
                    if pick.is_none_or(|p| s.gain > leaves[p].split.unwrap().gain) {
                        pick = Some(i);
                    }
                }
            }
            let Some(i) = pick else { break };
            let leaf = leaves.remove(i);
            let split = leaf.split.unwrap();
            let mapper = &self.matrix.mappers[split.feature];
            let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
            for &r in &leaf.rows {
                let b = self.matrix.bin(r, split.feature);
                let left = if b == 0 { split.default_left } else { b <= split.bin };
                if left {
                    left_rows.push(r);
                } else {
                    right_rows.push(r);
                }
            }
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes[leaf.node] = Node::Split {
                feature: split.feature as u32,
                threshold: mapper.threshold(split.bin),
                default_left: split.default_left,
                left: l as u32,
                right: r as u32,
            };
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            // Keep pending leaves in creation order so gain ties pick the older leaf.
            for child in [self.leaf(l, left_rows), self.leaf(r, right_rows)] {
                if child.split.is_some() {
                    leaves.push(child);
                } else {
                    done.push(child);
                }
            }
        }
        for leaf in leaves.iter().chain(&done) {
            let value = -leaf.totals.grad / (leaf.totals.hess + self.params.lambda_l2) * self.params.learning_rate;
            nodes[leaf.node] = Node::Leaf { value };
        }
        Tree { nodes }
    }
}

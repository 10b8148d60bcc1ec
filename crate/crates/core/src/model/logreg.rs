//! Multiclass logistic regression trained by minibatch gradient descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{cross_entropy, softmax, NUM_CLASSES};
use super::{check_training_data, ModelError};
use crate::corpus::Label;
use crate::sparse::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegParams {
    /// Penalty `(l2 / 2)·‖W‖²` on the weights (biases are not penalized).
    pub l2: f64,
    pub epochs: usize,
    pub step: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            l2: 0.01,
            epochs: 30,
            step: 0.5,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl LogRegParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParams(m.to_string()));
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub params: LogRegParams,
    pub dimension: usize,
    /// Inputs are divided by these per-feature factors (max |x| seen in training).
    pub scale: Vec<f64>,
    /// Class-major weights: `weights[k]` has length `dimension`.
    pub weights: Vec<Vec<f64>>,
    pub bias: [f64; NUM_CLASSES],
    /// Regularized training objective before training, then after each epoch.
    pub loss_history: Vec<f64>,
}

impl LogRegModel {
    fn raw(&self, x: &FeatureVector) -> [f64; NUM_CLASSES] {
        let mut s = self.bias;
        for &(i, v) in x.entries() {
            let v = v / self.scale[i as usize];
            for (k, sk) in s.iter_mut().enumerate() {
                *sk += self.weights[k][i as usize] * v;
            }
        }
        s
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<[f64; NUM_CLASSES], ModelError> {
        if x.dim() != self.dimension {
            return Err(ModelError::DimensionMismatch {
                expected: self.dimension,
                found: x.dim(),
            });
        }
        Ok(softmax(&self.raw(x)))
    }

    fn objective(&self, rows: &[FeatureVector], labels: &[Label]) -> f64 {
        let ce: f64 = rows
            .iter()
            .zip(labels)
            .map(|(x, l)| cross_entropy(&self.raw(x), l.index()))
            .sum::<f64>()
            / rows.len() as f64;
        let sq: f64 = self.weights.iter().flatten().map(|w| w * w).sum();
        ce + 0.5 * self.params.l2 * sq
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        self.params.validate().map_err(|e| e.to_string())?;
        if self.scale.len() != self.dimension
            || self.weights.len() != NUM_CLASSES
            || self.weights.iter().any(|w| w.len() != self.dimension)
        {
            return Err("weight dimension does not match feature dimension".into());
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || self.weights.iter().flatten().chain(&self.bias).any(|v| !v.is_finite())
        {
            return Err("non-finite or non-positive parameters".into());
        }
        Ok(())
    }
}

pub fn train_logreg(rows: &[FeatureVector], labels: &[Label], params: &LogRegParams) -> Result<LogRegModel, ModelError> {
    params.validate()?;
    let dim = check_training_data(rows, labels)?;
    let mut scale = vec![0.0f64; dim];
    for x in rows {
        for &(i, v) in x.entries() {
            scale[i as usize] = scale[i as usize].max(v.abs());
        }
    }
    for s in &mut scale {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let mut model = LogRegModel {
        params: params.clone(),
        dimension: dim,
        scale,
        weights: vec![vec![0.0; dim]; NUM_CLASSES],
        bias: [0.0; NUM_CLASSES],
        loss_history: Vec::with_capacity(params.epochs + 1),
    };
    model.loss_history.push(model.objective(rows, labels));
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut grad = vec![vec![0.0; dim]; NUM_CLASSES];
    let mut touched: Vec<usize> = Vec::new();
    let mut is_touched = vec![false; dim];
    let shrink = 1.0 / (1.0 + params.step * params.l2);

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let inv = 1.0 / batch.len() as f64;
            let mut gbias = [0.0; NUM_CLASSES];
            for &r in batch {
                let p = softmax(&model.raw(&rows[r]));
                let y = labels[r].index();
                for k in 0..NUM_CLASSES {
                    let d = (p[k] - if k == y { 1.0 } else { 0.0 }) * inv;
                    gbias[k] += d;
                    for &(i, v) in rows[r].entries() {
                        grad[k][i as usize] += d * v / model.scale[i as usize];
                    }
                }
                for &(i, _) in rows[r].entries() {
                    if !is_touched[i as usize] {
                        is_touched[i as usize] = true;
                        touched.push(i as usize);
                    }
                }
            }
            // Proximal L2 step: w ← (w − step·g) / (1 + step·l2), applied to every weight.
            for k in 0..NUM_CLASSES {
                model.bias[k] -= params.step * gbias[k];
                for &i in &touched {
                    model.weights[k][i] -= params.step * grad[k][i];
                    grad[k][i] = 0.0;
                }
                if params.l2 > 0.0 {
                    for w in &mut model.weights[k] {
                        *w *= shrink;
                    }
                }
            }
            for &i in &touched {
                is_touched[i] = false;
            }
            touched.clear();
        }
        model.loss_history.push(model.objective(rows, labels));
    }
    Ok(model)
}

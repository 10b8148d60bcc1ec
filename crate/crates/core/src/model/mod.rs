//! Classifiers over feature vectors: gradient-boosted trees and logistic regression.

pub mod binning;
pub mod gbdt;
pub mod logreg;
pub mod objective;
pub mod split;
pub mod tree;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gbdt::{train_gbdt, GbdtModel, GbdtParams};
pub use logreg::{train_logreg, LogRegModel, LogRegParams};
pub use objective::NUM_CLASSES;

use crate::corpus::Label;
use crate::sparse::FeatureVector;

pub const MODEL_FORMAT: &str = "nelec-model";
pub const MODEL_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyDataset,
    #[error("training labels contain a single class")]
    SingleClassDataset,
    #[error("{rows} rows but {labels} labels")]
    LabelCountMismatch { rows: usize, labels: usize },
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u64),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shared input checks; returns the common feature dimension.
pub(crate) fn check_training_data(rows: &[FeatureVector], labels: &[Label]) -> Result<usize, ModelError> {
    if rows.len() != labels.len() {
        return Err(ModelError::LabelCountMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    let Some(first) = rows.first() else {
        return Err(ModelError::EmptyDataset);
    };
    let dim = first.dim();
    if let Some(bad) = rows.iter().find(|r| r.dim() != dim) {
        return Err(ModelError::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    if labels.iter().all(|l| *l == labels[0]) {
        return Err(ModelError::SingleClassDataset);
    }
    Ok(dim)
}

/// Which learner to fit, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Gbdt(GbdtParams),
    Logreg(LogRegParams),
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Gbdt(GbdtParams::default())
    }
}

impl ModelSpec {
    pub fn train(&self, rows: &[FeatureVector], labels: &[Label]) -> Result<Classifier, ModelError> {
        match self {
            ModelSpec::Gbdt(p) => train_gbdt(rows, labels, p).map(Classifier::Gbdt),
            ModelSpec::Logreg(p) => train_logreg(rows, labels, p).map(Classifier::LogReg),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::Gbdt(p) => p.seed,
            ModelSpec::Logreg(p) => p.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Gbdt(GbdtModel),
    LogReg(LogRegModel),
}

#[derive(Serialize)]
struct ModelFile<'a, M: Serialize> {
    format: &'static str,
    version: u64,
    kind: &'static str,
    classes: [&'static str; NUM_CLASSES],
    dimension: usize,
    model: &'a M,
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Gbdt(_) => "gbdt",
            Classifier::LogReg(_) => "logreg",
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Classifier::Gbdt(m) => m.dimension,
            Classifier::LogReg(m) => m.dimension,
        }
    }

    /// Class probabilities in `Label::ALL` order.
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<[f64; NUM_CLASSES], ModelError> {
        match self {
            Classifier::Gbdt(m) => m.predict_proba(x),
            Classifier::LogReg(m) => m.predict_proba(x),
        }
    }

    pub fn to_json(&self) -> String {
        let classes = Label::ALL.map(Label::as_str);
        let (kind, dimension) = (self.kind(), self.dimension());
        let mut s = match self {
            Classifier::Gbdt(m) => serde_json::to_string(&ModelFile {
                format: MODEL_FORMAT,
                version: MODEL_VERSION,
                kind,
                classes,
                dimension,
                model: m,
            }),
            Classifier::LogReg(m) => serde_json::to_string(&ModelFile {
                format: MODEL_FORMAT,
                version: MODEL_VERSION,
                kind,
                classes,
                dimension,
                model: m,
            }),
        }
        .expect("models serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let corrupt = |m: String| ModelError::CorruptModel(m);
        let mut doc: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        if doc.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
            return Err(corrupt("not a model file".into()));
        }
        let version = doc
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| corrupt("missing version".into()))?;
        if version != MODEL_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let classes: Vec<&str> = doc
            .get("classes")
            .and_then(|v| v.as_array())
            .map(|a| a.iter().filter_map(|c| c.as_str()).collect())
            .unwrap_or_default();
        if classes != Label::ALL.map(Label::as_str) {
            return Err(corrupt("unexpected class order".into()));
        }
        let dimension = doc.get("dimension").and_then(|v| v.as_u64());
        let kind = doc.get("kind").and_then(|v| v.as_str()).map(str::to_string);
        let model = doc
            .get_mut("model")
            .map(serde_json::Value::take)
            .ok_or_else(|| corrupt("missing model".into()))?;
        let classifier = match kind.as_deref() {
            Some("gbdt") => {
                let m: GbdtModel = serde_json::from_value(model).map_err(|e| corrupt(e.to_string()))?;
                m.validate().map_err(corrupt)?;
                Classifier::Gbdt(m)
            }
            Some("logreg") => {
                let m: LogRegModel = serde_json::from_value(model).map_err(|e| corrupt(e.to_string()))?;
                m.validate().map_err(corrupt)?;
                Classifier::LogReg(m)
            }
            other => return Err(corrupt(format!("unknown model kind {other:?}"))),
        };
        if dimension != Some(classifier.dimension() as u64) {
            return Err(corrupt("dimension header disagrees with model".into()));
        }
        Ok(classifier)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

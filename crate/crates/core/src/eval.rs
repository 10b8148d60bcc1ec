//! Micro-averaged F1 over the emotion classes, class-specific thresholds and
//! hold-one-out ablation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::features::{FeatureGroup, FeatureSpace};
use crate::model::{ModelError, ModelSpec, NUM_CLASSES};
use crate::sparse::FeatureVector;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{golds} gold labels but {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("threshold {name} = {value} outside [0, 1]")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error("grid step {0} outside (0, 1]")]
    InvalidStep(f64),
    #[error("malformed thresholds file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    /// `confusion[gold][predicted]`, classes in `Label::ALL` order.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub per_class: BTreeMap<Label, Prf>,
    pub micro: Prf,
}

impl EvalReport {
    pub fn class(&self, label: Label) -> Prf {
        self.per_class.get(&label).copied().unwrap_or_default()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "examples\t{}", self.examples).unwrap();
        writeln!(s, "{:<8} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1").unwrap();
        for l in Label::EMOTIONS {
            let p = self.class(l);
            writeln!(s, "{:<8} {:>9.4} {:>9.4} {:>9.4}", l.as_str(), p.precision, p.recall, p.f1).unwrap();
        }
        let m = self.micro;
        writeln!(s, "{:<8} {:>9.4} {:>9.4} {:>9.4}", "micro", m.precision, m.recall, m.f1).unwrap();
        writeln!(s, "confusion (rows gold, columns predicted)").unwrap();
        write!(s, "{:<8}", "").unwrap();
        for l in Label::ALL {
            write!(s, " {:>7}", l.as_str()).unwrap();
        }
        s.push('\n');
        for g in Label::ALL {
            write!(s, "{:<8}", g.as_str()).unwrap();
            for p in Label::ALL {
                write!(s, " {:>7}", self.confusion[g.index()][p.index()]).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Precision, recall and F1 per emotion class plus their micro average;
/// Others only contributes false positives and false negatives.
pub fn micro_f1(golds: &[Label], preds: &[Label]) -> Result<EvalReport, EvalError> {
    if golds.len() != preds.len() {
        return Err(EvalError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    if golds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (g, p) in golds.iter().zip(preds) {
        confusion[g.index()][p.index()] += 1;
    }
    let mut per_class = BTreeMap::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for l in Label::EMOTIONS {
        let k = l.index();
        let tp = confusion[k][k];
        let fp = (0..NUM_CLASSES).map(|g| confusion[g][k]).sum::<usize>() - tp;
        let fn_ = confusion[k].iter().sum::<usize>() - tp;
        per_class.insert(l, Prf::from_counts(tp, fp, fn_));
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
    }
    Ok(EvalReport {
        examples: golds.len(),
        confusion,
        per_class,
        micro: Prf::from_counts(tp_all, fp_all, fn_all),
    })
}

/// Highest-probability class; ties go to the earlier class in `Label::ALL`.
pub fn argmax_label(proba: &[f64; NUM_CLASSES]) -> Label {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if proba[k] > proba[best] {
            best = k;
        }
    }
    Label::ALL[best]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub happy: f64,
    pub sad: f64,
    pub angry: f64,
}

impl Thresholds {
    pub fn new(happy: f64, sad: f64, angry: f64) -> Result<Self, EvalError> {
        let t = Self { happy, sad, angry };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        for (name, value) in [("happy", self.happy), ("sad", self.sad), ("angry", self.angry)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EvalError::InvalidThreshold { name, value });
            }
        }
        Ok(())
    }

    /// In `Label::EMOTIONS` order.
    pub fn as_array(&self) -> [f64; 3] {
        [self.happy, self.sad, self.angry]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            happy: a[0],
            sad: a[1],
            angry: a[2],
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("thresholds serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let t: Thresholds = serde_json::from_str(text).map_err(|e| EvalError::Malformed(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

/// Emotions whose probability reaches their threshold are candidates; the
/// most probable candidate wins (ties in Happy, Sad, Angry order), and with
/// no candidate the answer is Others.
pub fn apply_thresholds(proba: &[f64; NUM_CLASSES], th: &Thresholds) -> Label {
    let th = th.as_array();
    let mut best: Option<Label> = None;
    for (i, l) in Label::EMOTIONS.into_iter().enumerate() {
        let p = proba[l.index()];
        if p >= th[i] && best.is_none_or(|b| p > proba[b.index()]) {
            best = Some(l);
        }
    }
    best.unwrap_or(Label::Others)
}

fn thresholded_f1(probas: &[[f64; NUM_CLASSES]], golds: &[Label], th: [f64; 3]) -> f64 {
    // Tally directly; this runs inside the search loops.
    let th = Thresholds::from_array(th);
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, g) in probas.iter().zip(golds) {
        let pred = apply_thresholds(p, &th);
        if pred.is_emotion() {
            if pred == *g {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        if g.is_emotion() && pred != *g {
            fn_ += 1;
        }
    }
    Prf::from_counts(tp, fp, fn_).f1
}

/// The grid `{0, step, 2·step, …}` up to 1.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>, EvalError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(EvalError::InvalidStep(step));
    }
    let m = (1.0 / step + 1e-9).floor() as usize;
    Ok((0..=m).map(|i| ((i as f64 * step) * 1e12).round() / 1e12).collect())
}

fn coordinate_ascent(probas: &[[f64; NUM_CLASSES]], golds: &[Label], grid: &[f64], start: [f64; 3]) -> ([f64; 3], f64) {
    let mut th = start;
    let mut best = thresholded_f1(probas, golds, th);
    loop {
        let mut improved = false;
        for c in 0..3 {
            let mut cand = th;
            let mut arg = th[c];
            let mut arg_f1 = f64::NEG_INFINITY;
            for &g in grid {
                cand[c] = g;
                let f = thresholded_f1(probas, golds, cand);
                if f > arg_f1 {
                    arg_f1 = f;
                    arg = g;
                }
            }
            if arg_f1 > best {
                best = arg_f1;
                improved = true;
            }
            if arg_f1 >= best {
                th[c] = arg;
            }
        }
        if !improved {
            return (th, best);
        }
    }
}

/// Class-specific thresholds by coordinate ascent on the grid of `step`.
///
/// The ascent is run from (0, 0, 0) and, separately, from the best uniform
/// threshold (t, t, t) on the grid; the second result is kept only when it is
/// strictly better. From (0, 0, 0) every emotion always clears its threshold, so
/// no single-coordinate move can ever produce Others and the search cannot
/// leave the argmax plateau on its own. Either way the result is never worse
/// than the all-zero (argmax among emotions) baseline.
pub fn tune_thresholds(probas: &[[f64; NUM_CLASSES]], golds: &[Label], step: f64) -> Result<Thresholds, EvalError> {
    if probas.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            golds: golds.len(),
            preds: probas.len(),
        });
    }
    if golds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let grid = threshold_grid(step)?;
    let (zero_th, zero_f1) = coordinate_ascent(probas, golds, &grid, [0.0; 3]);
    let mut diag = 0.0;
    let mut diag_f1 = f64::NEG_INFINITY;
    for &g in &grid {
        let f = thresholded_f1(probas, golds, [g; 3]);
        if f > diag_f1 {
            diag_f1 = f;
            diag = g;
        }
    }
    let (warm_th, warm_f1) = coordinate_ascent(probas, golds, &grid, [diag; 3]);
    Ok(Thresholds::from_array(if warm_f1 > zero_f1 { warm_th } else { zero_th }))
}

/// Micro F1 of thresholded predictions.
pub fn thresholds_f1(probas: &[[f64; NUM_CLASSES]], golds: &[Label], th: &Thresholds) -> f64 {
    thresholded_f1(probas, golds, th.as_array())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub kept_features: usize,
    pub dropped_features: usize,
    pub micro_f1: f64,
    pub per_class_f1: BTreeMap<Label, f64>,
    /// Full-model micro F1 minus this row's micro F1.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seed: u64,
    pub full: AblationRow,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "ablation", "kept", "dropped", "micro", "happy", "sad", "angry", "gain"
        )
        .unwrap();
        for r in std::iter::once(&self.full).chain(&self.rows) {
            let f = |l: Label| r.per_class_f1.get(&l).copied().unwrap_or(0.0);
            writeln!(
                s,
                "{:<16} {:>8} {:>8} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                r.name,
                r.kept_features,
                r.dropped_features,
                r.micro_f1,
                f(Label::Happy),
                f(Label::Sad),
                f(Label::Angry),
                r.gain
            )
            .unwrap();
        }
        s
    }
}

/// The nine hold-one-out column masks (`true` = keep): each feature group,
/// then turn 1, turn 2, and turns 1 and 2.
pub fn ablation_masks(space: &FeatureSpace) -> Vec<(String, Vec<bool>)> {
    let cols = space.columns();
    let mut out: Vec<(String, Vec<bool>)> = FeatureGroup::ALL
        .iter()
        .map(|&g| (format!("-{}", g.as_str()), cols.iter().map(|c| c.group != g).collect()))
        .collect();
    for (name, turns) in [("-turn1", &[1u8][..]), ("-turn2", &[2]), ("-turns1+2", &[1, 2])] {
        out.push((name.to_string(), cols.iter().map(|c| !turns.contains(&c.turn)).collect()));
    }
    out
}

/// Retrain on the kept columns only and score argmax predictions.
pub fn evaluate_mask(
    name: &str,
    keep: &[bool],
    train: (&[FeatureVector], &[Label]),
    eval: (&[FeatureVector], &[Label]),
    spec: &ModelSpec,
) -> Result<(AblationRow, EvalReport), EvalError> {
    let mut remap = Vec::with_capacity(keep.len());
    let mut kept = 0u32;
    for &k in keep {
        remap.push(k.then(|| {
            kept += 1;
            kept - 1
        }));
    }
    let project = |rows: &[FeatureVector]| -> Vec<FeatureVector> {
        rows.iter().map(|r| r.project(&remap, kept as usize)).collect()
    };
    let (train_rows, eval_rows) = (project(train.0), project(eval.0));
    let model = spec.train(&train_rows, train.1)?;
    let preds = eval_rows
        .iter()
        .map(|x| model.predict_proba(x).map(|p| argmax_label(&p)))
        .collect::<Result<Vec<_>, _>>()?;
    let report = micro_f1(eval.1, &preds)?;
    let row = AblationRow {
        name: name.to_string(),
        kept_features: kept as usize,
        dropped_features: keep.len() - kept as usize,
        micro_f1: report.micro.f1,
        per_class_f1: report.per_class.iter().map(|(l, p)| (*l, p.f1)).collect(),
        gain: 0.0,
    };
    Ok((row, report))
}

/// Full model plus the nine hold-one-out rows, trained in parallel with the same recipe.
pub fn ablate(
    space: &FeatureSpace,
    train: (&[FeatureVector], &[Label]),
    eval: (&[FeatureVector], &[Label]),
    spec: &ModelSpec,
) -> Result<AblationTable, EvalError> {
    let mut masks = vec![("full".to_string(), vec![true; space.dimension()])];
    masks.extend(ablation_masks(space));
    let mut rows = masks
        .par_iter()
        .map(|(name, keep)| evaluate_mask(name, keep, train, eval, spec).map(|(row, _)| row))
        .collect::<Result<Vec<_>, _>>()?;
    let full = rows.remove(0);
    for r in &mut rows {
        r.gain = full.micro_f1 - r.micro_f1;
    }
    Ok(AblationTable {
        seed: spec.seed(),
        full,
        rows,
    })
}

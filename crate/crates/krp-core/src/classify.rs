//! One-vs-rest kernel ridge classification over precomputed Gram
//! matrices, plus accuracy and mean-average-precision metrics.
//!
//! Per class `c` the dual coefficients solve `(G + μI)·α_c = y_c` with
//! `y_c ∈ {-1, +1}^m`, through one shared Cholesky factorization. The
//! solve is deterministic, so retraining on identical inputs reproduces
//! the model bit for bit.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grasskernel::ClassificationGram;

/// One-vs-rest dual model over a precomputed Gram.
#[derive(Debug, Clone, PartialEq)]
pub struct GramModel {
    /// `m×C`: one dual coefficient column per class.
    dual: DMatrix<f64>,
    /// Ridge parameter μ.
    reg: f64,
}

impl GramModel {
    pub fn dual_coefficients(&self) -> &DMatrix<f64> {
        &self.dual
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    /// Training set size the model was fit on.
    pub fn m(&self) -> usize {
        self.dual.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.dual.ncols()
    }

    /// Rebuilds a model from stored coefficients (deserialization).
    pub fn from_parts(dual: DMatrix<f64>, reg: f64) -> Result<Self> {
        if dual.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("dual coefficients must be finite"));
        }
        if !(reg > 0.0) {
            return Err(Error::param("ridge parameter must be positive"));
        }
        Ok(GramModel { dual, reg })
    }
}

/// Trains the one-vs-rest ridge model: per class solves
/// `(G + μI)·α_c = y_c`.
pub fn train(gram: &ClassificationGram, labels: &[usize], reg: f64) -> Result<GramModel> {
    let m = gram.m();
    if labels.len() != m {
        return Err(Error::shape(alloc::format!(
            "{} labels for an {m}x{m} Gram",
            labels.len()
        )));
    }
    if !(reg > 0.0) {
        return Err(Error::param("ridge parameter must be positive"));
    }
    let class_count = labels.iter().max().map_or(0, |c| c + 1);
    if class_count < 2 {
        return Err(Error::param("need at least 2 classes to train"));
    }

    let mut system = gram.values().clone();
    for i in 0..m {
        system[(i, i)] += reg;
    }
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::numerical("G + μI failed to factorize"))?;

    let mut dual = DMatrix::zeros(m, class_count);
    for c in 0..class_count {
        let y = DVector::from_fn(m, |i, _| if labels[i] == c { 1.0 } else { -1.0 });
        let alpha = chol.solve(&y);
        dual.set_column(c, &alpha);
    }
    Ok(GramModel { dual, reg })
}

/// Scores a test point from its kernel row against the training set;
/// returns the predicted label (argmax, ties to the smallest class
/// index) and the per-class scores.
pub fn predict(model: &GramModel, kernel_row: &[f64]) -> Result<(usize, DVector<f64>)> {
    if kernel_row.len() != model.m() {
        return Err(Error::shape(alloc::format!(
            "kernel row has {} entries, model expects {}",
            kernel_row.len(),
            model.m()
        )));
    }
    let row = DVector::from_row_slice(kernel_row);
    let scores = model.dual.transpose() * row;
    let mut label = 0;
    for c in 1..scores.len() {
        if scores[c] > scores[label] {
            label = c;
        }
    }
    Ok((label, scores))
}

/// One scored prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: DVector<f64>,
}

/// Evaluation metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    /// Mean over classes of the average precision of the score ranking.
    MeanAveragePrecision,
}

/// Evaluates predictions against ground truth; both metrics live in
/// `[0, 1]`.
pub fn evaluate(predictions: &[Prediction], truth: &[usize], metric: Metric) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::shape(alloc::format!(
            "{} predictions vs {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::param("nothing to evaluate"));
    }
    match metric {
        Metric::Accuracy => {
            let correct = predictions
                .iter()
                .zip(truth)
                .filter(|(p, t)| p.label == **t)
                .count();
            Ok(correct as f64 / truth.len() as f64)
        }
        Metric::MeanAveragePrecision => mean_average_precision(predictions, truth),
    }
}

/// Average precision of ranking the items by `scores[c]`, with the items
/// of class `c` as positives. Ties break by item index for determinism.
fn average_precision(scores: &[f64], positives: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .expect("finite scores")
            .then(i.cmp(&j))
    });
    let total_pos = positives.iter().filter(|p| **p).count();
    if total_pos == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        if positives[idx] {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    ap / total_pos as f64
}

fn mean_average_precision(predictions: &[Prediction], truth: &[usize]) -> Result<f64> {
    let class_count = predictions
        .iter()
        .map(|p| p.scores.len())
        .max()
        .unwrap_or(0);
    if predictions.iter().any(|p| p.scores.len() != class_count) {
        return Err(Error::shape("prediction score vectors differ in length"));
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    for c in 0..class_count {
        let positives: Vec<bool> = truth.iter().map(|t| *t == c).collect();
        if !positives.iter().any(|p| *p) {
            continue; // class absent from the evaluation set
        }
        let scores: Vec<f64> = predictions.iter().map(|p| p.scores[c]).collect();
        sum += average_precision(&scores, &positives);
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::param("no class has positives in the truth labels"));
    }
    Ok(sum / counted as f64)
}

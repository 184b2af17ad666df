//! Representations of digit images and the two supervised evaluators run on
//! top of them.
//!
//! Four representations are compared: raw pixels, exact sparse codes, the
//! hidden layer of a trained two-layer perceptron, and a frozen random
//! two-layer ReLU network. Each is scored by a 1-nearest-neighbour classifier
//! and by multinomial logistic regression with weight decay, for a range of
//! labeled examples per class.

mod knn;
mod logreg;
mod mlp;
mod random_net;
mod sweep;

pub use knn::{knn_classify, knn_classify_rows, Metric};
pub use logreg::{logreg_loss_grad, train_logreg, LinearModel, LogregConfig};
pub use mlp::{
    mlp_hidden, mlp_hidden_jacobian, train_mlp, Mlp, MlpConfig, MlpGrads, MlpJacobian, MlpLogEntry,
    TrainedMlp,
};
pub use random_net::{random_features, RandomNet, RANDOM_WIDTH};
pub use sweep::{
    evaluation_sweep, EvalRecord, EvalReport, EvalSummary, RepresentationData, Selection,
    SweepConfig, K_GRID, LAMBDA_W_GRID,
};

use ndarray::{Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::dataset::{DatasetError, NUM_CLASSES};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("row {0} is the zero vector, which has no cosine distance")]
    ZeroVector(usize),
    #[error("training diverged at step {0}")]
    Diverged(usize),
    #[error("weight decay must be finite and nonnegative, got {0}")]
    BadLambda(f64),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("missing representation {0}")]
    MissingRepresentation(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Fraction of `predicted` equal to `labels`.
pub fn accuracy(predicted: &[u8], labels: &[u8]) -> f64 {
    assert_eq!(predicted.len(), labels.len());
    if labels.is_empty() {
        return f64::NAN;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Row-wise argmax; ties go to the lowest class.
pub(crate) fn argmax_rows(scores: ArrayView2<f64>) -> Vec<u8> {
    scores
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

/// Mean cross-entropy of `logits` (rows) against `labels`, and the gradient
/// with respect to the logits, `(softmax − onehot) / N`.
pub(crate) fn softmax_cross_entropy(logits: ArrayView2<f64>, labels: &[u8]) -> (f64, Array2<f64>) {
    let n = logits.nrows();
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let top = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exp = row.mapv(|v| (v - top).exp());
        let z = exp.sum();
        let y = labels[i] as usize;
        loss += z.ln() + top - row[y];
        let mut g = grad.row_mut(i);
        g.assign(&(exp / z));
        g[y] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    grad.mapv_inplace(|v| v * scale);
    (loss * scale, grad)
}

pub(crate) fn check_labels(labels: &[u8]) -> Result<(), ClassifierError> {
    match labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        Some(l) => Err(ClassifierError::Shape(format!("label {l} out of range"))),
        None => Ok(()),
    }
}

use log::debug;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{argmax_rows, check_labels, softmax_cross_entropy, ClassifierError};
use crate::dataset::NUM_CLASSES;
use crate::sparse_coding::adapt_rate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogregConfig {
    pub lambda_w: f64,
    pub max_steps: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    pub eta: f64,
}

impl LogregConfig {
    pub fn new(lambda_w: f64) -> Self {
        Self {
            lambda_w,
            max_steps: 50_000,
            tolerance: 1e-6,
            eta: 1.0,
        }
    }
}

/// Multinomial logistic regression `softmax(W z + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `10 × p`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub lambda_w: f64,
    pub steps: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub converged: bool,
    /// Rate reached at the end, reused to warm-start a neighbouring fit.
    pub eta: f64,
}

impl LinearModel {
    pub fn zeros(p: usize, lambda_w: f64) -> Self {
        Self {
            weights: Array2::zeros((NUM_CLASSES, p)),
            bias: Array1::zeros(NUM_CLASSES),
            lambda_w,
            steps: 0,
            loss: f64::NAN,
            grad_norm: f64::NAN,
            converged: false,
            eta: f64::NAN,
        }
    }

    /// Class scores, one row per input row.
    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + self.bias.view().insert_axis(Axis(0))
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<u8> {
        argmax_rows(self.logits(x).view())
    }
}

/// `mean cross-entropy + λ_w ‖W‖²` and its gradients `(∂W, ∂b)`; the bias is
/// not penalized.
pub fn logreg_loss_grad(
    weights: ArrayView2<f64>,
    bias: ArrayView1<f64>,
    x: ArrayView2<f64>,
    labels: &[u8],
    lambda_w: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let logits = x.dot(&weights.t()) + bias.insert_axis(Axis(0));
    let (ce, g) = softmax_cross_entropy(logits.view(), labels);
    let mut gw = g.t().dot(&x);
    gw.scaled_add(2.0 * lambda_w, &weights);
    let gb = g.sum_axis(Axis(0));
    let penalty = lambda_w * weights.iter().map(|w| w * w).sum::<f64>();
    (ce + penalty, gw, gb)
}

fn grad_norm(gw: &Array2<f64>, gb: &Array1<f64>) -> f64 {
    (gw.iter().chain(gb.iter()).map(|v| v * v).sum::<f64>()).sqrt()
}

/// Full-batch gradient descent with the accept-if-lower step rule: an accepted
/// step grows the rate by 1.1, a rejected one is discarded and halves it.
/// `warm` seeds the weights and the rate.
pub fn train_logreg(
    x: ArrayView2<f64>,
    labels: &[u8],
    config: &LogregConfig,
    warm: Option<&LinearModel>,
) -> Result<LinearModel, ClassifierError> {
    let lambda_w = config.lambda_w;
    if !(lambda_w.is_finite() && lambda_w >= 0.0) {
        return Err(ClassifierError::BadLambda(lambda_w));
    }
    if x.nrows() != labels.len() {
        return Err(ClassifierError::Shape(format!(
            "{} rows, {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(ClassifierError::Empty("no training points"));
    }
    check_labels(labels)?;
    let p = x.ncols();
    let mut model = match warm {
        Some(w) if w.weights.ncols() == p => LinearModel {
            lambda_w,
            steps: 0,
            ..w.clone()
        },
        _ => LinearModel::zeros(p, lambda_w),
    };
    let mut eta = if model.eta.is_finite() {
        model.eta
    } else {
        config.eta
    };
    let (mut loss, mut gw, mut gb) =
        logreg_loss_grad(model.weights.view(), model.bias.view(), x, labels, lambda_w);
    if !loss.is_finite() {
        return Err(ClassifierError::Diverged(0));
    }
    let mut norm = grad_norm(&gw, &gb);
    let mut steps = 0;
    while norm >= config.tolerance && steps < config.max_steps {
        steps += 1;
        let w_new = &model.weights - &(&gw * eta);
        let b_new = &model.bias - &(&gb * eta);
        let (l_new, gw_new, gb_new) =
            logreg_loss_grad(w_new.view(), b_new.view(), x, labels, lambda_w);
        let (accepted, next) = adapt_rate(loss, l_new, eta);
        eta = next;
        if accepted {
            model.weights = w_new;
            model.bias = b_new;
            loss = l_new;
            gw = gw_new;
            gb = gb_new;
            norm = grad_norm(&gw, &gb);
        }
        if eta < 1e-300 {
            return Err(ClassifierError::Diverged(steps));
        }
    }
    debug!("logreg λ_w={lambda_w:e}: {steps} steps, loss {loss:.6e}, |grad| {norm:.3e}");
    model.steps = steps;
    model.loss = loss;
    model.grad_norm = norm;
    model.converged = norm < config.tolerance;
    model.eta = eta;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separable_pair_is_fit() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let m = train_logreg(
            x.view(),
            &[2, 5],
            &LogregConfig {
                max_steps: 2000,
                ..LogregConfig::new(1e-5)
            },
            None,
        )
        .unwrap();
        assert_eq!(m.predict(x.view()), vec![2, 5]);
    }

    #[test]
    fn heavy_decay_shrinks_weights() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let m = train_logreg(x.view(), &[0, 1, 2], &LogregConfig::new(1e6), None).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-5));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = array![
            [0.3, -1.2, 0.5],
            [1.0, 0.2, -0.7],
            [-0.4, 0.9, 0.1],
            [0.6, 0.6, 0.6]
        ];
        let labels = [1, 4, 9, 1];
        let w = Array2::from_shape_fn((NUM_CLASSES, 3), |(i, j)| {
            ((i * 3 + j) as f64 * 0.41).sin() * 0.5
        });
        let b = Array1::from_shape_fn(NUM_CLASSES, |i| (i as f64 * 0.7).cos() * 0.1);
        let lw = 0.03;
        let (_, gw, gb) = logreg_loss_grad(w.view(), b.view(), x.view(), &labels, lw);
        let h = 1e-6;
        for ((i, j), &g) in gw.indexed_iter() {
            let mut wp = w.clone();
            wp[[i, j]] += h;
            let mut wm = w.clone();
            wm[[i, j]] -= h;
            let fd = (logreg_loss_grad(wp.view(), b.view(), x.view(), &labels, lw).0
                - logreg_loss_grad(wm.view(), b.view(), x.view(), &labels, lw).0)
                / (2.0 * h);
            assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3), "{fd} vs {g}");
        }
        for (i, &g) in gb.indexed_iter() {
            let mut bp = b.clone();
            bp[i] += h;
            let mut bm = b.clone();
            bm[i] -= h;
            let fd = (logreg_loss_grad(w.view(), bp.view(), x.view(), &labels, lw).0
                - logreg_loss_grad(w.view(), bm.view(), x.view(), &labels, lw).0)
                / (2.0 * h);
            assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3));
        }
    }
}

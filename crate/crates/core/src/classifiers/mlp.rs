use log::info;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{accuracy, argmax_rows, check_labels, softmax_cross_entropy, ClassifierError};
use crate::dataset::{ImageSet, NUM_CLASSES};
use crate::rng::{standard_normal, stream_rng, streams};
use crate::sensitivity::{JacobianProvider, SensitivityError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub batch: usize,
    /// `(steps, learning rate)` phases, run in order.
    pub schedule: Vec<(usize, f64)>,
    pub seed: u64,
    /// Train on inputs shifted and scaled by the training set's pixel mean
    /// and standard deviation. The scaling is folded into the first layer
    /// afterwards, so the returned net always takes raw pixels.
    pub standardize: bool,
}

impl MlpConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            hidden: 784,
            batch: 64,
            schedule: vec![(1000, 0.1), (1000, 0.01)],
            seed,
            standardize: true,
        }
    }
}

/// `softmax(W₂ f(W₁ x + b₁) + b₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `hidden × m`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `10 × hidden`.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

pub struct MlpGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Mlp {
    /// Weights `N(0, 1/fan_in)`, zero biases.
    pub fn init(m: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, streams::MLP_INIT);
        let s1 = (m as f64).sqrt().recip();
        let s2 = (hidden as f64).sqrt().recip();
        let w1 = Array2::from_shape_simple_fn((hidden, m), || s1 * standard_normal(&mut rng));
        let w2 =
            Array2::from_shape_simple_fn((NUM_CLASSES, hidden), || s2 * standard_normal(&mut rng));
        Self {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(NUM_CLASSES),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    /// Hidden pre-activations, one row per input row.
    pub fn preactivations(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w1.t()) + self.b1.view().insert_axis(Axis(0))
    }

    pub fn hidden(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.preactivations(x).mapv_into(|v| v.max(0.0))
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.hidden(x).dot(&self.w2.t()) + self.b2.view().insert_axis(Axis(0))
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<u8> {
        argmax_rows(self.logits(x).view())
    }

    /// Mean cross-entropy over the batch and its gradients.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, labels: &[u8]) -> (f64, MlpGrads) {
        let pre = self.preactivations(x);
        let h = pre.mapv(|v| v.max(0.0));
        let logits = h.dot(&self.w2.t()) + self.b2.view().insert_axis(Axis(0));
        let (loss, g2) = softmax_cross_entropy(logits.view(), labels);
        let w2 = g2.t().dot(&h);
        let b2 = g2.sum_axis(Axis(0));
        let mut g1 = g2.dot(&self.w2);
        g1.zip_mut_with(&pre, |g, &p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
        let w1 = g1.t().dot(&x);
        let b1 = g1.sum_axis(Axis(0));
        (loss, MlpGrads { w1, b1, w2, b2 })
    }

    /// The net on raw `x` equivalent to this one on `(x − mean) / std`.
    pub fn fold_standardization(mut self, mean: f64, std: f64) -> Self {
        self.w1.mapv_inplace(|w| w / std);
        self.b1 = &self.b1 - &(self.w1.sum_axis(Axis(1)) * mean);
        self
    }

    fn descend(&mut self, g: &MlpGrads, lr: f64) {
        self.w1.scaled_add(-lr, &g.w1);
        self.b1.scaled_add(-lr, &g.b1);
        self.w2.scaled_add(-lr, &g.w2);
        self.b2.scaled_add(-lr, &g.b2);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpLogEntry {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedMlp {
    pub net: Mlp,
    pub log: Vec<MlpLogEntry>,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

fn as_f64(set: &ImageSet, rows: &[usize]) -> Array2<f64> {
    let px = set.pixels();
    Array2::from_shape_fn((rows.len(), set.dim()), |(i, j)| {
        f64::from(px[[rows[i], j]])
    })
}

/// Predictions for a whole set, in chunks.
pub(crate) fn predict_set(net: &Mlp, set: &ImageSet) -> Vec<u8> {
    const CHUNK: usize = 2048;
    let mut out = Vec::with_capacity(set.len());
    let all: Vec<usize> = (0..set.len()).collect();
    for rows in all.chunks(CHUNK) {
        out.extend(net.predict(as_f64(set, rows).view()));
    }
    out
}

/// Mean and standard deviation over every pixel of the set.
fn pixel_moments(set: &ImageSet) -> (f64, f64) {
    let px = set.pixels();
    let n = px.len() as f64;
    let mean = px.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = px
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Cross-entropy SGD on shuffled minibatches, following `config.schedule`.
pub fn train_mlp(
    train: &ImageSet,
    validation: Option<&ImageSet>,
    config: &MlpConfig,
) -> Result<TrainedMlp, ClassifierError> {
    if train.len() < config.batch || config.batch == 0 {
        return Err(ClassifierError::Empty(
            "training set smaller than one batch",
        ));
    }
    check_labels(train.labels())?;
    let (mean, std) = if config.standardize {
        pixel_moments(train)
    } else {
        (0.0, 1.0)
    };
    if std <= 0.0 {
        return Err(ClassifierError::Empty("training pixels have no variance"));
    }
    let mut net = Mlp::init(train.dim(), config.hidden, config.seed);
    let mut rng = stream_rng(config.seed, streams::MLP_BATCHES);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut log = Vec::new();
    let mut step = 0;
    for &(steps, lr) in &config.schedule {
        for _ in 0..steps {
            if cursor + config.batch > order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let rows = &order[cursor..cursor + config.batch];
            cursor += config.batch;
            let x = (as_f64(train, rows) - mean) / std;
            let labels: Vec<u8> = rows.iter().map(|&i| train.labels()[i]).collect();
            let (loss, grads) = net.loss_and_grad(x.view(), &labels);
            if !loss.is_finite() {
                return Err(ClassifierError::Diverged(step));
            }
            net.descend(&grads, lr);
            step += 1;
            if step % 100 == 0 {
                log.push(MlpLogEntry { step, lr, loss });
            }
        }
    }
    let net = net.fold_standardization(mean, std);
    let train_accuracy = accuracy(&predict_set(&net, train), train.labels());
    let validation_accuracy = validation.map(|v| accuracy(&predict_set(&net, v), v.labels()));
    info!("mlp: train accuracy {train_accuracy:.4}, validation {validation_accuracy:?}");
    Ok(TrainedMlp {
        net,
        log,
        train_accuracy,
        validation_accuracy,
    })
}

/// Rectified hidden layer `f(W₁ x + b₁)`.
pub fn mlp_hidden(x: ArrayView1<f64>, mlp: &Mlp) -> Array1<f64> {
    mlp.hidden(x.insert_axis(Axis(0))).row(0).to_owned()
}

/// `∂h/∂x`: the rows of `W₁` for units with positive pre-activation, zero
/// rows elsewhere. The flag is set when some pre-activation is exactly zero,
/// where the rectifier has no derivative.
pub fn mlp_hidden_jacobian(x: ArrayView1<f64>, mlp: &Mlp) -> (Array2<f64>, bool) {
    let pre = mlp.preactivations(x.insert_axis(Axis(0)));
    let mut j = mlp.w1.clone();
    let mut kink = false;
    for (mut row, &p) in j.axis_iter_mut(Axis(0)).zip(pre.row(0)) {
        if p == 0.0 {
            kink = true;
        }
        if p <= 0.0 {
            row.fill(0.0);
        }
    }
    (j, kink)
}

/// Hidden-layer Jacobians of a trained network.
pub struct MlpJacobian<'a> {
    pub mlp: &'a Mlp,
}

impl JacobianProvider for MlpJacobian<'_> {
    fn name(&self) -> &str {
        "mlp"
    }

    fn jacobian(
        &self,
        _index: usize,
        x: ArrayView1<f64>,
    ) -> Result<Option<Array2<f64>>, SensitivityError> {
        let (j, kink) = mlp_hidden_jacobian(x, self.mlp);
        Ok((!kink).then_some(j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic_digits;
    use ndarray::array;

    fn small_net() -> Mlp {
        let mut net = Mlp::init(5, 6, 3);
        net.b1 = Array1::from_shape_fn(6, |i| 0.1 * i as f64 - 0.2);
        net.b2 = Array1::from_shape_fn(NUM_CLASSES, |i| 0.05 * i as f64);
        net
    }

    #[test]
    fn hidden_is_rectified_and_zero_at_origin() {
        let net = Mlp::init(5, 6, 3);
        let h = mlp_hidden(Array1::zeros(5).view(), &net);
        assert_eq!(h.len(), 6);
        assert!(h.iter().all(|&v| v == 0.0));
        let h = mlp_hidden(array![1.0, -2.0, 0.5, 0.3, 0.9].view(), &net);
        assert!(h.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn jacobian_regimes() {
        let mut net = small_net();
        net.b1.fill(100.0);
        let (j, kink) = mlp_hidden_jacobian(array![0.1, 0.2, 0.3, 0.4, 0.5].view(), &net);
        assert!(!kink);
        assert_eq!(j, net.w1);
        net.b1.fill(-100.0);
        let (j, _) = mlp_hidden_jacobian(array![0.1, 0.2, 0.3, 0.4, 0.5].view(), &net);
        assert!(j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let net = small_net();
        let x = array![
            [0.3, -1.2, 0.5, 0.8, 0.1],
            [1.0, 0.2, -0.7, 0.0, 0.4],
            [-0.4, 0.9, 0.1, 0.6, -0.3]
        ];
        let labels = [2, 7, 2];
        let (_, g) = net.loss_and_grad(x.view(), &labels);
        let h = 1e-6;
        let loss = |n: &Mlp| n.loss_and_grad(x.view(), &labels).0;
        let check = |fd: f64, an: f64| {
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-4), "{fd} vs {an}")
        };
        for ((i, j), &an) in g.w1.indexed_iter() {
            let mut p = net.clone();
            p.w1[[i, j]] += h;
            let mut m = net.clone();
            m.w1[[i, j]] -= h;
            check((loss(&p) - loss(&m)) / (2.0 * h), an);
        }
        for ((i, j), &an) in g.w2.indexed_iter() {
            let mut p = net.clone();
            p.w2[[i, j]] += h;
            let mut m = net.clone();
            m.w2[[i, j]] -= h;
            check((loss(&p) - loss(&m)) / (2.0 * h), an);
        }
        for (i, &an) in g.b1.indexed_iter() {
            let mut p = net.clone();
            p.b1[i] += h;
            let mut m = net.clone();
            m.b1[i] -= h;
            check((loss(&p) - loss(&m)) / (2.0 * h), an);
        }
    }

    #[test]
    fn folded_standardization_matches_scaled_inputs() {
        let net = small_net();
        let x = ndarray::array![[0.2, 0.9, 0.0, 0.5, 0.1], [1.0, 0.4, 0.7, 0.0, 0.3]];
        let scaled = (&x - 0.3) / 0.4;
        let folded = net.clone().fold_standardization(0.3, 0.4);
        let a = net.preactivations(scaled.view());
        let b = folded.preactivations(x.view());
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn training_reduces_loss_on_synthetic_digits() {
        let set = synthetic_digits(400, 12, 1);
        let cfg = MlpConfig {
            hidden: 32,
            batch: 16,
            schedule: vec![(300, 0.1), (100, 0.01)],
            seed: 2,
            standardize: true,
        };
        let trained = train_mlp(&set, None, &cfg).unwrap();
        assert!(trained.train_accuracy > 0.8, "{}", trained.train_accuracy);
        assert!(trained.log.last().unwrap().loss < trained.log[0].loss);
    }
}

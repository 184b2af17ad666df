use std::collections::BTreeMap;

use log::info;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::knn::{knn_classify_rows, Metric};
use super::logreg::{train_logreg, LinearModel, LogregConfig};
use super::{accuracy, ClassifierError};
use crate::dataset::{sample_labeled_subset, ImageSet};

/// Labeled examples per class.
pub const K_GRID: [usize; 8] = [1, 3, 10, 30, 100, 300, 1000, 3000];
pub const LAMBDA_W_GRID: [f64; 6] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// One representation of the labeled pool and of the evaluation images, one
/// row per image.
#[derive(Debug, Clone)]
pub struct RepresentationData {
    pub name: String,
    pub pool: Array2<f32>,
    pub eval: Array2<f32>,
    /// Largest `k` at which logistic regression is fit; `None` skips it.
    pub logreg_max_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub lambda_w_grid: Vec<f64>,
    pub metrics: Vec<Metric>,
    pub logreg_steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_grid: K_GRID.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            lambda_w_grid: LAMBDA_W_GRID.to_vec(),
            metrics: vec![Metric::Euclidean, Metric::Cosine],
            logreg_steps: 50_000,
        }
    }
}

/// How a logistic-regression record's `λ_w` was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// A single fixed `λ_w` (and every 1-NN record).
    Fixed,
    /// Best `λ_w` by accuracy on the evaluation images themselves.
    Test,
    /// Best `λ_w` on the first half of the evaluation images, scored on the
    /// second half.
    Validation,
}

impl Selection {
    pub fn as_str(self) -> &'static str {
        match self {
            Selection::Fixed => "fixed",
            Selection::Test => "test",
            Selection::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub representation: String,
    /// `knn` or `logreg`.
    pub classifier: String,
    /// Distance for 1-NN, `none` for logistic regression.
    pub metric: String,
    pub k: usize,
    pub seed: u64,
    pub lambda_w: Option<f64>,
    pub selection: Selection,
    /// Not computed for 1-NN, which fits its training set by construction.
    pub train_accuracy: Option<f64>,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub representation: String,
    pub classifier: String,
    pub metric: String,
    pub selection: Selection,
    pub k: usize,
    pub seeds: usize,
    pub mean_train_accuracy: Option<f64>,
    pub mean_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    /// Seed-averaged accuracies, one entry per configuration, for the
    /// `Fixed` 1-NN records and the selected logistic-regression records.
    pub fn summary(&self) -> Vec<EvalSummary> {
        type Key = (String, String, String, Selection, usize);
        let mut groups: BTreeMap<Key, Vec<&EvalRecord>> = BTreeMap::new();
        for r in &self.records {
            if r.classifier == "logreg" && r.selection == Selection::Fixed {
                continue;
            }
            let key = (
                r.representation.clone(),
                r.classifier.clone(),
                r.metric.clone(),
                r.selection,
                r.k,
            );
            groups.entry(key).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|((representation, classifier, metric, selection, k), rs)| {
                let n = rs.len() as f64;
                let train: Option<Vec<f64>> = rs.iter().map(|r| r.train_accuracy).collect();
                EvalSummary {
                    representation,
                    classifier,
                    metric,
                    selection,
                    k,
                    seeds: rs.len(),
                    mean_train_accuracy: train.map(|t| t.iter().sum::<f64>() / n),
                    mean_test_accuracy: rs.iter().map(|r| r.test_accuracy).sum::<f64>() / n,
                }
            })
            .collect()
    }

    /// Seed-averaged test accuracy of one configuration.
    pub fn mean_test(
        &self,
        representation: &str,
        classifier: &str,
        metric: &str,
        selection: Selection,
        k: usize,
    ) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| {
                s.representation == representation
                    && s.classifier == classifier
                    && s.metric == metric
                    && s.selection == selection
                    && s.k == k
            })
            .map(|s| s.mean_test_accuracy)
    }
}

/// 1-NN and logistic regression on every representation, for every `k` and
/// seed. The labeled subsets are drawn from `pool` (whose rows the
/// representations' `pool` matrices follow) and shared by all
/// representations; accuracy is measured on `eval`.
pub fn evaluation_sweep(
    reps: &[RepresentationData],
    pool: &ImageSet,
    eval_labels: &[u8],
    config: &SweepConfig,
) -> Result<EvalReport, ClassifierError> {
    if reps.is_empty() {
        return Err(ClassifierError::Empty("no representations"));
    }
    for rep in reps {
        if rep.pool.nrows() != pool.len() || rep.eval.nrows() != eval_labels.len() {
            return Err(ClassifierError::MissingRepresentation(format!(
                "{}: pool {} rows for {} images, eval {} rows for {} labels",
                rep.name,
                rep.pool.nrows(),
                pool.len(),
                rep.eval.nrows(),
                eval_labels.len()
            )));
        }
    }
    let half = eval_labels.len() / 2;
    let mut records = Vec::new();
    for rep in reps {
        let eval64 = rep.logreg_max_k.map(|_| rep.eval.mapv(f64::from));
        for &k in &config.k_grid {
            for &seed in &config.seeds {
                let subset = sample_labeled_subset(pool, k, seed)?;
                let labels: Vec<u8> = subset.indices.iter().map(|&i| pool.labels()[i]).collect();
                for &metric in &config.metrics {
                    let pred = knn_classify_rows(
                        rep.pool.view(),
                        &subset.indices,
                        &labels,
                        rep.eval.view(),
                        metric,
                    )?;
                    records.push(EvalRecord {
                        representation: rep.name.clone(),
                        classifier: "knn".into(),
                        metric: metric.as_str().into(),
                        k,
                        seed,
                        lambda_w: None,
                        selection: Selection::Fixed,
                        train_accuracy: None,
                        test_accuracy: accuracy(&pred, eval_labels),
                    });
                }
                if let (Some(max_k), Some(eval64)) = (rep.logreg_max_k, &eval64) {
                    if k <= max_k {
                        records.extend(logreg_cell(
                            rep,
                            &subset.indices,
                            &labels,
                            eval64,
                            eval_labels,
                            half,
                            k,
                            seed,
                            config,
                        )?);
                    }
                }
                info!("sweep {} k={k} seed={seed} done", rep.name);
            }
        }
    }
    Ok(EvalReport { records })
}

#[allow(clippy::too_many_arguments)]
fn logreg_cell(
    rep: &RepresentationData,
    rows: &[usize],
    labels: &[u8],
    eval: &Array2<f64>,
    eval_labels: &[u8],
    half: usize,
    k: usize,
    seed: u64,
    config: &SweepConfig,
) -> Result<Vec<EvalRecord>, ClassifierError> {
    let x = rep.pool.select(Axis(0), rows).mapv(f64::from);
    // Strongest decay first; each fit warm-starts the next.
    let mut grid = config.lambda_w_grid.clone();
    grid.sort_by(|a, b| b.total_cmp(a));
    let mut warm: Option<LinearModel> = None;
    let mut fits = Vec::new();
    for &lambda_w in &grid {
        let cfg = LogregConfig {
            max_steps: config.logreg_steps,
            ..LogregConfig::new(lambda_w)
        };
        let model = train_logreg(x.view(), labels, &cfg, warm.as_ref())?;
        let train_acc = accuracy(&model.predict(x.view()), labels);
        let pred = model.predict(eval.view());
        fits.push((lambda_w, train_acc, pred));
        warm = Some(model);
    }
    fits.sort_by(|a, b| a.0.total_cmp(&b.0));

    let record = |lambda_w: f64, selection: Selection, train: f64, test: f64| EvalRecord {
        representation: rep.name.clone(),
        classifier: "logreg".into(),
        metric: "none".into(),
        k,
        seed,
        lambda_w: Some(lambda_w),
        selection,
        train_accuracy: Some(train),
        test_accuracy: test,
    };
    let mut out: Vec<EvalRecord> = fits
        .iter()
        .map(|(lw, tr, pred)| record(*lw, Selection::Fixed, *tr, accuracy(pred, eval_labels)))
        .collect();
    // Ties go to the smallest λ_w.
    let best_by = |score: &dyn Fn(&Vec<u8>) -> f64| {
        let mut best = 0;
        for (i, f) in fits.iter().enumerate() {
            if score(&f.2) > score(&fits[best].2) {
                best = i;
            }
        }
        best
    };
    let t = best_by(&|p| accuracy(p, eval_labels));
    out.push(record(
        fits[t].0,
        Selection::Test,
        fits[t].1,
        accuracy(&fits[t].2, eval_labels),
    ));
    if half > 0 {
        let v = best_by(&|p| accuracy(&p[..half], &eval_labels[..half]));
        let held_out = accuracy(&fits[v].2[half..], &eval_labels[half..]);
        out.push(record(
            fits[v].0,
            Selection::Validation,
            fits[v].1,
            held_out,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic_digits;

    fn pixels(set: &ImageSet) -> Array2<f32> {
        set.pixels().to_owned()
    }

    #[test]
    fn sweep_is_deterministic_and_complete() {
        let pool = synthetic_digits(200, 10, 1);
        let eval = synthetic_digits(60, 10, 2);
        let rep = RepresentationData {
            name: "pixels".into(),
            pool: pixels(&pool),
            eval: pixels(&eval),
            logreg_max_k: Some(3),
        };
        let cfg = SweepConfig {
            k_grid: vec![1, 3],
            seeds: vec![0, 1],
            lambda_w_grid: vec![1e-3, 1e-1],
            metrics: vec![Metric::Euclidean, Metric::Cosine],
            logreg_steps: 200,
        };
        let a = evaluation_sweep(std::slice::from_ref(&rep), &pool, eval.labels(), &cfg).unwrap();
        let b = evaluation_sweep(&[rep], &pool, eval.labels(), &cfg).unwrap();
        assert_eq!(a, b);
        // per (k, seed): 2 knn + 2 fixed + test + validation
        assert_eq!(a.records.len(), 2 * 2 * 6);
        assert!(a
            .records
            .iter()
            .all(|r| (0.0..=1.0).contains(&r.test_accuracy)));
        let summary = a.summary();
        assert!(summary.iter().all(|s| s.seeds == 2));
        assert!(a
            .mean_test("pixels", "knn", "euclidean", Selection::Fixed, 3)
            .is_some());
        assert!(a
            .mean_test("pixels", "logreg", "none", Selection::Test, 1)
            .is_some());
    }
}

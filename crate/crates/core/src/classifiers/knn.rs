use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_labels, ClassifierError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        }
    }
}

const QUERY_BLOCK: usize = 1024;
const TRAIN_BLOCK: usize = 2048;

/// Label of the nearest training row for every query row.
pub fn knn_classify(
    train: ArrayView2<f32>,
    labels: &[u8],
    queries: ArrayView2<f32>,
    metric: Metric,
) -> Result<Vec<u8>, ClassifierError> {
    let rows: Vec<usize> = (0..train.nrows()).collect();
    knn_classify_rows(train, &rows, labels, queries, metric)
}

/// 1-NN over the rows `rows` of `pool`, where `labels[i]` labels `pool[rows[i]]`.
///
/// Distances are computed in double precision as `‖t‖² − 2 q·t` in blocks.
/// Cosine distance is Euclidean distance between unit-normalized rows, which
/// orders neighbours identically. Equal distances go to the earliest row.
pub fn knn_classify_rows(
    pool: ArrayView2<f32>,
    rows: &[usize],
    labels: &[u8],
    queries: ArrayView2<f32>,
    metric: Metric,
) -> Result<Vec<u8>, ClassifierError> {
    if rows.is_empty() {
        return Err(ClassifierError::Empty("no training points"));
    }
    if rows.len() != labels.len() || pool.ncols() != queries.ncols() {
        return Err(ClassifierError::Shape(format!(
            "{} rows with {} labels; pool width {}, query width {}",
            rows.len(),
            labels.len(),
            pool.ncols(),
            queries.ncols()
        )));
    }
    check_labels(labels)?;
    let prepare = |block: Array2<f64>, offset: usize| -> Result<Array2<f64>, ClassifierError> {
        match metric {
            Metric::Euclidean => Ok(block),
            Metric::Cosine => normalize_rows(block, offset),
        }
    };

    let mut best = vec![(f64::INFINITY, 0u8); queries.nrows()];
    for (qb, qchunk) in queries.axis_chunks_iter(Axis(0), QUERY_BLOCK).enumerate() {
        let q = prepare(qchunk.mapv(f64::from), qb * QUERY_BLOCK)?;
        let q_best = &mut best[qb * QUERY_BLOCK..qb * QUERY_BLOCK + q.nrows()];
        for (tb, trows) in rows.chunks(TRAIN_BLOCK).enumerate() {
            let t = Array2::from_shape_fn((trows.len(), pool.ncols()), |(i, j)| {
                f64::from(pool[[trows[i], j]])
            });
            let t = prepare(t, tb * TRAIN_BLOCK).map_err(|e| match e {
                ClassifierError::ZeroVector(i) => ClassifierError::ZeroVector(rows[i]),
                e => e,
            })?;
            let norms: Array1<f64> = t.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
            let cross = q.dot(&t.t());
            for (qi, row) in cross.axis_iter(Axis(0)).enumerate() {
                let slot = &mut q_best[qi];
                for (ti, &c) in row.iter().enumerate() {
                    let score = norms[ti] - 2.0 * c;
                    if score < slot.0 {
                        *slot = (score, labels[tb * TRAIN_BLOCK + ti]);
                    }
                }
            }
        }
    }
    Ok(best.into_iter().map(|(_, l)| l).collect())
}

fn normalize_rows(mut block: Array2<f64>, offset: usize) -> Result<Array2<f64>, ClassifierError> {
    for (i, mut row) in block.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(ClassifierError::ZeroVector(offset + i));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_match_and_single_point() {
        let train = array![[0.0f32, 1.0], [1.0, 0.0], [5.0, 5.0]];
        let pred = knn_classify(
            train.view(),
            &[3, 4, 5],
            array![[1.0f32, 0.0], [4.0, 4.5]].view(),
            Metric::Euclidean,
        )
        .unwrap();
        assert_eq!(pred, vec![4, 5]);
        let one = array![[2.0f32, 2.0]];
        let pred = knn_classify(
            one.view(),
            &[7],
            array![[0.0f32, 1.0], [9.0, 9.0]].view(),
            Metric::Euclidean,
        )
        .unwrap();
        assert_eq!(pred, vec![7, 7]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let train = array![[1.0f32, 0.0], [-1.0, 0.0]];
        let pred = knn_classify(
            train.view(),
            &[1, 2],
            array![[0.0f32, 0.0]].view(),
            Metric::Euclidean,
        )
        .unwrap();
        assert_eq!(pred, vec![1]);
    }

    #[test]
    fn cosine_ignores_scale_and_rejects_zero() {
        let train = array![[1.0f32, 0.1], [0.1, 1.0]];
        let scaled = array![[30.0f32, 3.0], [0.01, 0.1]];
        let q = array![[0.2f32, 0.9], [5.0, 1.0]];
        let a = knn_classify(train.view(), &[0, 1], q.view(), Metric::Cosine).unwrap();
        let b = knn_classify(scaled.view(), &[0, 1], q.view(), Metric::Cosine).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, vec![1, 0]);
        let zero = array![[0.0f32, 0.0]];
        assert!(matches!(
            knn_classify(zero.view(), &[0], q.view(), Metric::Cosine),
            Err(ClassifierError::ZeroVector(0))
        ));
    }

    #[test]
    fn row_subset_matches_copied_subset() {
        let pool = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 3 + j) as f32 * 0.731).sin());
        let rows = [3, 8, 9, 21, 33];
        let labels = [0, 1, 2, 3, 4];
        let q = Array2::from_shape_fn((7, 3), |(i, j)| ((i * 5 + j) as f32 * 0.29).cos());
        let sub = pool.select(Axis(0), &rows);
        assert_eq!(
            knn_classify_rows(pool.view(), &rows, &labels, q.view(), Metric::Euclidean).unwrap(),
            knn_classify(sub.view(), &labels, q.view(), Metric::Euclidean).unwrap()
        );
    }
}

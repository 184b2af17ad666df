//! Dense factorizations on top of nalgebra, exchanged as ndarray arrays.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

/// Largest Gram-matrix condition number accepted before a system is treated
/// as singular.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular or too ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("non-finite input to factorization")]
    NonFinite,
}

pub fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_dmatrix(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// Solve `gram · y = rhs` for a symmetric positive definite `gram` by Cholesky.
///
/// The squared ratio of extreme Cholesky pivots bounds the condition number
/// from below; systems above [`MAX_GRAM_CONDITION`] are rejected.
pub fn spd_solve(gram: ArrayView2<f64>, rhs: ArrayView1<f64>) -> Result<Array1<f64>, LinalgError> {
    let k = gram.nrows();
    if k == 0 {
        return Ok(Array1::zeros(0));
    }
    if gram.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let chol = to_dmatrix(gram).cholesky().ok_or(LinalgError::Singular {
        condition: f64::INFINITY,
    })?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..k {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let condition = (hi / lo).powi(2);
    if !condition.is_finite() || condition > MAX_GRAM_CONDITION {
        return Err(LinalgError::Singular { condition });
    }
    let y = chol.solve(&DVector::from_iterator(k, rhs.iter().copied()));
    Ok(Array1::from_iter(y.iter().copied()))
}

/// Thin singular value decomposition `a = u · diag(sigma) · vᵀ` with
/// `sigma` sorted descending.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `rows × r` left singular vectors.
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    /// `cols × r` right singular vectors.
    pub v: Array2<f64>,
}

pub fn thin_svd(a: ArrayView2<f64>) -> Result<ThinSvd, LinalgError> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let (m, n) = a.dim();
    let r = m.min(n);
    if r == 0 {
        return Ok(ThinSvd {
            u: Array2::zeros((m, 0)),
            sigma: Array1::zeros(0),
            v: Array2::zeros((n, 0)),
        });
    }
    let svd = to_dmatrix(a).svd(true, true);
    let u = svd.u.as_ref().ok_or(LinalgError::NonFinite)?;
    let v_t = svd.v_t.as_ref().ok_or(LinalgError::NonFinite)?;
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    Ok(ThinSvd {
        u: Array2::from_shape_fn((m, r), |(i, c)| u[(i, order[c])]),
        sigma: Array1::from_iter(order.iter().map(|&c| svd.singular_values[c])),
        v: Array2::from_shape_fn((n, r), |(i, c)| v_t[(order[c], i)]),
    })
}

/// Columns of `a` selected by `cols`.
pub fn select_columns(a: ArrayView2<f64>, cols: &[usize]) -> Array2<f64> {
    a.select(ndarray::Axis(1), cols)
}

//! Independent reference computations shared by the integration tests and the
//! acceptance target.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsecode::sensitivity::active_jacobian;
use sparsecode::sparse_coding::{infer_batch, InferenceOptions};
use sparsecode::{Dictionary, SparseCode};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn unit_columns(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut d = Array2::from_shape_simple_fn((rows, cols), || gaussian(rng));
    for mut c in d.columns_mut() {
        let n = c.dot(&c).sqrt();
        c /= n;
    }
    d
}

/// `½‖x − D r‖² + λ‖r‖₁`, written out directly.
pub fn lasso_objective(
    x: ArrayView1<f64>,
    d: &Array2<f64>,
    r: ArrayView1<f64>,
    lambda: f64,
) -> f64 {
    let res = d.dot(&r) - x;
    0.5 * res.dot(&res) + lambda * r.iter().map(|v| v.abs()).sum::<f64>()
}

/// Minimum LASSO objective by enumerating every support of at most `m`
/// columns and every sign pattern on it. The minimizer satisfies
/// `r_S = G_S⁻¹(D_Sᵀx − λ s)` with `sign(r_S) = s` for its own support, and every
/// sign-consistent candidate is feasible, so the smallest candidate objective
/// is the optimum.
pub fn lasso_by_enumeration(
    x: ArrayView1<f64>,
    d: &Array2<f64>,
    lambda: f64,
) -> (f64, Array1<f64>) {
    let (m, n) = d.dim();
    let mut best = (0.5 * x.dot(&x), Array1::zeros(n));
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let k = support.len();
        if k > m {
            continue;
        }
        let ds = DMatrix::from_fn(m, k, |i, j| d[[i, support[j]]]);
        let Some(ginv) = (ds.transpose() * &ds).try_inverse() else {
            continue;
        };
        let xv = DVector::from_iterator(m, x.iter().copied());
        let base = &ginv * (ds.transpose() * xv);
        for signs in 0u32..(1 << k) {
            let s = DVector::from_fn(k, |i, _| if signs >> i & 1 == 1 { -1.0 } else { 1.0 });
            let r = &base - &ginv * &s * lambda;
            if (0..k).all(|i| r[i] * s[i] > 0.0) {
                let mut dense = Array1::zeros(n);
                for (i, &j) in support.iter().enumerate() {
                    dense[j] = r[i];
                }
                let obj = lasso_objective(x, d, dense.view(), lambda);
                if obj < best.0 {
                    best = (obj, dense);
                }
            }
        }
    }
    best
}

/// Exact code from inference with default options, optionally warm-started.
pub fn exact_code(x: ArrayView1<f64>, dict: &Dictionary, warm: Option<&SparseCode>) -> SparseCode {
    let opts = InferenceOptions::default();
    let start = warm.map(|c| c.coeffs().insert_axis(ndarray::Axis(1)).to_owned());
    let out = infer_batch(
        x.insert_axis(ndarray::Axis(0)),
        dict,
        &opts,
        start.as_ref().map(|s| s.view()),
    )
    .unwrap()
    .remove(0);
    assert!(out.converged, "reference inference did not converge");
    out.code
}

/// Relative error between the analytic directional derivative vector `J Δx`
/// at the exact code `code` of `x` and the central difference of exact codes
/// at step `eps`, or `None` if the support changes within the step.
pub fn jacobian_fd_error(
    x: ArrayView1<f64>,
    dx: ArrayView1<f64>,
    dict: &Dictionary,
    code: &SparseCode,
    eps: f64,
) -> Option<f64> {
    let j = active_jacobian(dict, code).ok()?;
    let analytic = j.dense(dict.size()).dot(&dx);
    let plus = (&x + &(&dx * eps)).to_owned();
    let minus = (&x - &(&dx * eps)).to_owned();
    let cp = exact_code(plus.view(), dict, Some(code));
    let cm = exact_code(minus.view(), dict, Some(code));
    if cp.active() != code.active() || cm.active() != code.active() {
        return None;
    }
    let fd = (&cp.coeffs() - &cm.coeffs()) / (2.0 * eps);
    let diff = &fd - &analytic;
    Some(diff.dot(&diff).sqrt() / analytic.dot(&analytic).sqrt().max(f64::MIN_POSITIVE))
}

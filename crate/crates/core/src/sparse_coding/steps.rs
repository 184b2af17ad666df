use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, NdFloat, Zip};

use super::SparseCodingError;

/// Learning-rate multiplier after an accepted step.
pub const RATE_GROWTH: f64 = 1.1;
/// Learning-rate multiplier after a rejected step.
pub const RATE_DECAY: f64 = 0.5;

/// Soft threshold: `u − θ` above `θ`, `u + θ` below `−θ`, zero in between.
#[inline]
pub fn shrink<T: NdFloat>(u: T, theta: T) -> T {
    if u >= theta {
        u - theta
    } else if u <= -theta {
        u + theta
    } else {
        T::zero()
    }
}

fn check_shapes<T>(
    x: &ArrayView2<T>,
    r: &ArrayView2<T>,
    d: &ArrayView2<T>,
) -> Result<(), SparseCodingError> {
    if d.nrows() != x.nrows() || d.ncols() != r.nrows() || x.ncols() != r.ncols() {
        return Err(SparseCodingError::Shape(format!(
            "X {:?}, R {:?}, D {:?}",
            x.dim(),
            r.dim(),
            d.dim()
        )));
    }
    Ok(())
}

/// `Σ_t ½‖x(t) − D r(t)‖² + λ‖r(t)‖₁`, accumulated in double precision.
pub fn objective<T: NdFloat>(
    x: ArrayView2<T>,
    r: ArrayView2<T>,
    d: ArrayView2<T>,
    lambda: f64,
) -> Result<f64, SparseCodingError> {
    check_shapes(&x, &r, &d)?;
    let residual = d.dot(&r) - x;
    Ok(objective_from_residual(residual.view(), r, lambda))
}

/// Objective given the residual `D R − X`.
pub(crate) fn objective_from_residual<T: NdFloat>(
    residual: ArrayView2<T>,
    r: ArrayView2<T>,
    lambda: f64,
) -> f64 {
    let sq: f64 = residual
        .iter()
        .map(|&e| {
            let e = e.to_f64().unwrap_or(f64::NAN);
            e * e
        })
        .sum();
    let l1: f64 = r
        .iter()
        .map(|&v| v.to_f64().unwrap_or(f64::NAN).abs())
        .sum();
    0.5 * sq + lambda * l1
}

/// One proximal gradient step on a single code:
/// `shrink(r − η Dᵀ(D r − x), η λ)`.
pub fn ista_step(
    r: ArrayView1<f64>,
    x: ArrayView1<f64>,
    d: ArrayView2<f64>,
    lambda: f64,
    eta: f64,
) -> Array1<f64> {
    let residual = d.dot(&r) - x;
    let grad = d.t().dot(&residual);
    let theta = eta * lambda;
    Zip::from(&r)
        .and(&grad)
        .map_collect(|&ri, &gi| shrink(ri - eta * gi, theta))
}

/// Batch proximal step given the gradient `Dᵀ(D R − X)`.
pub(crate) fn ista_update<T: NdFloat>(
    r: ArrayView2<T>,
    grad: ArrayView2<T>,
    lambda: f64,
    eta: f64,
) -> Array2<T> {
    let eta_t = T::from(eta).unwrap();
    let theta = T::from(eta * lambda).unwrap();
    Zip::from(&r)
        .and(&grad)
        .map_collect(|&ri, &gi| shrink(ri - eta_t * gi, theta))
}

/// Rescale every column to unit Euclidean norm.
pub fn normalize_columns<T: NdFloat>(d: &mut Array2<T>) -> Result<(), SparseCodingError> {
    for (i, mut col) in d.axis_iter_mut(Axis(1)).enumerate() {
        let norm = col.dot(&col).sqrt();
        let ok = norm.to_f64().is_some_and(|n| n.is_finite() && n > 1e-30);
        if !ok {
            return Err(SparseCodingError::CollapsedAtom(i));
        }
        col.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

/// Gradient step on the reconstruction term over the whole batch,
/// `D − η (D R − X) Rᵀ`, followed by column normalization.
pub fn dict_step(
    d: ArrayView2<f64>,
    x: ArrayView2<f64>,
    r: ArrayView2<f64>,
    eta: f64,
) -> Result<Array2<f64>, SparseCodingError> {
    check_shapes(&x, &r, &d)?;
    let residual = d.dot(&r) - x;
    dict_update(d, residual.view(), r, eta)
}

pub(crate) fn dict_update<T: NdFloat>(
    d: ArrayView2<T>,
    residual: ArrayView2<T>,
    r: ArrayView2<T>,
    eta: f64,
) -> Result<Array2<T>, SparseCodingError> {
    let grad = residual.dot(&r.t());
    let mut next = d.to_owned();
    next.scaled_add(-T::from(eta).unwrap(), &grad);
    normalize_columns(&mut next)?;
    Ok(next)
}

/// Accept a strictly decreasing loss and grow the rate by 1.1; otherwise
/// reject and halve it.
pub fn adapt_rate(loss_prev: f64, loss_new: f64, eta: f64) -> (bool, f64) {
    if loss_new < loss_prev {
        (true, eta * RATE_GROWTH)
    } else {
        (false, eta * RATE_DECAY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn shrink_branches() {
        assert_abs_diff_eq!(shrink(0.5, 0.3), 0.2, epsilon = 1e-15);
        assert_eq!(shrink(-0.1, 0.3), 0.0);
        assert_abs_diff_eq!(shrink(-0.5, 0.3), -0.2, epsilon = 1e-15);
        assert_eq!(shrink(0.3, 0.3), 0.0);
        assert_eq!(shrink(2.0f32, 0.0), 2.0);
    }

    #[test]
    fn objective_cases() {
        let z = Array2::<f64>::zeros((3, 2));
        assert_eq!(
            objective(z.view(), z.view(), Array2::eye(3).view(), 0.5).unwrap(),
            0.0
        );
        let x = array![[1.0, 2.0], [3.0, -1.0]];
        assert_eq!(
            objective(x.view(), x.view(), Array2::eye(2).view(), 0.0).unwrap(),
            0.0
        );
        // ½·‖(1,0) − (1,1)‖² + 0.3·2 = 0.5 + 0.6
        let x = array![[1.0], [0.0]];
        let r = array![[1.0], [1.0]];
        assert_abs_diff_eq!(
            objective(x.view(), r.view(), Array2::eye(2).view(), 0.3).unwrap(),
            1.1,
            epsilon = 1e-15
        );
        assert!(objective(x.view(), r.view(), Array2::eye(3).view(), 0.3).is_err());
    }

    #[test]
    fn ista_identity_one_step_is_shrinkage_of_x() {
        let x = array![0.7, -0.1, -1.5];
        let r = ista_step(
            Array1::zeros(3).view(),
            x.view(),
            Array2::eye(3).view(),
            0.3,
            1.0,
        );
        assert_abs_diff_eq!(r, array![0.4, 0.0, -1.2], epsilon = 1e-15);
    }

    #[test]
    fn ista_hand_case_2x2() {
        // D = [[1, .6], [0, .8]], x = (1, 2), r = (.5, 0), η = .5, λ = .1
        // Dr − x = (−.5, −2);  Dᵀ(Dr − x) = (−.5, −1.9)
        // r − η g = (.75, .95);  shrink by .05 → (.7, .9)
        let d = array![[1.0, 0.6], [0.0, 0.8]];
        let r = ista_step(
            array![0.5, 0.0].view(),
            array![1.0, 2.0].view(),
            d.view(),
            0.1,
            0.5,
        );
        assert_abs_diff_eq!(r, array![0.7, 0.9], epsilon = 1e-14);
    }

    #[test]
    fn ista_fixed_point_is_stationary() {
        // D = I, λ = .3, x = (1, .1): minimizer r = (.7, 0)
        let r = array![0.7, 0.0];
        let next = ista_step(
            r.view(),
            array![1.0, 0.1].view(),
            Array2::eye(2).view(),
            0.3,
            0.8,
        );
        assert_abs_diff_eq!(next, r, epsilon = 1e-15);
    }

    #[test]
    fn dict_step_zero_codes_is_noop_and_keeps_unit_norm() {
        let mut d = array![[0.6, 1.0], [0.8, 1.0]];
        normalize_columns(&mut d).unwrap();
        let x = array![[1.0, 0.0], [0.5, 2.0]];
        let same = dict_step(d.view(), x.view(), Array2::zeros((2, 2)).view(), 0.1).unwrap();
        assert_abs_diff_eq!(same, d, epsilon = 1e-15);
        let r = array![[1.0, -0.5], [0.2, 0.3]];
        let next = dict_step(d.view(), x.view(), r.view(), 0.3).unwrap();
        for col in next.columns() {
            assert_abs_diff_eq!(col.dot(&col).sqrt(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dict_step_collapse_is_an_error() {
        // D = e1, r = 1, x = 0: gradient step with η = 1 yields the zero column.
        let d = array![[1.0], [0.0]];
        let x = Array2::zeros((2, 1));
        let r = array![[1.0]];
        assert!(matches!(
            dict_step(d.view(), x.view(), r.view(), 1.0),
            Err(SparseCodingError::CollapsedAtom(0))
        ));
    }

    #[test]
    fn adapt_rate_rules() {
        let (ok, eta) = adapt_rate(10.0, 9.0, 0.1);
        assert!(ok);
        assert_abs_diff_eq!(eta, 0.11, epsilon = 1e-15);
        assert_eq!(adapt_rate(10.0, 11.0, 0.1), (false, 0.05));
        assert_eq!(adapt_rate(10.0, 10.0, 0.1), (false, 0.05));
        assert_eq!(adapt_rate(10.0, f64::NAN, 0.1), (false, 0.05));
    }
}

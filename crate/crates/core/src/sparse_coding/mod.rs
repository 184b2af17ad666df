//! Dictionary learning and exact sparse inference for the LASSO objective
//!
//! ```text
//! Σ_t ½‖x(t) − D r(t)‖² + λ‖r(t)‖₁   subject to ‖d_i‖ = 1
//! ```
//!
//! Batches are column matrices: images `X` are `m × T`, codes `R` are `n × T`,
//! and the dictionary `D` is `m × n`.

mod inference;
mod steps;
mod train;

pub use inference::{
    active_solution, check_fixed_point, infer_batch, infer_exact, threshold_margin,
    uniqueness_check, FixedPointReport, InferOutcome, InferenceOptions, ACTIVE_TOLERANCE,
    INACTIVE_TOLERANCE, NON_GENERIC_MARGIN,
};
pub use steps::{adapt_rate, dict_step, ista_step, normalize_columns, objective, shrink};
pub use train::{train_dictionary, TrainCheckpoint, TrainConfig, TrainState, Trainer};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;

/// Tolerance on the unit norm of every dictionary column.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SparseCodingError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dictionary column {0} collapsed to zero")]
    CollapsedAtom(usize),
    #[error("dictionary column {index} has norm {norm}, expected 1")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("objective became non-finite at iteration {0}")]
    NonFinite(usize),
    #[error("lambda must be finite and nonnegative, got {0}")]
    BadLambda(f64),
    #[error("active dictionary is rank deficient: {0}")]
    RankDeficient(#[from] LinalgError),
    #[error("inference did not converge after {iterations} iterations (inactive excess {inactive_excess:e}, active residual {active_residual:e})")]
    NotConverged {
        iterations: usize,
        inactive_excess: f64,
        active_residual: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
}

/// Unit-norm filters `d_i` (the columns of an `m × n` matrix) together with the
/// sparsity weight λ they were learned for.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
    lambda: f64,
}

impl Dictionary {
    /// Wrap `atoms`, checking that every column already has unit norm.
    pub fn new(atoms: Array2<f64>, lambda: f64) -> Result<Self, SparseCodingError> {
        check_lambda(lambda)?;
        for (index, col) in atoms.axis_iter(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(SparseCodingError::NotUnitNorm { index, norm });
            }
        }
        Ok(Self { atoms, lambda })
    }

    /// Normalize the columns of `atoms` and wrap them.
    pub fn from_unnormalized(
        mut atoms: Array2<f64>,
        lambda: f64,
    ) -> Result<Self, SparseCodingError> {
        check_lambda(lambda)?;
        normalize_columns(&mut atoms)?;
        Ok(Self { atoms, lambda })
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn atom(&self, i: usize) -> ArrayView1<'_, f64> {
        self.atoms.column(i)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, SparseCodingError> {
        check_lambda(lambda)?;
        Ok(Self {
            atoms: self.atoms.clone(),
            lambda,
        })
    }

    /// Image dimension `m`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of filters `n`.
    pub fn size(&self) -> usize {
        self.atoms.ncols()
    }

    /// `DᵀD`.
    pub fn gram(&self) -> Array2<f64> {
        self.atoms.t().dot(&self.atoms)
    }

    /// The active dictionary `D_+`: the columns listed in `active`.
    pub fn active(&self, active: &[usize]) -> Array2<f64> {
        self.atoms.select(Axis(1), active)
    }
}

fn check_lambda(lambda: f64) -> Result<(), SparseCodingError> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(SparseCodingError::BadLambda(lambda))
    }
}

/// A code vector with its support and the signs on the support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    coeffs: Array1<f64>,
    active: Vec<usize>,
    signs: Vec<f64>,
}

impl SparseCode {
    pub fn from_dense(coeffs: Array1<f64>) -> Self {
        let active: Vec<usize> = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        let signs = active.iter().map(|&i| coeffs[i].signum()).collect();
        Self {
            coeffs,
            active,
            signs,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_dense(Array1::zeros(n))
    }

    pub fn coeffs(&self) -> ArrayView1<'_, f64> {
        self.coeffs.view()
    }

    pub fn into_coeffs(self) -> Array1<f64> {
        self.coeffs
    }

    /// Indices of the nonzero entries, ascending.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// `s_+`: ±1 for each active entry.
    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    /// Active count `k`.
    pub fn k(&self) -> usize {
        self.active.len()
    }

    /// `r_+`.
    pub fn active_values(&self) -> Array1<f64> {
        self.active.iter().map(|&i| self.coeffs[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn code_support_and_signs() {
        let c = SparseCode::from_dense(array![0.0, -2.0, 0.0, 0.5]);
        assert_eq!(c.active(), &[1, 3]);
        assert_eq!(c.signs(), &[-1.0, 1.0]);
        assert_eq!(c.k(), 2);
        assert_eq!(c.active_values(), array![-2.0, 0.5]);
        assert_eq!(SparseCode::zeros(4).k(), 0);
    }

    #[test]
    fn dictionary_rejects_non_unit_columns() {
        assert!(matches!(
            Dictionary::new(array![[1.0, 0.0], [0.0, 2.0]], 0.1),
            Err(SparseCodingError::NotUnitNorm { index: 1, .. })
        ));
        let d = Dictionary::from_unnormalized(array![[3.0, 0.0], [4.0, 2.0]], 0.1).unwrap();
        assert!((d.atom(0)[0] - 0.6).abs() < 1e-15);
        assert!(Dictionary::new(Array2::eye(2), -1.0).is_err());
    }
}

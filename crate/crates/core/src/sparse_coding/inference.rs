//! Exact sparse codes for a frozen dictionary.
//!
//! A code `r` is accepted when it satisfies the LASSO fixed-point conditions:
//!
//! * every inactive unit `i` has `|d_i·x − Σ_j d_i·d_j r_j| − λ < 1e-5`;
//! * the active part matches the locally linear solution,
//!   `‖r_+ − (D_+ᵀD_+)⁻¹(D_+ᵀx − λ s_+)‖ / ‖r_+‖ < 1e-4`.
//!
//! Codes are driven there by ISTA with a per-image adaptive step. At every
//! check the current support is also polished: the locally linear solution on
//! the support is computed, and the iterate moves toward it as far as the
//! signs stay fixed. On that segment the objective is a convex quadratic
//! minimized at the far end, so the move never increases it; once ISTA has
//! found the right support the polished point is the exact minimizer.

use log::debug;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, NdFloat};
use serde::{Deserialize, Serialize};

use super::steps::{adapt_rate, shrink};
use super::{Dictionary, Precision, SparseCode, SparseCodingError};
use crate::linalg::spd_solve;

/// Threshold on the inactive-unit condition.
pub const INACTIVE_TOLERANCE: f64 = 1e-5;
/// Threshold on the relative active-set residual.
pub const ACTIVE_TOLERANCE: f64 = 1e-4;
/// Codes whose distance to a shrinkage kink is below this are non-generic.
pub const NON_GENERIC_MARGIN: f64 = 1e-6;

const SINGLE_PRECISION_FLOOR: f64 = 32.0 * f32::EPSILON as f64;
const MAX_SINGLE_REJECTIONS: usize = 40;
const MIGRATE_EVERY: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub passed: bool,
    /// `max_i |preactivation_i| − λ` over inactive units (−λ if none).
    pub inactive_excess: f64,
    /// Relative distance of `r_+` from the locally linear solution.
    pub active_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InferenceOptions {
    pub max_iters: usize,
    /// ISTA iterations between fixed-point checks.
    pub check_every: usize,
    /// Initial ISTA step.
    pub eta: f64,
    pub start_precision: Precision,
    /// Move toward the locally linear solution of the current support at each check.
    pub polish: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            max_iters: 200_000,
            check_every: 10_000,
            eta: 1e-2,
            start_precision: Precision::Single,
            polish: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InferOutcome {
    pub code: SparseCode,
    pub report: FixedPointReport,
    pub iterations: usize,
    pub precision: Precision,
    pub converged: bool,
    /// Distance of the closest unit to its shrinkage threshold.
    pub margin: f64,
}

impl InferOutcome {
    pub fn is_generic(&self) -> bool {
        self.margin >= NON_GENERIC_MARGIN
    }
}

fn sign_vector(code: &SparseCode) -> Array1<f64> {
    Array1::from(code.signs().to_vec())
}

/// `r_+ = (D_+ᵀD_+)⁻¹(D_+ᵀx − λ s_+)` by a Cholesky solve.
pub fn active_solution(
    x: ArrayView1<f64>,
    dict: &Dictionary,
    active: &[usize],
    signs: &[f64],
) -> Result<Array1<f64>, SparseCodingError> {
    let dp = dict.active(active);
    let gram = dp.t().dot(&dp);
    let rhs = dp.t().dot(&x) - &(Array1::from(signs.to_vec()) * dict.lambda());
    Ok(spd_solve(gram.view(), rhs.view())?)
}

/// Evaluate the fixed-point conditions for `code` as a representation of `x`.
pub fn check_fixed_point(
    x: ArrayView1<f64>,
    code: &SparseCode,
    dict: &Dictionary,
) -> Result<FixedPointReport, SparseCodingError> {
    let d = dict.atoms();
    let corr = d.t().dot(&(&x - &d.dot(&code.coeffs())));
    let lambda = dict.lambda();
    let inactive_excess = inactive_excess(corr.view(), code, lambda);
    let active_residual = if code.k() == 0 {
        0.0
    } else {
        let target = active_solution(x, dict, code.active(), code.signs())?;
        relative_residual(&code.active_values(), &target)
    };
    Ok(report(inactive_excess, active_residual))
}

fn report(inactive_excess: f64, active_residual: f64) -> FixedPointReport {
    FixedPointReport {
        passed: inactive_excess < INACTIVE_TOLERANCE && active_residual < ACTIVE_TOLERANCE,
        inactive_excess,
        active_residual,
    }
}

fn inactive_excess(corr: ArrayView1<f64>, code: &SparseCode, lambda: f64) -> f64 {
    let mut excess = -lambda;
    for (i, &c) in corr.iter().enumerate() {
        if code.coeffs()[i] == 0.0 {
            excess = excess.max(c.abs() - lambda);
        }
    }
    excess
}

fn relative_residual(r: &Array1<f64>, target: &Array1<f64>) -> f64 {
    let diff = r - target;
    diff.dot(&diff).sqrt() / r.dot(r).sqrt()
}

/// Smallest distance of any unit's shrinkage argument to ±λ. For an active
/// unit at a fixed point this is `|r_i|`.
pub fn threshold_margin(x: ArrayView1<f64>, code: &SparseCode, dict: &Dictionary) -> f64 {
    let d = dict.atoms();
    let corr = d.t().dot(&(&x - &d.dot(&code.coeffs())));
    margin_from_corr(
        corr.view(),
        code.coeffs(),
        d.t().dot(&d).diag(),
        dict.lambda(),
    )
}

fn margin_from_corr(
    corr: ArrayView1<f64>,
    r: ArrayView1<f64>,
    gram_diag: ArrayView1<f64>,
    lambda: f64,
) -> f64 {
    corr.iter()
        .zip(r.iter())
        .zip(gram_diag.iter())
        .map(|((&c, &ri), &g)| ((c + g * ri).abs() - lambda).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Maximum `|d_i·d_j|` over distinct filters; 1 means duplicated or
/// antipodal filters and a possibly non-unique code.
pub fn uniqueness_check(dict: &Dictionary) -> f64 {
    let gram = dict.gram();
    let mut worst = 0.0f64;
    for ((i, j), &g) in gram.indexed_iter() {
        if i != j {
            worst = worst.max(g.abs());
        }
    }
    worst
}

/// Double-precision view of the problem shared by all images.
struct Problem {
    gram: Array2<f64>,
    /// `DᵀX`, `n × T`.
    b: Array2<f64>,
    half_x_sq: Vec<f64>,
    lambda: f64,
}

impl Problem {
    /// Objective of column `id` at `r`, given `G r`.
    fn objective(&self, id: usize, r: ArrayView1<f64>, gr: ArrayView1<f64>) -> f64 {
        0.5 * r.dot(&gr) - r.dot(&self.b.column(id))
            + self.half_x_sq[id]
            + self.lambda * r.mapv(f64::abs).sum()
    }

    fn gram_times(&self, r: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(r.len());
        for (j, &v) in r.iter().enumerate() {
            if v != 0.0 {
                out.scaled_add(v, &self.gram.column(j));
            }
        }
        out
    }

    fn check(&self, id: usize, r: ArrayView1<f64>, gr: ArrayView1<f64>) -> FixedPointReport {
        let code = SparseCode::from_dense(r.to_owned());
        let corr = &self.b.column(id) - &gr;
        let excess = inactive_excess(corr.view(), &code, self.lambda);
        if code.k() == 0 {
            return report(excess, 0.0);
        }
        let residual = self
            .support_solution(id, &code)
            .map(|target| relative_residual(&code.active_values(), &target))
            .unwrap_or(f64::INFINITY);
        report(excess, residual)
    }

    fn support_solution(&self, id: usize, code: &SparseCode) -> Option<Array1<f64>> {
        let active = code.active();
        let sub = self.gram.select(Axis(0), active).select(Axis(1), active);
        let b = self.b.column(id);
        let rhs =
            Array1::from_iter(active.iter().map(|&i| b[i])) - &(sign_vector(code) * self.lambda);
        spd_solve(sub.view(), rhs.view()).ok()
    }

    /// Move `r` toward the locally linear solution of its support, stopping
    /// where the first active coefficient would change sign.
    fn polish(&self, id: usize, r: ArrayView1<f64>) -> Option<Array1<f64>> {
        let code = SparseCode::from_dense(r.to_owned());
        if code.k() == 0 {
            return None;
        }
        let target = self.support_solution(id, &code)?;
        let current = code.active_values();
        let crossing: Vec<Option<f64>> = current
            .iter()
            .zip(target.iter())
            .zip(code.signs())
            .map(|((&cur, &tgt), &s)| (tgt * s <= 0.0).then(|| cur / (cur - tgt)))
            .collect();
        let t = crossing.iter().flatten().copied().fold(1.0f64, f64::min);
        let mut next = Array1::zeros(r.len());
        for (p, &i) in code.active().iter().enumerate() {
            let blocked = crossing[p].is_some_and(|ti| ti <= t);
            let v = current[p] + t * (target[p] - current[p]);
            if !blocked && v * code.signs()[p] > 0.0 {
                next[i] = v;
            }
        }
        Some(next)
    }
}

struct Column {
    id: usize,
    eta: f64,
    objective: f64,
    iterations: usize,
    rejections: usize,
    stalled: bool,
}

/// Columns iterated together in one precision.
struct Pool<T> {
    gram: Array2<T>,
    b: Array2<T>,
    r: Array2<T>,
    gr: Array2<T>,
    cols: Vec<Column>,
}

fn to_t<T: NdFloat>(v: f64) -> T {
    T::from(v).unwrap()
}

impl<T: NdFloat> Pool<T> {
    fn new(problem: &Problem, n: usize) -> Self {
        Self {
            gram: problem.gram.mapv(to_t),
            b: Array2::zeros((n, 0)),
            r: Array2::zeros((n, 0)),
            gr: Array2::zeros((n, 0)),
            cols: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.cols.len()
    }

    fn column_f64(&self, j: usize) -> Array1<f64> {
        self.r.column(j).mapv(|v| v.to_f64().unwrap())
    }

    fn push_all(&mut self, problem: &Problem, entries: Vec<(Column, Array1<f64>)>) {
        if entries.is_empty() {
            return;
        }
        let n = self.gram.nrows();
        let k = entries.len();
        let mut r = Array2::<f64>::zeros((n, k));
        let mut b = Array2::<f64>::zeros((n, k));
        for (j, (col, code)) in entries.iter().enumerate() {
            r.column_mut(j).assign(code);
            b.column_mut(j).assign(&problem.b.column(col.id));
        }
        let r_t = r.mapv(to_t::<T>);
        let gr_t = self.gram.dot(&r_t);
        self.r = ndarray::concatenate![Axis(1), self.r, r_t];
        self.gr = ndarray::concatenate![Axis(1), self.gr, gr_t];
        self.b = ndarray::concatenate![Axis(1), self.b, b.mapv(to_t::<T>)];
        for (mut col, _) in entries {
            let base = self.cols.len();
            col.objective = self.objective_of(problem, base, col.id);
            col.rejections = 0;
            col.stalled = false;
            self.cols.push(col);
        }
    }

    fn objective_of(&self, problem: &Problem, j: usize, id: usize) -> f64 {
        let r = self.r.column(j);
        let gr = self.gr.column(j);
        let b = self.b.column(j);
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut l1 = 0.0;
        for i in 0..r.len() {
            let ri = r[i].to_f64().unwrap();
            quad += ri * gr[i].to_f64().unwrap();
            lin += ri * b[i].to_f64().unwrap();
            l1 += ri.abs();
        }
        0.5 * quad - lin + problem.half_x_sq[id] + problem.lambda * l1
    }

    fn retain(&mut self, keep: &[bool]) {
        let idx: Vec<usize> = (0..self.cols.len()).filter(|&j| keep[j]).collect();
        self.r = self.r.select(Axis(1), &idx);
        self.gr = self.gr.select(Axis(1), &idx);
        self.b = self.b.select(Axis(1), &idx);
        let mut j = 0;
        self.cols.retain(|_| {
            let k = keep[j];
            j += 1;
            k
        });
    }

    /// One ISTA proposal per column; returns nothing, updates bookkeeping.
    fn step(&mut self, problem: &Problem, single: bool) {
        if self.cols.is_empty() {
            return;
        }
        let lambda = problem.lambda;
        let mut proposal = Array2::<T>::zeros(self.r.raw_dim());
        for (j, col) in self.cols.iter().enumerate() {
            let eta = to_t::<T>(col.eta);
            let theta = to_t::<T>(col.eta * lambda);
            let r = self.r.column(j);
            let gr = self.gr.column(j);
            let b = self.b.column(j);
            let mut out = proposal.column_mut(j);
            for i in 0..r.len() {
                out[i] = shrink(r[i] - eta * (gr[i] - b[i]), theta);
            }
        }
        let gr_new = self.gram.dot(&proposal);
        for (j, col) in self.cols.iter_mut().enumerate() {
            col.iterations += 1;
            let r = proposal.column(j);
            let gr = gr_new.column(j);
            let b = self.b.column(j);
            let mut quad = 0.0;
            let mut lin = 0.0;
            let mut l1 = 0.0;
            for i in 0..r.len() {
                let ri = r[i].to_f64().unwrap();
                quad += ri * gr[i].to_f64().unwrap();
                lin += ri * b[i].to_f64().unwrap();
                l1 += ri.abs();
            }
            let candidate = 0.5 * quad - lin + problem.half_x_sq[col.id] + lambda * l1;
            let (accepted, eta) = adapt_rate(col.objective, candidate, col.eta);
            col.eta = eta;
            if accepted {
                self.r.column_mut(j).assign(&r);
                self.gr.column_mut(j).assign(&gr);
                col.objective = candidate;
                col.rejections = 0;
            } else {
                col.rejections += 1;
                let relative = ((candidate - col.objective) / col.objective).abs();
                if single
                    && (relative < SINGLE_PRECISION_FLOOR
                        || col.rejections >= MAX_SINGLE_REJECTIONS)
                {
                    col.stalled = true;
                }
            }
        }
    }

    /// Check every column (polishing first if enabled). Converged or
    /// exhausted columns are removed and returned as outcomes.
    fn check(
        &mut self,
        problem: &Problem,
        polish: bool,
        force_finish: bool,
        precision: Precision,
    ) -> Vec<(usize, InferOutcome)> {
        let mut done = Vec::new();
        let mut keep = vec![true; self.cols.len()];
        for j in 0..self.cols.len() {
            let id = self.cols[j].id;
            let mut r = self.column_f64(j);
            let mut gr = problem.gram_times(r.view());
            let mut rep = problem.check(id, r.view(), gr.view());
            if polish {
                if let Some(next) = problem.polish(id, r.view()) {
                    let g_next = problem.gram_times(next.view());
                    let before = problem.objective(id, r.view(), gr.view());
                    let after = problem.objective(id, next.view(), g_next.view());
                    let next_rep = problem.check(id, next.view(), g_next.view());
                    // A passing code is only replaced by another passing one.
                    if after <= before && (next_rep.passed || !rep.passed) {
                        r = next;
                        gr = g_next;
                        rep = next_rep;
                        self.r.column_mut(j).assign(&r.mapv(to_t::<T>));
                        self.gr.column_mut(j).assign(&gr.mapv(to_t::<T>));
                        self.cols[j].objective = self.objective_of(problem, j, id);
                        self.cols[j].rejections = 0;
                    }
                }
            }
            if rep.passed || force_finish {
                keep[j] = false;
                let corr = &problem.b.column(id) - &gr;
                let margin =
                    margin_from_corr(corr.view(), r.view(), problem.gram.diag(), problem.lambda);
                done.push((
                    id,
                    InferOutcome {
                        code: SparseCode::from_dense(r),
                        report: rep,
                        iterations: self.cols[j].iterations,
                        precision,
                        converged: rep.passed,
                        margin,
                    },
                ));
            }
        }
        if !done.is_empty() {
            self.retain(&keep);
        }
        done
    }

    /// Remove stalled columns, returning them with their current codes.
    fn take_stalled(&mut self) -> Vec<(Column, Array1<f64>)> {
        if !self.cols.iter().any(|c| c.stalled) {
            return Vec::new();
        }
        let keep: Vec<bool> = self.cols.iter().map(|c| !c.stalled).collect();
        let mut out = Vec::new();
        for (j, col) in self.cols.iter().enumerate() {
            if col.stalled {
                out.push((
                    Column {
                        id: col.id,
                        eta: col.eta,
                        objective: col.objective,
                        iterations: col.iterations,
                        rejections: 0,
                        stalled: false,
                    },
                    self.column_f64(j),
                ));
            }
        }
        self.retain(&keep);
        out
    }
}

/// Exact codes for every row of `images`. `warm`, if given, holds starting
/// codes as columns (`n × T`); otherwise inference starts from zero.
///
/// Each image's result depends only on that image, the dictionary and the
/// options. Images that fail to converge within `max_iters` are returned with
/// `converged == false` and their final residuals.
pub fn infer_batch(
    images: ArrayView2<f64>,
    dict: &Dictionary,
    opts: &InferenceOptions,
    warm: Option<ArrayView2<f64>>,
) -> Result<Vec<InferOutcome>, SparseCodingError> {
    let (t, m) = images.dim();
    let n = dict.size();
    if m != dict.dim() {
        return Err(SparseCodingError::Shape(format!(
            "images have {m} pixels, dictionary expects {}",
            dict.dim()
        )));
    }
    if let Some(w) = &warm {
        if w.dim() != (n, t) {
            return Err(SparseCodingError::Shape(format!(
                "warm start {:?}, expected {:?}",
                w.dim(),
                (n, t)
            )));
        }
    }
    let d = dict.atoms();
    let problem = Problem {
        gram: dict.gram(),
        b: d.t().dot(&images.t()),
        half_x_sq: images.rows().into_iter().map(|x| 0.5 * x.dot(&x)).collect(),
        lambda: dict.lambda(),
    };

    let mut single = Pool::<f32>::new(&problem, n);
    let mut double = Pool::<f64>::new(&problem, n);
    let entries: Vec<(Column, Array1<f64>)> = (0..t)
        .map(|id| {
            let start = warm
                .as_ref()
                .map(|w| w.column(id).to_owned())
                .unwrap_or_else(|| Array1::zeros(n));
            (
                Column {
                    id,
                    eta: opts.eta,
                    objective: 0.0,
                    iterations: 0,
                    rejections: 0,
                    stalled: false,
                },
                start,
            )
        })
        .collect();
    match opts.start_precision {
        Precision::Single => single.push_all(&problem, entries),
        Precision::Double => double.push_all(&problem, entries),
    }

    let mut results: Vec<Option<InferOutcome>> = vec![None; t];
    let check_every = opts.check_every.max(1);
    let mut iteration = 0usize;
    loop {
        let finish = iteration >= opts.max_iters;
        if iteration.is_multiple_of(check_every) || finish {
            for (id, out) in single.check(&problem, opts.polish, finish, Precision::Single) {
                results[id] = Some(out);
            }
            for (id, out) in double.check(&problem, opts.polish, finish, Precision::Double) {
                results[id] = Some(out);
            }
            debug!(
                "inference iteration {iteration}: {} single, {} double remaining",
                single.len(),
                double.len()
            );
        }
        if single.len() + double.len() == 0 || finish {
            break;
        }
        single.step(&problem, true);
        double.step(&problem, false);
        iteration += 1;
        if iteration.is_multiple_of(MIGRATE_EVERY) {
            let stalled = single.take_stalled();
            double.push_all(&problem, stalled);
        }
    }
    Ok(results
        .into_iter()
        .map(|o| o.expect("every image finishes"))
        .collect())
}

/// Exact code for a single image, starting from zero with default options.
pub fn infer_exact(
    x: ArrayView1<f64>,
    dict: &Dictionary,
    max_iters: usize,
) -> Result<SparseCode, SparseCodingError> {
    let opts = InferenceOptions {
        max_iters,
        ..InferenceOptions::default()
    };
    let images = x.insert_axis(Axis(0));
    let out = infer_batch(images, dict, &opts, None)?.remove(0);
    if out.converged {
        Ok(out.code)
    } else {
        Err(SparseCodingError::NotConverged {
            iterations: out.iterations,
            inactive_excess: out.report.inactive_excess,
            active_residual: out.report.active_residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn orthonormal_dict(lambda: f64) -> Dictionary {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        Dictionary::new(array![[c, -c, 0.0], [c, c, 0.0], [0.0, 0.0, 1.0]], lambda).unwrap()
    }

    #[test]
    fn large_lambda_gives_zero_code() {
        let dict = orthonormal_dict(5.0);
        let code = infer_exact(array![1.0, 2.0, -1.0].view(), &dict, 1000).unwrap();
        assert_eq!(code.k(), 0);
    }

    #[test]
    fn orthonormal_dictionary_is_shrinkage_of_correlations() {
        let dict = orthonormal_dict(0.3);
        let x = array![1.0, 0.2, -0.9];
        let code = infer_exact(x.view(), &dict, 100_000).unwrap();
        let corr = dict.atoms().t().dot(&x);
        for i in 0..3 {
            assert!((code.coeffs()[i] - shrink(corr[i], 0.3)).abs() < 1e-10);
        }
    }

    #[test]
    fn single_active_filter_scalar_case() {
        let dict = orthonormal_dict(0.3);
        let x = array![0.9, 0.1, 0.4];
        let r = active_solution(x.view(), &dict, &[0], &[1.0]).unwrap();
        assert!((r[0] - (dict.atom(0).dot(&x) - 0.3)).abs() < 1e-14);
    }

    #[test]
    fn overlapping_pair_matches_hand_solve() {
        // d1 = e1, d2 = (.6, .8): Gram [[1, .6], [.6, 1]], det .64.
        // x = (2, 1), λ = .1, s = (+, +): D+ᵀx − λs = (1.9, 1.9)
        // r = G⁻¹(1.9, 1.9) = 1.9 / 1.6 · (1, 1) = (1.1875, 1.1875)
        let dict = Dictionary::new(array![[1.0, 0.6], [0.0, 0.8]], 0.1).unwrap();
        let r = active_solution(array![2.0, 1.0].view(), &dict, &[0, 1], &[1.0, 1.0]).unwrap();
        assert!((r[0] - 1.1875).abs() < 1e-14 && (r[1] - 1.1875).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_support_is_an_error() {
        let dict = Dictionary::new(array![[1.0, 1.0], [0.0, 0.0]], 0.1).unwrap();
        assert!(matches!(
            active_solution(array![1.0, 0.0].view(), &dict, &[0, 1], &[1.0, 1.0]),
            Err(SparseCodingError::RankDeficient(_))
        ));
    }

    #[test]
    fn check_detects_inactive_violation() {
        let dict = orthonormal_dict(0.3);
        // correlation with d3 is λ + .01 while r = 0
        let x = array![0.0, 0.0, 0.31];
        let rep = check_fixed_point(x.view(), &SparseCode::zeros(3), &dict).unwrap();
        assert!(!rep.passed);
        assert!((rep.inactive_excess - 0.01).abs() < 1e-12);
        let good = SparseCode::from_dense(array![0.0, 0.0, 0.01]);
        assert!(check_fixed_point(x.view(), &good, &dict).unwrap().passed);
    }

    #[test]
    fn constructed_code_passes_check() {
        let dict = Dictionary::new(array![[1.0, 0.6], [0.0, 0.8]], 0.1).unwrap();
        let x = array![2.0, 1.0];
        let r = active_solution(x.view(), &dict, &[0, 1], &[1.0, 1.0]).unwrap();
        let code = SparseCode::from_dense(r);
        let rep = check_fixed_point(x.view(), &code, &dict).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn uniqueness_values() {
        assert_eq!(
            uniqueness_check(&Dictionary::new(Array2::eye(4), 0.1).unwrap()),
            0.0
        );
        let dup = Dictionary::new(array![[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]], 0.1).unwrap();
        assert_eq!(uniqueness_check(&dup), 1.0);
        let anti = Dictionary::new(array![[1.0, -1.0], [0.0, 0.0]], 0.1).unwrap();
        assert_eq!(uniqueness_check(&anti), 1.0);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let dict =
            Dictionary::from_unnormalized(array![[1.0, 0.9, 0.1], [0.2, 0.5, 1.0]], 0.01).unwrap();
        let opts = InferenceOptions {
            max_iters: 2,
            check_every: 1000,
            polish: false,
            ..InferenceOptions::default()
        };
        let out = infer_batch(array![[1.0, -2.0]].view(), &dict, &opts, None).unwrap();
        assert!(!out[0].converged);
        assert!(matches!(
            infer_exact(array![1.0, -2.0].view(), &dict, 0),
            Err(SparseCodingError::NotConverged { .. })
        ));
    }
}

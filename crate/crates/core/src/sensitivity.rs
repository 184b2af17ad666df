//! Locally linear analysis of a representation around an input image.
//!
//! On a fixed active set the exact sparse code is the affine map
//! `r_+ = (D_+ᵀD_+)⁻¹(D_+ᵀx − λ s_+)`, so its Jacobian is the pseudo-inverse of
//! the active dictionary. With `D_+ = U Σ Vᵀ` the Jacobian is `V Σ⁻¹ Uᵀ`: an
//! image perturbation along the image-space singular vector `u_i` is amplified
//! by the gain `1/σ_i`, and perturbations orthogonal to the span of `D_+` are
//! ignored.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ImageSet;
use crate::linalg::{thin_svd, LinalgError, ThinSvd, MAX_GRAM_CONDITION};
use crate::perturbations::{
    distortion_direction_resampled, noise_direction, swap_direction, ElasticParams,
    PerturbationDirection, PerturbationError, PerturbationKind,
};
use crate::rng::{derive_seed, standard_normal, stream_rng, streams};
use crate::sparse_coding::{Dictionary, SparseCode};

/// Number of uniform bins in reported histograms.
pub const HISTOGRAM_BINS: usize = 100;
/// Retries for a distortion that leaves the image unchanged.
const DISTORTION_TRIES: usize = 8;

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("active dictionary is rank deficient: {0}")]
    RankDeficient(LinalgError),
    #[error("direction has zero norm")]
    ZeroDirection,
    #[error("overlap must lie in [0, 1), got {0}")]
    BadOverlap(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
    #[error("jacobian provider failed on image {index}: {message}")]
    Provider { index: usize, message: String },
}

impl From<LinalgError> for SensitivityError {
    fn from(e: LinalgError) -> Self {
        SensitivityError::RankDeficient(e)
    }
}

/// `J_+ = (D_+ᵀD_+)⁻¹D_+ᵀ`, one row per active unit. Inactive units have
/// zero rows and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveJacobian {
    matrix: Array2<f64>,
    active: Vec<usize>,
    non_generic: bool,
}

impl ActiveJacobian {
    /// `k × m`.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Whether the input sits at a shrinkage kink, where the map has no Jacobian.
    pub fn non_generic(&self) -> bool {
        self.non_generic
    }

    pub fn flag_non_generic(mut self, flag: bool) -> Self {
        self.non_generic = flag;
        self
    }

    /// The full `n × m` Jacobian, zero on inactive rows.
    pub fn dense(&self, n: usize) -> Array2<f64> {
        let mut out = Array2::zeros((n, self.matrix.ncols()));
        for (row, &i) in self.active.iter().enumerate() {
            out.row_mut(i).assign(&self.matrix.row(row));
        }
        out
    }
}

/// Pseudo-inverse of `D_+` through its SVD. Fails when the Gram condition
/// number `(σ_max/σ_min)²` exceeds [`MAX_GRAM_CONDITION`].
pub fn active_jacobian(
    dict: &Dictionary,
    code: &SparseCode,
) -> Result<ActiveJacobian, SensitivityError> {
    let m = dict.dim();
    if code.coeffs().len() != dict.size() {
        return Err(SensitivityError::Shape(format!(
            "code has {} entries, dictionary {}",
            code.coeffs().len(),
            dict.size()
        )));
    }
    let active = code.active().to_vec();
    if active.is_empty() {
        return Ok(ActiveJacobian {
            matrix: Array2::zeros((0, m)),
            active,
            non_generic: false,
        });
    }
    let svd = thin_svd(dict.active(&active).view())?;
    check_rank(&svd, active.len())?;
    let scaled = &svd.v / &svd.sigma.view().insert_axis(Axis(0));
    Ok(ActiveJacobian {
        matrix: scaled.dot(&svd.u.t()),
        active,
        non_generic: false,
    })
}

fn check_rank(svd: &ThinSvd, k: usize) -> Result<(), LinalgError> {
    if svd.sigma.len() < k {
        return Err(LinalgError::Singular {
            condition: f64::INFINITY,
        });
    }
    let hi = svd.sigma[0];
    let lo = svd.sigma[k - 1];
    let condition = (hi / lo).powi(2);
    if !condition.is_finite() || condition > MAX_GRAM_CONDITION {
        return Err(LinalgError::Singular { condition });
    }
    Ok(())
}

/// `‖J Δx‖ / ‖Δx‖`.
pub fn directional_derivative(
    jacobian: ArrayView2<f64>,
    dx: ArrayView1<f64>,
) -> Result<f64, SensitivityError> {
    if jacobian.ncols() != dx.len() {
        return Err(SensitivityError::Shape(format!(
            "jacobian {:?}, direction {}",
            jacobian.dim(),
            dx.len()
        )));
    }
    let norm = dx.dot(&dx).sqrt();
    if norm == 0.0 {
        return Err(SensitivityError::ZeroDirection);
    }
    let dr = jacobian.dot(&dx);
    Ok(dr.dot(&dr).sqrt() / norm)
}

/// Gain `1/√(1 − c)` along the difference of two active filters with overlap `c`.
pub fn pair_gain(c: f64) -> Result<f64, SensitivityError> {
    if !(0.0..1.0).contains(&c) {
        return Err(SensitivityError::BadOverlap(c));
    }
    Ok(1.0 / (1.0 - c).sqrt())
}

/// SVD of the `m × k` active dictionary, `D_+ = U Σ Vᵀ`.
#[derive(Debug, Clone)]
pub struct GainSpectrum {
    /// Nonzero singular values, descending.
    pub sigma: Array1<f64>,
    /// `m × rank`: image-space singular vectors, as columns.
    pub u: Array2<f64>,
    /// `k × rank`: representation-space singular vectors, as columns.
    pub v: Array2<f64>,
}

impl GainSpectrum {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `1/σ_i`, ascending.
    pub fn gains(&self) -> Array1<f64> {
        self.sigma.mapv(f64::recip)
    }

    /// Largest over smallest nonzero gain.
    pub fn gain_range(&self) -> f64 {
        self.sigma[0] / self.sigma[self.rank() - 1]
    }

    pub fn image_dim(&self) -> usize {
        self.u.nrows()
    }
}

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-12;

pub fn svd_gain_spectrum(d_plus: ArrayView2<f64>) -> Result<GainSpectrum, SensitivityError> {
    if d_plus.ncols() == 0 {
        return Err(SensitivityError::Empty("active dictionary has no columns"));
    }
    let svd = thin_svd(d_plus)?;
    let cutoff = svd.sigma[0] * RANK_TOLERANCE;
    let rank = svd.sigma.iter().take_while(|&&s| s > cutoff).count();
    if rank == 0 {
        return Err(SensitivityError::RankDeficient(LinalgError::Singular {
            condition: f64::INFINITY,
        }));
    }
    Ok(GainSpectrum {
        sigma: svd.sigma.slice(ndarray::s![..rank]).to_owned(),
        u: svd.u.slice(ndarray::s![.., ..rank]).to_owned(),
        v: svd.v.slice(ndarray::s![.., ..rank]).to_owned(),
    })
}

/// The unit coefficient vector `v*` minimizing `‖D_+ v‖`, the minimum `σ*`,
/// and the image-space direction `u*`.
#[derive(Debug, Clone)]
pub struct Cancellation {
    pub sigma: f64,
    pub v: Array1<f64>,
    pub u: Array1<f64>,
}

pub fn max_cancellation(d_plus: ArrayView2<f64>) -> Result<Cancellation, SensitivityError> {
    let (m, k) = d_plus.dim();
    if k == 0 {
        return Err(SensitivityError::Empty("active dictionary has no columns"));
    }
    if k > m {
        // More filters than pixels: an exact cancellation exists.
        let svd = thin_svd(d_plus.t())?;
        let v = null_vector(&svd, k);
        return Ok(Cancellation {
            sigma: 0.0,
            u: svd.v.column(m - 1).to_owned(),
            v,
        });
    }
    let svd = thin_svd(d_plus)?;
    let sigma = svd.sigma[k - 1];
    Ok(Cancellation {
        sigma,
        v: svd.v.column(k - 1).to_owned(),
        u: svd.u.column(k - 1).to_owned(),
    })
}

// A unit vector orthogonal to the row space described by `svd` (of `D_+ᵀ`).
fn null_vector(svd: &ThinSvd, k: usize) -> Array1<f64> {
    let basis = &svd.u;
    for e in 0..k {
        let mut v = Array1::zeros(k);
        v[e] = 1.0;
        let proj = basis.dot(&basis.t().dot(&v));
        let rest = &v - &proj;
        let norm = rest.dot(&rest).sqrt();
        if norm > 1e-6 {
            return rest / norm;
        }
    }
    unreachable!("a k > m matrix has a nontrivial null space")
}

/// Squared overlaps of a unit direction with the image-space singular vectors.
/// Power outside their span belongs to the zero-gain complement.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    /// `(u_i·Δx)²` for `i < rank`.
    pub within: Array1<f64>,
    /// Total power orthogonal to the span of `D_+`.
    pub complement: f64,
    /// Image dimension `m`.
    pub dim: usize,
}

impl PowerSpectrum {
    /// Length-`m` spectrum. The complement has no preferred basis, so its
    /// power is spread evenly over the remaining `m − rank` entries.
    pub fn to_dense(&self) -> Array1<f64> {
        let k = self.within.len();
        let mut out = Array1::zeros(self.dim);
        out.slice_mut(ndarray::s![..k]).assign(&self.within);
        if self.dim > k {
            out.slice_mut(ndarray::s![k..])
                .fill(self.complement / (self.dim - k) as f64);
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.within.sum() + self.complement
    }
}

pub fn power_spectrum(
    dx: ArrayView1<f64>,
    spectrum: &GainSpectrum,
) -> Result<PowerSpectrum, SensitivityError> {
    if dx.len() != spectrum.image_dim() {
        return Err(SensitivityError::Shape(format!(
            "direction {}, spectrum {}",
            dx.len(),
            spectrum.image_dim()
        )));
    }
    let norm = dx.dot(&dx).sqrt();
    if norm == 0.0 {
        return Err(SensitivityError::ZeroDirection);
    }
    let unit = &dx / norm;
    let within = spectrum.u.t().dot(&unit).mapv(|c| c * c);
    let complement = (1.0 - within.sum()).max(0.0);
    Ok(PowerSpectrum {
        within,
        complement,
        dim: spectrum.image_dim(),
    })
}

/// `sqrt(mean_s (u_i·Δx_s/‖Δx_s‖)²)` per index, length `m`.
pub fn amplitude_spectrum(
    directions: &[Array1<f64>],
    spectrum: &GainSpectrum,
) -> Result<Array1<f64>, SensitivityError> {
    if directions.is_empty() {
        return Err(SensitivityError::Empty("no directions"));
    }
    let mut acc = Array1::zeros(spectrum.image_dim());
    for dx in directions {
        acc += &power_spectrum(dx.view(), spectrum)?.to_dense();
    }
    Ok((acc / directions.len() as f64).mapv(f64::sqrt))
}

/// Extremes of `‖D r‖ / ‖r‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipRange {
    pub min: f64,
    pub max: f64,
}

impl RipRange {
    pub fn ratio(&self) -> f64 {
        self.max / self.min
    }

    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: 0.0,
        }
    }

    fn include(&mut self, value: f64) {
        self.min = self.min.min(value);
        self.max = self.max.max(value);
    }
}

/// Norm ratios over `trials` random supports of `support_size` filters with
/// standard normal coefficients.
pub fn rip_range(
    dict: &Dictionary,
    support_size: usize,
    trials: usize,
    seed: u64,
) -> Result<RipRange, SensitivityError> {
    let n = dict.size();
    if support_size == 0 || support_size > n {
        return Err(SensitivityError::Shape(format!(
            "support of {support_size} out of {n} filters"
        )));
    }
    if trials == 0 {
        return Err(SensitivityError::Empty("no trials"));
    }
    let mut rng = stream_rng(seed, streams::SAMPLING);
    let mut range = RipRange::empty();
    for _ in 0..trials {
        let support = sample(&mut rng, n, support_size).into_vec();
        let coeffs = Array1::from_shape_simple_fn(support_size, || standard_normal(&mut rng));
        let image = dict.active(&support).dot(&coeffs);
        range.include(image.dot(&image).sqrt() / coeffs.dot(&coeffs).sqrt());
    }
    Ok(range)
}

/// Exact extremes of `‖D_+ r‖ / ‖r‖` for one active set: the extreme
/// singular values of `D_+`.
pub fn active_set_range(dict: &Dictionary, active: &[usize]) -> Result<RipRange, SensitivityError> {
    let spectrum = svd_gain_spectrum(dict.active(active).view())?;
    if spectrum.rank() < active.len() {
        return Ok(RipRange {
            min: 0.0,
            max: spectrum.sigma[0],
        });
    }
    Ok(RipRange {
        min: spectrum.sigma[spectrum.rank() - 1],
        max: spectrum.sigma[0],
    })
}

/// `Σ v / Σ |v|`; zero for the zero vector.
pub fn normalized_mean(v: ArrayView1<f64>) -> f64 {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total == 0.0 {
        0.0
    } else {
        v.sum() / total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPair {
    pub a: usize,
    pub b: usize,
    pub overlap: f64,
    /// Normalized mean of filter `a`, after orienting the pair (see [`filter_pair_stats`]).
    pub filter_mean: f64,
    /// `|normalized mean of d_a − d_b|`.
    pub difference_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    /// Pairs by decreasing overlap.
    pub pairs: Vec<FilterPair>,
}

impl PairReport {
    pub fn filter_average(&self) -> f64 {
        mean(self.pairs.iter().map(|p| p.filter_mean))
    }

    pub fn difference_average(&self) -> f64 {
        mean(self.pairs.iter().map(|p| p.difference_mean))
    }

    /// The `count` most overlapping pairs.
    pub fn top(&self, count: usize) -> PairReport {
        PairReport {
            pairs: self.pairs.iter().take(count).cloned().collect(),
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Pairs among `candidates` whose overlap `d_a·d_b` exceeds `threshold`.
///
/// A sign flip of both filters leaves the pair's overlap and the code's
/// behaviour unchanged, so each pair is oriented so that `d_a + d_b` has a
/// nonnegative sum before the filter mean is taken. The difference mean is
/// reported as an absolute value since the order of `a` and `b` is arbitrary.
pub fn filter_pair_stats(dict: &Dictionary, candidates: &[usize], threshold: f64) -> PairReport {
    let mut pairs = Vec::new();
    for (p, &a) in candidates.iter().enumerate() {
        for &b in &candidates[p + 1..] {
            let da = dict.atom(a);
            let db = dict.atom(b);
            let overlap = da.dot(&db);
            if overlap <= threshold {
                continue;
            }
            let sign = if (&da + &db).sum() < 0.0 { -1.0 } else { 1.0 };
            let oriented = &da * sign;
            pairs.push(FilterPair {
                a,
                b,
                overlap,
                filter_mean: normalized_mean(oriented.view()),
                difference_mean: normalized_mean((&da - &db).view()).abs(),
            });
        }
    }
    pairs.sort_by(|x, y| {
        y.overlap
            .total_cmp(&x.overlap)
            .then((x.a, x.b).cmp(&(y.a, y.b)))
    });
    PairReport { pairs }
}

/// Source of representation Jacobians for images of one set.
pub trait JacobianProvider {
    fn name(&self) -> &str;

    /// Jacobian (`p × m`, any row count) of the representation at image
    /// `index` of the set, or `None` if the image is non-generic.
    fn jacobian(
        &self,
        index: usize,
        x: ArrayView1<f64>,
    ) -> Result<Option<Array2<f64>>, SensitivityError>;
}

/// The pixel representation: `J = I`.
pub struct IdentityJacobian {
    pub dim: usize,
}

impl JacobianProvider for IdentityJacobian {
    fn name(&self) -> &str {
        "pixels"
    }

    fn jacobian(
        &self,
        _index: usize,
        _x: ArrayView1<f64>,
    ) -> Result<Option<Array2<f64>>, SensitivityError> {
        Ok(Some(Array2::eye(self.dim)))
    }
}

/// Sparse-code Jacobians from exact codes computed beforehand.
pub struct SparseJacobian<'a> {
    pub dict: &'a Dictionary,
    /// Exact code and genericity for each image index that may be sampled.
    pub codes: BTreeMap<usize, (SparseCode, bool)>,
}

impl JacobianProvider for SparseJacobian<'_> {
    fn name(&self) -> &str {
        "sparse"
    }

    fn jacobian(
        &self,
        index: usize,
        _x: ArrayView1<f64>,
    ) -> Result<Option<Array2<f64>>, SensitivityError> {
        let (code, generic) = self
            .codes
            .get(&index)
            .ok_or_else(|| SensitivityError::Provider {
                index,
                message: "no exact code".into(),
            })?;
        if !generic {
            return Ok(None);
        }
        Ok(Some(active_jacobian(self.dict, code)?.into_matrix()))
    }
}

/// The image and swap partner for each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDraw {
    pub sample: usize,
    pub image: usize,
    pub partner: usize,
    pub seed: u64,
}

/// Sampled images are distinct while `samples ≤ len`; partners are uniform
/// over the other images.
pub fn sample_draws(len: usize, samples: usize, seed: u64) -> Vec<SampleDraw> {
    assert!(len >= 2, "swaps need at least two images");
    let mut rng = stream_rng(seed, streams::SAMPLING);
    let images: Vec<usize> = if samples <= len {
        sample(&mut rng, len, samples).into_vec()
    } else {
        (0..samples).map(|s| s % len).collect()
    };
    images
        .into_iter()
        .enumerate()
        .map(|(s, image)| {
            let item = derive_seed(seed, s as u64);
            let mut prng = stream_rng(item, streams::SAMPLING);
            let mut partner = sample(&mut prng, len - 1, 1).index(0);
            if partner >= image {
                partner += 1;
            }
            SampleDraw {
                sample: s,
                image,
                partner,
                seed: item,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRecord {
    pub sample: usize,
    pub image: usize,
    pub kind: PerturbationKind,
    pub value: f64,
}

/// Directional derivatives per perturbation kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityHistogram {
    pub representation: String,
    pub requested: usize,
    /// Samples excluded because the image was non-generic.
    pub skipped: usize,
    /// Samples whose perturbation was degenerate for one kind (e.g. a swap
    /// with an identical image).
    pub degenerate: usize,
    pub records: Vec<SensitivityRecord>,
}

impl SensitivityHistogram {
    pub fn values(&self, kind: PerturbationKind) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.value)
            .collect()
    }

    pub fn median(&self, kind: PerturbationKind) -> f64 {
        median(&self.values(kind))
    }

    pub fn mean(&self, kind: PerturbationKind) -> f64 {
        mean(self.values(kind).into_iter())
    }

    /// `(lower edge, upper edge, count)` for [`HISTOGRAM_BINS`] uniform bins
    /// over `[0, max]`, `max` taken over all kinds.
    pub fn bins(&self, kind: PerturbationKind) -> Vec<(f64, f64, usize)> {
        let top = self.records.iter().map(|r| r.value).fold(0.0f64, f64::max);
        let width = if top > 0.0 {
            top / HISTOGRAM_BINS as f64
        } else {
            1.0
        };
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for v in self.values(kind) {
            let bin = ((v / width) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i as f64 * width, (i + 1) as f64 * width, c))
            .collect()
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

/// The perturbation of `kind` for one draw: noise from the draw's seed, the
/// swap toward its partner, or an elastic distortion from its seed.
pub fn draw_direction(
    set: &ImageSet,
    draw: &SampleDraw,
    kind: PerturbationKind,
    elastic: &ElasticParams,
) -> Result<PerturbationDirection, PerturbationError> {
    let x = set.image_f64(draw.image);
    match kind {
        PerturbationKind::Noise => Ok(noise_direction(x.len(), draw.seed)),
        PerturbationKind::Swap => swap_direction(x.view(), set.image_f64(draw.partner).view()),
        PerturbationKind::Distortion => {
            distortion_direction_resampled(x.view(), draw.seed, elastic, DISTORTION_TRIES)
        }
    }
}

/// Directional derivatives of `provider`'s representation for `draws`, one per
/// requested kind.
pub fn sensitivity_histogram(
    provider: &dyn JacobianProvider,
    set: &ImageSet,
    kinds: &[PerturbationKind],
    draws: &[SampleDraw],
    elastic: &ElasticParams,
) -> Result<SensitivityHistogram, SensitivityError> {
    let mut records = Vec::new();
    let mut skipped = 0;
    let mut degenerate = 0;
    for draw in draws {
        let x = set.image_f64(draw.image);
        let Some(jacobian) = provider.jacobian(draw.image, x.view())? else {
            skipped += 1;
            continue;
        };
        for &kind in kinds {
            let direction = match draw_direction(set, draw, kind, elastic) {
                Ok(d) => d,
                Err(PerturbationError::ZeroDirection(_)) => {
                    degenerate += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            records.push(SensitivityRecord {
                sample: draw.sample,
                image: draw.image,
                kind,
                value: directional_derivative(jacobian.view(), direction.delta.view())?,
            });
        }
    }
    Ok(SensitivityHistogram {
        representation: provider.name().to_string(),
        requested: draws.len(),
        skipped,
        degenerate,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pair_dict(c: f64) -> Dictionary {
        let s = (1.0 - c * c).sqrt();
        Dictionary::new(array![[1.0, c], [0.0, s], [0.0, 0.0]], 0.1).unwrap()
    }

    #[test]
    fn orthonormal_jacobian_is_transpose() {
        let dict = Dictionary::new(Array2::eye(3), 0.1).unwrap();
        let code = SparseCode::from_dense(array![0.5, 0.0, -0.2]);
        let j = active_jacobian(&dict, &code).unwrap();
        assert_eq!(j.active(), &[0, 2]);
        let expect = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for (a, b) in j.matrix().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        let dense = j.dense(3);
        assert_eq!(dense.row(1).sum(), 0.0);
    }

    #[test]
    fn empty_active_set_has_zero_derivative() {
        let dict = pair_dict(0.3);
        let j = active_jacobian(&dict, &SparseCode::zeros(2)).unwrap();
        assert_eq!(j.matrix().dim(), (0, 3));
        assert_eq!(
            directional_derivative(j.matrix(), array![1.0, 2.0, 3.0].view()).unwrap(),
            0.0
        );
    }

    #[test]
    fn derivative_rejects_zero_direction() {
        assert!(matches!(
            directional_derivative(Array2::eye(2).view(), array![0.0, 0.0].view()),
            Err(SensitivityError::ZeroDirection)
        ));
    }

    #[test]
    fn pair_gain_values() {
        assert_eq!(pair_gain(0.0).unwrap(), 1.0);
        assert!((pair_gain(0.975).unwrap() - 6.3246).abs() < 5e-5);
        assert!((pair_gain(0.6).unwrap() - 1.5811).abs() < 5e-5);
        assert!(pair_gain(1.0).is_err());
        assert!(pair_gain(-0.1).is_err());
    }

    #[test]
    fn pair_spectrum_closed_form() {
        let c = 0.6;
        let dict = pair_dict(c);
        let spec = svd_gain_spectrum(dict.atoms()).unwrap();
        assert!((spec.sigma[0] - (1.0 + c).sqrt()).abs() < 1e-12);
        assert!((spec.sigma[1] - (1.0 - c).sqrt()).abs() < 1e-12);
        assert!((spec.gains()[1] - pair_gain(c).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cancellation_of_duplicates_is_zero() {
        let d = array![[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]];
        let cancel = max_cancellation(d.view()).unwrap();
        assert!(cancel.sigma.abs() < 1e-12);
        let wide = array![[1.0, 0.0, 0.6], [0.0, 1.0, 0.8]];
        let cancel = max_cancellation(wide.view()).unwrap();
        assert_eq!(cancel.sigma, 0.0);
        assert!(wide.dot(&cancel.v).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn power_of_singular_vector_is_indicator() {
        let dict = pair_dict(0.3);
        let spec = svd_gain_spectrum(dict.atoms()).unwrap();
        let p = power_spectrum(spec.u.column(0), &spec).unwrap();
        assert!((p.within[0] - 1.0).abs() < 1e-12 && p.within[1].abs() < 1e-12);
        assert!(p.complement < 1e-12);
        let p = power_spectrum(array![0.0, 0.0, 2.0].view(), &spec).unwrap();
        assert!((p.complement - 1.0).abs() < 1e-12);
        assert_eq!(p.to_dense().len(), 3);
        assert!((p.to_dense()[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_of_one_direction_is_abs_overlap() {
        let dict = pair_dict(0.3);
        let spec = svd_gain_spectrum(dict.atoms()).unwrap();
        let dx = array![0.3, -0.4, 0.5];
        let amp = amplitude_spectrum(std::slice::from_ref(&dx), &spec).unwrap();
        let unit = &dx / dx.dot(&dx).sqrt();
        for i in 0..2 {
            assert!((amp[i] - spec.u.column(i).dot(&unit).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn rip_cases() {
        let dict = Dictionary::new(Array2::eye(6), 0.1).unwrap();
        let r = rip_range(&dict, 3, 50, 1).unwrap();
        assert!((r.min - 1.0).abs() < 1e-12 && (r.max - 1.0).abs() < 1e-12);
        // r = (1, −1)/√2 on filters of overlap .6
        let dict = pair_dict(0.6);
        let r = array![1.0, -1.0] / 2f64.sqrt();
        let img = dict.atoms().dot(&r);
        assert!((img.dot(&img).sqrt() - 0.4f64.sqrt()).abs() < 1e-12);
        let range = active_set_range(&dict, &[0, 1]).unwrap();
        assert!((range.min - 0.4f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn normalized_mean_cases() {
        assert_eq!(normalized_mean(array![1.0, -1.0, 0.5, -0.5].view()), 0.0);
        assert_eq!(normalized_mean(array![0.2, 0.3].view()), 1.0);
        assert_eq!(normalized_mean(Array1::zeros(3).view()), 0.0);
    }

    #[test]
    fn pairs_are_thresholded_and_sorted() {
        let dict = Dictionary::from_unnormalized(
            array![
                [1.0, 0.9, 0.0, 0.7],
                [0.0, 0.1, 1.0, 0.7],
                [0.1, 0.0, 0.0, 0.1]
            ],
            0.1,
        )
        .unwrap();
        let report = filter_pair_stats(&dict, &[0, 1, 2, 3], 0.5);
        assert!(report
            .pairs
            .windows(2)
            .all(|w| w[0].overlap >= w[1].overlap));
        assert!(report.pairs.iter().all(|p| p.overlap > 0.5));
        assert_eq!((report.pairs[0].a, report.pairs[0].b), (0, 1));
        assert_eq!(report.top(1).pairs.len(), 1);
    }

    #[test]
    fn identity_histogram_is_point_mass_at_one() {
        let set = crate::dataset::synthetic_digits(12, 28, 3);
        let draws = sample_draws(set.len(), 10, 4);
        let hist = sensitivity_histogram(
            &IdentityJacobian { dim: 784 },
            &set,
            &PerturbationKind::ALL,
            &draws,
            &ElasticParams::default(),
        )
        .unwrap();
        assert_eq!(hist.skipped, 0);
        assert!(hist.records.iter().all(|r| r.value == 1.0));
        assert_eq!(hist.values(PerturbationKind::Noise).len(), 10);
        let bins = hist.bins(PerturbationKind::Swap);
        assert_eq!(bins.len(), HISTOGRAM_BINS);
        assert_eq!(
            bins.iter().map(|b| b.2).sum::<usize>(),
            hist.values(PerturbationKind::Swap).len()
        );
    }

    #[test]
    fn draws_are_distinct_and_partners_differ() {
        let draws = sample_draws(50, 40, 8);
        let mut images: Vec<usize> = draws.iter().map(|d| d.image).collect();
        images.sort();
        images.dedup();
        assert_eq!(images.len(), 40);
        assert!(draws.iter().all(|d| d.partner != d.image && d.partner < 50));
        assert_eq!(draws, sample_draws(50, 40, 8));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}

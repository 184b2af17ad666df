//! Perturbation directions in image space: isotropic noise, swaps to another
//! image, and small elastic distortions.
//!
//! An elastic distortion draws a coarse grid of Gaussian control displacements,
//! upsamples it to one displacement per pixel with Catmull-Rom bicubic
//! interpolation, and resamples the image along the displaced coordinates.
//! Only the direction of the resulting image difference is used downstream.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{standard_normal, stream_rng, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Noise,
    Swap,
    Distortion,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 3] = [
        PerturbationKind::Noise,
        PerturbationKind::Swap,
        PerturbationKind::Distortion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Noise => "noise",
            PerturbationKind::Swap => "swap",
            PerturbationKind::Distortion => "distortion",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error("{0} direction is exactly zero")]
    ZeroDirection(PerturbationKind),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("displacement field is not finite")]
    NonFinite,
}

/// A direction `Δx` in image space.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDirection {
    pub delta: Array1<f64>,
    pub kind: PerturbationKind,
    pub seed: u64,
}

impl PerturbationDirection {
    pub fn norm(&self) -> f64 {
        self.delta.dot(&self.delta).sqrt()
    }

    /// `Δx / ‖Δx‖`.
    pub fn unit(&self) -> Array1<f64> {
        &self.delta / self.norm()
    }
}

/// `Δx ~ N(0, I)` of dimension `m`.
pub fn noise_direction(m: usize, seed: u64) -> PerturbationDirection {
    assert!(m >= 1, "noise direction needs m >= 1");
    let mut rng = stream_rng(seed, streams::NOISE);
    PerturbationDirection {
        delta: Array1::from_shape_simple_fn(m, || standard_normal(&mut rng)),
        kind: PerturbationKind::Noise,
        seed,
    }
}

/// `Δx = x_other − x`.
pub fn swap_direction(
    x: ArrayView1<f64>,
    x_other: ArrayView1<f64>,
) -> Result<PerturbationDirection, PerturbationError> {
    if x.len() != x_other.len() {
        return Err(PerturbationError::Shape(format!(
            "{} vs {} pixels",
            x.len(),
            x_other.len()
        )));
    }
    let delta = &x_other - &x;
    if delta.iter().all(|&v| v == 0.0) {
        return Err(PerturbationError::ZeroDirection(PerturbationKind::Swap));
    }
    Ok(PerturbationDirection {
        delta,
        kind: PerturbationKind::Swap,
        seed: 0,
    })
}

/// Control grid size and displacement standard deviation (pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticParams {
    pub grid: usize,
    pub sigma: f64,
}

impl Default for ElasticParams {
    fn default() -> Self {
        Self {
            grid: 5,
            sigma: 0.25,
        }
    }
}

/// Per-pixel displacements in pixel units. `dx` moves along columns, `dy`
/// along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    dx: Array2<f64>,
    dy: Array2<f64>,
}

impl DisplacementField {
    pub fn new(dx: Array2<f64>, dy: Array2<f64>) -> Result<Self, PerturbationError> {
        if dx.dim() != dy.dim() || dx.nrows() != dx.ncols() {
            return Err(PerturbationError::Shape(format!(
                "dx {:?}, dy {:?}",
                dx.dim(),
                dy.dim()
            )));
        }
        if dx.iter().chain(dy.iter()).any(|v| !v.is_finite()) {
            return Err(PerturbationError::NonFinite);
        }
        Ok(Self { dx, dy })
    }

    pub fn zeros(side: usize) -> Self {
        Self {
            dx: Array2::zeros((side, side)),
            dy: Array2::zeros((side, side)),
        }
    }

    pub fn side(&self) -> usize {
        self.dx.nrows()
    }

    pub fn dx(&self) -> ArrayView2<'_, f64> {
        self.dx.view()
    }

    pub fn dy(&self) -> ArrayView2<'_, f64> {
        self.dy.view()
    }

    /// Upsample `g × g` control displacements to `side × side` pixels.
    pub fn from_control(
        cx: ArrayView2<f64>,
        cy: ArrayView2<f64>,
        side: usize,
    ) -> Result<Self, PerturbationError> {
        if cx.dim() != cy.dim() || cx.nrows() != cx.ncols() || cx.nrows() < 2 || side < 2 {
            return Err(PerturbationError::Shape(format!(
                "control {:?}/{:?} onto {side} pixels",
                cx.dim(),
                cy.dim()
            )));
        }
        Self::new(upsample_bicubic(cx, side), upsample_bicubic(cy, side))
    }
}

/// Catmull-Rom cubic through `p1` (t = 0) and `p2` (t = 1).
pub fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * (2.0 * p1
        + (p2 - p0) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
        + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3)
}

// Knots beyond the grid are extrapolated linearly, so linear fields are
// reproduced exactly up to the boundary.
fn knot(row: &[f64], i: isize) -> f64 {
    let g = row.len() as isize;
    if i < 0 {
        2.0 * row[0] - row[1]
    } else if i >= g {
        2.0 * row[(g - 1) as usize] - row[(g - 2) as usize]
    } else {
        row[i as usize]
    }
}

fn interpolate_1d(row: &[f64], u: f64) -> f64 {
    let g = row.len();
    let base = (u.floor() as isize).clamp(0, g as isize - 2);
    let t = u - base as f64;
    catmull_rom(
        knot(row, base - 1),
        knot(row, base),
        knot(row, base + 1),
        knot(row, base + 2),
        t,
    )
}

/// Bicubic value of a `g × g` control grid at control coordinates
/// `(u, v) ∈ [0, g−1]²` (`u` along rows, `v` along columns).
pub fn bicubic_at(control: ArrayView2<f64>, u: f64, v: f64) -> f64 {
    let rows: Vec<f64> = control
        .rows()
        .into_iter()
        .map(|row| interpolate_1d(&row.to_vec(), v))
        .collect();
    interpolate_1d(&rows, u)
}

/// Upsample a control grid to `side × side` with corner alignment: control
/// point `p` sits at pixel `p (side − 1) / (g − 1)`.
pub fn upsample_bicubic(control: ArrayView2<f64>, side: usize) -> Array2<f64> {
    let scale = (control.nrows() - 1) as f64 / (side - 1) as f64;
    let by_column: Vec<Vec<f64>> = control
        .rows()
        .into_iter()
        .map(|row| {
            let row = row.to_vec();
            (0..side)
                .map(|j| interpolate_1d(&row, j as f64 * scale))
                .collect()
        })
        .collect();
    Array2::from_shape_fn((side, side), |(i, j)| {
        let column: Vec<f64> = by_column.iter().map(|r| r[j]).collect();
        interpolate_1d(&column, i as f64 * scale)
    })
}

/// Control displacements `(cx, cy)`, each `g × g` with entries `N(0, σ²)`.
pub fn control_grid(seed: u64, params: &ElasticParams) -> (Array2<f64>, Array2<f64>) {
    let mut rng = stream_rng(seed, streams::ELASTIC);
    let g = params.grid;
    let cx = Array2::from_shape_simple_fn((g, g), || params.sigma * standard_normal(&mut rng));
    let cy = Array2::from_shape_simple_fn((g, g), || params.sigma * standard_normal(&mut rng));
    (cx, cy)
}

/// Random smooth displacement field over a `side × side` image.
pub fn elastic_field(
    seed: u64,
    params: &ElasticParams,
    side: usize,
) -> Result<DisplacementField, PerturbationError> {
    let (cx, cy) = control_grid(seed, params);
    DisplacementField::from_control(cx.view(), cy.view(), side)
}

fn pixel(image: ArrayView2<f64>, i: isize, j: isize) -> f64 {
    let (h, w) = image.dim();
    if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
        0.0
    } else {
        image[[i as usize, j as usize]]
    }
}

/// Output pixel `(i, j)` is the source sampled bilinearly at
/// `(i + dy, j + dx)`; samples outside the image read as zero.
pub fn warp_image(
    image: ArrayView2<f64>,
    field: &DisplacementField,
) -> Result<Array2<f64>, PerturbationError> {
    if image.dim() != field.dx.dim() {
        return Err(PerturbationError::Shape(format!(
            "image {:?}, field {:?}",
            image.dim(),
            field.dx.dim()
        )));
    }
    Ok(Array2::from_shape_fn(image.dim(), |(i, j)| {
        let y = i as f64 + field.dy[[i, j]];
        let x = j as f64 + field.dx[[i, j]];
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (y0, x0) = (y0 as isize, x0 as isize);
        (1.0 - fy) * ((1.0 - fx) * pixel(image, y0, x0) + fx * pixel(image, y0, x0 + 1))
            + fy * ((1.0 - fx) * pixel(image, y0 + 1, x0) + fx * pixel(image, y0 + 1, x0 + 1))
    }))
}

fn as_square<'a>(x: ArrayView1<'a, f64>) -> Result<ArrayView2<'a, f64>, PerturbationError> {
    let side = (x.len() as f64).sqrt().round() as usize;
    x.into_shape_with_order((side, side))
        .map_err(|_| PerturbationError::Shape(format!("{} pixels is not a square image", x.len())))
}

/// `Δx = warp(x, field) − x`, flattened.
pub fn distortion_direction_with_field(
    x: ArrayView1<f64>,
    field: &DisplacementField,
    seed: u64,
) -> Result<PerturbationDirection, PerturbationError> {
    let image = as_square(x)?;
    let warped = warp_image(image, field)?;
    let delta = Array1::from_iter(warped.iter().zip(image.iter()).map(|(w, v)| w - v));
    if delta.iter().all(|&v| v == 0.0) {
        return Err(PerturbationError::ZeroDirection(
            PerturbationKind::Distortion,
        ));
    }
    Ok(PerturbationDirection {
        delta,
        kind: PerturbationKind::Distortion,
        seed,
    })
}

/// Distortion direction for an elastic field drawn from `seed`.
pub fn distortion_direction(
    x: ArrayView1<f64>,
    seed: u64,
    params: &ElasticParams,
) -> Result<PerturbationDirection, PerturbationError> {
    let side = as_square(x)?.nrows();
    let field = elastic_field(seed, params, side)?;
    distortion_direction_with_field(x, &field, seed)
}

/// Like [`distortion_direction`], retrying with `seed + 1, seed + 2, …` while
/// the warp leaves the image unchanged.
pub fn distortion_direction_resampled(
    x: ArrayView1<f64>,
    seed: u64,
    params: &ElasticParams,
    max_tries: usize,
) -> Result<PerturbationDirection, PerturbationError> {
    let mut last = PerturbationError::ZeroDirection(PerturbationKind::Distortion);
    for attempt in 0..max_tries.max(1) as u64 {
        match distortion_direction(x, seed.wrapping_add(attempt), params) {
            Err(e @ PerturbationError::ZeroDirection(_)) => last = e,
            other => return other,
        }
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn noise_norm_matches_dimension_on_average() {
        let m = 784;
        let draws = 1000;
        let mut total_sq = 0.0;
        let mut total = 0.0;
        for s in 0..draws {
            let d = noise_direction(m, s);
            total_sq += d.delta.dot(&d.delta);
            total += d.delta.sum();
        }
        let mean_sq = total_sq / draws as f64;
        assert!((mean_sq / m as f64 - 1.0).abs() < 0.05, "{mean_sq}");
        let mean = total / (draws as f64 * m as f64);
        assert!(
            mean.abs() < 3.0 / ((draws * m as u64) as f64).sqrt(),
            "{mean}"
        );
        assert_eq!(noise_direction(m, 3), noise_direction(m, 3));
    }

    #[test]
    fn swap_cases() {
        let x = array![0.1, 0.5, 0.0];
        let y = array![0.3, 0.0, 1.0];
        assert_eq!(
            swap_direction(x.view(), x.view()),
            Err(PerturbationError::ZeroDirection(PerturbationKind::Swap))
        );
        let z = Array1::zeros(3);
        assert_eq!(swap_direction(z.view(), y.view()).unwrap().delta, y);
        let a = swap_direction(x.view(), y.view()).unwrap().delta;
        let b = swap_direction(y.view(), x.view()).unwrap().delta;
        assert_eq!(a, -b);
    }

    #[test]
    fn zero_and_constant_control_grids() {
        let zero = Array2::zeros((5, 5));
        let f = DisplacementField::from_control(zero.view(), zero.view(), 28).unwrap();
        assert!(f.dx().iter().chain(f.dy().iter()).all(|&v| v == 0.0));
        let c = Array2::from_elem((5, 5), 0.37);
        let f = DisplacementField::from_control(c.view(), c.view(), 28).unwrap();
        for v in f.dx().iter() {
            assert!((v - 0.37).abs() < 1e-14);
        }
    }

    #[test]
    fn field_passes_through_control_points() {
        let (cx, _) = control_grid(12, &ElasticParams::default());
        // Knots sit at pixels 0, 6.75, 13.5, 20.25, 27: only the corners and
        // the centre land on whole pixels.
        let up = upsample_bicubic(cx.view(), 28);
        assert!((up[[0, 0]] - cx[[0, 0]]).abs() < 1e-14);
        assert!((up[[27, 27]] - cx[[4, 4]]).abs() < 1e-14);
        assert!((up[[0, 27]] - cx[[0, 4]]).abs() < 1e-14);
        for p in 0..5 {
            for q in 0..5 {
                assert!((bicubic_at(cx.view(), p as f64, q as f64) - cx[[p, q]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_control_grid_is_reproduced() {
        let c = Array2::from_shape_fn((5, 5), |(p, q)| 0.2 * p as f64 - 0.1 * q as f64);
        let up = upsample_bicubic(c.view(), 28);
        for ((i, j), v) in up.indexed_iter() {
            let expect = (0.2 * i as f64 - 0.1 * j as f64) * 4.0 / 27.0;
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn warp_identity_constant_and_shift() {
        let img = Array2::from_shape_fn((6, 6), |(i, j)| (i * 6 + j) as f64);
        assert_eq!(
            warp_image(img.view(), &DisplacementField::zeros(6)).unwrap(),
            img
        );

        let flat = Array2::from_elem((6, 6), 0.8);
        let small = DisplacementField::new(
            Array2::from_shape_fn((6, 6), |(i, j)| 0.3 * ((i + j) as f64).sin()),
            Array2::from_shape_fn((6, 6), |(i, j)| 0.2 * ((i * j) as f64).cos()),
        )
        .unwrap();
        let w = warp_image(flat.view(), &small).unwrap();
        for i in 1..5 {
            for j in 1..5 {
                assert!((w[[i, j]] - 0.8).abs() < 1e-14);
            }
        }

        let down = DisplacementField::new(Array2::zeros((6, 6)), Array2::ones((6, 6))).unwrap();
        let w = warp_image(img.view(), &down).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i + 1 < 6 { img[[i + 1, j]] } else { 0.0 };
                assert_eq!(w[[i, j]], expect);
            }
        }
    }

    #[test]
    fn distortion_of_digit_is_nonzero_and_zero_field_is_degenerate() {
        let set = crate::dataset::synthetic_digits(3, 28, 5);
        let x = set.image_f64(1);
        let d = distortion_direction(x.view(), 9, &ElasticParams::default()).unwrap();
        assert!(d.norm() > 0.0);
        assert_eq!(d.delta.len(), 784);
        assert_eq!(
            distortion_direction_with_field(x.view(), &DisplacementField::zeros(28), 0),
            Err(PerturbationError::ZeroDirection(
                PerturbationKind::Distortion
            ))
        );
        // A blank image has no distortion direction under any seed.
        let blank = Array1::zeros(784);
        assert!(
            distortion_direction_resampled(blank.view(), 0, &ElasticParams::default(), 3).is_err()
        );
    }
}

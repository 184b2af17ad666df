mod support;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use sparsecode::classifiers::{knn_classify, Metric};
use sparsecode::dataset::synthetic_digits;
use sparsecode::perturbations::{
    control_grid, distortion_direction, elastic_field, upsample_bicubic, warp_image, ElasticParams,
};
use sparsecode::sensitivity::normalized_mean;
use support::{gaussian, rng};

fn random_image(side: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_simple_fn((side, side), || gaussian(&mut r))
}

/// Largest difference between neighbouring entries along either axis.
fn max_step(a: &Array2<f64>) -> f64 {
    let (h, w) = a.dim();
    let mut m = 0.0f64;
    for i in 0..h {
        for j in 0..w {
            if i + 1 < h {
                m = m.max((a[[i + 1, j]] - a[[i, j]]).abs());
            }
            if j + 1 < w {
                m = m.max((a[[i, j + 1]] - a[[i, j]]).abs());
            }
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn warp_is_linear_in_the_image(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let field = elastic_field(seed, &ElasticParams { grid: 5, sigma: 1.5 }, 28).unwrap();
        let x = random_image(28, seed ^ 1);
        let y = random_image(28, seed ^ 2);
        let combined = warp_image((&x * a + &y * b).view(), &field).unwrap();
        let separate = warp_image(x.view(), &field).unwrap() * a + warp_image(y.view(), &field).unwrap() * b;
        for (p, q) in combined.iter().zip(separate.iter()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    // Catmull-Rom: a segment's slope is at most 2 control steps per knot spacing,
    // and the weights across the other axis have absolute sum at most 5/4.
    #[test]
    fn upsampled_field_is_smooth(seed in any::<u64>(), grid in 3usize..8, sigma in 0.01f64..3.0) {
        let params = ElasticParams { grid, sigma };
        let (cx, cy) = control_grid(seed, &params);
        let side = 28;
        for control in [cx, cy] {
            let bound = 2.5 * max_step(&control) * (grid - 1) as f64 / (side - 1) as f64;
            let dense = upsample_bicubic(control.view(), side);
            prop_assert!(max_step(&dense) <= bound + 1e-12, "{} > {}", max_step(&dense), bound);
        }
    }

    #[test]
    fn nearest_neighbor_ignores_monotone_rescaling(seed in any::<u64>(), c in 0.01f32..100.0) {
        let mut r = rng(seed);
        let train = Array2::from_shape_simple_fn((30, 6), || gaussian(&mut r) as f32);
        let queries = Array2::from_shape_simple_fn((12, 6), || gaussian(&mut r) as f32);
        let labels: Vec<u8> = (0..30).map(|i| (i % 10) as u8).collect();
        for metric in [Metric::Euclidean, Metric::Cosine] {
            let base = knn_classify(train.view(), &labels, queries.view(), metric).unwrap();
            let scaled = knn_classify((&train * c).view(), &labels, (&queries * c).view(), metric).unwrap();
            prop_assert_eq!(&base, &scaled);
        }
        // Cosine distance is blind to per-row positive scales.
        let row_scales = Array1::from_shape_simple_fn(30, || (gaussian(&mut r).abs() + 0.1) as f32);
        let rescaled = &train * &row_scales.insert_axis(ndarray::Axis(1));
        let base = knn_classify(train.view(), &labels, queries.view(), Metric::Cosine).unwrap();
        let moved = knn_classify(rescaled.view(), &labels, queries.view(), Metric::Cosine).unwrap();
        prop_assert_eq!(base, moved);
    }
}

#[test]
fn distortions_move_ink_rather_than_add_it() {
    let set = synthetic_digits(50, 28, 4);
    let mut distortion = 0.0;
    let mut digits = 0.0;
    for i in 0..set.len() {
        let x = set.image_f64(i);
        digits += normalized_mean(x.view());
        let dx = distortion_direction(x.view(), i as u64, &ElasticParams::default()).unwrap();
        distortion += normalized_mean(dx.delta.view()).abs();
    }
    let n = set.len() as f64;
    assert!(digits / n > 0.99);
    assert!(distortion / n < 0.3, "{}", distortion / n);
}

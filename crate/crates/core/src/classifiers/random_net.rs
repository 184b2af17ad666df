use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::rng::{stream_rng, streams};
use rand_distr::{Distribution, StandardNormal};

/// Width of both hidden layers: ten times the pixel count.
pub const RANDOM_WIDTH: usize = 7840;

/// Frozen network `z(x) = f(W₂ f(W₁ x))` with `f` the rectifier and unit
/// normal weights.
pub struct RandomNet {
    /// `width × m`.
    w1: Array2<f32>,
    /// `width × width`.
    w2: Array2<f32>,
    seed: u64,
}

impl RandomNet {
    pub fn new(m: usize, width: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, streams::RANDOM_NET);
        let mut draw = || -> f32 { StandardNormal.sample(&mut rng) };
        let w1 = Array2::from_shape_simple_fn((width, m), &mut draw);
        let w2 = Array2::from_shape_simple_fn((width, width), &mut draw);
        Self { w1, w2, seed }
    }

    pub fn width(&self) -> usize {
        self.w2.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Features of each row of `x`, in chunks of `chunk` rows to bound memory.
    pub fn features(&self, x: ArrayView2<f32>) -> Array2<f32> {
        const CHUNK: usize = 512;
        let mut out = Array2::zeros((x.nrows(), self.width()));
        for (src, mut dst) in x
            .axis_chunks_iter(Axis(0), CHUNK)
            .zip(out.axis_chunks_iter_mut(Axis(0), CHUNK))
        {
            let h = src.dot(&self.w1.t()).mapv_into(relu);
            dst.assign(&h.dot(&self.w2.t()).mapv_into(relu));
        }
        out
    }
}

fn relu(v: f32) -> f32 {
    v.max(0.0)
}

/// Features of a single image.
pub fn random_features(x: ArrayView1<f64>, net: &RandomNet) -> Array1<f64> {
    let row = x.mapv(|v| v as f32).insert_axis(Axis(0));
    net.features(row.view()).row(0).mapv(f64::from)
}

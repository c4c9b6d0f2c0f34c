#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use wtrace::rng::Rng;
use wtrace::{MarginalWeights, Matrix, WeightKind};

pub fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    })
}

/// Positive probability vector with entries spread over two orders of magnitude.
pub fn positive_simplex(len: usize, rng: &mut Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

pub fn random_weights(n: usize, m: usize, rng: &mut Rng) -> MarginalWeights {
    MarginalWeights::new(positive_simplex(n, rng), positive_simplex(m, rng), WeightKind::True, None).unwrap()
}

/// Sum of singular values straight from nalgebra.
pub fn nuclear(a: &Matrix) -> f64 {
    a.clone().svd(false, false).singular_values.sum()
}

/// `||D_r^½ X D_c^½||_tr` computed without the library's weighting helpers.
pub fn weighted_nuclear(x: &Matrix, w: &MarginalWeights) -> f64 {
    let y = Matrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * (w.row()[i] * w.col()[j]).sqrt());
    nuclear(&y)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

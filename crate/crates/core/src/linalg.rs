//! Dense linear-algebra helpers: singular-value shrinkage, trace and spectral
//! norms, and diagonal rescaling.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use crate::rng::{rng_from_seed, Rng};

pub type Matrix = DMatrix<f64>;

/// Largest dimension for which spectral norms are computed from a full SVD.
pub const EXACT_SPECTRAL_MAX_DIM: usize = 128;

/// All singular values of `a`, in no particular order.
pub fn singular_values(a: &Matrix) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(0);
    }
    a.clone().svd(false, false).singular_values
}

/// Sum of singular values.
pub fn trace_norm(a: &Matrix) -> f64 {
    singular_values(a).iter().sum()
}

/// Returns `diag(row) * a * diag(col)`.
pub fn scale_rows_cols(a: &Matrix, row: &[f64], col: &[f64]) -> Matrix {
    debug_assert_eq!(a.nrows(), row.len());
    debug_assert_eq!(a.ncols(), col.len());
    Matrix::from_fn(a.nrows(), a.ncols(), |i, j| row[i] * a[(i, j)] * col[j])
}

/// Result of shrinking the singular values of a matrix.
#[derive(Debug, Clone)]
pub struct Shrunk {
    pub matrix: Matrix,
    /// Trace norm of `matrix` (the sum of the shrunk singular values).
    pub trace_norm: f64,
    pub rank: usize,
}

/// Singular-value soft thresholding: replaces every singular value `σ` of `a`
/// with `max(σ - tau, 0)`.
pub fn soft_threshold(a: Matrix, tau: f64) -> Shrunk {
    let (n, m) = a.shape();
    if n == 0 || m == 0 {
        return Shrunk { matrix: a, trace_norm: 0.0, rank: 0 };
    }
    let svd = a.svd(true, true);
    let shrunk: Vec<f64> = svd.singular_values.iter().map(|s| (s - tau).max(0.0)).collect();
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    rebuild(&u, &shrunk, &v_t, n, m)
}

/// Euclidean projection onto the trace-norm ball `{Z : ||Z||_tr <= radius}`.
///
/// The singular values are projected onto the l1 ball of the given radius;
/// the singular vectors are kept.
pub fn project_trace_ball(a: Matrix, radius: f64) -> Shrunk {
    let (n, m) = a.shape();
    if n == 0 || m == 0 {
        return Shrunk { matrix: a, trace_norm: 0.0, rank: 0 };
    }
    let svd = a.svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let total: f64 = sv.iter().sum();
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    if total <= radius {
        return rebuild(&u, &sv, &v_t, n, m);
    }
    let theta = l1_ball_shift(&sv, radius);
    let shrunk: Vec<f64> = sv.iter().map(|s| (s - theta).max(0.0)).collect();
    rebuild(&u, &shrunk, &v_t, n, m)
}

/// Shift `theta >= 0` such that `sum(max(v - theta, 0)) == radius`, for a
/// nonnegative `v` whose sum exceeds `radius`.
fn l1_ball_shift(v: &[f64], radius: f64) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - radius) / (k as f64 + 1.0);
        if s - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

fn rebuild(u: &Matrix, values: &[f64], v_t: &Matrix, n: usize, m: usize) -> Shrunk {
    let keep: Vec<usize> = (0..values.len()).filter(|&k| values[k] > 0.0).collect();
    let mut matrix = Matrix::zeros(n, m);
    if !keep.is_empty() {
        let left = Matrix::from_fn(n, keep.len(), |i, c| u[(i, keep[c])] * values[keep[c]]);
        let right = Matrix::from_fn(keep.len(), m, |c, j| v_t[(keep[c], j)]);
        left.mul_to(&right, &mut matrix);
    }
    Shrunk { matrix, trace_norm: keep.iter().map(|&k| values[k]).sum(), rank: keep.len() }
}

/// Singular-value soft thresholding for a sequence of slowly changing
/// matrices whose thresholded rank is small.
///
/// Keeps a basis of leading right singular vectors between calls. Each call
/// refines it with one step of block subspace iteration and a Rayleigh-Ritz
/// projection, doubling the block until it holds a Ritz value at or below the
/// threshold. Falls back to a full SVD once the block exceeds a third of the
/// smaller dimension.
#[derive(Debug, Clone)]
pub struct WarmThreshold {
    basis: Matrix,
    rng: Rng,
}

const WARM_MIN_BLOCK: usize = 12;
const WARM_EXTRA: usize = 8;
const WARM_KEEP_EXTRA: usize = 4;

impl WarmThreshold {
    pub fn new(ncols: usize, seed: u64) -> Self {
        Self { basis: Matrix::zeros(ncols, 0), rng: rng_from_seed(seed) }
    }

    pub fn apply(&mut self, z: &Matrix, tau: f64) -> Shrunk {
        let (n, m) = z.shape();
        let full = n.min(m);
        debug_assert_eq!(self.basis.nrows(), m);
        let mut k = (self.basis.ncols() + WARM_EXTRA).max(WARM_MIN_BLOCK);
        loop {
            if 3 * k >= full {
                return self.apply_full(z, tau);
            }
            let rng = &mut self.rng;
            let basis = &self.basis;
            let start = Matrix::from_fn(m, k, |i, c| if c < basis.ncols() { basis[(i, c)] } else { rng.random::<f64>() - 0.5 });
            let q = (z * start).qr().q();
            let v = z.tr_mul(&q).qr().q();
            let q = (z * &v).qr().q();
            let svd = q.tr_mul(z).svd(true, true);
            let values: Vec<f64> = svd.singular_values.iter().copied().collect();
            if values.iter().all(|&s| s > tau) {
                self.basis = v;
                k *= 2;
                continue;
            }
            let u = q * svd.u.expect("left singular vectors requested");
            let v_t = svd.v_t.expect("right singular vectors requested");
            self.keep_basis(&values, &v_t, tau);
            let shrunk: Vec<f64> = values.iter().map(|s| (s - tau).max(0.0)).collect();
            return rebuild(&u, &shrunk, &v_t, n, m);
        }
    }

    fn apply_full(&mut self, z: &Matrix, tau: f64) -> Shrunk {
        let (n, m) = z.shape();
        let svd = z.clone().svd(true, true);
        let values: Vec<f64> = svd.singular_values.iter().copied().collect();
        let u = svd.u.expect("left singular vectors requested");
        let v_t = svd.v_t.expect("right singular vectors requested");
        self.keep_basis(&values, &v_t, tau);
        let shrunk: Vec<f64> = values.iter().map(|s| (s - tau).max(0.0)).collect();
        rebuild(&u, &shrunk, &v_t, n, m)
    }

    fn keep_basis(&mut self, values: &[f64], v_t: &Matrix, tau: f64) {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|a, b| values[*b].total_cmp(&values[*a]));
        let above = values.iter().filter(|&&s| s > tau).count();
        let keep = (above + WARM_KEEP_EXTRA).min(values.len());
        self.basis = Matrix::from_fn(v_t.ncols(), keep, |i, c| v_t[(order[c], i)]);
    }
}

/// Largest singular value. Uses a full SVD when the smaller dimension is at
/// most [`EXACT_SPECTRAL_MAX_DIM`], seeded power iteration on `AᵀA` otherwise.
pub fn spectral_norm(a: &Matrix, seed: u64) -> f64 {
    if a.nrows().min(a.ncols()) <= EXACT_SPECTRAL_MAX_DIM {
        singular_values(a).iter().fold(0.0_f64, |acc, &s| acc.max(s))
    } else {
        power_spectral_norm(a, 1e-8, 10_000, seed)
    }
}

/// Power iteration on `AᵀA` from a random start, stopping once the relative
/// change of the estimate falls below `tol`.
pub fn power_spectral_norm(a: &Matrix, tol: f64, max_iter: usize, seed: u64) -> f64 {
    let m = a.ncols();
    if a.nrows() == 0 || m == 0 {
        return 0.0;
    }
    let mut rng = rng_from_seed(seed);
    let mut v = DVector::from_fn(m, |_, _| rng.random::<f64>() - 0.5);
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v /= norm;
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let av = a * &v;
        let next = av.norm();
        if next == 0.0 {
            return 0.0;
        }
        let mut w = a.tr_mul(&av);
        let wn = w.norm();
        if wn == 0.0 {
            return next;
        }
        w /= wn;
        v = w;
        if (next - estimate).abs() <= tol * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Frobenius inner product.
pub fn frobenius_dot(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

//! Rank-truncated factorization fitted by stochastic gradient passes.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::SolverConfig;
use crate::distributions::SampleSet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::LossSpec;
use crate::model::CompletionModel;
use crate::rng::rng_from_seed;
use crate::weighting::MarginalWeights;

/// Objective growth factor treated as divergence.
const DIVERGENCE_FACTOR: f64 = 10.0;

/// Output of [`fit_factored_sgd`].
#[derive(Debug, Clone)]
pub struct SgdFit {
    pub model: CompletionModel,
    /// Full objective at initialization and after every epoch.
    pub objective_history: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

impl SgdFit {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("history starts with the initial objective")
    }
}

fn check_factors(sample: &SampleSet, w: &MarginalWeights, u: &Matrix, v: &Matrix) -> Result<()> {
    w.check_shape(sample.shape())?;
    let (n, m) = sample.shape();
    if u.nrows() != n || v.nrows() != m || u.ncols() != v.ncols() {
        return Err(Error::ShapeMismatch { expected: (n, m), found: (u.nrows(), v.nrows()) });
    }
    Ok(())
}

/// `L̂_S(U Vᵀ) + (λ/2)(||diag(√r) U||²_F + ||diag(√c) V||²_F)`.
pub fn factored_objective(sample: &SampleSet, w: &MarginalWeights, loss: LossSpec, lambda: f64, u: &Matrix, v: &Matrix) -> Result<f64> {
    check_factors(sample, w, u, v)?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let data: f64 = sample.iter().map(|(i, j, y)| loss.value(u.row(i).dot(&v.row(j)), y)).sum::<f64>() / sample.len() as f64;
    Ok(data + 0.5 * lambda * penalty_sum(w, u, v))
}

/// `||diag(√r) U||²_F + ||diag(√c) V||²_F`.
fn penalty_sum(w: &MarginalWeights, u: &Matrix, v: &Matrix) -> f64 {
    let rows: f64 = (0..u.nrows()).map(|i| w.row()[i] * u.row(i).norm_squared()).sum();
    let cols: f64 = (0..v.nrows()).map(|j| w.col()[j] * v.row(j).norm_squared()).sum();
    rows + cols
}

/// Gradient of [`factored_objective`] in `(U, V)`.
pub fn factored_gradient(
    sample: &SampleSet,
    w: &MarginalWeights,
    loss: LossSpec,
    lambda: f64,
    u: &Matrix,
    v: &Matrix,
) -> Result<(Matrix, Matrix)> {
    check_factors(sample, w, u, v)?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let inv_s = 1.0 / sample.len() as f64;
    let mut gu = Matrix::zeros(u.nrows(), u.ncols());
    let mut gv = Matrix::zeros(v.nrows(), v.ncols());
    for (i, j, y) in sample.iter() {
        let g = inv_s * loss.derivative(u.row(i).dot(&v.row(j)), y);
        for k in 0..u.ncols() {
            gu[(i, k)] += g * v[(j, k)];
            gv[(j, k)] += g * u[(i, k)];
        }
    }
    for i in 0..u.nrows() {
        for k in 0..u.ncols() {
            gu[(i, k)] += lambda * w.row()[i] * u[(i, k)];
        }
    }
    for j in 0..v.nrows() {
        for k in 0..v.ncols() {
            gv[(j, k)] += lambda * w.col()[j] * v[(j, k)];
        }
    }
    Ok((gu, gv))
}

/// Minimizes [`factored_objective`] over `U: n×k`, `V: m×k` with shuffled
/// stochastic passes over `S`.
///
/// The regularizer is split across samples: a draw `(i, j)` carries
/// `(λ s / 2)(r_i ||u_i||² / n_i + c_j ||v_j||² / m_j)`, where `n_i`, `m_j` count
/// the draws in row `i` and column `j`. Rows and columns with no draw are
/// zero at the optimum when `λ > 0` and are set to zero. Factors start i.i.d.
/// normal with standard deviation `1/√k`.
pub fn fit_factored_sgd(sample: &SampleSet, w: &MarginalWeights, loss: LossSpec, cfg: &SolverConfig) -> Result<SgdFit> {
    cfg.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    w.check_shape(sample.shape())?;
    w.require_positive()?;
    let (n, m) = sample.shape();
    let k = cfg.rank_cap.ok_or_else(|| Error::InvalidParameter("factored solver needs a rank cap".into()))?;
    if k == 0 || k > n.min(m) {
        return Err(Error::InvalidParameter(format!("rank cap must be in 1..={}, got {k}", n.min(m))));
    }

    let mut row_counts = vec![0usize; n];
    let mut col_counts = vec![0usize; m];
    for &(i, j) in sample.indexes() {
        row_counts[i] += 1;
        col_counts[j] += 1;
    }

    let mut rng = rng_from_seed(cfg.seed);
    let normal = Normal::new(0.0, 1.0 / (k as f64).sqrt()).expect("positive standard deviation");
    let mut u = Matrix::from_fn(n, k, |_, _| normal.sample(&mut rng));
    let mut v = Matrix::from_fn(m, k, |_, _| normal.sample(&mut rng));
    if cfg.lambda > 0.0 {
        for i in (0..n).filter(|&i| row_counts[i] == 0) {
            u.row_mut(i).fill(0.0);
        }
        for j in (0..m).filter(|&j| col_counts[j] == 0) {
            v.row_mut(j).fill(0.0);
        }
    }

    let s = sample.len() as f64;
    let row_reg: Vec<f64> =
        (0..n).map(|i| if row_counts[i] > 0 { cfg.lambda * s * w.row()[i] / row_counts[i] as f64 } else { 0.0 }).collect();
    let col_reg: Vec<f64> =
        (0..m).map(|j| if col_counts[j] > 0 { cfg.lambda * s * w.col()[j] / col_counts[j] as f64 } else { 0.0 }).collect();

    let initial = factored_objective(sample, w, loss, cfg.lambda, &u, &v)?;
    let mut history = vec![initial];
    let mut order: Vec<usize> = (0..sample.len()).collect();
    let (idx, values) = (sample.indexes(), sample.values());
    let eta = cfg.step_size;
    let mut converged = false;
    let mut epochs = 0;
    let mut ui = vec![0.0; k];

    while epochs < cfg.max_iters {
        epochs += 1;
        order.shuffle(&mut rng);
        for &t in &order {
            let (i, j) = idx[t];
            let g = loss.derivative(u.row(i).dot(&v.row(j)), values[t]);
            for c in 0..k {
                ui[c] = u[(i, c)];
            }
            for c in 0..k {
                u[(i, c)] -= eta * (g * v[(j, c)] + row_reg[i] * ui[c]);
                v[(j, c)] -= eta * (g * ui[c] + col_reg[j] * v[(j, c)]);
            }
        }
        let objective = factored_objective(sample, w, loss, cfg.lambda, &u, &v)?;
        if !objective.is_finite() || objective > DIVERGENCE_FACTOR * initial {
            return Err(Error::Divergence { objective, initial });
        }
        let previous = *history.last().expect("nonempty history");
        history.push(objective);
        if (previous - objective).abs() <= cfg.tol * previous.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    Ok(SgdFit { model: CompletionModel::factored(u, v)?, objective_history: history, epochs, converged })
}

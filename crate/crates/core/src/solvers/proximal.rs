//! Accelerated proximal gradient (impute, then shrink) for
//! `L̂_S(X) + λ ||X||_{tr,w}` with squared loss.

use super::SolverConfig;
use crate::distributions::SampleSet;
use crate::error::{Error, Result};
use crate::linalg::{soft_threshold, spectral_norm, Matrix};
use crate::loss::{LossKind, LossSpec};
use crate::model::CompletionModel;
use crate::weighting::MarginalWeights;

/// Slack allowed on the per-iteration objective decrease.
const MONOTONE_SLACK: f64 = 1e-10;

/// The squared-loss data term in weighted coordinates `X' = D_r^½ X D_c^½`:
/// `f(X') = Σ_cells (h/2)(X'_ij - b_ij)² + constant`, where each distinct
/// observed cell with `c` hits and mean value `ȳ` has `h = 2c / (s r_i c_j)`
/// and `b = ȳ √(r_i c_j)`.
#[derive(Debug, Clone)]
pub(crate) struct WeightedData {
    pub(super) n: usize,
    pub(super) m: usize,
    pub(super) cells: Vec<(usize, usize)>,
    pub(super) h: Vec<f64>,
    pub(super) b: Vec<f64>,
    pub(super) constant: f64,
    /// Largest `h`; the gradient of `f` is `lipschitz`-Lipschitz.
    pub(super) lipschitz: f64,
}

impl WeightedData {
    pub(crate) fn new(sample: &SampleSet, w: &MarginalWeights) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        w.check_shape(sample.shape())?;
        w.require_positive()?;
        let (n, m) = sample.shape();
        let s = sample.len() as f64;
        let mut order: Vec<usize> = (0..sample.len()).collect();
        let idx = sample.indexes();
        order.sort_by_key(|&t| (idx[t].0, idx[t].1));
        let values = sample.values();

        let (row, col) = (w.row(), w.col());
        let mut data = Self { n, m, cells: Vec::new(), h: Vec::new(), b: Vec::new(), constant: 0.0, lipschitz: 0.0 };
        let mut start = 0;
        while start < order.len() {
            let cell = idx[order[start]];
            let mut end = start;
            while end < order.len() && idx[order[end]] == cell {
                end += 1;
            }
            let count = (end - start) as f64;
            let mean = order[start..end].iter().map(|&t| values[t]).sum::<f64>() / count;
            data.constant += order[start..end].iter().map(|&t| (values[t] - mean).powi(2)).sum::<f64>() / s;
            let (ri, cj) = (row[cell.0], col[cell.1]);
            let h = 2.0 * count / (s * ri * cj);
            data.cells.push(cell);
            data.h.push(h);
            data.b.push(mean * (ri * cj).sqrt());
            data.lipschitz = data.lipschitz.max(h);
            start = end;
        }
        Ok(data)
    }

    pub(crate) fn loss(&self, x: &Matrix) -> f64 {
        let mut total = self.constant;
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            let d = x[(i, j)] - self.b[k];
            total += 0.5 * self.h[k] * d * d;
        }
        total
    }

    pub(super) fn loss_at_zero(&self) -> f64 {
        self.constant + self.h.iter().zip(&self.b).map(|(h, b)| 0.5 * h * b * b).sum::<f64>()
    }

    /// `-∇f(0)`, supported on the observed cells.
    pub(super) fn negative_gradient_at_zero(&self) -> Matrix {
        let mut g = Matrix::zeros(self.n, self.m);
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            g[(i, j)] = self.h[k] * self.b[k];
        }
        g
    }

    /// Smallest `λ` for which zero is optimal: `||∇f(0)||_sp`.
    pub(crate) fn lambda_max(&self) -> f64 {
        spectral_norm(&self.negative_gradient_at_zero(), 0)
    }

    pub(super) fn covers_every_cell(&self) -> bool {
        self.cells.len() == self.n * self.m
    }

    /// Observed means in weighted coordinates, zero elsewhere.
    pub(super) fn interpolant(&self) -> Matrix {
        let mut x = Matrix::zeros(self.n, self.m);
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            x[(i, j)] = self.b[k];
        }
        x
    }

    /// One forward-backward step from `y` with step `1/L`.
    fn prox_step(&self, y: &Matrix, lambda: f64) -> (Matrix, f64) {
        let mut z = y.clone();
        let l = self.lipschitz;
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            let v = y[(i, j)];
            z[(i, j)] = v + (self.h[k] / l) * (self.b[k] - v);
        }
        let shrunk = soft_threshold(z, lambda / l);
        (shrunk.matrix, shrunk.trace_norm)
    }
}

/// An iterate in weighted coordinates with its cached objective pieces.
#[derive(Debug, Clone)]
pub(crate) struct Iterate {
    pub(crate) x: Matrix,
    pub(crate) norm: f64,
    pub(crate) loss: f64,
}

impl Iterate {
    fn zero(data: &WeightedData) -> Self {
        Self { x: Matrix::zeros(data.n, data.m), norm: 0.0, loss: data.loss_at_zero() }
    }

    fn objective(&self, lambda: f64) -> f64 {
        self.loss + lambda * self.norm
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solve {
    pub(crate) iterate: Iterate,
    pub(crate) history: Vec<f64>,
    pub(crate) iterations: usize,
    pub(crate) converged: bool,
}

/// FISTA with function-value restart. A momentum step that would raise the
/// objective is replaced by a plain proximal step from the current point, so
/// the accepted objective sequence never increases.
pub(crate) fn solve(data: &WeightedData, lambda: f64, start: Iterate, cfg: &SolverConfig) -> Solve {
    let mut x = start;
    let mut previous = x.x.clone();
    let mut t = 1.0_f64;
    let mut history = vec![x.objective(lambda)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let f_old = x.objective(lambda);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;

        let mut candidate = None;
        if beta > 0.0 {
            let y = &x.x + (&x.x - &previous) * beta;
            let (z, norm) = data.prox_step(&y, lambda);
            let loss = data.loss(&z);
            if loss + lambda * norm <= f_old {
                candidate = Some(Iterate { x: z, norm, loss });
                t = t_next;
            }
        }
        let next = match candidate {
            Some(c) => c,
            None => {
                t = 1.0;
                let (z, norm) = data.prox_step(&x.x, lambda);
                let loss = data.loss(&z);
                Iterate { x: z, norm, loss }
            }
        };

        let f_new = next.objective(lambda);
        if f_new > f_old + MONOTONE_SLACK * f_old.abs().max(1.0) {
            // A plain proximal step cannot increase the objective; the excess
            // is SVD round-off, so the current point is already optimal.
            converged = true;
            break;
        }
        previous = std::mem::replace(&mut x, next).x;
        history.push(f_new);
        if f_old - f_new <= cfg.tol * f_old.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Solve { iterate: x, history, iterations, converged }
}

fn require_squared(loss: LossSpec) -> Result<()> {
    if loss.kind() != LossKind::Squared {
        return Err(Error::UnsupportedLoss);
    }
    Ok(())
}

/// Output of [`fit_proximal`].
#[derive(Debug, Clone)]
pub struct ProximalFit {
    pub model: CompletionModel,
    /// Objective `L̂_S(X) + λ ||X||_{tr,w}` after every accepted iteration,
    /// starting at `X = 0`.
    pub objective_history: Vec<f64>,
    pub training_loss: f64,
    pub weighted_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ProximalFit {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("history starts with the initial objective")
    }
}

/// Minimizes `L̂_S(X) + λ ||X||_{tr,w}` (squared loss) from `X = 0`.
/// Smallest `λ` at which [`fit_proximal`] returns zero.
pub fn lambda_max(sample: &SampleSet, w: &MarginalWeights) -> Result<f64> {
    Ok(WeightedData::new(sample, w)?.lambda_max())
}

pub fn fit_proximal(sample: &SampleSet, w: &MarginalWeights, loss: LossSpec, cfg: &SolverConfig) -> Result<ProximalFit> {
    require_squared(loss)?;
    cfg.validate()?;
    let data = WeightedData::new(sample, w)?;
    let solved = solve(&data, cfg.lambda, Iterate::zero(&data), cfg);
    Ok(ProximalFit {
        model: CompletionModel::Dense(w.from_weighted_coords(&solved.iterate.x)),
        objective_history: solved.history,
        training_loss: solved.iterate.loss,
        weighted_norm: solved.iterate.norm,
        iterations: solved.iterations,
        converged: solved.converged,
    })
}

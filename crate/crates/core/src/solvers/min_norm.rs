//! Smallest weighted trace norm subject to a training-loss ceiling, solved by
//! over-relaxed ADMM in weighted coordinates.
//!
//! With `A = D_r^½ X D_c^½` the problem is `min ||A||_tr` subject to `A ∈ C`,
//! `C = {E : f(E) <= ε}` where `f` is the squared-loss data term. ADMM splits
//! `A = E` and alternates singular-value thresholding of `A` with a projection
//! of `E` onto `C`; unobserved cells are free in `C`.

use serde::Serialize;

use super::proximal::WeightedData;
use super::SolverConfig;
use crate::distributions::SampleSet;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Matrix, WarmThreshold};
use crate::model::CompletionModel;
use crate::weighting::{weighted_trace_norm, MarginalWeights};

/// Relative slack on the training-loss ceiling.
pub const CEILING_SLACK: f64 = 1e-3;
/// With `ε = 0`, a training loss at or below this fraction of `L̂_S(0)` counts
/// as zero.
pub const ZERO_LOSS_FLOOR: f64 = 1e-12;
/// Over-relaxation factor.
const RELAXATION: f64 = 1.6;
/// Iterations between penalty updates.
const BALANCE_INTERVAL: usize = 10;
/// Residual ratio that triggers a penalty update.
const BALANCE_RATIO: f64 = 10.0;
/// Bisection steps for the multiplier of the projection onto `C`.
const PROJECTION_STEPS: usize = 100;

/// Output of [`min_norm_fit`].
#[derive(Debug, Clone, Serialize)]
pub struct MinNormFit {
    #[serde(skip)]
    pub model: CompletionModel,
    pub weighted_norm: f64,
    pub training_loss: f64,
    /// ADMM iterations; 0 for the closed-form cases.
    pub iterations: usize,
    /// Whether both residuals fell below `cfg.tol` within `cfg.max_iters`.
    pub converged: bool,
}

/// Approximately solves `min ||X||_{tr,w}` subject to `L̂_S(X) <= ε` (squared
/// loss).
///
/// `cfg.tol` bounds the relative primal and dual ADMM residuals and
/// `cfg.max_iters` caps the iteration count; [`SolverConfig::min_norm`] gives
/// suitable defaults. The returned matrix is the last thresholded iterate
/// projected onto the constraint set, so its training loss never exceeds `ε`.
/// For `ε = 0` the observed cells are matched exactly (their means, when a
/// cell is observed more than once).
///
/// Errors with [`Error::Infeasible`] when `ε` is below the smallest
/// achievable training loss, the spread of repeated observations around
/// their cell means.
pub fn min_norm_fit(sample: &SampleSet, w: &MarginalWeights, epsilon: f64, cfg: &SolverConfig) -> Result<MinNormFit> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("loss ceiling must be nonnegative, got {epsilon}")));
    }
    cfg.validate()?;
    let data = WeightedData::new(sample, w)?;
    let l0 = data.loss_at_zero();
    let ceiling = if epsilon > 0.0 { epsilon * (1.0 + CEILING_SLACK) } else { ZERO_LOSS_FLOOR * l0 };
    let finish = |xw: Matrix, iterations: usize, converged: bool| -> Result<MinNormFit> {
        let training_loss = data.loss(&xw);
        let x = w.from_weighted_coords(&xw);
        Ok(MinNormFit {
            weighted_norm: weighted_trace_norm(&x, w)?,
            model: CompletionModel::Dense(x),
            training_loss,
            iterations,
            converged,
        })
    };

    if l0 <= ceiling {
        return finish(Matrix::zeros(data.n, data.m), 0, true);
    }
    if data.constant > ceiling {
        return Err(Error::Infeasible { target: ceiling, achieved: data.constant });
    }
    if epsilon == 0.0 && data.covers_every_cell() {
        return finish(data.interpolant(), 0, true);
    }

    // Budget for Σ (h/2)(E - b)² over the observed cells.
    let budget = if epsilon > 0.0 { epsilon - data.constant } else { 0.0 };
    let targets = data.interpolant();
    let scale = targets.norm();
    let mut mu = 1.0 / spectral_norm(&targets, 0);
    let mut e = Matrix::zeros(data.n, data.m);
    let mut dual = Matrix::zeros(data.n, data.m);
    let mut a = e.clone();
    let mut threshold = WarmThreshold::new(data.m, cfg.seed);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        a = threshold.apply(&(&e - &dual / mu), 1.0 / mu).matrix;
        let relaxed = &a * RELAXATION + &e * (1.0 - RELAXATION);
        let e_next = project(&data, &relaxed + &dual / mu, budget);
        dual += (&relaxed - &e_next) * mu;
        let primal = (&a - &e_next).norm() / scale;
        let dual_residual = mu * (&e_next - &e).norm() / scale;
        e = e_next;
        if primal <= cfg.tol && dual_residual <= cfg.tol {
            converged = true;
            break;
        }
        if iterations % BALANCE_INTERVAL == 0 {
            if primal > BALANCE_RATIO * dual_residual {
                mu *= 2.0;
            } else if dual_residual > BALANCE_RATIO * primal {
                mu /= 2.0;
            }
        }
    }
    finish(project(&data, a, budget), iterations, converged)
}

/// Euclidean projection onto `{E : Σ (h/2)(E - b)² <= budget}`; cells outside
/// the sample are unconstrained.
///
/// Observed cells move to `(v + t h b)/(1 + t h)` for the smallest `t >= 0`
/// meeting the budget, found by bisection.
fn project(data: &WeightedData, mut v: Matrix, budget: f64) -> Matrix {
    let excess = |t: f64| -> f64 {
        data.cells
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| {
                let d = (v[(i, j)] - data.b[k]) / (1.0 + t * data.h[k]);
                0.5 * data.h[k] * d * d
            })
            .sum::<f64>()
    };
    if budget <= 0.0 {
        for (k, &(i, j)) in data.cells.iter().enumerate() {
            v[(i, j)] = data.b[k];
        }
        return v;
    }
    if excess(0.0) <= budget {
        return v;
    }
    let mut hi = 1.0 / data.lipschitz;
    while excess(hi) > budget {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..PROJECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for (k, &(i, j)) in data.cells.iter().enumerate() {
        let th = hi * data.h[k];
        v[(i, j)] = (v[(i, j)] + th * data.b[k]) / (1.0 + th);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{empirical_loss_dense, LossSpec};

    fn full_sample(y: &Matrix) -> SampleSet {
        let idx = (0..y.nrows()).flat_map(|i| (0..y.ncols()).map(move |j| (i, j))).collect();
        SampleSet::observe(y, idx).unwrap()
    }

    #[test]
    fn closed_form_cases() {
        let y = Matrix::from_fn(4, 3, |i, j| i as f64 - j as f64 + 0.5);
        let s = full_sample(&y);
        let w = MarginalWeights::uniform(4, 3);
        let fit = min_norm_fit(&s, &w, 1e9, &SolverConfig::min_norm()).unwrap();
        assert_eq!(fit.weighted_norm, 0.0);
        assert_eq!(fit.model.to_dense().amax(), 0.0);

        let fit = min_norm_fit(&s, &w, 0.0, &SolverConfig::min_norm()).unwrap();
        assert!((fit.model.to_dense() - &y).amax() < 1e-8);
        assert!((fit.weighted_norm - weighted_trace_norm(&y, &w).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn respects_ceiling() {
        let y = Matrix::from_fn(6, 6, |i, j| (i as f64 + 1.0) * (j as f64 - 2.0) / 6.0);
        let idx: Vec<_> = (0..24).map(|t| ((t * 5) % 6, (t * 11 + t / 6) % 6)).collect();
        let s = SampleSet::observe(&y, idx).unwrap();
        let w = crate::weighting::smooth_empirical(&s).unwrap();
        let eps = 0.05;
        let fit = min_norm_fit(&s, &w, eps, &SolverConfig::min_norm()).unwrap();
        assert!(fit.converged);
        assert!(fit.training_loss <= eps * (1.0 + 1e-9));
        let direct = empirical_loss_dense(&fit.model.to_dense(), &s, LossSpec::squared()).unwrap();
        assert!((direct - fit.training_loss).abs() < 1e-9);
    }

    #[test]
    fn noisy_duplicates_make_zero_infeasible() {
        let s = SampleSet::new(2, 2, vec![(0, 0), (0, 0), (1, 1)], vec![1.0, 2.0, 0.5]).unwrap();
        let w = MarginalWeights::uniform(2, 2);
        assert!(matches!(min_norm_fit(&s, &w, 0.0, &SolverConfig::min_norm()), Err(Error::Infeasible { .. })));
        // The spread around the cell mean is 2·(1/2)²/3 = 1/6.
        assert!(min_norm_fit(&s, &w, 0.2, &SolverConfig::min_norm()).is_ok());
    }

    #[test]
    fn interpolates_observed_cells() {
        let y = Matrix::from_fn(8, 7, |i, j| ((i + 1) * (j + 2)) as f64 / 10.0);
        let idx: Vec<_> = (0..30).map(|t| ((t * 3) % 8, (t * 5 + t / 8) % 7)).collect();
        let s = SampleSet::observe(&y, idx).unwrap();
        let w = MarginalWeights::uniform(8, 7);
        let fit = min_norm_fit(&s, &w, 0.0, &SolverConfig::min_norm()).unwrap();
        let x = fit.model.to_dense();
        for (i, j, v) in s.iter() {
            assert!((x[(i, j)] - v).abs() < 1e-12);
        }
    }
}

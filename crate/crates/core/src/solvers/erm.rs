//! Empirical risk minimization over the weighted trace-norm ball by projected
//! subgradient descent.

use super::SolverConfig;
use crate::distributions::SampleSet;
use crate::error::{Error, Result};
use crate::linalg::{project_trace_ball, Matrix};
use crate::loss::{empirical_loss_dense, LossSpec};
use crate::model::CompletionModel;
use crate::weighting::{MarginalWeights, NormBudget};

/// Output of [`erm_in_ball`].
#[derive(Debug, Clone)]
pub struct BallFit {
    pub model: CompletionModel,
    pub training_loss: f64,
    pub weighted_norm: f64,
    /// Best training loss seen after each iteration, starting at `X = 0`.
    pub best_history: Vec<f64>,
    pub iterations: usize,
}

/// Projected subgradient descent on `L̂_S` over `{X : ||X||_{tr,w} <= √r}`.
///
/// Iterates live in weighted coordinates, where the ball is a plain
/// trace-norm ball and the projection is exact. Rows or columns of zero
/// weight are held at zero. The step at iteration `t` is `c/√t` with
/// `c = √r / ||g_1||_F`; the best iterate by training loss is returned.
pub fn erm_in_ball(sample: &SampleSet, w: &MarginalWeights, budget: NormBudget, loss: LossSpec, cfg: &SolverConfig) -> Result<BallFit> {
    cfg.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    w.check_shape(sample.shape())?;
    let (n, m) = sample.shape();
    let radius = budget.radius();
    let s = sample.len() as f64;
    let sqrt_r = w.sqrt_row();
    let sqrt_c = w.sqrt_col();
    let scale: Vec<f64> = sample.indexes().iter().map(|&(i, j)| sqrt_r[i] * sqrt_c[j]).collect();

    let original = |xw: &Matrix| w.from_weighted_coords(xw);
    let mut xw = Matrix::zeros(n, m);
    let mut best = (empirical_loss_dense(&Matrix::zeros(n, m), sample, loss)?, xw.clone(), 0.0);
    let mut best_history = vec![best.0];
    let mut step_scale: Option<f64> = None;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let x = original(&xw);
        let mut g = Matrix::zeros(n, m);
        for (t, (i, j, y)) in sample.iter().enumerate() {
            if scale[t] > 0.0 {
                g[(i, j)] += loss.derivative(x[(i, j)], y) / (s * scale[t]);
            }
        }
        let g_norm = g.norm();
        if g_norm == 0.0 {
            break;
        }
        let c = *step_scale.get_or_insert(if radius > 0.0 { radius / g_norm } else { 1.0 });
        let step = c / (iterations as f64).sqrt();
        let shrunk = project_trace_ball(&xw - g * step, radius);
        xw = shrunk.matrix;
        let value = empirical_loss_dense(&original(&xw), sample, loss)?;
        if value < best.0 {
            best = (value, xw.clone(), shrunk.trace_norm);
        }
        best_history.push(best.0);
        if best.0 == 0.0 {
            break;
        }
    }

    let (training_loss, xw, weighted_norm) = best;
    Ok(BallFit { model: CompletionModel::Dense(original(&xw)), training_loss, weighted_norm, best_history, iterations })
}

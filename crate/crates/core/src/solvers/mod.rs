//! Fitting completion models under weighted trace-norm regularization.
//!
//! Every solver works in weighted coordinates `X' = diag(r)^{1/2} X diag(c)^{1/2}`,
//! where the weighted trace norm becomes the plain trace norm.

mod erm;
mod min_norm;
mod proximal;
mod sgd;

use serde::{Deserialize, Serialize};

pub use erm::{erm_in_ball, BallFit};
pub use min_norm::{min_norm_fit, MinNormFit, CEILING_SLACK, ZERO_LOSS_FLOOR};
pub use proximal::{fit_proximal, lambda_max, ProximalFit};
pub use sgd::{factored_gradient, factored_objective, fit_factored_sgd, SgdFit};

use crate::error::{Error, Result};
use crate::linalg::{soft_threshold, Matrix};
use crate::weighting::MarginalWeights;

/// Solver knobs shared by all fitting routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Regularization weight on the weighted trace norm.
    pub lambda: f64,
    /// Factor rank for the factored solver.
    pub rank_cap: Option<usize>,
    /// Iterations (proximal, subgradient) or epochs (SGD).
    pub max_iters: usize,
    /// Relative objective change below which iteration stops; for
    /// [`min_norm_fit`], the bound on the relative ADMM residuals.
    pub tol: f64,
    /// SGD learning rate.
    pub step_size: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { lambda: 0.0, rank_cap: None, max_iters: 2000, tol: 1e-9, step_size: 0.005, seed: 0 }
    }
}

impl SolverConfig {
    pub fn proximal(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    /// Defaults for [`min_norm_fit`]: relative residual tolerance 1e-3,
    /// at most 5000 iterations.
    pub fn min_norm() -> Self {
        Self { max_iters: 5000, tol: 1e-3, ..Self::default() }
    }

    /// SGD defaults: step 0.005, 200 epochs.
    pub fn sgd(lambda: f64, rank: usize) -> Self {
        Self { lambda, rank_cap: Some(rank), max_iters: 200, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_step_size(mut self, step_size: f64) -> Self {
        self.step_size = step_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {}", self.step_size)));
        }
        Ok(())
    }
}

/// Observation noise level `ν` in `Y = M + ν N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    nu: f64,
}

impl NoiseConfig {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!("noise level must be nonnegative, got {nu}")));
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Training-loss ceiling `ν²` used by the noisy min-norm protocol.
    pub fn loss_ceiling(&self) -> f64 {
        self.nu * self.nu
    }
}

/// Proximal map of `tau ||·||_{tr,w}` in the weighted Frobenius metric:
/// `argmin_Z ½||Z - X||²_{F,w} + tau ||Z||_{tr,w}`.
///
/// Soft-thresholds the singular values of `diag(r)^{1/2} X diag(c)^{1/2}` at
/// `tau` and maps the result back.
pub fn prox_weighted_trace(x: &Matrix, w: &MarginalWeights, tau: f64) -> Result<Matrix> {
    w.check_shape(x.shape())?;
    w.require_positive()?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be nonnegative, got {tau}")));
    }
    let shrunk = soft_threshold(w.to_weighted_coords(x), tau);
    Ok(w.from_weighted_coords(&shrunk.matrix))
}

//! Rademacher complexity of weighted trace-norm balls, estimated by sign
//! draws, and the bound quantities that control it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{JointDistribution, SampleSet};
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Matrix};
use crate::loss::LossSpec;
use crate::rng::{derive_seed, rng_from_seed};
use crate::weighting::{MarginalWeights, NormBudget};

pub const DEFAULT_SIGN_DRAWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub num_sign_draws: usize,
}

/// Monte-Carlo estimate of
/// `(√r / s) E_σ || Σ_t σ_t e_{i_t j_t} / √(r_{i_t} c_{j_t}) ||_sp`,
/// the empirical Rademacher complexity of `{X : ||X||_{tr,w} <= √r}` on `S`.
///
/// Draw `d` uses its own seed derived from `seed`, so results do not depend on
/// evaluation order.
pub fn estimate_rademacher(
    sample: &SampleSet,
    w: &MarginalWeights,
    budget: NormBudget,
    num_draws: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if num_draws == 0 {
        return Err(Error::InvalidParameter("need at least one sign draw".into()));
    }
    w.check_shape(sample.shape())?;
    let (n, m) = sample.shape();
    let mut inv_scale = Vec::with_capacity(sample.len());
    for &(i, j) in sample.indexes() {
        let (ri, cj) = (w.row()[i], w.col()[j]);
        if ri <= 0.0 {
            return Err(Error::ZeroWeight(format!("row {i} is sampled but has zero weight")));
        }
        if cj <= 0.0 {
            return Err(Error::ZeroWeight(format!("column {j} is sampled but has zero weight")));
        }
        inv_scale.push(1.0 / (ri * cj).sqrt());
    }

    let factor = budget.radius() / sample.len() as f64;
    let norms: Vec<f64> = (0..num_draws)
        .into_par_iter()
        .map(|d| {
            let draw_seed = derive_seed(seed, d as u64);
            let mut rng = rng_from_seed(draw_seed);
            let mut q = Matrix::zeros(n, m);
            for (t, &(i, j)) in sample.indexes().iter().enumerate() {
                let sign = if rand::Rng::random::<bool>(&mut rng) { 1.0 } else { -1.0 };
                q[(i, j)] += sign * inv_scale[t];
            }
            factor * spectral_norm(&q, draw_seed)
        })
        .collect();

    let k = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / k;
    let std_error = if norms.len() > 1 {
        let var = norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    Ok(RademacherEstimate { mean, std_error, num_sign_draws: num_draws })
}

/// Quantities from the matrix-Bernstein argument behind the rate bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundDiagnostics {
    /// `max_ij 1/√(r_i c_j)`: almost-sure bound on each summand's spectral norm.
    #[serde(rename = "R_value")]
    pub r_value: f64,
    /// `s · max{max_i Σ_j p_ij/(r_i c_j), max_j Σ_i p_ij/(r_i c_j)}`.
    pub sigma_sq: f64,
    /// `(√r/s)(√(σ² ln n) + R ln n)` with `n = max(rows, cols)`.
    pub predicted_rate: f64,
}

pub fn bound_diagnostics(dist: &JointDistribution, w: &MarginalWeights, s: usize, budget: NormBudget) -> Result<BoundDiagnostics> {
    if s == 0 {
        return Err(Error::EmptySample);
    }
    w.check_shape(dist.shape())?;
    w.require_positive()?;
    let (n, m) = dist.shape();
    let (row, col) = (w.row(), w.col());
    let min_row = row.iter().copied().fold(f64::INFINITY, f64::min);
    let min_col = col.iter().copied().fold(f64::INFINITY, f64::min);
    let r_value = 1.0 / (min_row * min_col).sqrt();

    let mut row_sums = vec![0.0; n];
    let mut col_sums = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            let v = dist.p(i, j) / (row[i] * col[j]);
            row_sums[i] += v;
            col_sums[j] += v;
        }
    }
    let widest = row_sums.iter().chain(&col_sums).copied().fold(0.0, f64::max);
    let sigma_sq = s as f64 * widest;
    let log_n = (n.max(m) as f64).ln();
    let predicted_rate = budget.radius() / s as f64 * ((sigma_sq * log_n).sqrt() + r_value * log_n);
    Ok(BoundDiagnostics { r_value, sigma_sq, predicted_rate })
}

/// Generalization rates of the weighted trace-norm ball in three sampling
/// scenarios, with every constant set to 1 and natural logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub product: f64,
    pub uniform_marginals: f64,
    pub arbitrary: f64,
}

/// With `n = max(rows, cols)` and `q = r n ln n / s`: `√q` for product
/// distributions and for uniform marginals; for arbitrary distributions `q^{1/3}`
/// with a bounded loss and `1` otherwise.
pub fn rate_table(n: usize, m: usize, s: usize, budget: NormBudget, loss: LossSpec) -> RateTable {
    let big = n.max(m) as f64;
    let q = budget.r() * big * big.ln() / s as f64;
    let root = q.sqrt();
    RateTable { product: root, uniform_marginals: root, arbitrary: if loss.is_bounded() { q.cbrt() } else { 1.0 } }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weighting::{smooth, SmoothingConfig};

    #[test]
    fn single_entry_is_exact() {
        let s = SampleSet::new(4, 4, vec![(2, 1)], vec![0.0]).unwrap();
        let w = MarginalWeights::uniform(4, 4);
        let est = estimate_rademacher(&s, &w, NormBudget::new(1.0).unwrap(), 16, 5).unwrap();
        assert!((est.mean - 4.0).abs() < 1e-12);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn budget_scaling_is_exact() {
        let s = SampleSet::new(5, 4, vec![(0, 0), (1, 2), (4, 3), (1, 2), (3, 1)], vec![0.0; 5]).unwrap();
        let w = MarginalWeights::uniform(5, 4);
        let a = estimate_rademacher(&s, &w, NormBudget::new(1.0).unwrap(), 32, 9).unwrap();
        let b = estimate_rademacher(&s, &w, NormBudget::new(4.0).unwrap(), 32, 9).unwrap();
        assert_eq!(b.mean, 2.0 * a.mean);
    }

    #[test]
    fn zero_weight_on_sampled_row() {
        let s = SampleSet::new(2, 1, vec![(1, 0)], vec![0.0]).unwrap();
        let w = MarginalWeights::new(vec![1.0, 0.0], vec![1.0], crate::weighting::WeightKind::True, None).unwrap();
        assert!(matches!(estimate_rademacher(&s, &w, NormBudget::new(1.0).unwrap(), 4, 0), Err(Error::ZeroWeight(_))));
    }

    #[test]
    fn uniform_sigma_sq() {
        let dist = JointDistribution::uniform(6, 6).unwrap();
        let w = MarginalWeights::from_distribution(&dist);
        let d = bound_diagnostics(&dist, &w, 100, NormBudget::new(1.0).unwrap()).unwrap();
        assert!((d.sigma_sq - 600.0).abs() < 1e-9);
        assert!((d.r_value - 6.0).abs() < 1e-12);
    }

    #[test]
    fn smoothed_weights_bounds() {
        let dist = JointDistribution::from_weights(3, 4, &[5.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let w = smooth(&MarginalWeights::from_distribution(&dist), SmoothingConfig::new(0.5).unwrap());
        let d = bound_diagnostics(&dist, &w, 50, NormBudget::new(1.0).unwrap()).unwrap();
        assert!(d.sigma_sq <= 4.0 * 50.0 * 4.0 + 1e-9);
        assert!(d.r_value <= 2.0 * 12f64.sqrt() + 1e-9);
    }

    #[test]
    fn rate_rows() {
        let (n, s) = (20, 400);
        let r = s as f64 / (n as f64 * (n as f64).ln());
        let t = rate_table(n, n, s, NormBudget::new(r).unwrap(), LossSpec::clipped_absolute());
        assert!((t.product - 1.0).abs() < 1e-12);
        assert!((t.uniform_marginals - 1.0).abs() < 1e-12);
        let t = rate_table(n, n, s, NormBudget::new(1.0).unwrap(), LossSpec::clipped_absolute());
        let q = n as f64 * (n as f64).ln() / s as f64;
        assert!((t.arbitrary - q.cbrt()).abs() < 1e-15);
        let u = rate_table(n, n, s, NormBudget::new(1.0).unwrap(), LossSpec::absolute());
        assert_eq!(u.arbitrary, 1.0);
    }
}

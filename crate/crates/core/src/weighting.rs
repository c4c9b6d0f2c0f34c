//! Marginal weight vectors and the weighted norms built from them.
//!
//! A pair of row/column weights `(r, c)` defines the weighted trace norm
//! `||X||_{tr,w} = ||diag(r)^{1/2} X diag(c)^{1/2}||_tr`. The weights may be
//! the true marginals of the sampling law, their smoothed version
//! `α p + (1 - α)/n`, the empirical frequencies of a sample, or the smoothed
//! empirical frequencies `(p̂ + 1/n)/2`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::distributions::{check_probability_vector, JointDistribution, SampleSet};
use crate::error::{Error, Result};
use crate::linalg::{scale_rows_cols, trace_norm, Matrix};

/// Smoothing level for applied solves.
pub const DEFAULT_APPLIED_ALPHA: f64 = 0.9;
/// Smoothing level used by the theory-facing operations.
pub const THEORY_ALPHA: f64 = 0.5;

/// Where a set of marginal weights came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    True,
    Smoothed,
    Empirical,
    SmoothedEmpirical,
    TransductiveSmoothed,
}

impl WeightKind {
    pub fn is_smoothed(self) -> bool {
        matches!(self, WeightKind::Smoothed | WeightKind::SmoothedEmpirical | WeightKind::TransductiveSmoothed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WeightKind::True => "true",
            WeightKind::Smoothed => "smoothed",
            WeightKind::Empirical => "empirical",
            WeightKind::SmoothedEmpirical => "smoothed_empirical",
            WeightKind::TransductiveSmoothed => "transductive_smoothed",
        }
    }
}

/// Row and column weights, each summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalWeights {
    kind: WeightKind,
    /// Smoothing level applied; `None` for unsmoothed kinds.
    alpha: Option<f64>,
    row: Vec<f64>,
    col: Vec<f64>,
}

impl MarginalWeights {
    pub fn new(row: Vec<f64>, col: Vec<f64>, kind: WeightKind, alpha: Option<f64>) -> Result<Self> {
        if row.is_empty() || col.is_empty() {
            return Err(Error::InvalidParameter("weight vectors must be non-empty".into()));
        }
        check_probability_vector(&row)?;
        check_probability_vector(&col)?;
        if kind.is_smoothed() {
            let a = alpha.ok_or_else(|| Error::InvalidParameter("smoothed weights need an alpha".into()))?;
            SmoothingConfig::new(a)?;
            let (rf, cf) = ((1.0 - a) / row.len() as f64, (1.0 - a) / col.len() as f64);
            // Floors hold up to the rounding of `alpha * p + floor`.
            let slack = 4.0 * f64::EPSILON;
            if row.iter().any(|&r| r < rf * (1.0 - slack)) || col.iter().any(|&c| c < cf * (1.0 - slack)) {
                return Err(Error::InvalidParameter(format!("smoothed weights violate the (1-alpha)/n floor for alpha={a}")));
            }
        }
        Ok(Self { kind, alpha, row, col })
    }

    /// The true marginals of `dist`.
    pub fn from_distribution(dist: &JointDistribution) -> Self {
        Self { kind: WeightKind::True, alpha: None, row: dist.row_marginals().to_vec(), col: dist.col_marginals().to_vec() }
    }

    /// Uniform weights `1/n`, `1/m`: the true marginals of uniform sampling,
    /// under which the weighted norm is the plain trace norm over `sqrt(nm)`.
    pub fn uniform(n: usize, m: usize) -> Self {
        Self { kind: WeightKind::True, alpha: None, row: vec![1.0 / n as f64; n], col: vec![1.0 / m as f64; m] }
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn row(&self) -> &[f64] {
        &self.row
    }

    pub fn col(&self) -> &[f64] {
        &self.col
    }

    pub fn n(&self) -> usize {
        self.row.len()
    }

    pub fn m(&self) -> usize {
        self.col.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.row.len(), self.col.len())
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.row.iter().chain(&self.col).all(|&w| w > 0.0)
    }

    pub(crate) fn require_positive(&self) -> Result<()> {
        if let Some(i) = self.row.iter().position(|&w| w <= 0.0) {
            return Err(Error::ZeroWeight(format!("row {i}")));
        }
        if let Some(j) = self.col.iter().position(|&w| w <= 0.0) {
            return Err(Error::ZeroWeight(format!("column {j}")));
        }
        Ok(())
    }

    pub(crate) fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::ShapeMismatch { expected: self.shape(), found: shape });
        }
        Ok(())
    }

    pub fn sqrt_row(&self) -> Vec<f64> {
        self.row.iter().map(|w| w.sqrt()).collect()
    }

    pub fn sqrt_col(&self) -> Vec<f64> {
        self.col.iter().map(|w| w.sqrt()).collect()
    }

    /// `diag(r)^{1/2} X diag(c)^{1/2}`.
    pub fn to_weighted_coords(&self, x: &Matrix) -> Matrix {
        scale_rows_cols(x, &self.sqrt_row(), &self.sqrt_col())
    }

    /// Inverse of [`MarginalWeights::to_weighted_coords`]; rows and columns with
    /// zero weight map to zero.
    pub fn from_weighted_coords(&self, x: &Matrix) -> Matrix {
        let inv = |w: &f64| if *w > 0.0 { 1.0 / w.sqrt() } else { 0.0 };
        let r: Vec<f64> = self.row.iter().map(inv).collect();
        let c: Vec<f64> = self.col.iter().map(inv).collect();
        scale_rows_cols(x, &r, &c)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let raw: MarginalWeights = serde_json::from_reader(reader)?;
        Self::new(raw.row, raw.col, raw.kind, raw.alpha)
    }
}

/// Mixing level `α` in `α p + (1 - α) u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    alpha: f64,
}

impl SmoothingConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_APPLIED_ALPHA }
    }
}

/// Trace-norm budget: the class `{X : ||X||_{tr,w} <= sqrt(r)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBudget {
    r: f64,
}

impl NormBudget {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!("budget r must be positive, got {r}")));
        }
        Ok(Self { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Ball radius `sqrt(r)`.
    pub fn radius(&self) -> f64 {
        self.r.sqrt()
    }
}

fn smooth_vector(v: &[f64], alpha: f64) -> Vec<f64> {
    let floor = (1.0 - alpha) / v.len() as f64;
    v.iter().map(|&p| alpha * p + floor).collect()
}

/// Mixes the weights with the uniform distribution: `α p_i + (1 - α)/n`.
///
/// Smoothing already-smoothed weights composes the levels multiplicatively.
pub fn smooth(weights: &MarginalWeights, cfg: SmoothingConfig) -> MarginalWeights {
    let a = cfg.alpha();
    let (kind, alpha) = match weights.kind {
        WeightKind::True => (WeightKind::Smoothed, a),
        WeightKind::Empirical => (WeightKind::SmoothedEmpirical, a),
        k => (k, weights.alpha.unwrap_or(1.0) * a),
    };
    MarginalWeights { kind, alpha: Some(alpha), row: smooth_vector(&weights.row, a), col: smooth_vector(&weights.col, a) }
}

/// Row and column frequencies of the sampled indexes. Counts stay integral
/// until the final division.
pub fn empirical_marginals(sample: &SampleSet) -> Result<MarginalWeights> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let (n, m) = sample.shape();
    let mut row_counts = vec![0u64; n];
    let mut col_counts = vec![0u64; m];
    for &(i, j) in sample.indexes() {
        row_counts[i] += 1;
        col_counts[j] += 1;
    }
    let s = sample.len() as f64;
    Ok(MarginalWeights {
        kind: WeightKind::Empirical,
        alpha: None,
        row: row_counts.iter().map(|&c| c as f64 / s).collect(),
        col: col_counts.iter().map(|&c| c as f64 / s).collect(),
    })
}

/// `(p̂ + 1/n)/2` on rows and columns.
pub fn smooth_empirical(sample: &SampleSet) -> Result<MarginalWeights> {
    let empirical = empirical_marginals(sample)?;
    Ok(smooth(&empirical, SmoothingConfig { alpha: THEORY_ALPHA }))
}

/// Smoothed empirical marginals of a whole transductive pool (train and test
/// indexes together).
pub fn transductive_smoothed(pool: &SampleSet) -> Result<MarginalWeights> {
    let mut w = smooth_empirical(pool)?;
    w.kind = WeightKind::TransductiveSmoothed;
    Ok(w)
}

fn zero_weight_support_violated(x: &Matrix, w: &MarginalWeights) -> bool {
    let row_bad = w.row.iter().enumerate().any(|(i, &r)| r == 0.0 && x.row(i).iter().any(|&v| v != 0.0));
    let col_bad = w.col.iter().enumerate().any(|(j, &c)| c == 0.0 && x.column(j).iter().any(|&v| v != 0.0));
    row_bad || col_bad
}

/// `||diag(r)^{1/2} X diag(c)^{1/2}||_tr`, or `+∞` when `X` has nonzero
/// entries on a row or column of zero weight.
pub fn weighted_trace_norm(x: &Matrix, w: &MarginalWeights) -> Result<f64> {
    w.check_shape(x.shape())?;
    if zero_weight_support_violated(x, w) {
        return Ok(f64::INFINITY);
    }
    Ok(trace_norm(&w.to_weighted_coords(x)))
}

/// `||diag(r)^{1/2} X diag(c)^{1/2}||_F`.
pub fn weighted_frobenius_norm(x: &Matrix, w: &MarginalWeights) -> Result<f64> {
    w.check_shape(x.shape())?;
    Ok(w.to_weighted_coords(x).norm())
}

/// Probability threshold `log(n) / (s sqrt(nm))` below which entries are
/// truncated.
pub fn truncation_threshold(n: usize, m: usize, s: usize) -> f64 {
    (n as f64).ln() / (s as f64 * ((n * m) as f64).sqrt())
}

/// Zeroes the entries of `X` whose cell probability falls below
/// [`truncation_threshold`].
pub fn truncate_low_probability(x: &Matrix, dist: &JointDistribution, s: usize) -> Result<Matrix> {
    if x.shape() != dist.shape() {
        return Err(Error::ShapeMismatch { expected: dist.shape(), found: x.shape() });
    }
    if s == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let threshold = truncation_threshold(dist.n(), dist.m(), s);
    Ok(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| if dist.p(i, j) >= threshold { x[(i, j)] } else { 0.0 }))
}

/// Rescales `X` onto the ball `||X||_{tr,w} <= sqrt(r)` when it lies outside;
/// returns it unchanged otherwise.
pub fn project_to_ball(x: &Matrix, w: &MarginalWeights, budget: NormBudget) -> Result<Matrix> {
    let norm = weighted_trace_norm(x, w)?;
    if !norm.is_finite() {
        return Err(Error::InfiniteNorm);
    }
    if norm <= budget.radius() {
        return Ok(x.clone());
    }
    Ok(x * (budget.radius() / norm))
}

/// Outcome of comparing smoothed empirical marginals with half the smoothed
/// true marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominationReport {
    pub holds: bool,
    /// Minimum over rows and columns of `p̌ / p̃`; the check holds iff this is
    /// at least one half.
    pub worst_ratio: f64,
}

/// Checks `p̌ >= p̃ / 2` entrywise on both marginals, where `p̌` are the
/// smoothed empirical marginals of `sample` and `p̃` the `cfg`-smoothed true
/// marginals of `dist`.
pub fn check_marginal_domination(sample: &SampleSet, dist: &JointDistribution, cfg: SmoothingConfig) -> Result<DominationReport> {
    if sample.shape() != dist.shape() {
        return Err(Error::ShapeMismatch { expected: dist.shape(), found: sample.shape() });
    }
    let checked = smooth_empirical(sample)?;
    let smoothed = smooth(&MarginalWeights::from_distribution(dist), cfg);
    let mut holds = true;
    let mut worst = f64::INFINITY;
    let pairs = checked.row.iter().zip(&smoothed.row).chain(checked.col.iter().zip(&smoothed.col));
    for (&c, &t) in pairs {
        if c < 0.5 * t {
            holds = false;
        }
        if t > 0.0 {
            worst = worst.min(c / t);
        }
    }
    Ok(DominationReport { holds, worst_ratio: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::make_product;

    fn weights(row: &[f64], col: &[f64]) -> MarginalWeights {
        MarginalWeights::new(row.to_vec(), col.to_vec(), WeightKind::True, None).unwrap()
    }

    #[test]
    fn smoothing_endpoints_and_example() {
        let w = weights(&[0.5, 0.5, 0.0, 0.0], &[0.1, 0.9]);
        let same = smooth(&w, SmoothingConfig::new(1.0).unwrap());
        assert_eq!(same.row(), w.row());
        assert_eq!(same.col(), w.col());
        let flat = smooth(&w, SmoothingConfig::new(0.0).unwrap());
        assert!(flat.row().iter().all(|&r| r == 0.25));
        assert!(flat.col().iter().all(|&c| c == 0.5));
        let half = smooth(&w, SmoothingConfig::new(0.5).unwrap());
        assert_eq!(half.row(), &[0.375, 0.375, 0.125, 0.125]);
        assert_eq!(half.kind(), WeightKind::Smoothed);
        assert_eq!(half.alpha(), Some(0.5));
    }

    #[test]
    fn smoothing_is_affine_in_alpha() {
        let w = weights(&[0.7, 0.2, 0.1], &[0.3, 0.3, 0.4]);
        let a0 = smooth(&w, SmoothingConfig::new(0.0).unwrap());
        let a1 = smooth(&w, SmoothingConfig::new(1.0).unwrap());
        for alpha in [0.1, 0.37, 0.9] {
            let mid = smooth(&w, SmoothingConfig::new(alpha).unwrap());
            for i in 0..3 {
                let lerp = alpha * a1.row()[i] + (1.0 - alpha) * a0.row()[i];
                assert!((mid.row()[i] - lerp).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empirical_counts() {
        let s = SampleSet::new(2, 2, vec![(0, 0), (0, 1), (1, 0), (0, 0)], vec![0.0; 4]).unwrap();
        let w = empirical_marginals(&s).unwrap();
        assert_eq!(w.row(), &[0.75, 0.25]);
        assert_eq!(w.col(), &[0.75, 0.25]);
        assert_eq!(w.kind(), WeightKind::Empirical);
        let single = SampleSet::new(3, 2, vec![(2, 1)], vec![1.0]).unwrap();
        let w = empirical_marginals(&single).unwrap();
        assert_eq!(w.row(), &[0.0, 0.0, 1.0]);
        assert_eq!(w.col(), &[0.0, 1.0]);
        let empty = SampleSet::new(2, 2, vec![], vec![]).unwrap();
        assert!(matches!(empirical_marginals(&empty), Err(Error::EmptySample)));
    }

    #[test]
    fn smoothed_empirical_values() {
        let s = SampleSet::new(2, 2, vec![(0, 1)], vec![1.0]).unwrap();
        let w = smooth_empirical(&s).unwrap();
        assert_eq!(w.row(), &[0.75, 0.25]);
        assert_eq!(w.kind(), WeightKind::SmoothedEmpirical);
        let balanced = SampleSet::new(2, 2, vec![(0, 0), (1, 1)], vec![0.0; 2]).unwrap();
        let w = smooth_empirical(&balanced).unwrap();
        assert_eq!(w.row(), &[0.5, 0.5]);
        assert!(w.row().iter().all(|&r| r >= 1.0 / 4.0));
        assert!(matches!(smooth_empirical(&SampleSet::new(2, 2, vec![], vec![]).unwrap()), Err(Error::EmptySample)));
    }

    #[test]
    fn uniform_identity_norms() {
        let w = MarginalWeights::uniform(2, 2);
        let id = Matrix::identity(2, 2);
        assert!((weighted_trace_norm(&id, &w).unwrap() - 1.0).abs() < 1e-12);
        assert!((weighted_frobenius_norm(&id, &w).unwrap() - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(weighted_frobenius_norm(&Matrix::zeros(2, 2), &w).unwrap(), 0.0);
    }

    #[test]
    fn single_spike_with_matching_marginal_has_unit_norm() {
        let s = 40.0;
        let n = 5;
        let mut row = vec![(1.0 - 1.0 / s) / (n - 1) as f64; n];
        row[0] = 1.0 / s;
        let w = weights(&row, &row);
        let mut a = Matrix::zeros(n, n);
        a[(0, 0)] = s;
        assert!((weighted_trace_norm(&a, &w).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_support_gives_infinity() {
        let w = weights(&[1.0, 0.0], &[0.5, 0.5]);
        let mut x = Matrix::zeros(2, 2);
        x[(0, 1)] = 2.0;
        assert!(weighted_trace_norm(&x, &w).unwrap().is_finite());
        x[(1, 0)] = 1.0;
        assert_eq!(weighted_trace_norm(&x, &w).unwrap(), f64::INFINITY);
        assert!(matches!(project_to_ball(&x, &w, NormBudget::new(1.0).unwrap()), Err(Error::InfiniteNorm)));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let w = MarginalWeights::uniform(2, 3);
        assert!(matches!(weighted_trace_norm(&Matrix::zeros(3, 2), &w), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(weighted_frobenius_norm(&Matrix::zeros(3, 2), &w), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn truncation_cases() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        // n = m = 2, s = 1: threshold ln 2 / 2 ≈ 0.3466.
        let dist = JointDistribution::from_mass(2, 2, vec![0.35, 0.35, 0.05, 0.25]).unwrap();
        let t = truncate_low_probability(&x, &dist, 1).unwrap();
        assert_eq!(t, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 0.0]));
        // s = 2: threshold ≈ 0.1733, only the 0.05 cell drops.
        let t = truncate_low_probability(&x, &dist, 2).unwrap();
        assert_eq!(t, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 4.0]));
        let uniform = JointDistribution::uniform(2, 2).unwrap();
        assert_eq!(truncate_low_probability(&x, &uniform, 100).unwrap(), x);
        let spread = JointDistribution::uniform(2, 2).unwrap();
        assert_eq!(truncate_low_probability(&x, &spread, 1).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn ball_projection() {
        let w = MarginalWeights::uniform(3, 3);
        let budget = NormBudget::new(4.0).unwrap();
        let inside = Matrix::identity(3, 3);
        assert_eq!(project_to_ball(&inside, &w, budget).unwrap(), inside);
        let big = Matrix::from_fn(3, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let norm = weighted_trace_norm(&big, &w).unwrap();
        let scaled = &big * (2.0 * budget.radius() / norm);
        let out = project_to_ball(&scaled, &w, budget).unwrap();
        assert!((weighted_trace_norm(&out, &w).unwrap() - budget.radius()).abs() < 1e-10);
        assert_eq!(project_to_ball(&Matrix::zeros(3, 3), &w, budget).unwrap(), Matrix::zeros(3, 3));
        assert!(NormBudget::new(0.0).is_err());
    }

    #[test]
    fn domination_small_cases() {
        let dist = JointDistribution::uniform(2, 2).unwrap();
        let cfg = SmoothingConfig::new(0.5).unwrap();
        // One draw: p̌ = (3/4, 1/4), p̃ = (1/2, 1/2); the floor meets 1/4 exactly.
        let s = SampleSet::new(2, 2, vec![(0, 0)], vec![0.0]).unwrap();
        let r = check_marginal_domination(&s, &dist, cfg).unwrap();
        assert!(r.holds);
        assert_eq!(r.worst_ratio, 0.5);
        // True mass on row 0 only, observation in row 1: p̌_0 = 1/4 < p̃_0 / 2 = 3/8.
        let skewed = make_product(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        let s = SampleSet::new(2, 2, vec![(1, 0)], vec![0.0]).unwrap();
        let r = check_marginal_domination(&s, &skewed, cfg).unwrap();
        assert!(!r.holds);
        assert!((r.worst_ratio - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weights_json_round_trip() {
        let w = smooth(&weights(&[0.2, 0.8], &[1.0]), SmoothingConfig::new(0.9).unwrap());
        let mut buf = Vec::new();
        w.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"kind\": \"smoothed\""));
        assert!(text.contains("\"alpha\": 0.9"));
        let back = MarginalWeights::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn smoothed_weights_must_respect_floor() {
        let bad = MarginalWeights::new(vec![1.0, 0.0], vec![1.0], WeightKind::Smoothed, Some(0.5));
        assert!(bad.is_err());
        let missing_alpha = MarginalWeights::new(vec![0.5, 0.5], vec![1.0], WeightKind::Smoothed, None);
        assert!(missing_alpha.is_err());
    }
}

//! Entry-wise losses and the empirical / expected risks built from them.

use serde::{Deserialize, Serialize};

use crate::distributions::{JointDistribution, SampleSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::CompletionModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Squared,
    Absolute,
    ClippedAbsolute,
}

/// A loss `ℓ(x, y)` with its Lipschitz constant `l` and, when bounded, its
/// bound `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    kind: LossKind,
    lipschitz: f64,
    bound: Option<f64>,
}

impl LossSpec {
    /// `(x - y)²`. Not globally Lipschitz; `lipschitz` records the constant on
    /// residuals in `[-1, 1]`.
    pub fn squared() -> Self {
        Self { kind: LossKind::Squared, lipschitz: 2.0, bound: None }
    }

    /// `|x - y|`.
    pub fn absolute() -> Self {
        Self { kind: LossKind::Absolute, lipschitz: 1.0, bound: None }
    }

    /// `min(1, |x - y|)`.
    pub fn clipped_absolute() -> Self {
        Self { kind: LossKind::ClippedAbsolute, lipschitz: 1.0, bound: Some(1.0) }
    }

    pub fn from_kind(kind: LossKind) -> Self {
        match kind {
            LossKind::Squared => Self::squared(),
            LossKind::Absolute => Self::absolute(),
            LossKind::ClippedAbsolute => Self::clipped_absolute(),
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn is_bounded(&self) -> bool {
        self.bound.is_some()
    }

    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let d = x - y;
        match self.kind {
            LossKind::Squared => d * d,
            LossKind::Absolute => d.abs(),
            LossKind::ClippedAbsolute => d.abs().min(1.0),
        }
    }

    /// An element of the subdifferential in `x`; zero at every kink.
    #[inline]
    pub fn derivative(&self, x: f64, y: f64) -> f64 {
        let d = x - y;
        match self.kind {
            LossKind::Squared => 2.0 * d,
            LossKind::Absolute => sign(d),
            LossKind::ClippedAbsolute => {
                if d.abs() < 1.0 {
                    sign(d)
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(1/s) Σ_t ℓ(X[i_t, j_t], y_t)` over the multiset `sample`; duplicates count
/// once per occurrence.
pub fn empirical_loss(model: &CompletionModel, sample: &SampleSet, loss: LossSpec) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if model.shape() != sample.shape() {
        return Err(Error::ShapeMismatch { expected: sample.shape(), found: model.shape() });
    }
    let total: f64 = sample.iter().map(|(i, j, y)| loss.value(model.entry(i, j), y)).sum();
    Ok(total / sample.len() as f64)
}

/// Dense-matrix shorthand for [`empirical_loss`].
pub fn empirical_loss_dense(x: &Matrix, sample: &SampleSet, loss: LossSpec) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if x.shape() != sample.shape() {
        return Err(Error::ShapeMismatch { expected: sample.shape(), found: x.shape() });
    }
    let total: f64 = sample.iter().map(|(i, j, y)| loss.value(x[(i, j)], y)).sum();
    Ok(total / sample.len() as f64)
}

/// `Σ_{ij} p(i, j) ℓ(X[i, j], Y[i, j])` by full enumeration of the grid.
pub fn expected_loss(model: &CompletionModel, truth: &Matrix, dist: &JointDistribution, loss: LossSpec) -> Result<f64> {
    if model.shape() != dist.shape() {
        return Err(Error::ShapeMismatch { expected: dist.shape(), found: model.shape() });
    }
    if truth.shape() != dist.shape() {
        return Err(Error::ShapeMismatch { expected: dist.shape(), found: truth.shape() });
    }
    let dense = model.to_dense();
    let mut total = 0.0;
    for i in 0..dist.n() {
        for j in 0..dist.m() {
            let p = dist.p(i, j);
            if p > 0.0 {
                total += p * loss.value(dense[(i, j)], truth[(i, j)]);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_values_and_kinks() {
        let sq = LossSpec::squared();
        let ab = LossSpec::absolute();
        let cl = LossSpec::clipped_absolute();
        assert_eq!(sq.value(3.0, 1.0), 4.0);
        assert_eq!(ab.value(-2.0, 1.0), 3.0);
        assert_eq!(cl.value(-2.0, 1.0), 1.0);
        assert_eq!(cl.value(0.5, 0.0), 0.5);
        assert_eq!(ab.derivative(1.0, 1.0), 0.0);
        assert_eq!(cl.derivative(2.0, 1.0), 0.0);
        assert_eq!(cl.derivative(1.5, 1.0), 1.0);
        assert_eq!(cl.derivative(5.0, 1.0), 0.0);
        assert_eq!(sq.derivative(3.0, 1.0), 4.0);
        assert_eq!(cl.bound(), Some(1.0));
        assert!(!sq.is_bounded());
    }

    #[test]
    fn duplicates_count_twice() {
        let s = SampleSet::new(1, 1, vec![(0, 0), (0, 0)], vec![0.0, 0.0]).unwrap();
        let x = CompletionModel::Dense(Matrix::from_element(1, 1, 1.0));
        assert_eq!(empirical_loss(&x, &s, LossSpec::absolute()).unwrap(), 1.0);
        let s = SampleSet::new(2, 1, vec![(0, 0), (0, 0), (1, 0)], vec![0.0, 0.0, 1.0]).unwrap();
        let x = CompletionModel::Dense(Matrix::from_column_slice(2, 1, &[1.0, 1.0]));
        assert!((empirical_loss(&x, &s, LossSpec::absolute()).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_match_gives_zero_loss() {
        let y = Matrix::from_fn(3, 4, |i, j| i as f64 - 2.0 * j as f64);
        let dist = JointDistribution::uniform(3, 4).unwrap();
        let x = CompletionModel::Dense(y.clone());
        for loss in [LossSpec::squared(), LossSpec::absolute(), LossSpec::clipped_absolute()] {
            assert_eq!(expected_loss(&x, &y, &dist, loss).unwrap(), 0.0);
        }
        let s = SampleSet::observe(&y, vec![(0, 0), (2, 3)]).unwrap();
        assert_eq!(empirical_loss(&x, &s, LossSpec::squared()).unwrap(), 0.0);
    }

    #[test]
    fn zero_against_ones_is_one() {
        let y = Matrix::from_element(4, 3, 1.0);
        let dist = JointDistribution::uniform(4, 3).unwrap();
        let x = CompletionModel::Dense(Matrix::zeros(4, 3));
        assert!((expected_loss(&x, &y, &dist, LossSpec::squared()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_sample_errors() {
        let s = SampleSet::new(1, 1, vec![], vec![]).unwrap();
        let x = CompletionModel::Dense(Matrix::zeros(1, 1));
        assert!(matches!(empirical_loss(&x, &s, LossSpec::squared()), Err(Error::EmptySample)));
    }
}

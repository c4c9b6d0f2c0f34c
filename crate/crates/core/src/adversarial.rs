//! Two sampling distributions on which the unsmoothed weighted trace norm
//! admits empirical risk minimizers with large expected loss.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{sample, JointDistribution, SampleSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::{expected_loss, LossSpec};
use crate::model::CompletionModel;
use crate::rng::{derive_seed, rng_from_seed};

/// A sign block `A` (`a × n/2`) in the top-left of an `n × n` target.
///
/// The block carries mass `1/(2s)` per cell, the bottom-right
/// `(n - a) × n/2` block shares the remaining `1 - an/(4s)` uniformly, and the
/// other two blocks are never sampled.
#[derive(Debug, Clone)]
pub struct Example1Instance {
    pub n: usize,
    pub s: usize,
    /// Block height `⌊(2s/n)^{2/3}⌋`.
    pub a: usize,
    pub sign_block: Matrix,
    pub y: Matrix,
    pub dist: JointDistribution,
}

pub fn example1_block_height(n: usize, s: usize) -> usize {
    (2.0 * s as f64 / n as f64).powf(2.0 / 3.0).floor() as usize
}

pub fn build_example1(n: usize, s: usize, seed: u64) -> Result<Example1Instance> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("n must be even and at least 2, got {n}")));
    }
    if s == 0 {
        return Err(Error::InvalidParameter("s must be positive".into()));
    }
    let a = example1_block_height(n, s);
    if a == 0 || a >= n {
        return Err(Error::InvalidParameter(format!("block height {a} must satisfy 1 <= a < n = {n}")));
    }
    let block_mass = (a * n) as f64 / (4.0 * s as f64);
    if block_mass >= 1.0 {
        return Err(Error::InvalidParameter(format!("sign block mass an/(4s) = {block_mass} must be below 1")));
    }
    let half = n / 2;
    let mut rng = rng_from_seed(seed);
    let sign_block = Matrix::from_fn(a, half, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
    let mut y = Matrix::zeros(n, n);
    y.view_mut((0, 0), (a, half)).copy_from(&sign_block);

    let cell = 1.0 / (2.0 * s as f64);
    let rest = (1.0 - block_mass) / ((n - a) * half) as f64;
    let mass: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            match (i < a, j < half) {
                (true, true) => cell,
                (false, false) => rest,
                _ => 0.0,
            }
        })
        .collect();
    let dist = JointDistribution::from_mass(n, n, mass)?;
    Ok(Example1Instance { n, s, a, sign_block, y, dist })
}

/// `Y^S`: the target on observed cells and zero elsewhere. It has zero
/// training loss and lies in the unit weighted trace-norm ball.
pub fn example1_erm(inst: &Example1Instance, sample: &SampleSet) -> Matrix {
    let mut out = Matrix::zeros(inst.n, inst.n);
    for &(i, j) in sample.indexes() {
        out[(i, j)] = inst.y[(i, j)];
    }
    out
}

/// `(1/8)(n/s)^{1/3}`.
pub fn example1_lower_bound(n: usize, s: usize) -> f64 {
    (n as f64 / s as f64).cbrt() / 8.0
}

/// `E[L_p(Y^S)] = (a n/2)(1 - 1/(2s))^s / (2s)`: each sign cell is missed by all
/// `s` draws with probability `(1 - 1/(2s))^s` and then costs `1/(2s)`.
pub fn example1_expected_loss(n: usize, s: usize) -> f64 {
    let a = example1_block_height(n, s) as f64;
    let sf = s as f64;
    a * n as f64 / 2.0 * (1.0 - 1.0 / (2.0 * sf)).powf(sf) / (2.0 * sf)
}

/// Zero target on an `n × n` grid with `p(0, 0) = 1/s`, the rest of row 0 and
/// column 0 unsampled, and the remaining mass uniform on the lower-right block.
/// The adversary `A` is `s` at `(0, 0)` and zero elsewhere.
#[derive(Debug, Clone)]
pub struct Example2Instance {
    pub n: usize,
    pub s: usize,
    pub y: Matrix,
    pub adversary: Matrix,
    pub dist: JointDistribution,
}

pub fn build_example2(n: usize, s: usize) -> Result<Example2Instance> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n must be at least 2, got {n}")));
    }
    if s < 2 {
        return Err(Error::InvalidParameter(format!("s must be at least 2, got {s}")));
    }
    let corner = 1.0 / s as f64;
    let rest = (1.0 - corner) / ((n - 1) * (n - 1)) as f64;
    let mass: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            match (i, j) {
                (0, 0) => corner,
                (0, _) | (_, 0) => 0.0,
                _ => rest,
            }
        })
        .collect();
    let dist = JointDistribution::from_mass(n, n, mass)?;
    let mut adversary = Matrix::zeros(n, n);
    adversary[(0, 0)] = s as f64;
    Ok(Example2Instance { n, s, y: Matrix::zeros(n, n), adversary, dist })
}

/// `A` when `(0, 0)` is unobserved (zero training loss, unit weighted trace
/// norm, expected loss 1); the zero matrix otherwise.
pub fn example2_erm(inst: &Example2Instance, sample: &SampleSet) -> Matrix {
    if sample.contains(0, 0) {
        Matrix::zeros(inst.n, inst.n)
    } else {
        inst.adversary.clone()
    }
}

/// `(1 - 1/s)^s`, the chance that `(0, 0)` is never drawn.
pub fn example2_expected_loss(s: usize) -> f64 {
    let sf = s as f64;
    (1.0 - 1.0 / sf).powf(sf)
}

/// Lower bound on the expected loss of the Example 2 minimizer.
pub const EXAMPLE2_LOWER_BOUND: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Example {
    One,
    Two,
}

impl Example {
    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            _ => Err(Error::InvalidParameter(format!("example must be 1 or 2, got {k}"))),
        }
    }
}

/// Expected loss of the constructed minimizer in each trial, with the
/// matching closed form and lower bound.
#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub losses: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub closed_form: f64,
    pub lower_bound: f64,
}

/// Runs `trials` independent samples of size `s`. Trial `t` draws with seed
/// `derive_seed(seed, t)`; Example 1 fixes its sign block from `seed`.
pub fn run_trials(example: Example, n: usize, s: usize, trials: usize, seed: u64) -> Result<TrialSummary> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let loss_of =
        |x: Matrix, y: &Matrix, dist: &JointDistribution, loss: LossSpec| expected_loss(&CompletionModel::Dense(x), y, dist, loss);
    let (losses, closed_form, lower_bound) = match example {
        Example::One => {
            let inst = build_example1(n, s, seed)?;
            let losses = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let sm = sample(&inst.dist, s, &inst.y, derive_seed(seed, t as u64 + 1))?;
                    loss_of(example1_erm(&inst, &sm), &inst.y, &inst.dist, LossSpec::clipped_absolute())
                })
                .collect::<Result<Vec<f64>>>()?;
            (losses, example1_expected_loss(n, s), example1_lower_bound(n, s))
        }
        Example::Two => {
            let inst = build_example2(n, s)?;
            let losses = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let sm = sample(&inst.dist, s, &inst.y, derive_seed(seed, t as u64 + 1))?;
                    loss_of(example2_erm(&inst, &sm), &inst.y, &inst.dist, LossSpec::absolute())
                })
                .collect::<Result<Vec<f64>>>()?;
            (losses, example2_expected_loss(s), EXAMPLE2_LOWER_BOUND)
        }
    };
    let k = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / k;
    let std_error = if losses.len() > 1 { (losses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt() } else { 0.0 };
    Ok(TrialSummary { losses, mean, std_error, closed_form, lower_bound })
}

//! Smoothing sweep: rank-truncated factored fits on a synthetic
//! non-product sampling distribution for a range of smoothing levels.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{config_hash, ExperimentReport, GridPoint, Summary};
use crate::distributions::{sample, JointDistribution, SampleSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::LossSpec;
use crate::model::CompletionModel;
use crate::rng::{derive_seed_path, rng_from_seed};
use crate::solvers::{fit_factored_sgd, lambda_max, SolverConfig};
use crate::weighting::{empirical_marginals, smooth, weighted_trace_norm, MarginalWeights, SmoothingConfig};

/// Smoothing levels in the order they are reported.
pub const SWEEP_ALPHAS: [f64; 5] = [1.0, 0.9, 0.5, 0.3, 0.0];

/// Ratings are clipped to `[-RATING_CLIP, RATING_CLIP]`.
const RATING_CLIP: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDistribution {
    /// [`block_distribution`].
    Blocks,
    Uniform,
}

impl SweepDistribution {
    fn build(self, n: usize, m: usize) -> Result<JointDistribution> {
        match self {
            SweepDistribution::Blocks => block_distribution(n, m),
            SweepDistribution::Uniform => JointDistribution::uniform(n, m),
        }
    }
}

/// Rows and columns fall into 4 contiguous groups; block `(a, b)` has mass
/// proportional to `8 / 2^max(a, b)` spread evenly over its cells. Block
/// masses are in ratios 8:4:2:1 and the law is not a product.
pub fn block_distribution(n: usize, m: usize) -> Result<JointDistribution> {
    if n < 4 || m < 4 {
        return Err(Error::InvalidParameter(format!("block layout needs at least 4x4 cells, got {n}x{m}")));
    }
    let group = |i: usize, len: usize| i * 4 / len;
    let mut row_size = [0usize; 4];
    let mut col_size = [0usize; 4];
    (0..n).for_each(|i| row_size[group(i, n)] += 1);
    (0..m).for_each(|j| col_size[group(j, m)] += 1);
    let mut weights = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let (a, b) = (group(i, n), group(j, m));
            let block = 8.0 / f64::from(1u32 << a.max(b));
            weights.push(block / (row_size[a] * col_size[b]) as f64);
        }
    }
    JointDistribution::from_weights(n, m, &weights)
}

/// `top · 10^{-t/per_decade}` for `t = 1, …, per_decade · decades`.
pub fn lambda_grid(top: f64, per_decade: usize, decades: usize) -> Vec<f64> {
    (1..=per_decade * decades).map(|t| top * 10f64.powf(-(t as f64) / per_decade as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub n: usize,
    pub m: usize,
    pub distribution: SweepDistribution,
    /// Rank of the ground truth.
    pub truth_rank: usize,
    /// Standard deviation of the noise added before clipping.
    pub noise: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub alphas: Vec<f64>,
    pub ranks: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub lambda_per_decade: usize,
    pub lambda_decades: usize,
    /// Share of the training sample held out to choose `λ`.
    pub validation_fraction: f64,
    pub epochs: usize,
    pub step_size: f64,
    pub tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: 100,
            m: 100,
            distribution: SweepDistribution::Blocks,
            truth_rank: 5,
            noise: 0.5,
            train_samples: 3000,
            test_samples: 3000,
            alphas: SWEEP_ALPHAS.to_vec(),
            ranks: vec![10],
            repetitions: 10,
            seed: 0,
            lambda_per_decade: 8,
            lambda_decades: 4,
            validation_fraction: 0.2,
            epochs: 200,
            step_size: 0.005,
            tol: 1e-6,
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 || self.train_samples < 2 || self.test_samples == 0 {
            return Err(Error::InvalidParameter("need repetitions, at least 2 training and 1 test sample".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!("validation fraction must lie in (0, 1), got {}", self.validation_fraction)));
        }
        if self.lambda_per_decade == 0 || self.lambda_decades == 0 {
            return Err(Error::InvalidParameter("lambda grid is empty".into()));
        }
        for &a in &self.alphas {
            SmoothingConfig::new(a)?;
        }
        Ok(())
    }
}

/// Clipped rank-`rank` ratings: `clip(U Vᵀ + noise · N)` with Gaussian factors
/// scaled so `U Vᵀ` has unit-variance entries.
fn synthetic_ratings(n: usize, m: usize, rank: usize, noise: f64, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    let scale = (rank as f64).powf(-0.25);
    let mut draw = |r: usize, c: usize| {
        Matrix::from_fn(r, c, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
    };
    let u = draw(n, rank);
    let v = draw(m, rank);
    let mut y = u * v.transpose();
    for value in y.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *value = (*value + noise * z).clamp(-RATING_CLIP, RATING_CLIP);
    }
    y
}

fn rmse(model: &CompletionModel, sample: &SampleSet) -> Result<f64> {
    Ok(crate::loss::empirical_loss(model, sample, LossSpec::squared())?.sqrt())
}

fn split_for_validation(train: &SampleSet, fraction: f64, seed: u64) -> Result<(SampleSet, SampleSet)> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let held = ((train.len() as f64 * fraction).round() as usize).clamp(1, train.len() - 1);
    let (n, m) = train.shape();
    let pick = |ts: &[usize]| {
        SampleSet::new(n, m, ts.iter().map(|&t| train.indexes()[t]).collect(), ts.iter().map(|&t| train.values()[t]).collect())
    };
    Ok((pick(&order[held..])?, pick(&order[..held])?))
}

struct CellResult {
    test_rmse: f64,
    lambda: f64,
    norm: f64,
}

/// Chooses `λ` on a held-out slice of the training sample, refits on the
/// whole training sample and scores on the test sample.
fn fit_cell(train: &SampleSet, test: &SampleSet, w: &MarginalWeights, k: usize, cfg: &SweepConfig, seed: u64) -> Result<CellResult> {
    let (fit_part, validation) = split_for_validation(train, cfg.validation_fraction, derive_seed_path(seed, &[0]))?;
    let solver = |lambda: f64| {
        SolverConfig::sgd(lambda, k)
            .with_max_iters(cfg.epochs)
            .with_step_size(cfg.step_size)
            .with_tol(cfg.tol)
            .with_seed(derive_seed_path(seed, &[1]))
    };
    let loss = LossSpec::squared();
    let mut best: Option<(f64, f64)> = None;
    for lambda in lambda_grid(lambda_max(train, w)?, cfg.lambda_per_decade, cfg.lambda_decades) {
        let score = match fit_factored_sgd(&fit_part, w, loss, &solver(lambda)) {
            Ok(fit) => rmse(&fit.model, &validation)?,
            Err(Error::Divergence { .. }) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(b, _)| score < b) {
            best = Some((score, lambda));
        }
    }
    let (_, lambda) =
        best.ok_or_else(|| Error::InvalidParameter("SGD diverged at every grid value of lambda; reduce the step size".into()))?;
    let fit = fit_factored_sgd(train, w, loss, &solver(lambda))?;
    Ok(CellResult { test_rmse: rmse(&fit.model, test)?, lambda, norm: weighted_trace_norm(&fit.model.to_dense(), w)? })
}

/// Test RMSE of the cross-validated factored fit for every `(α, k)`, with
/// weights `α p̂ + (1 - α)/n` built from the training sample's empirical
/// marginals `p̂`.
///
/// Repetition `r` draws one ground truth, one training and one test sample
/// shared by every `(α, k)`. Reports follow the order of `alphas`, then
/// `ranks`.
pub fn run_smoothing_sweep(cfg: &SweepConfig) -> Result<Vec<ExperimentReport>> {
    cfg.validate()?;
    let hash = config_hash(cfg)?;
    let dist = cfg.distribution.build(cfg.n, cfg.m)?;
    let data = (0..cfg.repetitions as u64)
        .map(|r| {
            let y = synthetic_ratings(cfg.n, cfg.m, cfg.truth_rank, cfg.noise, derive_seed_path(cfg.seed, &[r, 0]));
            let train = sample(&dist, cfg.train_samples, &y, derive_seed_path(cfg.seed, &[r, 1]))?;
            let test = sample(&dist, cfg.test_samples, &y, derive_seed_path(cfg.seed, &[r, 2]))?;
            Ok((train, test))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tasks = Vec::new();
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        for &k in &cfg.ranks {
            for r in 0..cfg.repetitions {
                tasks.push((ai, alpha, k, r));
            }
        }
    }
    let results: Vec<(Result<CellResult>, f64)> = tasks
        .par_iter()
        .map(|&(_, alpha, k, r)| {
            let start = Instant::now();
            let (train, test) = &data[r];
            let out = empirical_marginals(train)
                .map(|p| smooth(&p, SmoothingConfig::new(alpha).expect("validated")))
                .and_then(|w| fit_cell(train, test, &w, k, cfg, derive_seed_path(cfg.seed, &[r as u64, 3, k as u64])));
            (out, start.elapsed().as_secs_f64())
        })
        .collect();

    let seeds: Vec<u64> = (0..cfg.repetitions as u64).map(|r| derive_seed_path(cfg.seed, &[r, 1])).collect();
    let mut reports = Vec::new();
    for (group, chunk) in tasks.chunks(cfg.repetitions).zip(results.chunks(cfg.repetitions)) {
        let (_, alpha, k, _) = group[0];
        let ok: Vec<&CellResult> = chunk.iter().filter_map(|(r, _)| r.as_ref().ok()).collect();
        let values: Vec<f64> = ok.iter().map(|c| c.test_rmse).collect();
        let mean = |f: fn(&CellResult) -> f64| (!ok.is_empty()).then(|| ok.iter().map(|c| f(c)).sum::<f64>() / ok.len() as f64);
        reports.push(ExperimentReport {
            scenario: "smoothing".into(),
            point: GridPoint {
                n: cfg.n,
                m: cfg.m,
                s: cfg.train_samples,
                nu: None,
                alpha: Some(alpha),
                weighting: "smoothed_empirical".into(),
                rank: Some(k),
            },
            metric: "test_rmse".into(),
            summary: Summary::of(&values).unwrap_or(Summary { mean: f64::NAN, std_error: f64::NAN, count: 0 }),
            mean_norm: mean(|c| c.norm),
            mean_lambda: mean(|c| c.lambda),
            failures: chunk.len() - ok.len(),
            saturated: false,
            runtime_secs: chunk.iter().map(|c| c.1).sum(),
            seeds: seeds.clone(),
            config_hash: hash.clone(),
        });
    }
    Ok(reports)
}

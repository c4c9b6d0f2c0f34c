//! Transductive evaluation: a fixed pool of distinct cells split at random
//! into train and test halves, weighted by the whole pool's marginals.

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{add_noise, config_hash, ExperimentReport, GridPoint, SignalSpec, Summary};
use crate::distributions::{transductive_split, JointDistribution};
use crate::error::{Error, Result};
use crate::loss::{empirical_loss_dense, LossKind, LossSpec};
use crate::rng::{derive_seed_path, rng_from_seed};
use crate::solvers::{erm_in_ball, SolverConfig};
use crate::weighting::{transductive_smoothed, NormBudget};

/// Draws cells from `dist` until `count` distinct ones are collected, in
/// order of first appearance.
pub fn draw_distinct_cells(dist: &JointDistribution, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let support = dist.mass().iter().filter(|&&p| p > 0.0).count();
    if count > support {
        return Err(Error::InvalidParameter(format!("cannot draw {count} distinct cells from a support of {support}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut cells = Vec::with_capacity(count);
    while cells.len() < count {
        let cell = dist.draw(&mut rng);
        if seen.insert(cell) {
            cells.push(cell);
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransductiveConfig {
    /// Matrix side; the truth is a [`SignalSpec`] matrix plus noise.
    pub n: usize,
    pub nu: f64,
    /// Size of each half; the pool holds `2 s` distinct cells drawn uniformly.
    pub s: usize,
    /// Squared radius `r` of the weighted trace-norm ball.
    pub r: f64,
    pub loss: LossKind,
    pub repetitions: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Fit on the test half and score on the training half.
    pub swap: bool,
}

impl Default for TransductiveConfig {
    fn default() -> Self {
        Self { n: 40, nu: 0.1, s: 400, r: 2.0, loss: LossKind::Absolute, repetitions: 20, seed: 0, max_iters: 300, swap: false }
    }
}

/// Mean test loss `L̂_T` of [`erm_in_ball`] fitted on `S` over random
/// splits of one pool, weighted by the smoothed empirical marginals of the
/// pool `S̄ = S ∪ T`.
///
/// The pool and truth are fixed by `seed`; repetition `t` only changes the
/// split.
pub fn run_transductive(cfg: &TransductiveConfig) -> Result<ExperimentReport> {
    if cfg.repetitions == 0 || cfg.s == 0 {
        return Err(Error::InvalidParameter("need at least one repetition and a nonempty pool".into()));
    }
    let hash = config_hash(cfg)?;
    let budget = NormBudget::new(cfg.r)?;
    let loss = LossSpec::from_kind(cfg.loss);
    let truth = add_noise(&SignalSpec::new(cfg.n, derive_seed_path(cfg.seed, &[0])).matrix()?, cfg.nu, derive_seed_path(cfg.seed, &[1]));
    let dist = JointDistribution::uniform(cfg.n, cfg.n)?;
    let cells = draw_distinct_cells(&dist, 2 * cfg.s, derive_seed_path(cfg.seed, &[2]))?;
    let solver = SolverConfig::default().with_max_iters(cfg.max_iters);
    let seeds: Vec<u64> = (0..cfg.repetitions as u64).map(|t| derive_seed_path(cfg.seed, &[3, t])).collect();

    let start = Instant::now();
    let results: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let split = transductive_split(&cells, &truth, seed)?;
            let w = transductive_smoothed(&split.pool)?;
            let (fit_on, score_on) = if cfg.swap { (&split.test, &split.train) } else { (&split.train, &split.test) };
            let fit = erm_in_ball(fit_on, &w, budget, loss, &solver)?;
            Ok((empirical_loss_dense(&fit.model.to_dense(), score_on, loss)?, fit.weighted_norm))
        })
        .collect::<Result<_>>()?;

    let losses: Vec<f64> = results.iter().map(|r| r.0).collect();
    Ok(ExperimentReport {
        scenario: if cfg.swap { "transductive.swapped" } else { "transductive" }.into(),
        point: GridPoint {
            n: cfg.n,
            m: cfg.n,
            s: cfg.s,
            nu: Some(cfg.nu),
            alpha: Some(0.5),
            weighting: "transductive_smoothed".into(),
            rank: Some(2),
        },
        metric: "test_loss".into(),
        summary: Summary::of(&losses)?,
        mean_norm: Some(results.iter().map(|r| r.1).sum::<f64>() / results.len() as f64),
        mean_lambda: None,
        failures: 0,
        saturated: false,
        runtime_secs: start.elapsed().as_secs_f64(),
        seeds,
        config_hash: hash,
    })
}

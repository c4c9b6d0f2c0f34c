//! Minimum-norm completion of a random rank-2 signal under uniform sampling:
//! the sample-size search and the noisy excess-error grid.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{add_noise, config_hash, ExperimentReport, GridPoint, SignalSpec, Summary, Weighting};
use crate::distributions::{sample, JointDistribution};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::derive_seed_path;
use crate::solvers::{min_norm_fit, SolverConfig};

/// Repetitions evaluated together before an early-stopping check.
const CHUNK: usize = 8;

/// `||X - M||²_F / (n m)`.
pub fn reconstruction_error(x: &Matrix, m: &Matrix) -> f64 {
    (x - m).norm_squared() / (m.nrows() * m.ncols()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleComplexityConfig {
    pub sizes: Vec<usize>,
    pub target_error: f64,
    pub weightings: Vec<Weighting>,
    pub repetitions: usize,
    pub seed: u64,
    /// Relative residual tolerance of the min-norm solver.
    pub tol: f64,
    pub max_iters: usize,
    /// Abandon a probe as soon as its mean error provably exceeds the target.
    pub early_stop: bool,
}

impl Default for SampleComplexityConfig {
    fn default() -> Self {
        Self {
            sizes: vec![60, 120],
            target_error: 0.1,
            weightings: vec![Weighting::Uniform, Weighting::SmoothedEmpirical],
            repetitions: 100,
            seed: 0,
            tol: 1e-3,
            max_iters: 5000,
            early_stop: true,
        }
    }
}

/// Result of the sample-size search for one `(n, weighting)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexityOutcome {
    pub n: usize,
    pub weighting: Weighting,
    /// Smallest grid sample size meeting the target; `None` when saturated.
    pub required_s: Option<usize>,
    /// Errors at `required_s` (or at `s = n²` when saturated).
    pub report: ExperimentReport,
    /// Every probed sample size, in probe order. Early-stopped probes have
    /// `count` below the repetition count.
    pub probes: Vec<ExperimentReport>,
}

struct Repetition {
    truth: Matrix,
    sample_seed: u64,
}

struct Probe {
    errors: Vec<f64>,
    norms: Vec<f64>,
    failures: usize,
    seeds: Vec<u64>,
    runtime: f64,
}

impl Probe {
    fn mean_error(&self) -> f64 {
        if self.failures > 0 {
            f64::INFINITY
        } else {
            self.errors.iter().sum::<f64>() / self.errors.len() as f64
        }
    }
}

fn fit_error(
    truth: &Matrix,
    y: &Matrix,
    s: usize,
    sample_seed: u64,
    weighting: Weighting,
    epsilon: f64,
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    let dist = JointDistribution::uniform(truth.nrows(), truth.ncols())?;
    let observed = sample(&dist, s, y, sample_seed)?;
    let w = weighting.weights(&observed)?;
    let fit = min_norm_fit(&observed, &w, epsilon, cfg)?;
    Ok((reconstruction_error(&fit.model.to_dense(), truth), fit.weighted_norm))
}

fn run_probe(reps: &[Repetition], s: usize, weighting: Weighting, cfg: &SampleComplexityConfig, solver: &SolverConfig) -> Probe {
    let budget = cfg.target_error * reps.len() as f64;
    let mut probe = Probe { errors: Vec::new(), norms: Vec::new(), failures: 0, seeds: Vec::new(), runtime: 0.0 };
    for chunk in reps.chunks(CHUNK) {
        let results: Vec<(Result<(f64, f64)>, f64)> = chunk
            .par_iter()
            .map(|rep| {
                let start = Instant::now();
                let r = fit_error(&rep.truth, &rep.truth, s, rep.sample_seed, weighting, 0.0, solver);
                (r, start.elapsed().as_secs_f64())
            })
            .collect();
        for (rep, (r, secs)) in chunk.iter().zip(results) {
            probe.seeds.push(rep.sample_seed);
            probe.runtime += secs;
            match r {
                Ok((e, norm)) => {
                    probe.errors.push(e);
                    probe.norms.push(norm);
                }
                Err(_) => probe.failures += 1,
            }
        }
        if cfg.early_stop && (probe.failures > 0 || probe.errors.iter().sum::<f64>() > budget) {
            break;
        }
    }
    probe
}

fn probe_report(scenario: &str, n: usize, s: usize, weighting: Weighting, probe: &Probe, hash: &str) -> ExperimentReport {
    let summary = if probe.errors.is_empty() {
        Summary { mean: f64::INFINITY, std_error: 0.0, count: 0 }
    } else {
        Summary::of(&probe.errors).expect("non-empty")
    };
    let mean_norm = (!probe.norms.is_empty()).then(|| probe.norms.iter().sum::<f64>() / probe.norms.len() as f64);
    ExperimentReport {
        scenario: scenario.into(),
        point: GridPoint { n, m: n, s, nu: Some(0.0), weighting: weighting.as_str().into(), rank: Some(2), ..GridPoint::default() },
        metric: "reconstruction_mse".into(),
        summary,
        mean_norm,
        mean_lambda: None,
        failures: probe.failures,
        saturated: false,
        runtime_secs: probe.runtime,
        seeds: probe.seeds.clone(),
        config_hash: hash.into(),
    }
}

/// Binary search, in steps of `n/2` samples, for the smallest `s` whose
/// mean reconstruction error over the repetitions is at most the target.
///
/// Noiseless protocol: `Y = M`, fits use [`min_norm_fit`] with `ε = 0`.
/// Repetition `r` at size `n` uses the same signal and the same stream of
/// sample draws for every probe and weighting, so a larger probe sees a
/// superset of a smaller probe's observations.
pub fn run_sample_complexity(cfg: &SampleComplexityConfig) -> Result<Vec<SampleComplexityOutcome>> {
    if cfg.repetitions == 0 || !(cfg.target_error > 0.0) {
        return Err(Error::InvalidParameter("need at least one repetition and a positive target error".into()));
    }
    let hash = config_hash(cfg)?;
    let solver = SolverConfig::min_norm().with_tol(cfg.tol).with_max_iters(cfg.max_iters);
    let mut outcomes = Vec::new();
    for &n in &cfg.sizes {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("matrix size must be at least 2, got {n}")));
        }
        let reps = (0..cfg.repetitions as u64)
            .map(|r| {
                let truth = SignalSpec::new(n, derive_seed_path(cfg.seed, &[n as u64, r, 0])).matrix()?;
                Ok(Repetition { truth, sample_seed: derive_seed_path(cfg.seed, &[n as u64, r, 1]) })
            })
            .collect::<Result<Vec<_>>>()?;
        let step = n / 2;
        let top = n * n / step;
        for &weighting in &cfg.weightings {
            let mut probes: BTreeMap<usize, Probe> = BTreeMap::new();
            let mut order = Vec::new();
            let mut passes = |k: usize, probes: &mut BTreeMap<usize, Probe>| -> bool {
                let probe = probes.entry(k).or_insert_with(|| {
                    order.push(k);
                    run_probe(&reps, k * step, weighting, cfg, &solver)
                });
                probe.errors.len() == cfg.repetitions && probe.mean_error() <= cfg.target_error
            };
            let required = if passes(top, &mut probes) {
                let (mut lo, mut hi) = (0, top);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if passes(mid, &mut probes) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Some(hi)
            } else {
                None
            };
            let k = required.unwrap_or(top);
            let mut report = probe_report("samplecomplexity", n, k * step, weighting, &probes[&k], &hash);
            report.saturated = required.is_none();
            let probe_rows =
                order.iter().map(|&k| probe_report("samplecomplexity.probe", n, k * step, weighting, &probes[&k], &hash)).collect();
            outcomes.push(SampleComplexityOutcome { n, weighting, required_s: required.map(|k| k * step), report, probes: probe_rows });
        }
    }
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcessErrorConfig {
    pub n: usize,
    pub nus: Vec<f64>,
    pub samples_per_row: Vec<usize>,
    pub weightings: Vec<Weighting>,
    pub repetitions: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ExcessErrorConfig {
    fn default() -> Self {
        Self {
            n: 200,
            nus: vec![0.0, 0.05, 0.1, 0.2],
            samples_per_row: vec![5, 10, 15, 20, 30, 40],
            weightings: vec![Weighting::Uniform, Weighting::SmoothedEmpirical],
            repetitions: 20,
            seed: 0,
            tol: 1e-3,
            max_iters: 5000,
        }
    }
}

/// Mean reconstruction error of the min-norm fit with `ε = ν²` for every
/// `(ν, s, weighting)` on the grid, with `Y = M + ν N`.
///
/// Repetition `r` fixes `M`, `N` and the sample stream across the grid.
/// Failed fits are counted in `failures` and left out of the mean; a point
/// where every fit failed reports a NaN mean with count 0.
pub fn run_excess_error(cfg: &ExcessErrorConfig) -> Result<Vec<ExperimentReport>> {
    if cfg.repetitions == 0 || cfg.n < 2 {
        return Err(Error::InvalidParameter("need n >= 2 and at least one repetition".into()));
    }
    if let Some(nu) = cfg.nus.iter().find(|nu| !(**nu >= 0.0)) {
        return Err(Error::InvalidParameter(format!("noise level must be nonnegative, got {nu}")));
    }
    let hash = config_hash(cfg)?;
    let solver = SolverConfig::min_norm().with_tol(cfg.tol).with_max_iters(cfg.max_iters);
    let n = cfg.n;
    let signals = (0..cfg.repetitions as u64)
        .map(|r| SignalSpec::new(n, derive_seed_path(cfg.seed, &[r, 0])).matrix())
        .collect::<Result<Vec<_>>>()?;

    let mut tasks = Vec::new();
    for &nu in &cfg.nus {
        for &spr in &cfg.samples_per_row {
            for &weighting in &cfg.weightings {
                for r in 0..cfg.repetitions {
                    tasks.push((nu, spr * n, weighting, r));
                }
            }
        }
    }
    let results: Vec<(Result<(f64, f64)>, f64)> = tasks
        .par_iter()
        .map(|&(nu, s, weighting, r)| {
            let start = Instant::now();
            let truth = &signals[r];
            let y = add_noise(truth, nu, derive_seed_path(cfg.seed, &[r as u64, 1]));
            let sample_seed = derive_seed_path(cfg.seed, &[r as u64, 2]);
            let out = fit_error(truth, &y, s, sample_seed, weighting, nu * nu, &solver);
            (out, start.elapsed().as_secs_f64())
        })
        .collect();

    let seeds: Vec<u64> = (0..cfg.repetitions as u64).map(|r| derive_seed_path(cfg.seed, &[r, 2])).collect();
    let mut reports = Vec::new();
    for (group, chunk) in tasks.chunks(cfg.repetitions).zip(results.chunks(cfg.repetitions)) {
        let (nu, s, weighting, _) = group[0];
        let ok: Vec<(f64, f64)> = chunk.iter().filter_map(|(r, _)| r.as_ref().ok().copied()).collect();
        let errors: Vec<f64> = ok.iter().map(|e| e.0).collect();
        let summary = Summary::of(&errors).unwrap_or(Summary { mean: f64::NAN, std_error: f64::NAN, count: 0 });
        reports.push(ExperimentReport {
            scenario: "excesserror".into(),
            point: GridPoint { n, m: n, s, nu: Some(nu), weighting: weighting.as_str().into(), rank: Some(2), ..GridPoint::default() },
            metric: "reconstruction_mse".into(),
            summary,
            mean_norm: (!ok.is_empty()).then(|| ok.iter().map(|e| e.1).sum::<f64>() / ok.len() as f64),
            mean_lambda: None,
            failures: chunk.len() - ok.len(),
            saturated: false,
            runtime_secs: chunk.iter().map(|c| c.1).sum(),
            seeds: seeds.clone(),
            config_hash: hash.clone(),
        });
    }
    Ok(reports)
}

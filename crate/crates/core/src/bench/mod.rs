//! Experiment harness: the signal construction, seeded simulation protocols,
//! repetition statistics and CSV/JSON reporting.

mod simulate;
mod sweep;
mod transductive;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributions::{JointDistribution, SampleSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::LossSpec;
use crate::model::CompletionModel;
use crate::rng::rng_from_seed;
use crate::weighting::{smooth_empirical, MarginalWeights};

pub use simulate::{
    reconstruction_error, run_excess_error, run_sample_complexity, ExcessErrorConfig, SampleComplexityConfig, SampleComplexityOutcome,
};
pub use sweep::{block_distribution, lambda_grid, run_smoothing_sweep, SweepConfig, SweepDistribution, SWEEP_ALPHAS};
pub use transductive::{draw_distinct_cells, run_transductive, TransductiveConfig};

/// `Σ_ij p(i, j) ℓ(X_ij, Y_ij)` by full enumeration.
pub fn exact_expected_loss(model: &CompletionModel, truth: &Matrix, dist: &JointDistribution, loss: LossSpec) -> Result<f64> {
    crate::loss::expected_loss(model, truth, dist, loss)
}

/// `(1/s) Σ_t ℓ(X_{i_t j_t}, y_t)`, duplicates counted.
pub fn empirical_loss(model: &CompletionModel, sample: &SampleSet, loss: LossSpec) -> Result<f64> {
    crate::loss::empirical_loss(model, sample, loss)
}

/// A random `n × n` matrix of rank `rank` whose nonzero singular values all
/// equal `n/√rank`, so `||M||_F = n`. The singular vectors come from QR
/// factorizations of Gaussian matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub n: usize,
    pub rank: usize,
    pub seed: u64,
}

impl SignalSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, rank: 2, seed }
    }

    pub fn matrix(&self) -> Result<Matrix> {
        if self.rank == 0 || self.rank > self.n {
            return Err(Error::InvalidParameter(format!("rank {} must lie in 1..={}", self.rank, self.n)));
        }
        let mut rng = rng_from_seed(self.seed);
        let mut gaussian = || Matrix::from_fn(self.n, self.rank, |_, _| StandardNormal.sample(&mut rng));
        let u = gaussian().qr().q();
        let v = gaussian().qr().q();
        let sigma = self.n as f64 / (self.rank as f64).sqrt();
        Ok(u * v.transpose() * sigma)
    }
}

/// `Y = M + ν N` with `N` standard normal.
pub fn add_noise(m: &Matrix, nu: f64, seed: u64) -> Matrix {
    if nu == 0.0 {
        return m.clone();
    }
    let mut rng = rng_from_seed(seed);
    m.map(|v| {
        let z: f64 = StandardNormal.sample(&mut rng);
        v + nu * z
    })
}

/// Weightings compared by the simulation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    SmoothedEmpirical,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Uniform => "uniform",
            Weighting::SmoothedEmpirical => "smoothed_empirical",
        }
    }

    pub fn weights(self, sample: &SampleSet) -> Result<MarginalWeights> {
        match self {
            Weighting::Uniform => Ok(MarginalWeights::uniform(sample.shape().0, sample.shape().1)),
            Weighting::SmoothedEmpirical => smooth_empirical(sample),
        }
    }
}

/// Mean, standard error of the mean and count of a set of repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl Summary {
    /// Values are summed in the order given.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("cannot summarize zero repetitions".into()));
        }
        let count = values.len();
        let k = count as f64;
        let mean = values.iter().sum::<f64>() / k;
        let std_error = if count > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, std_error, count })
    }
}

/// Parameter values identifying one grid point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    pub weighting: String,
    pub rank: Option<usize>,
}

/// One aggregated grid point of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub point: GridPoint,
    /// Name of the metric summarized in `summary`.
    pub metric: String,
    pub summary: Summary,
    /// Mean weighted trace norm of the fits.
    pub mean_norm: Option<f64>,
    /// Mean regularization weight chosen by validation.
    pub mean_lambda: Option<f64>,
    /// Repetitions whose fit failed (e.g. infeasible loss ceiling).
    pub failures: usize,
    /// Set when a search ran out of grid without meeting its target.
    pub saturated: bool,
    pub runtime_secs: f64,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

/// Short hex digest of a configuration's JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(config)?);
    Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct ReportRow<'a> {
    scenario: &'a str,
    n: usize,
    m: usize,
    s: usize,
    nu: Option<f64>,
    alpha: Option<f64>,
    weighting: &'a str,
    rank: Option<usize>,
    metric: &'a str,
    mean: f64,
    std_error: f64,
    count: usize,
    mean_norm: Option<f64>,
    mean_lambda: Option<f64>,
    failures: usize,
    saturated: bool,
    runtime_secs: f64,
    seeds: String,
    config_hash: &'a str,
}

/// CSV header written by [`write_reports_csv`].
pub const REPORT_HEADER: &str = "scenario,n,m,s,nu,alpha,weighting,rank,metric,mean,std_error,count,mean_norm,mean_lambda,failures,saturated,runtime_secs,seeds,config_hash";

/// Writes one row per report; seeds are `;`-separated and empty optional
/// fields stay blank.
pub fn write_reports_csv<W: Write>(writer: W, reports: &[ExperimentReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    if reports.is_empty() {
        out.write_record(REPORT_HEADER.split(','))?;
    }
    for r in reports {
        let seeds = r.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
        out.serialize(ReportRow {
            scenario: &r.scenario,
            n: r.point.n,
            m: r.point.m,
            s: r.point.s,
            nu: r.point.nu,
            alpha: r.point.alpha,
            weighting: &r.point.weighting,
            rank: r.point.rank,
            metric: &r.metric,
            mean: r.summary.mean,
            std_error: r.summary.std_error,
            count: r.summary.count,
            mean_norm: r.mean_norm,
            mean_lambda: r.mean_lambda,
            failures: r.failures,
            saturated: r.saturated,
            runtime_secs: r.runtime_secs,
            seeds,
            config_hash: &r.config_hash,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_reports_file(path: &Path, reports: &[ExperimentReport]) -> Result<()> {
    write_reports_csv(BufWriter::new(File::create(path)?), reports)
}

/// Run record written next to the CSV outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub outputs: Vec<String>,
    pub crate_version: String,
}

impl Manifest {
    pub fn new<T: Serialize>(command: &str, seed: u64, config: &T, outputs: Vec<String>) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config)?,
            config_hash: config_hash(config)?,
            outputs,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let file = File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }
}

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use wtrace::adversarial::{run_trials, Example};
use wtrace::bench::{
    run_excess_error, run_sample_complexity, run_smoothing_sweep, run_transductive, write_reports_file, ExcessErrorConfig,
    ExperimentReport, Manifest, SampleComplexityConfig, SweepConfig, SweepDistribution, TransductiveConfig, Weighting,
};
use wtrace::complexity::{estimate_rademacher, DEFAULT_SIGN_DRAWS};
use wtrace::distributions::{sample, JointDistribution, SampleSet};
use wtrace::loss::{LossKind, LossSpec};
use wtrace::solvers::{erm_in_ball, fit_factored_sgd, fit_proximal, min_norm_fit, SolverConfig};
use wtrace::weighting::{smooth_empirical, MarginalWeights, NormBudget};
use wtrace::{Error, Matrix, Result};

/// Weighted trace-norm matrix completion experiments.
#[derive(Debug, Parser)]
#[command(name = "wtrace", version)]
struct Cli {
    /// Base seed; overrides the seed in --config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSV files and manifest.json.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// JSON file with the subcommand's configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Min-norm completion of a random rank-2 signal.
    #[command(subcommand)]
    Simulate(Simulate),
    /// Smoothing-level sweeps.
    #[command(subcommand)]
    Sweep(Sweep),
    /// Train/test split of a fixed pool with pool-based weights.
    Transductive(TransductiveArgs),
    /// Fit a model to a sample CSV.
    Fit(FitArgs),
    /// Monte-Carlo Rademacher complexity of a weighted trace-norm ball.
    Rademacher(RademacherArgs),
    /// Trials of the lower-bound constructions.
    Adversarial(AdversarialArgs),
}

#[derive(Debug, Subcommand)]
enum Simulate {
    /// Smallest sample size reaching a target reconstruction error.
    Samplecomplexity(SampleComplexityArgs),
    /// Reconstruction error over a grid of sample sizes and noise levels.
    Excesserror(ExcessErrorArgs),
}

#[derive(Debug, Subcommand)]
enum Sweep {
    /// Test RMSE of cross-validated factored fits per smoothing level.
    Smoothing(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightingArg {
    Uniform,
    SmoothedEmpirical,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Uniform => Weighting::Uniform,
            WeightingArg::SmoothedEmpirical => Weighting::SmoothedEmpirical,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    Squared,
    Absolute,
    ClippedAbsolute,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Squared => LossKind::Squared,
            LossArg::Absolute => LossKind::Absolute,
            LossArg::ClippedAbsolute => LossKind::ClippedAbsolute,
        }
    }
}

#[derive(Debug, Args)]
struct SampleComplexityArgs {
    /// Matrix sizes n.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    target_error: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    weightings: Option<Vec<WeightingArg>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct ExcessErrorArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Noise levels ν.
    #[arg(long, value_delimiter = ',')]
    nus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    samples_per_row: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    weightings: Option<Vec<WeightingArg>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepDistributionArg {
    Blocks,
    Uniform,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    distribution: Option<SweepDistributionArg>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Factor ranks k.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long)]
    test_samples: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct TransductiveArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Size of each half of the pool.
    #[arg(long)]
    s: Option<usize>,
    /// Squared ball radius.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Fit on the test half and score on the training half.
    #[arg(long)]
    swap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
enum Method {
    #[default]
    Proximal,
    Sgd,
    MinNorm,
    Erm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct FitConfig {
    samples: Option<PathBuf>,
    /// Weights JSON; the smoothed empirical marginals of the sample when absent.
    weights: Option<PathBuf>,
    rows: Option<usize>,
    cols: Option<usize>,
    method: Method,
    loss: LossKind,
    lambda: f64,
    rank: Option<usize>,
    epsilon: f64,
    r: f64,
    max_iters: Option<usize>,
    tol: Option<f64>,
    step_size: Option<f64>,
    seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            samples: None,
            weights: None,
            rows: None,
            cols: None,
            method: Method::Proximal,
            loss: LossKind::Squared,
            lambda: 0.0,
            rank: None,
            epsilon: 0.0,
            r: 1.0,
            max_iters: None,
            tol: None,
            step_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Sample CSV with header t,i,j,value.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Factor rank (sgd).
    #[arg(long)]
    rank: Option<usize>,
    /// Training-loss ceiling (min-norm).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Squared ball radius (erm).
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct RademacherConfig {
    /// Sample CSV; otherwise `s` cells are drawn uniformly from an `n × m` grid.
    samples: Option<PathBuf>,
    weights: Option<PathBuf>,
    n: usize,
    m: usize,
    s: Vec<usize>,
    r: f64,
    draws: usize,
    seed: u64,
}

impl Default for RademacherConfig {
    fn default() -> Self {
        Self { samples: None, weights: None, n: 50, m: 50, s: vec![250, 500, 1000, 2000, 4000], r: 1.0, draws: DEFAULT_SIGN_DRAWS, seed: 0 }
    }
}

#[derive(Debug, Args)]
struct RademacherArgs {
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    s: Option<Vec<usize>>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct AdversarialConfig {
    example: u8,
    n: usize,
    s: usize,
    trials: usize,
    seed: u64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self { example: 1, n: 60, s: 1800, trials: 200, seed: 0 }
    }
}

#[derive(Debug, Args)]
struct AdversarialArgs {
    /// 1 or 2.
    #[arg(long)]
    example: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_reader(BufReader::new(File::open(p)?))?),
        None => Ok(T::default()),
    }
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

struct Output<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Output<'_> {
    fn reports(&mut self, name: &str, reports: &[ExperimentReport]) -> Result<()> {
        write_reports_file(&self.dir.join(name), reports)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<()> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(self.dir.join(name))?));
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(self.dir.join(name))?), value)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn manifest<T: Serialize>(self, command: &str, seed: u64, config: &T) -> Result<()> {
        Manifest::new(command, seed, config, self.files)?.write(self.dir)
    }
}

fn read_sample(path: &Path, shape: Option<(usize, usize)>) -> Result<SampleSet> {
    SampleSet::read_csv(BufReader::new(File::open(path)?), shape)
}

fn read_weights(path: &Path) -> Result<MarginalWeights> {
    MarginalWeights::read_json(BufReader::new(File::open(path)?))
}

fn run(cli: Cli) -> Result<()> {
    fs::create_dir_all(&cli.out)?;
    let mut out = Output { dir: &cli.out, files: Vec::new() };
    let config = cli.config.as_deref();
    match cli.command {
        Command::Simulate(Simulate::Samplecomplexity(a)) => {
            let mut cfg: SampleComplexityConfig = load_config(config)?;
            set(&mut cfg.seed, cli.seed);
            set(&mut cfg.sizes, a.sizes);
            set(&mut cfg.target_error, a.target_error);
            set(&mut cfg.weightings, a.weightings.map(|v| v.into_iter().map(Weighting::from).collect()));
            set(&mut cfg.repetitions, a.repetitions);
            set(&mut cfg.tol, a.tol);
            let outcomes = run_sample_complexity(&cfg)?;
            for o in &outcomes {
                let found = o.required_s.map_or("saturated".to_string(), |s| format!("s = {s} ({:.1} per row)", s as f64 / o.n as f64));
                println!("n = {:4}  {:18}  {found}  error {:.4}", o.n, o.weighting.as_str(), o.report.summary.mean);
            }
            let finals: Vec<_> = outcomes.iter().map(|o| o.report.clone()).collect();
            let probes: Vec<_> = outcomes.iter().flat_map(|o| o.probes.clone()).collect();
            out.reports("samplecomplexity.csv", &finals)?;
            out.reports("samplecomplexity_probes.csv", &probes)?;
            out.manifest("simulate samplecomplexity", cfg.seed, &cfg)
        }
        Command::Simulate(Simulate::Excesserror(a)) => {
            let mut cfg: ExcessErrorConfig = load_config(config)?;
            set(&mut cfg.seed, cli.seed);
            set(&mut cfg.n, a.n);
            set(&mut cfg.nus, a.nus);
            set(&mut cfg.samples_per_row, a.samples_per_row);
            set(&mut cfg.weightings, a.weightings.map(|v| v.into_iter().map(Weighting::from).collect()));
            set(&mut cfg.repetitions, a.repetitions);
            set(&mut cfg.tol, a.tol);
            let reports = run_excess_error(&cfg)?;
            print_reports(&reports);
            out.reports("excesserror.csv", &reports)?;
            out.manifest("simulate excesserror", cfg.seed, &cfg)
        }
        Command::Sweep(Sweep::Smoothing(a)) => {
            let mut cfg: SweepConfig = load_config(config)?;
            set(&mut cfg.seed, cli.seed);
            set(
                &mut cfg.distribution,
                a.distribution.map(|d| match d {
                    SweepDistributionArg::Blocks => SweepDistribution::Blocks,
                    SweepDistributionArg::Uniform => SweepDistribution::Uniform,
                }),
            );
            set(&mut cfg.alphas, a.alphas);
            set(&mut cfg.ranks, a.ranks);
            set(&mut cfg.train_samples, a.train_samples);
            set(&mut cfg.test_samples, a.test_samples);
            set(&mut cfg.repetitions, a.repetitions);
            set(&mut cfg.epochs, a.epochs);
            let reports = run_smoothing_sweep(&cfg)?;
            print_reports(&reports);
            out.reports("smoothing.csv", &reports)?;
            out.manifest("sweep smoothing", cfg.seed, &cfg)
        }
        Command::Transductive(a) => {
            let mut cfg: TransductiveConfig = load_config(config)?;
            set(&mut cfg.seed, cli.seed);
            set(&mut cfg.n, a.n);
            set(&mut cfg.s, a.s);
            set(&mut cfg.r, a.r);
            set(&mut cfg.nu, a.nu);
            set(&mut cfg.loss, a.loss.map(LossKind::from));
            set(&mut cfg.repetitions, a.repetitions);
            cfg.swap |= a.swap;
            let report = run_transductive(&cfg)?;
            print_reports(std::slice::from_ref(&report));
            out.reports("transductive.csv", &[report])?;
            out.manifest("transductive", cfg.seed, &cfg)
        }
        Command::Fit(a) => {
            let mut cfg: FitConfig = load_config(config)?;
            set(&mut cfg.seed, cli.seed);
            cfg.samples = a.samples.or(cfg.samples);
            cfg.weights = a.weights.or(cfg.weights);
            cfg.rows = a.rows.or(cfg.rows);
            cfg.cols = a.cols.or(cfg.cols);
            set(&mut cfg.method, a.method);
            set(&mut cfg.loss, a.loss.map(LossKind::from));
            set(&mut cfg.lambda, a.lambda);
            cfg.rank = a.rank.or(cfg.rank);
            set(&mut cfg.epsilon, a.epsilon);
            set(&mut cfg.r, a.r);
            cfg.max_iters = a.max_iters.or(cfg.max_iters);
            cfg.tol = a.tol.or(cfg.tol);
            cfg.step_size = a.step_size.or(cfg.step_size);
            fit(&cfg, &mut out)?;
            out.manifest("fit", cfg.seed, &cfg)
        }
        Command::Rademacher(a) => {
            let mut cfg: RademacherConfig = load_config(config)?;
            set(&mut cfg.seed, cli.seed);
            cfg.samples = a.samples.or(cfg.samples);
            cfg.weights = a.weights.or(cfg.weights);
            set(&mut cfg.n, a.n);
            set(&mut cfg.m, a.m);
            set(&mut cfg.s, a.s);
            set(&mut cfg.r, a.r);
            set(&mut cfg.draws, a.draws);
            let rows = rademacher(&cfg)?;
            for row in &rows {
                println!("s = {:6}  estimate {:.6} ± {:.6}", row.s, row.mean, row.std_error);
            }
            out.csv("rademacher.csv", &rows)?;
            out.manifest("rademacher", cfg.seed, &cfg)
        }
        Command::Adversarial(a) => {
            let mut cfg: AdversarialConfig = load_config(config)?;
            set(&mut cfg.seed, cli.seed);
            set(&mut cfg.example, a.example);
            set(&mut cfg.n, a.n);
            set(&mut cfg.s, a.s);
            set(&mut cfg.trials, a.trials);
            let summary = run_trials(Example::from_number(cfg.example)?, cfg.n, cfg.s, cfg.trials, cfg.seed)?;
            println!(
                "example {}: mean loss {:.5} ± {:.5}, closed form {:.5}, lower bound {:.5}",
                cfg.example, summary.mean, summary.std_error, summary.closed_form, summary.lower_bound
            );
            let trials: Vec<TrialRow> = summary.losses.iter().enumerate().map(|(trial, &loss)| TrialRow { trial, loss }).collect();
            out.csv("adversarial.csv", &trials)?;
            out.csv(
                "adversarial_summary.csv",
                &[AdversarialSummaryRow {
                    example: cfg.example,
                    n: cfg.n,
                    s: cfg.s,
                    trials: cfg.trials,
                    mean: summary.mean,
                    std_error: summary.std_error,
                    closed_form: summary.closed_form,
                    lower_bound: summary.lower_bound,
                }],
            )?;
            out.manifest("adversarial", cfg.seed, &cfg)
        }
    }
}

fn print_reports(reports: &[ExperimentReport]) {
    for r in reports {
        let p = &r.point;
        let nu = p.nu.map_or(String::new(), |v| format!(" nu={v}"));
        let alpha = p.alpha.map_or(String::new(), |v| format!(" alpha={v}"));
        println!(
            "{} n={} s={}{nu}{alpha} {}: {} {:.6} ± {:.6} ({} ok, {} failed)",
            r.scenario, p.n, p.s, p.weighting, r.metric, r.summary.mean, r.summary.std_error, r.summary.count, r.failures
        );
    }
}

#[derive(Serialize)]
struct TrialRow {
    trial: usize,
    loss: f64,
}

#[derive(Serialize)]
struct AdversarialSummaryRow {
    example: u8,
    n: usize,
    s: usize,
    trials: usize,
    mean: f64,
    std_error: f64,
    closed_form: f64,
    lower_bound: f64,
}

#[derive(Serialize)]
struct FitSummary {
    method: Method,
    loss: LossKind,
    training_loss: f64,
    weighted_norm: f64,
    iterations: usize,
    converged: bool,
}

fn fit(cfg: &FitConfig, out: &mut Output) -> Result<()> {
    let path = cfg.samples.as_deref().ok_or_else(|| Error::InvalidParameter("fit needs --samples".into()))?;
    let given = cfg.weights.as_deref().map(read_weights).transpose()?;
    let shape = match (cfg.rows, cfg.cols) {
        (Some(n), Some(m)) => Some((n, m)),
        _ => given.as_ref().map(MarginalWeights::shape),
    };
    let sample = read_sample(path, shape)?;
    let w = match given {
        Some(w) => w,
        None => smooth_empirical(&sample)?,
    };
    let loss = LossSpec::from_kind(cfg.loss);
    let mut solver = match cfg.method {
        Method::Proximal => SolverConfig::proximal(cfg.lambda),
        Method::Sgd => SolverConfig::sgd(cfg.lambda, cfg.rank.unwrap_or(10).min(sample.shape().0.min(sample.shape().1))),
        Method::MinNorm => SolverConfig::min_norm(),
        Method::Erm => SolverConfig::default(),
    }
    .with_seed(cfg.seed);
    set(&mut solver.max_iters, cfg.max_iters);
    set(&mut solver.tol, cfg.tol);
    set(&mut solver.step_size, cfg.step_size);

    let (model, training_loss, weighted_norm, iterations, converged) = match cfg.method {
        Method::Proximal => {
            let f = fit_proximal(&sample, &w, loss, &solver)?;
            (f.model, f.training_loss, f.weighted_norm, f.iterations, f.converged)
        }
        Method::Sgd => {
            let f = fit_factored_sgd(&sample, &w, loss, &solver)?;
            let training = wtrace::loss::empirical_loss(&f.model, &sample, loss)?;
            let norm = wtrace::weighting::weighted_trace_norm(&f.model.to_dense(), &w)?;
            (f.model, training, norm, f.epochs, f.converged)
        }
        Method::MinNorm => {
            if cfg.loss != LossKind::Squared {
                return Err(Error::UnsupportedLoss);
            }
            let f = min_norm_fit(&sample, &w, cfg.epsilon, &solver)?;
            (f.model, f.training_loss, f.weighted_norm, f.iterations, f.converged)
        }
        Method::Erm => {
            let f = erm_in_ball(&sample, &w, NormBudget::new(cfg.r)?, loss, &solver)?;
            (f.model, f.training_loss, f.weighted_norm, f.iterations, true)
        }
    };
    println!("training loss {training_loss:.6}, weighted trace norm {weighted_norm:.6}, {iterations} iterations");
    model.write_json(BufWriter::new(File::create(out.dir.join("model.json"))?))?;
    out.files.push("model.json".into());
    out.json("fit.json", &FitSummary { method: cfg.method, loss: cfg.loss, training_loss, weighted_norm, iterations, converged })
}

#[derive(Serialize)]
struct RademacherRow {
    n: usize,
    m: usize,
    s: usize,
    r: f64,
    num_sign_draws: usize,
    mean: f64,
    std_error: f64,
}

fn rademacher(cfg: &RademacherConfig) -> Result<Vec<RademacherRow>> {
    let budget = NormBudget::new(cfg.r)?;
    let given = cfg.weights.as_deref().map(read_weights).transpose()?;
    let samples = match cfg.samples.as_deref() {
        Some(p) => vec![read_sample(p, given.as_ref().map(MarginalWeights::shape))?],
        None => {
            let dist = JointDistribution::uniform(cfg.n, cfg.m)?;
            let zeros = Matrix::zeros(cfg.n, cfg.m);
            cfg.s.iter().map(|&s| sample(&dist, s, &zeros, wtrace::rng::derive_seed(cfg.seed, s as u64))).collect::<Result<_>>()?
        }
    };
    samples
        .iter()
        .map(|sm| {
            let (n, m) = sm.shape();
            let w = given.clone().unwrap_or_else(|| MarginalWeights::uniform(n, m));
            let est = estimate_rademacher(sm, &w, budget, cfg.draws, cfg.seed)?;
            Ok(RademacherRow { n, m, s: sm.len(), r: cfg.r, num_sign_draws: est.num_sign_draws, mean: est.mean, std_error: est.std_error })
        })
        .collect()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

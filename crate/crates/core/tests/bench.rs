mod common;

use wtrace::bench::{
    draw_distinct_cells, run_sample_complexity, run_smoothing_sweep, run_transductive, SampleComplexityConfig, SignalSpec, SweepConfig,
    SweepDistribution, TransductiveConfig, Weighting,
};
use wtrace::distributions::transductive_split;
use wtrace::loss::empirical_loss_dense;
use wtrace::solvers::{erm_in_ball, min_norm_fit};
use wtrace::weighting::{empirical_marginals, smooth, transductive_smoothed};
use wtrace::{JointDistribution, LossSpec, MarginalWeights, Matrix, NormBudget, SampleSet, SmoothingConfig, SolverConfig};

#[test]
fn rank_one_exact_recovery() {
    let dist = JointDistribution::uniform(20, 20).unwrap();
    let cfg = SolverConfig::min_norm().with_tol(1e-6).with_max_iters(20000);
    let mut recovered = 0;
    for seed in 0..50u64 {
        let m = SignalSpec { n: 20, rank: 1, seed }.matrix().unwrap();
        let cells = draw_distinct_cells(&dist, 240, seed + 1000).unwrap();
        let s = SampleSet::observe(&m, cells).unwrap();
        let fit = min_norm_fit(&s, &MarginalWeights::uniform(20, 20), 0.0, &cfg).unwrap();
        // Relative to the largest entry of M.
        if (fit.model.to_dense() - &m).amax() <= 1e-3 * m.amax() {
            recovered += 1;
        }
    }
    assert!(recovered >= 45, "recovered {recovered}/50");
}

#[test]
fn transductive_weights_come_from_pool() {
    let dist = JointDistribution::uniform(12, 12).unwrap();
    let cells = draw_distinct_cells(&dist, 60, 3).unwrap();
    let split = transductive_split(&cells, &Matrix::zeros(12, 12), 4).unwrap();
    let w = transductive_smoothed(&split.pool).unwrap();
    let want = smooth(&empirical_marginals(&split.pool).unwrap(), SmoothingConfig::new(0.5).unwrap());
    assert_eq!(w.row(), want.row());
    assert_eq!(w.col(), want.col());
    let from_train = smooth(&empirical_marginals(&split.train).unwrap(), SmoothingConfig::new(0.5).unwrap());
    assert_ne!(w.row(), from_train.row());
}

#[test]
fn transductive_swap_is_symmetric() {
    let cfg = TransductiveConfig { n: 20, s: 100, repetitions: 60, max_iters: 150, ..TransductiveConfig::default() };
    let a = run_transductive(&cfg).unwrap();
    let b = run_transductive(&TransductiveConfig { swap: true, ..cfg }).unwrap();
    let se = (a.summary.std_error.powi(2) + b.summary.std_error.powi(2)).sqrt();
    assert!((a.summary.mean - b.summary.mean).abs() <= 3.0 * se, "{} vs {} (se {se})", a.summary.mean, b.summary.mean);
}

#[test]
fn constant_truth_on_ball_boundary_is_learned() {
    // ||c J||_{tr,w} = |c| for any weights, so r = c^2 puts the truth on the boundary.
    let c: f64 = 0.7;
    let loss = LossSpec::absolute();
    let mut last = f64::INFINITY;
    for n in [10, 20, 40] {
        let truth = Matrix::from_element(n, n, c);
        let dist = JointDistribution::uniform(n, n).unwrap();
        let cells = draw_distinct_cells(&dist, n * n / 2, 9).unwrap();
        let split = transductive_split(&cells, &truth, 10).unwrap();
        let w = transductive_smoothed(&split.pool).unwrap();
        let budget = NormBudget::new(c * c).unwrap();
        let fit = erm_in_ball(&split.train, &w, budget, loss, &SolverConfig::default().with_max_iters(3000)).unwrap();
        let test = empirical_loss_dense(&fit.model.to_dense(), &split.test, loss).unwrap();
        assert!(test < last, "n {n}: {test} after {last}");
        last = test;
    }
    assert!(last <= 0.01, "test loss {last}");
}

#[test]
fn product_distribution_makes_smoothing_irrelevant() {
    let cfg = SweepConfig {
        n: 30,
        m: 30,
        distribution: SweepDistribution::Uniform,
        truth_rank: 2,
        train_samples: 500,
        test_samples: 500,
        alphas: vec![1.0, 0.5, 0.0],
        ranks: vec![4],
        repetitions: 6,
        lambda_per_decade: 4,
        lambda_decades: 3,
        epochs: 60,
        ..SweepConfig::default()
    };
    let reports = run_smoothing_sweep(&cfg).unwrap();
    assert_eq!(reports.len(), 3);
    for a in &reports {
        for b in &reports {
            let se = (a.summary.std_error.powi(2) + b.summary.std_error.powi(2)).sqrt();
            assert!((a.summary.mean - b.summary.mean).abs() <= 2.0 * se.max(1e-12), "{} vs {}", a.summary.mean, b.summary.mean);
        }
    }
}

#[test]
fn sample_complexity_grows_with_size() {
    let cfg = SampleComplexityConfig {
        sizes: vec![10, 20],
        target_error: 0.1,
        weightings: vec![Weighting::Uniform],
        repetitions: 6,
        ..SampleComplexityConfig::default()
    };
    let out = run_sample_complexity(&cfg).unwrap();
    let small = out[0].required_s.expect("n = 10 saturated");
    let large = out[1].required_s.expect("n = 20 saturated");
    assert!(small < large, "{small} vs {large}");
}

mod common;

use common::*;
use proptest::prelude::*;
use wtrace::adversarial::{build_example1, example1_erm};
use wtrace::bench::{SignalSpec, Summary};
use wtrace::complexity::bound_diagnostics;
use wtrace::distributions::{make_product, sample, JointDistribution};
use wtrace::loss::empirical_loss_dense;
use wtrace::rng::rng_from_seed;
use wtrace::solvers::{erm_in_ball, fit_proximal, min_norm_fit, prox_weighted_trace};
use wtrace::weighting::{smooth, weighted_frobenius_norm, weighted_trace_norm};
use wtrace::{LossSpec, MarginalWeights, Matrix, NormBudget, SampleSet, SmoothingConfig, SolverConfig};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn distribution_normalizes_and_marginals_match(n in 1usize..12, m in 1usize..12, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let weights: Vec<f64> = (0..n * m).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() }).collect();
        prop_assume!(weights.iter().any(|&v| v > 0.0));
        let d = JointDistribution::from_weights(n, m, &weights).unwrap();
        prop_assert!((d.mass().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for i in 0..n {
            let row: f64 = (0..m).map(|j| d.p(i, j)).sum();
            prop_assert!((row - d.row_marginals()[i]).abs() <= 1e-12);
        }
        for j in 0..m {
            let col: f64 = (0..n).map(|i| d.p(i, j)).sum();
            prop_assert!((col - d.col_marginals()[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn product_marginals_round_trip(n in 1usize..10, m in 1usize..10, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let r = positive_simplex(n, &mut rng);
        let c = positive_simplex(m, &mut rng);
        let d = make_product(&r, &c).unwrap();
        prop_assert_eq!(d.row_marginals(), &r[..]);
        prop_assert_eq!(d.col_marginals(), &c[..]);
    }

    #[test]
    fn norm_homogeneity_and_triangle(n in 1usize..9, m in 1usize..9, c in -5.0f64..5.0, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let w = random_weights(n, m, &mut rng);
        let x = gaussian(n, m, &mut rng);
        let y = gaussian(n, m, &mut rng);
        let nx = weighted_trace_norm(&x, &w).unwrap();
        let scaled = weighted_trace_norm(&(&x * c), &w).unwrap();
        prop_assert!((scaled - c.abs() * nx).abs() <= 1e-10 * (1.0 + c.abs() * nx));
        let sum = weighted_trace_norm(&(&x + &y), &w).unwrap();
        prop_assert!(sum <= nx + weighted_trace_norm(&y, &w).unwrap() + 1e-10);
        prop_assert!(weighted_frobenius_norm(&x, &w).unwrap() <= nx + 1e-10);
    }

    #[test]
    fn uniform_weights_reduce_to_scaled_trace_norm(n in 1usize..10, m in 1usize..10, seed in any::<u64>()) {
        let x = gaussian(n, m, &mut rng_from_seed(seed));
        let got = weighted_trace_norm(&x, &MarginalWeights::uniform(n, m)).unwrap();
        let want = nuclear(&x) / ((n * m) as f64).sqrt();
        prop_assert!((got - want).abs() <= 1e-10 * want.max(1.0));
    }

    #[test]
    fn smoothing_is_affine(n in 1usize..10, a in 0.0f64..=1.0, b in 0.0f64..=1.0, t in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let w = random_weights(n, n, &mut rng);
        let mix = t * a + (1.0 - t) * b;
        let wa = smooth(&w, SmoothingConfig::new(a).unwrap());
        let wb = smooth(&w, SmoothingConfig::new(b).unwrap());
        let wm = smooth(&w, SmoothingConfig::new(mix).unwrap());
        for i in 0..n {
            prop_assert!((wm.row()[i] - (t * wa.row()[i] + (1.0 - t) * wb.row()[i])).abs() <= 1e-15);
        }
        let one = smooth(&w, SmoothingConfig::new(1.0).unwrap());
        prop_assert_eq!(one.row(), w.row());
        let zero = smooth(&w, SmoothingConfig::new(0.0).unwrap());
        prop_assert!(zero.row().iter().all(|&v| (v - 1.0 / n as f64).abs() <= 1e-15));
    }

    #[test]
    fn smoothed_diagnostics_stay_in_envelope(n in 2usize..15, m in 2usize..15, s in 1usize..5000, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let weights: Vec<f64> = (0..n * m).map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random::<f64>().powi(4) }).collect();
        prop_assume!(weights.iter().any(|&v| v > 0.0));
        let d = JointDistribution::from_weights(n, m, &weights).unwrap();
        let w = smooth(&MarginalWeights::from_distribution(&d), SmoothingConfig::new(0.5).unwrap());
        let diag = bound_diagnostics(&d, &w, s, NormBudget::new(1.0).unwrap()).unwrap();
        prop_assert!(diag.sigma_sq <= 4.0 * s as f64 * n.max(m) as f64 + 1e-9);
        prop_assert!(diag.r_value <= 2.0 * ((n * m) as f64).sqrt() + 1e-9);
    }

    #[test]
    fn signal_frobenius_norm(n in 2usize..40, seed in any::<u64>()) {
        let m = SignalSpec::new(n, seed).matrix().unwrap();
        prop_assert!((m.norm() - n as f64).abs() <= 1e-9);
    }

    #[test]
    fn summary_count_and_error(values in proptest::collection::vec(-10.0f64..10.0, 1..30)) {
        let s = Summary::of(&values).unwrap();
        prop_assert_eq!(s.count, values.len());
        prop_assert!(s.std_error >= 0.0);
        if values.len() == 1 {
            prop_assert_eq!(s.std_error, 0.0);
        }
    }

    #[test]
    fn example1_constructed_minimizer(seed in any::<u64>()) {
        let inst = build_example1(20, 200, seed).unwrap();
        let p = MarginalWeights::from_distribution(&inst.dist);
        let s = sample(&inst.dist, 200, &inst.y, seed ^ 1).unwrap();
        let ys = example1_erm(&inst, &s);
        prop_assert_eq!(empirical_loss_dense(&ys, &s, LossSpec::clipped_absolute()).unwrap(), 0.0);
        prop_assert!(weighted_trace_norm(&ys, &p).unwrap() <= 1.0 + 1e-9);
    }
}

proptest! {
    #![proptest_config(cfg(16))]

    #[test]
    fn prox_is_nonexpansive_in_weighted_metric(n in 1usize..7, m in 1usize..7, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let w = random_weights(n, m, &mut rng);
        for _ in 0..32 {
            let x = gaussian(n, m, &mut rng);
            let y = gaussian(n, m, &mut rng);
            let tau = rng.random_range(0.0..0.5);
            let px = prox_weighted_trace(&x, &w, tau).unwrap();
            let py = prox_weighted_trace(&y, &w, tau).unwrap();
            let before = weighted_frobenius_norm(&(&x - &y), &w).unwrap();
            let after = weighted_frobenius_norm(&(&px - &py), &w).unwrap();
            prop_assert!(after <= before + 1e-8);
        }
    }

    #[test]
    fn proximal_objective_never_increases(seed in any::<u64>(), lambda in 1e-4f64..0.5) {
        let mut rng = rng_from_seed(seed);
        let y = gaussian(8, 7, &mut rng);
        let idx: Vec<_> = (0..30).map(|_| (rng.random_range(0..8), rng.random_range(0..7))).collect();
        let s = SampleSet::observe(&y, idx).unwrap();
        let w = smooth(&wtrace::weighting::empirical_marginals(&s).unwrap(), SmoothingConfig::new(0.5).unwrap());
        let fit = fit_proximal(&s, &w, LossSpec::squared(), &SolverConfig::proximal(lambda).with_max_iters(300)).unwrap();
        for pair in fit.objective_history.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-10);
        }
    }

    #[test]
    fn erm_stays_in_ball(seed in any::<u64>(), r in 0.01f64..4.0) {
        let mut rng = rng_from_seed(seed);
        let y = gaussian(6, 6, &mut rng);
        let idx: Vec<_> = (0..20).map(|_| (rng.random_range(0..6), rng.random_range(0..6))).collect();
        let s = SampleSet::observe(&y, idx).unwrap();
        let w = random_weights(6, 6, &mut rng);
        let budget = NormBudget::new(r).unwrap();
        for loss in [LossSpec::squared(), LossSpec::absolute(), LossSpec::clipped_absolute()] {
            let fit = erm_in_ball(&s, &w, budget, loss, &SolverConfig::default().with_max_iters(100)).unwrap();
            prop_assert!(weighted_nuclear(&fit.model.to_dense(), &w) <= r.sqrt() + 1e-8);
        }
    }

    #[test]
    fn min_norm_on_full_grid_returns_truth(n in 1usize..8, m in 1usize..8, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let y = gaussian(n, m, &mut rng);
        let w = random_weights(n, m, &mut rng);
        let idx = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
        let s = SampleSet::observe(&y, idx).unwrap();
        let fit = min_norm_fit(&s, &w, 0.0, &SolverConfig::min_norm()).unwrap();
        prop_assert!((fit.model.to_dense() - &y).amax() <= 1e-8);
    }
}

#[test]
fn rank_r_bounded_entries_have_bounded_weighted_norm() {
    let mut rng = rng_from_seed(12);
    for _ in 0..1000 {
        let n = rng.random_range(2..15);
        let r = rng.random_range(1..=5usize.min(n));
        let x = gaussian(n, r, &mut rng) * gaussian(r, n, &mut rng);
        let x = &x / x.amax();
        let w = random_weights(n, n, &mut rng);
        assert!(weighted_trace_norm(&x, &w).unwrap() <= (r as f64).sqrt() + 1e-8);
    }
}

#[test]
fn sampling_frequencies_converge() {
    // Chi-square with 8 degrees of freedom; 99.9% quantile 26.12.
    let d = JointDistribution::from_weights(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
    let s = 100_000;
    let draws = sample(&d, s, &Matrix::zeros(3, 3), 5).unwrap();
    let mut counts = [0f64; 9];
    for &(i, j) in draws.indexes() {
        counts[i * 3 + j] += 1.0;
    }
    let chi2: f64 = counts.iter().zip(d.mass()).map(|(c, p)| (c - s as f64 * p).powi(2) / (s as f64 * p)).sum();
    assert!(chi2 < 26.12, "chi-square {chi2}");
}

#[test]
fn rademacher_error_shrinks_with_draws() {
    use wtrace::complexity::estimate_rademacher;
    let dist = JointDistribution::uniform(20, 20).unwrap();
    let s = sample(&dist, 300, &Matrix::zeros(20, 20), 1).unwrap();
    let w = MarginalWeights::uniform(20, 20);
    let draws = [16.0, 64.0, 256.0];
    let errors: Vec<f64> =
        draws.iter().map(|&d| estimate_rademacher(&s, &w, NormBudget::new(1.0).unwrap(), d as usize, 3).unwrap().std_error).collect();
    let slope = log_log_slope(&draws, &errors);
    assert!((slope + 0.5).abs() <= 0.15, "slope {slope}");
}

#[test]
fn rademacher_within_rate_envelope() {
    use wtrace::complexity::estimate_rademacher;
    use wtrace::distributions::make_uniform_marginal_nonproduct;
    for (n, mixing) in [(10, 0.0), (20, 0.5), (30, 1.0)] {
        let dist = make_uniform_marginal_nonproduct(n, mixing, 4).unwrap();
        let w = MarginalWeights::from_distribution(&dist);
        for s in [50, 200, 800] {
            let sm = sample(&dist, s, &Matrix::zeros(n, n), s as u64).unwrap();
            let budget = NormBudget::new(1.0).unwrap();
            let est = estimate_rademacher(&sm, &w, budget, 32, 0).unwrap();
            let rate = bound_diagnostics(&dist, &w, s, budget).unwrap().predicted_rate;
            assert!(est.mean <= 10.0 * rate, "n {n} s {s}: {} vs {rate}", est.mean);
        }
    }
}

#[test]
fn smoothing_pushes_example2_adversary_out_of_ball() {
    use wtrace::adversarial::build_example2;
    for (n, s) in [(20usize, 100usize), (10, 50), (40, 400)] {
        let inst = build_example2(n, s).unwrap();
        let p = MarginalWeights::from_distribution(&inst.dist);
        assert!((weighted_trace_norm(&inst.adversary, &p).unwrap() - 1.0).abs() <= 1e-12);
        let smoothed = smooth(&p, SmoothingConfig::new(0.5).unwrap());
        let norm = weighted_trace_norm(&inst.adversary, &smoothed).unwrap();
        // p̃(0) = 1/(2s) + 1/(2n) on both margins, so ||A|| = s p̃(0).
        let want = 0.5 + s as f64 / (2.0 * n as f64);
        assert!((norm - want).abs() <= 1e-12 * want, "n {n} s {s}: {norm} vs {want}");
        assert!(norm > 1.0);
    }
}

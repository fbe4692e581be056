use proptest::prelude::*;

use auxopt::fnn::{init_params, mse_loss, Activation};
use auxopt::fnn_solvers::{
    alternating_run, loss_pm, loss_sapm, omega_weights, FnnAuxState, FnnSolverConfig, Formulation,
    PenaltyWeights,
};
use auxopt::harness::{best_seed, is_failure, SeedResult};
use auxopt::linalg::{solve_ridge_row_ls, solve_row_ls, Matrix};
use auxopt::pinn::{loss_j, tangent_forward, PinnData};
use auxopt::pinn_solvers::{
    loss_penalty_pinn, pinn_sweep, pinn_bound_constant, PinnAuxState, PinnSolverConfig,
};
use auxopt::rng::Stream;
use auxopt::sampling::{halton, radical_inverse, sample_domain, Domain};

fn act(sin: bool) -> Activation {
    if sin {
        Activation::Sin
    } else {
        Activation::Relu
    }
}

fn seed_row(seed: usize, initial: f64, last: Option<f64>) -> SeedResult {
    SeedResult {
        seed,
        initial_loss: Some(initial),
        final_loss: last,
        final_original_loss: last,
        train_error: None,
        test_error: None,
        max_bound_ratio: None,
        failed: is_failure(Some(initial), last),
        diagnostic: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radical_inverse_in_unit_interval(index in 1u64..1_000_000, base in prop::sample::select(vec![2u64, 3, 5, 7, 11, 13])) {
        let r = radical_inverse(index, base);
        prop_assert!(r > 0.0 && r < 1.0);
    }

    #[test]
    fn halton_skip_is_a_shift(count in 1usize..20, dim in 1usize..6, skip in 0usize..50) {
        let all = halton(count + skip, dim, 0).unwrap();
        let tail = halton(count, dim, skip).unwrap();
        prop_assert_eq!(tail, all.col_range(skip, skip + count));
    }

    #[test]
    fn ball_samples_lie_in_the_ball(count in 1usize..40, dim in 1usize..5, skip in 0usize..100) {
        let x = sample_domain(&Domain::UnitBall { dim }, count, skip).unwrap();
        for n in 0..count {
            prop_assert!(x.col(n).iter().map(|v| v * v).sum::<f64>() <= 1.0);
        }
    }

    #[test]
    fn least_squares_residual_is_orthogonal(seed in any::<u64>(), m in 1usize..7, n in 1usize..9, p in 1usize..4) {
        let mut rng = Stream::new(seed);
        let a = rng.uniform_matrix(m, n, -1.0, 1.0);
        let b = rng.uniform_matrix(p, n, -1.0, 1.0);
        let x = solve_row_ls(&a, &b).unwrap();
        let g = x.matmul(&a).sub(&b).matmul_tr(&a);
        prop_assert!(g.as_slice().iter().all(|v| v.abs() < 1e-9), "{:?}", g);
    }

    #[test]
    fn ridge_solution_satisfies_normal_equations(seed in any::<u64>(), m in 1usize..7, n in 1usize..9, lambda in 0.01f64..5.0) {
        let mut rng = Stream::new(seed);
        let a = rng.uniform_matrix(m, n, -1.0, 1.0);
        let b = rng.uniform_matrix(2, n, -1.0, 1.0);
        let x = solve_ridge_row_ls(&a, &b, lambda).unwrap();
        let g = x.matmul(&a).sub(&b).matmul_tr(&a).add(&x.scale(lambda));
        prop_assert!(g.as_slice().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn feasible_auxiliaries_close_every_penalty(seed in any::<u64>(), depth in 2usize..6, width in 1usize..6, n in 1usize..8, sin in any::<bool>()) {
        let mut rng = Stream::new(seed);
        let params = init_params(depth, width, 2, act(sin), &mut rng);
        let x = rng.uniform_matrix(2, n, -1.0, 1.0);
        let y = rng.uniform_matrix(1, n, -1.0, 1.0);
        let aux = FnnAuxState::feasible(&params, &x).unwrap();
        let beta = PenaltyWeights::unit(depth);
        let l = mse_loss(&params, &x, &y).unwrap();
        prop_assert!((loss_pm(&params, &aux, &x, &y, &beta).unwrap() - l).abs() <= 1e-12 * (1.0 + l));
        prop_assert!((loss_sapm(&params, &aux, &x, &y, &beta).unwrap() - l).abs() <= 1e-12 * (1.0 + l));
    }

    #[test]
    fn fnn_consistency_bound(seed in any::<u64>(), depth in 2usize..6, width in 1usize..6, n in 1usize..8, sin in any::<bool>()) {
        let mut rng = Stream::new(seed);
        let params = init_params(depth, width, 1, act(sin), &mut rng);
        let x = rng.uniform_matrix(1, n, -1.0, 1.0);
        let y = rng.uniform_matrix(1, n, -1.0, 1.0);
        let aux = FnnAuxState::random(depth, width, n, &mut rng);
        let beta = PenaltyWeights::unit(depth);
        let l = mse_loss(&params, &x, &y).unwrap();
        let ls = loss_sapm(&params, &aux, &x, &y, &beta).unwrap();
        prop_assert!(l <= depth as f64 * ls * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn omega_is_a_tail_product(seed in any::<u64>(), depth in 2usize..7) {
        let params = init_params(depth, 3, 2, Activation::Relu, &mut Stream::new(seed));
        let norms = params.weight_norms_sq();
        let omega = omega_weights(&params);
        prop_assert_eq!(omega[depth - 1], 1.0);
        for l in 0..depth {
            let direct: f64 = norms[l + 1..].iter().product();
            prop_assert!((omega[l] - direct).abs() <= 1e-14 * direct.max(1e-300));
        }
    }

    #[test]
    fn fnn_alternating_runs_are_monotone(seed in any::<u64>(), depth in 2usize..5, width in 2usize..5, sapm in any::<bool>(), sin in any::<bool>()) {
        let mut rng = Stream::new(seed);
        let x = rng.uniform_matrix(1, 12, -1.0, 1.0);
        let y = x.map(|v| (v * v).sin());
        let cfg = FnnSolverConfig::new(depth, width, act(sin), 8);
        let params = init_params(depth, width, 1, act(sin), &mut rng);
        let aux = FnnAuxState::random(depth, width, 12, &mut rng);
        let f = if sapm { Formulation::SelfAdaptive } else { Formulation::Penalty };
        let run = alternating_run(f, &cfg, params, aux, &x, &y).unwrap();
        for w in run.trace.windows(2) {
            prop_assert!(w[1].actual <= w[0].actual * (1.0 + 1e-10) + 1e-14, "{:?}", w);
        }
    }

    #[test]
    fn pinn_sweeps_are_monotone_and_consistent(seed in any::<u64>(), depth in 2usize..5, width in 2usize..4, dim in 1usize..3, sapm in any::<bool>()) {
        let mut rng = Stream::new(seed);
        let (n1, n2) = (8, 5);
        let data = PinnData::new(
            rng.uniform_matrix(dim, n1, -1.0, 1.0),
            rng.uniform_matrix(1, n1, -1.0, 1.0),
            rng.uniform_matrix(dim, n1, -2.0, 2.0),
            rng.uniform_matrix(dim, n2, -1.0, 1.0),
            rng.uniform_matrix(1, n2, -1.0, 1.0),
        ).unwrap();
        let cfg = PinnSolverConfig::new(depth, width, 3);
        let mut params = init_params(depth, width, dim, Activation::Sin, &mut rng);
        let mut aux = PinnAuxState::random(depth, width, dim, n1, n2, &mut rng);
        let f = if sapm { Formulation::SelfAdaptive } else { Formulation::Penalty };
        let mut prev = loss_penalty_pinn(f, &params, &aux, &data, &cfg.weights).unwrap().total;
        for k in 0..3 {
            pinn_sweep(f, &cfg, &mut params, &mut aux, &data, k).unwrap();
            let now = loss_penalty_pinn(f, &params, &aux, &data, &cfg.weights).unwrap().total;
            prop_assert!(now <= prev * (1.0 + 1e-10) + 1e-14);
            prev = now;
        }
        if sapm {
            let j = loss_j(&params, &data, cfg.weights.mu).unwrap().total;
            let c = pinn_bound_constant(Activation::Sin, depth, 2.0, &cfg.weights).unwrap();
            let bound = (dim * depth * (depth + 1)) as f64 * c;
            prop_assert!(j <= bound * prev * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn tangent_forward_matches_differences(seed in any::<u64>(), depth in 2usize..5, width in 1usize..5, dim in 1usize..4) {
        let mut rng = Stream::new(seed);
        let params = init_params(depth, width, dim, Activation::Sin, &mut rng);
        let x = rng.uniform_matrix(dim, 3, -1.0, 1.0);
        let t = tangent_forward(&params, &x).unwrap();
        let out = |x: &Matrix| auxopt::fnn::forward(&params, x).unwrap().output;
        let h = 1e-5;
        for i in 0..dim {
            let shift = |s: f64| x.zip_map(&Matrix::from_fn(dim, 3, |r, _| if r == i { s } else { 0.0 }), |a, b| a + b);
            let fd = out(&shift(h)).sub(&out(&shift(-h))).scale(0.5 / h);
            let exact = &t.tangents[depth - 1][i];
            prop_assert!(fd.sub(exact).as_slice().iter().all(|v| v.abs() < 1e-7));
        }
    }

    #[test]
    fn failure_flag_is_the_ten_percent_rule(initial in 1e-6f64..1e6, ratio in 0.0f64..2.0) {
        let last = initial * ratio;
        prop_assert_eq!(is_failure(Some(initial), Some(last)), last >= 0.1 * initial);
    }

    #[test]
    fn best_seed_is_first_argmin(finals in prop::collection::vec(prop::option::of(prop::sample::select(vec![0.5, 1.0, 2.0, 3.0])), 0..12)) {
        let rows: Vec<SeedResult> = finals.iter().enumerate().map(|(k, v)| seed_row(k + 1, 10.0, *v)).collect();
        let expect = finals
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (v, k + 1)))
            .fold(None, |b: Option<(f64, usize)>, (v, k)| match b {
                Some((bv, _)) if bv <= v => b,
                _ => Some((v, k)),
            })
            .map(|(_, k)| k);
        prop_assert_eq!(best_seed(&rows), expect);
    }
}

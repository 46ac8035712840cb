mod common;

use common::*;
use gaussian_uot::asymptotics::{limit_expansion, sweep};
use gaussian_uot::certificate::{build_potentials, certify, dual_value, slack};
use gaussian_uot::closed_form::{derive_coefficients, primal_objective, riccati_residual, solve, solve_1d};
use gaussian_uot::{GaussianMeasure, UotProblem};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn problem_strategy() -> impl Strategy<Value = UotProblem> {
    (prop::sample::select(vec![1usize, 2, 3, 5]), any::<u64>()).prop_map(|(d, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_problem(&mut rng, d)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn riccati_residual_is_tiny(prob in problem_strategy()) {
        let sol = solve(&prob).unwrap();
        let c = derive_coefficients(&prob).unwrap();
        let scale = c.c0.as_matrix().norm();
        prop_assert!(sol.riccati_residual <= 1e-12 * scale);
        prop_assert!(riccati_residual(&c, &sol.map_linear) <= 1e-12 * scale);
        prop_assert!(sol.map_linear.spd_check().is_spd);
    }

    #[test]
    fn value_lies_between_zero_and_zero_plan(prob in problem_strategy()) {
        let sol = solve(&prob).unwrap();
        let zero_plan = prob.tau0 * prob.alpha.mass() + prob.tau1 * prob.beta.mass();
        prop_assert!(sol.value >= -1e-12);
        prop_assert!(sol.value < zero_plan);
        prop_assert!(sol.m_star > 0.0);
    }

    #[test]
    fn strong_duality(prob in problem_strategy()) {
        let sol = solve(&prob).unwrap();
        let (phi, psi) = build_potentials(&sol, &prob).unwrap();
        let dual = dual_value(&phi, &psi, &prob).unwrap();
        let primal = primal_objective(&sol, &prob).unwrap();
        prop_assert!(relative(dual, sol.value) <= 1e-10);
        prop_assert!(relative(primal, sol.value) <= 1e-10);
    }

    #[test]
    fn potentials_are_feasible_and_tight_on_graph(prob in problem_strategy(), seed in any::<u64>()) {
        let sol = solve(&prob).unwrap();
        let (phi, psi) = build_potentials(&sol, &prob).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = prob.dim();
        for _ in 0..20 {
            let x = random_measure(&mut rng, d).mean() * 2.0;
            let y = random_measure(&mut rng, d).mean() * 2.0;
            let scale = 1.0 + x.norm_squared() + y.norm_squared();
            prop_assert!(slack(&phi, &psi, &x, &y).unwrap() >= -1e-10 * scale);
            let ty = sol.transport(&x);
            let scale = 1.0 + x.norm_squared() + ty.norm_squared();
            prop_assert!(slack(&phi, &psi, &x, &ty).unwrap().abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn relabeling_symmetry(prob in problem_strategy()) {
        let sol = solve(&prob).unwrap();
        let swapped = solve(&prob.swapped()).unwrap();
        prop_assert!((sol.value - swapped.value).abs() <= 1e-12 * (1.0 + sol.value.abs()));
        let l_inv = sol.map_linear.inv().unwrap();
        prop_assert!(rel_frobenius(swapped.map_linear.as_matrix(), l_inv.as_matrix()) <= 1e-10);
    }

    #[test]
    fn translation_equivariance(prob in problem_strategy(), t in -5.0f64..5.0) {
        let shift = DVector::from_element(prob.dim(), t);
        let moved = |g: &GaussianMeasure| {
            GaussianMeasure::new(g.mass(), g.mean() + &shift, g.cov().clone()).unwrap()
        };
        let shifted = UotProblem::new(moved(&prob.alpha), moved(&prob.beta), prob.tau0, prob.tau1).unwrap();
        let a = solve(&prob).unwrap();
        let b = solve(&shifted).unwrap();
        prop_assert!((&b.u_star - &a.u_star - &shift).norm() <= 1e-10 * (1.0 + t.abs()));
        prop_assert!((&b.v_star - &a.v_star - &shift).norm() <= 1e-10 * (1.0 + t.abs()));
        prop_assert!((&b.h_star - &a.h_star).norm() <= 1e-10);
        prop_assert!(relative(b.value, a.value) <= 1e-10);
    }

    #[test]
    fn one_dimensional_paths_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prob = random_problem_1d(&mut rng);
        let a = solve(&prob).unwrap();
        let b = solve_1d(&prob).unwrap();
        prop_assert!(relative(a.value, b.value) <= 1e-12);
        prop_assert!(relative(a.p_star.as_matrix()[(0, 0)], b.p_star.as_matrix()[(0, 0)]) <= 1e-12);
        prop_assert!(relative(a.q_star.as_matrix()[(0, 0)], b.q_star.as_matrix()[(0, 0)]) <= 1e-12);
    }

    #[test]
    fn leading_coefficient_is_nonnegative(prob in problem_strategy(), t0 in 0.1f64..10.0, t1 in 0.1f64..10.0) {
        let e = limit_expansion(&prob, t0, t1).unwrap();
        prop_assert!(e.leading_coeff >= 0.0);
        prop_assert!((e.theta0 + e.theta1 - 1.0).abs() <= 1e-15);
    }
}

#[test]
fn oracle_minimizer_matches_adjusted_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let prob = random_problem_1d(&mut rng);
        let sol = solve(&prob).unwrap();
        let ([u, v, p, q], _) = oracle::minimize(&prob);
        assert!((u - sol.u_star[0]).abs() < 1e-6, "u {u} vs {}", sol.u_star[0]);
        assert!((v - sol.v_star[0]).abs() < 1e-6, "v {v} vs {}", sol.v_star[0]);
        assert!((p - sol.p_star.as_matrix()[(0, 0)]).abs() < 1e-6);
        assert!((q - sol.q_star.as_matrix()[(0, 0)]).abs() < 1e-6);
    }
}

#[test]
fn oracle_reproduces_paper_value() {
    assert!((oracle::value(&paper_1d()) - PAPER_VALUE).abs() < 1e-9);
}

#[test]
fn starred_quantities_converge_at_least_twofold_per_decade() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..20 {
        let prob = random_problem(&mut rng, 2);
        let bar = (prob.tau0, prob.tau1);
        let e = limit_expansion(&prob, bar.0, bar.1).unwrap();
        let rows = sweep(&prob, bar, &[1e2, 1e3, 1e4]).unwrap();
        for w in rows.windows(2) {
            let pairs = [
                (w[0].p_star_error, w[1].p_star_error),
                (w[0].q_star_error, w[1].q_star_error),
                ((w[0].m_star - e.g).abs(), (w[1].m_star - e.g).abs()),
                (w[0].residual.abs(), w[1].residual.abs()),
            ];
            for (before, after) in pairs {
                assert!(2.0 * after <= before, "{after:e} vs {before:e} at lambda {}", w[1].lambda);
            }
        }
    }
}

#[test]
fn certificate_on_many_points() {
    let prob = noncommuting_2d();
    let sol = solve(&prob).unwrap();
    let a = certify(&sol, &prob, 1_000, 3).unwrap();
    let b = certify(&sol, &prob, 1_000, 3).unwrap();
    assert_eq!(a.min_sampled_slack, b.min_sampled_slack);
    assert!(a.max_graph_equality_error <= 1e-12 * a.sample_scale);
    assert!(a.min_sampled_slack >= -1e-10 * a.sample_scale);
}

#[test]
fn noncommuting_instance_matches_problem_file() {
    let text = std::fs::read_to_string(problem_path("noncommuting_2d.json")).unwrap();
    let parsed = gaussian_uot::report::parse_problem_str(&text).unwrap();
    let file_sol = solve(&parsed.problem).unwrap();
    let sol = solve(&noncommuting_2d()).unwrap();
    assert_eq!(file_sol.value, sol.value);
}

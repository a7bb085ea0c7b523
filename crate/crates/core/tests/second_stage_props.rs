use cournot_core::build_scenario_block;
use cournot_core::lcp_oracle::{enumerate_solutions, least_norm_select};
use cournot_core::second_stage::{
    kappa_bar, least_norm_limit, partition_certificate, solve_scenario, t_upper_bound,
    total_from_partition, DEFAULT_TOL,
};
use cournot_core::Scenario;
use proptest::prelude::*;

fn case() -> impl Strategy<Value = (Vec<f64>, Scenario, f64)> {
    (1usize..=6)
        .prop_flat_map(|j| {
            (
                prop::collection::vec(0.0..2.0f64, j),
                prop::collection::vec(-1.0..4.0f64, j),
                0.2..2.0f64,
                2i32..=8,
            )
        })
        .prop_map(|(x, p, g, k)| (x, Scenario::new(g, p).unwrap(), 10f64.powi(-k)))
}

fn oracle(x: &[f64], s: &Scenario, eps: f64) -> Vec<Vec<f64>> {
    let m = build_scenario_block(s, x.len(), eps).unwrap();
    let mut q: Vec<f64> = s.price().iter().map(|v| -v).collect();
    q.extend_from_slice(x);
    enumerate_solutions(&m, &q).unwrap().solutions
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_oracle((x, s, eps) in case()) {
        let sol = solve_scenario(&x, &s, eps, DEFAULT_TOL).unwrap();
        let set = oracle(&x, &s, eps);
        prop_assert_eq!(set.len(), 1);
        prop_assert!(dist_inf(&sol.stacked(), &set[0]) <= 1e-8);
        prop_assert!(partition_certificate(&x, &s, eps, &sol, DEFAULT_TOL));
        let t = total_from_partition(&x, &s, eps, &sol.partition).unwrap();
        prop_assert!((t - sol.total).abs() <= 1e-10 * sol.total.abs().max(1.0));
    }

    #[test]
    fn solution_invariants((x, s, eps) in case()) {
        let sol = solve_scenario(&x, &s, eps, DEFAULT_TOL).unwrap();
        prop_assert!(sol.supply.iter().chain(&sol.multiplier).all(|v| *v >= 0.0));
        let sum: f64 = sol.supply.iter().sum();
        prop_assert!((sum - sol.total).abs() <= 1e-12 * sol.total.abs().max(1.0));
        prop_assert!(sol.residual <= DEFAULT_TOL);
        prop_assert!(sol.total <= t_upper_bound(&x, &s, eps) + 1e-12);
        prop_assert!(!sol.used_fallback);
    }

    #[test]
    fn error_bound((x, s, eps) in case()) {
        let sol = solve_scenario(&x, &s, eps, DEFAULT_TOL).unwrap();
        let lim = least_norm_limit(&x, &s).unwrap();
        let gap = sol.multiplier.iter().zip(&lim.multiplier)
            .map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(gap <= kappa_bar(&x, &s) * eps + 1e-15);
    }

    #[test]
    fn least_norm_matches_oracle((x, s, _eps) in case()) {
        let lim = least_norm_limit(&x, &s).unwrap();
        let m = build_scenario_block(&s, x.len(), 0.0).unwrap();
        let mut q: Vec<f64> = s.price().iter().map(|v| -v).collect();
        q.extend_from_slice(&x);
        let set = enumerate_solutions(&m, &q).unwrap();
        let best = least_norm_select(&set).unwrap();
        prop_assert!(dist_inf(&lim.stacked(), &best) <= 1e-8);
        prop_assert!(lim.residual_unregularized <= 1e-10);
        prop_assert!(partition_certificate(&x, &s, 0.0, &lim, DEFAULT_TOL));
    }

    #[test]
    fn limit_is_approached((x, s, _eps) in case()) {
        let lim = least_norm_limit(&x, &s).unwrap().stacked();
        let mut prev = f64::INFINITY;
        for k in 2..=8 {
            let sol = solve_scenario(&x, &s, 10f64.powi(-k), DEFAULT_TOL).unwrap();
            let d = sol.stacked().iter().zip(&lim).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prop_assert!(d <= prev + 1e-12);
            prev = d;
        }
        prop_assert!(prev <= 1e-6);
    }

    #[test]
    fn nonpositive_prices_give_zero(
        x in prop::collection::vec(0.0..5.0f64, 1..6),
        g in 0.1..3.0f64,
        eps in 1e-9..1e-1f64,
        seed in any::<u64>(),
    ) {
        let p: Vec<f64> = x.iter().enumerate()
            .map(|(i, _)| -(((seed >> (i % 60)) & 7) as f64) / 4.0).collect();
        let s = Scenario::new(g, p).unwrap();
        let sol = solve_scenario(&x, &s, eps, DEFAULT_TOL).unwrap();
        prop_assert!(sol.stacked().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn lipschitz_constant_is_stable_in_epsilon() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let s = Scenario::new(0.7, vec![2.0, 3.0, 0.5, 1.5]).unwrap();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..100)
        .map(|_| {
            let a = (0..4).map(|_| 2.0 * rng.gen::<f64>()).collect();
            let b = (0..4).map(|_| 2.0 * rng.gen::<f64>()).collect();
            (a, b)
        })
        .collect();
    let ratios: Vec<f64> = [1.0, 1e-1, 1e-2, 1e-4, 1e-6, 1e-8]
        .iter()
        .map(|&eps| {
            pairs
                .iter()
                .map(|(a, b)| {
                    let za = solve_scenario(a, &s, eps, DEFAULT_TOL).unwrap().stacked();
                    let zb = solve_scenario(b, &s, eps, DEFAULT_TOL).unwrap().stacked();
                    let num = za
                        .iter()
                        .zip(&zb)
                        .map(|(u, v)| (u - v).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let den = a
                        .iter()
                        .zip(b)
                        .map(|(u, v)| (u - v).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    num / den
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi < 10.0 * lo, "{ratios:?}");
}

#[test]
fn newton_fallback_matches_closed_form_on_random_cases() {
    use cournot_core::second_stage::solve_scenario_newton;
    let s = Scenario::new(1.3, vec![3.0, -0.2, 2.5, 0.7, 1.1]).unwrap();
    for eps in [1e-2, 1e-4, 1e-6] {
        let x = [0.1, 1.0, 2.0, 0.0, 0.4];
        let a = solve_scenario(&x, &s, eps, DEFAULT_TOL).unwrap();
        let b = solve_scenario_newton(&x, &s, eps, 1e-12).unwrap();
        assert!(dist_inf(&a.stacked(), &b.stacked()) < 1e-8);
    }
}

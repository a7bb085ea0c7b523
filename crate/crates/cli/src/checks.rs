use anyhow::Context;
use cournot_core::lcp_oracle::{enumerate_solutions, MAX_ORACLE_DIM};
use cournot_core::second_stage::{
    kappa_bar, least_norm_limit, partition_certificate, solve_scenario, total_from_partition,
    DEFAULT_TOL,
};
use cournot_core::smoothing_newton::{structured_solve, BlockDiagonals};
use cournot_core::{build_scenario_block, driver, phm, GeneratorConfig, PhmConfig, Scenario};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::args::{parse_eps_list, CheckArgs, Command, Suite};
use crate::commands::Outcome;
use crate::files::{self, RunManifest};

/// A failing case, written out so it can be rerun by hand.
#[derive(Debug, Serialize)]
pub struct Failure {
    pub suite: &'static str,
    pub case: usize,
    pub detail: serde_json::Value,
}

struct SuiteResult {
    name: &'static str,
    total: usize,
    failures: Vec<Failure>,
}

fn second_stage_case(
    rng: &mut ChaCha8Rng,
    pool: Option<&[Scenario]>,
    eps_grid: &[f64],
    case: usize,
) -> anyhow::Result<(Vec<f64>, Scenario, f64)> {
    let eps = eps_grid[case % eps_grid.len()];
    let s = match pool {
        Some(pool) => pool[rng.gen_range(0..pool.len())].clone(),
        None => {
            let j = rng.gen_range(1..=6);
            let p = (0..j).map(|_| rng.gen_range(-1.0..4.0)).collect();
            Scenario::new(rng.gen_range(0.2..2.0), p)?
        }
    };
    let x = (0..s.num_agents())
        .map(|_| rng.gen_range(0.0..2.0))
        .collect();
    Ok((x, s, eps))
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn second_stage_suite(
    seed: u64,
    cases: usize,
    pool: Option<&[Scenario]>,
    eps_grid: &[f64],
) -> anyhow::Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..cases {
        let (x, s, eps) = second_stage_case(&mut rng, pool, eps_grid, case)?;
        let sol = solve_scenario(&x, &s, eps, DEFAULT_TOL)?;
        let mut problems = Vec::new();
        if 2 * x.len() <= MAX_ORACLE_DIM {
            let m = build_scenario_block(&s, x.len(), eps)?;
            let mut q: Vec<f64> = s.price().iter().map(|v| -v).collect();
            q.extend_from_slice(&x);
            let set = enumerate_solutions(&m, &q)?;
            if set.len() != 1 {
                problems.push(format!("oracle found {} solutions", set.len()));
            } else {
                let d = dist_inf(&sol.stacked(), &set.solutions[0]);
                if d > 1e-8 {
                    problems.push(format!("distance to oracle {d:.3e}"));
                }
            }
        }
        if !partition_certificate(&x, &s, eps, &sol, DEFAULT_TOL) {
            problems.push("partition certificate fails".into());
        }
        let t = total_from_partition(&x, &s, eps, &sol.partition)?;
        if (t - sol.total).abs() > 1e-10 * sol.total.abs().max(1.0) {
            problems.push(format!("total {t} vs {}", sol.total));
        }
        if !problems.is_empty() {
            failures.push(Failure {
                suite: "second-stage",
                case,
                detail: json!({
                    "x": x, "gamma": s.gamma(), "p": s.price(), "epsilon": eps,
                    "problems": problems,
                }),
            });
        }
    }
    Ok(SuiteResult {
        name: "second-stage",
        total: cases,
        failures,
    })
}

fn kappa_suite(
    seed: u64,
    cases: usize,
    pool: Option<&[Scenario]>,
    eps_grid: &[f64],
) -> anyhow::Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut failures = Vec::new();
    let mut total = 0;
    for case in 0..cases {
        let (x, s, _) = second_stage_case(&mut rng, pool, eps_grid, case)?;
        let lim = least_norm_limit(&x, &s)?;
        let kappa = kappa_bar(&x, &s);
        for &eps in eps_grid {
            total += 1;
            let sol = solve_scenario(&x, &s, eps, DEFAULT_TOL)?;
            let gap = sol
                .multiplier
                .iter()
                .zip(&lim.multiplier)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if gap > kappa * eps + 1e-15 {
                failures.push(Failure {
                    suite: "kappa",
                    case,
                    detail: json!({
                        "x": x, "gamma": s.gamma(), "p": s.price(), "epsilon": eps,
                        "gap": gap, "bound": kappa * eps,
                    }),
                });
            }
        }
    }
    Ok(SuiteResult {
        name: "kappa",
        total,
        failures,
    })
}

fn structured_suite(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut failures = Vec::new();
    for case in 0..cases {
        let j = rng.gen_range(1..=8);
        let mut diag =
            |lo: f64, hi: f64| -> Vec<f64> { (0..j).map(|_| rng.gen_range(lo..hi)).collect() };
        let lam = [
            diag(1.0, 3.0),
            diag(-1.0, 0.0),
            diag(1.0, 3.0),
            diag(0.0, 1.0),
            diag(0.0, 1.0),
            diag(-1.0, 0.0),
            diag(1.0, 3.0),
        ];
        let u1 = diag(0.0, 2.0);
        let u2 = diag(0.0, 1.0);
        let b: Vec<f64> = (0..3 * j).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let view = BlockDiagonals {
            lambda: [
                &lam[0], &lam[1], &lam[2], &lam[3], &lam[4], &lam[5], &lam[6],
            ],
            u1: &u1,
            u2: &u2,
        };
        let reference = view.to_dense().lu().solve(&DVector::from_column_slice(&b));
        let got = structured_solve(&view, &b[..j], &b[j..2 * j], &b[2 * j..]);
        let err = match (got, reference) {
            (Ok((s1, s2, s3)), Some(r)) => {
                let v = DVector::from_iterator(3 * j, s1.into_iter().chain(s2).chain(s3));
                let rel = (v - &r).norm() / r.norm().max(1e-300);
                (rel > 1e-10).then(|| format!("relative error {rel:.3e}"))
            }
            (Err(e), _) => Some(e.to_string()),
            (_, None) => Some("dense reference is singular".into()),
        };
        if let Some(message) = err {
            failures.push(Failure {
                suite: "structured",
                case,
                detail: json!({ "lambda": lam, "u1": u1, "u2": u2, "b": b, "problem": message }),
            });
        }
    }
    SuiteResult {
        name: "structured",
        total: cases,
        failures,
    }
}

fn nash_suite(seed: u64) -> anyhow::Result<SuiteResult> {
    let cfg = GeneratorConfig::new(4, 20, seed).with_costs(0.05, 0.25);
    let (inst, batch) = cournot_core::scenario::generate_random(&cfg)?;
    let config = PhmConfig {
        step_size: 0.5,
        tol: 1e-9,
        max_iter: 20_000,
        ..PhmConfig::default()
    };
    let eps = 1e-9;
    let (z, report, _) = phm::run(&inst, &batch, eps, &config)?;
    let ys = z.supplies();
    let profits = driver::evaluate_profits(&inst, &batch, &report.x, &ys)?;
    let gains = driver::nash_check(&inst, &batch, &report.x, &ys, 2001)?;
    let mut failures = Vec::new();
    if !report.converged {
        failures.push(Failure {
            suite: "nash",
            case: 0,
            detail: json!({ "seed": seed, "problem": "solve did not converge", "res": report.res_epsilon }),
        });
    }
    for (i, (g, p)) in gains.iter().zip(&profits).enumerate() {
        if *g > 1e-4 * (1.0 + p.abs()) {
            failures.push(Failure {
                suite: "nash",
                case: i,
                detail: json!({ "seed": seed, "agent": i, "gain": g, "profit": p, "x": report.x }),
            });
        }
    }
    Ok(SuiteResult {
        name: "nash",
        total: gains.len() + 1,
        failures,
    })
}

pub fn check(args: &CheckArgs, command: &Command) -> anyhow::Result<Outcome> {
    let eps_grid = parse_eps_list(&args.eps_grid).context("--eps-grid")?;
    let pool = match &args.scenarios {
        Some(path) => Some(cournot_core::scenario::load_csv(path)?),
        None => None,
    };
    let pool = pool.as_ref().map(|b| b.scenarios());
    let run = |s: Suite| args.suite == Suite::All || args.suite == s;

    let mut results = Vec::new();
    if run(Suite::SecondStage) {
        results.push(second_stage_suite(args.seed, args.cases, pool, &eps_grid)?);
    }
    if run(Suite::Structured) {
        results.push(structured_suite(args.seed, args.cases));
    }
    if run(Suite::Kappa) {
        results.push(kappa_suite(args.seed, args.cases, pool, &eps_grid)?);
    }
    if run(Suite::Nash) {
        results.push(nash_suite(args.seed)?);
    }

    let mut failures = Vec::new();
    for r in results {
        println!(
            "{:<13} {} passed, {} failed",
            r.name,
            r.total - r.failures.len(),
            r.failures.len()
        );
        failures.extend(r.failures);
    }
    files::ensure_dir(&args.out)?;
    let mut outputs = Vec::new();
    if !failures.is_empty() {
        let path = args.out.join("check_failures.json");
        files::write_json(&path, &failures)?;
        eprintln!("failing cases written to {}", path.display());
        outputs.push(path);
    }
    RunManifest::write(command, &args.out, outputs)?;
    Ok(if failures.is_empty() {
        Outcome::Success
    } else {
        Outcome::CheckFailed
    })
}

//! Experiment helpers: regularization and sample-size sweeps, expected
//! profits and a grid-search Nash check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, CoreError, Result};
use crate::model::{ExtendedPoint, GameInstance, ScenarioBatch};
use crate::phm::{self, PhmConfig};
use crate::report::SolveReport;
use crate::scenario::{self, GeneratorConfig};
use crate::second_stage;

/// Replications per sample size in [`sweep_samples`].
pub const DEFAULT_REPLICATIONS: usize = 10;

/// One independent solve per `epsilon`, largest first. A failed row does not
/// stop the sweep.
pub fn sweep_epsilon(
    instance: &GameInstance,
    batch: &ScenarioBatch,
    eps_list: &[f64],
    config: &PhmConfig,
) -> Result<Vec<(f64, Result<SolveReport>)>> {
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0)) {
        return Err(CoreError::InvalidConfig(format!(
            "epsilon values must be > 0, got {e}"
        )));
    }
    let mut eps: Vec<f64> = eps_list.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    Ok(eps
        .into_iter()
        .map(|e| (e, phm::run(instance, batch, e, config).map(|(_, r, _)| r)))
        .collect())
}

/// Replications at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSweepRow {
    pub num_samples: usize,
    pub reports: Vec<SolveReport>,
    pub mean_x: Vec<f64>,
    /// Population standard deviation of each component of `x`.
    pub std_x: Vec<f64>,
}

/// Seed of replication `rep` at sample size `nu`, derived from `base`.
pub fn replication_seed(base: u64, nu: usize, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(nu as u64);
    rng.set_word_pos(2 * rep as u128 * 16);
    rng.gen()
}

/// Holds the instance drawn from `generator.seed` fixed and, for every `nu`,
/// solves `replications` fresh scenario samples.
pub fn sweep_samples(
    generator: &GeneratorConfig,
    nu_list: &[usize],
    replications: usize,
    epsilon: f64,
    config: &PhmConfig,
) -> Result<Vec<Result<SampleSweepRow>>> {
    let (instance, _) = scenario::generate_random(&GeneratorConfig {
        num_samples: 1,
        ..*generator
    })?;
    let base = generator.seed;
    sweep_samples_with(
        &instance,
        nu_list,
        replications,
        epsilon,
        config,
        |nu, rep| {
            let cfg = GeneratorConfig {
                num_samples: nu,
                seed: replication_seed(base, nu, rep),
                ..*generator
            };
            scenario::generate_scenarios(&cfg)
        },
    )
}

/// [`sweep_samples`] with a caller-supplied sampler `(nu, rep) -> batch`.
pub fn sweep_samples_with<F>(
    instance: &GameInstance,
    nu_list: &[usize],
    replications: usize,
    epsilon: f64,
    config: &PhmConfig,
    sampler: F,
) -> Result<Vec<Result<SampleSweepRow>>>
where
    F: Fn(usize, usize) -> Result<ScenarioBatch>,
{
    if nu_list.contains(&0) {
        return Err(CoreError::InvalidConfig("sample sizes must be >= 1".into()));
    }
    if replications == 0 {
        return Err(CoreError::InvalidConfig("replications must be >= 1".into()));
    }
    let row = |nu: usize| -> Result<SampleSweepRow> {
        let mut reports = Vec::with_capacity(replications);
        for rep in 0..replications {
            let batch = sampler(nu, rep)?;
            let (_, report, _) = phm::run(instance, &batch, epsilon, config)?;
            reports.push(report);
        }
        let xs: Vec<&[f64]> = reports.iter().map(|r| r.x.as_slice()).collect();
        let (mean_x, std_x) = component_stats(&xs);
        Ok(SampleSweepRow {
            num_samples: nu,
            reports,
            mean_x,
            std_x,
        })
    };
    Ok(nu_list.iter().map(|&nu| row(nu)).collect())
}

/// Componentwise mean and population standard deviation.
pub fn component_stats(xs: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let Some(first) = xs.first() else {
        return (Vec::new(), Vec::new());
    };
    let n = xs.len() as f64;
    let j = first.len();
    let mean: Vec<f64> = (0..j)
        .map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n)
        .collect();
    let std = (0..j)
        .map(|i| {
            let var = xs.iter().map(|x| (x[i] - mean[i]).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect();
    (mean, std)
}

/// Expected profit of every agent over the sample:
/// `-c_j x_j^2 / 2 - a_j x_j + mean_l (p_j - gamma_l T_l) y_lj`.
pub fn evaluate_profits(
    instance: &GameInstance,
    batch: &ScenarioBatch,
    x: &[f64],
    ys: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let j = instance.num_agents();
    check_len(j, x.len(), "first-stage decision")?;
    check_len(batch.len(), ys.len(), "per-scenario supplies")?;
    check_len(j, batch.num_agents(), "batch vs instance")?;
    let mut revenue = vec![0.0; j];
    for (s, y) in batch.iter().zip(ys) {
        check_len(j, y.len(), "scenario supply")?;
        let total: f64 = y.iter().sum();
        for i in 0..j {
            revenue[i] += (s.price()[i] - s.gamma() * total) * y[i];
        }
    }
    let w = batch.weight();
    let c = instance.quad_cost();
    let a = instance.lin_cost();
    Ok((0..j)
        .map(|i| -0.5 * c[i] * x[i] * x[i] - a[i] * x[i] + w * revenue[i])
        .collect())
}

/// Profit of agent `i` producing `xi` when, in every scenario, it supplies
/// its best response `clamp((p_i - gamma T_-i) / (2 gamma), 0, xi)` to the
/// others' fixed supplies.
fn best_response_profit(
    instance: &GameInstance,
    batch: &ScenarioBatch,
    others: &[f64],
    i: usize,
    xi: f64,
) -> f64 {
    let mut revenue = 0.0;
    for (s, t_minus) in batch.iter().zip(others) {
        let g = s.gamma();
        let p = s.price()[i];
        let y = ((p - g * t_minus) / (2.0 * g)).clamp(0.0, xi);
        revenue += (p - g * (t_minus + y)) * y;
    }
    -0.5 * instance.quad_cost()[i] * xi * xi - instance.lin_cost()[i] * xi
        + batch.weight() * revenue
}

/// Largest unilateral profit gain per agent.
///
/// Agent `i` tries every point of a `grid_size` grid on
/// `[0, 2 max(x) + 1]` and its current `x_i`, best-responding in each
/// scenario while everybody else keeps `(x, y)`.
pub fn nash_check(
    instance: &GameInstance,
    batch: &ScenarioBatch,
    x: &[f64],
    ys: &[Vec<f64>],
    grid_size: usize,
) -> Result<Vec<f64>> {
    let base = evaluate_profits(instance, batch, x, ys)?;
    if grid_size < 2 {
        return Err(CoreError::InvalidConfig(
            "grid needs at least 2 points".into(),
        ));
    }
    let hi = 2.0 * x.iter().fold(0.0f64, |m, v| m.max(*v)) + 1.0;
    let j = instance.num_agents();
    let mut gains = Vec::with_capacity(j);
    for i in 0..j {
        let others: Vec<f64> = ys.iter().map(|y| y.iter().sum::<f64>() - y[i]).collect();
        let grid = (0..grid_size).map(|k| hi * k as f64 / (grid_size - 1) as f64);
        let best = grid
            .chain(std::iter::once(x[i]))
            .map(|xi| best_response_profit(instance, batch, &others, i, xi))
            .fold(f64::NEG_INFINITY, f64::max);
        gains.push(best - base[i]);
    }
    Ok(gains)
}

/// Per-scenario supplies of a solved extended point.
pub fn supplies(point: &ExtendedPoint) -> Vec<Vec<f64>> {
    point.supplies()
}

pub fn convergence_distance(x_eps: &[f64], x_ref: &[f64]) -> f64 {
    x_eps
        .iter()
        .zip(x_ref)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `|| min(x, C x - mean_l lambda_l + a) ||_2` with `lambda_l` the
/// least-norm multipliers of the unregularized second stage at `x`.
pub fn first_stage_limit_residual(
    instance: &GameInstance,
    batch: &ScenarioBatch,
    x: &[f64],
) -> Result<f64> {
    let j = instance.num_agents();
    check_len(j, x.len(), "first-stage decision")?;
    let xc: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let mut lam_sum = vec![0.0; j];
    for s in batch.iter() {
        let sol = second_stage::least_norm_limit(&xc, s)?;
        for (acc, l) in lam_sum.iter_mut().zip(&sol.multiplier) {
            *acc += l;
        }
    }
    let w = batch.weight();
    let c = instance.quad_cost();
    let a = instance.lin_cost();
    Ok((0..j)
        .map(|i| x[i].min(c[i] * x[i] - w * lam_sum[i] + a[i]).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Table row for sweeps: `nu,dim,epsilon,iter,time_s,res`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub nu: usize,
    pub dim: usize,
    pub epsilon: f64,
    pub iter: usize,
    pub time_s: f64,
    pub res: f64,
    pub converged: bool,
    #[serde(default)]
    pub error: String,
}

impl SweepRow {
    pub fn from_report(report: &SolveReport) -> Self {
        Self {
            nu: report.num_samples,
            dim: report.dim,
            epsilon: report.epsilon,
            iter: report.iterations,
            time_s: report.wall_time_seconds,
            res: report.res_original,
            converged: report.converged,
            error: String::new(),
        }
    }

    pub fn failed(nu: usize, num_agents: usize, epsilon: f64, error: &CoreError) -> Self {
        Self {
            nu,
            dim: num_agents * (1 + 2 * nu),
            epsilon,
            iter: 0,
            time_s: 0.0,
            res: f64::NAN,
            converged: false,
            error: error.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;

    #[test]
    fn profit_examples() {
        let inst = GameInstance::new(vec![1.0], vec![1.0]).unwrap();
        let batch = ScenarioBatch::new(vec![Scenario::new(1.0, vec![4.0]).unwrap()]).unwrap();
        let p = evaluate_profits(&inst, &batch, &[1.0], &[vec![1.0]]).unwrap();
        assert_eq!(p, vec![1.5]);
        let p = evaluate_profits(&inst, &batch, &[0.0], &[vec![0.0]]).unwrap();
        assert_eq!(p, vec![0.0]);
        assert!(evaluate_profits(&inst, &batch, &[0.0], &[]).is_err());
    }

    #[test]
    fn distance() {
        assert_eq!(convergence_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(convergence_distance(&[3.0, 0.0], &[0.0, 4.0]), 5.0);
    }

    #[test]
    fn replication_seeds_differ() {
        let a = replication_seed(1, 50, 0);
        assert_eq!(a, replication_seed(1, 50, 0));
        assert_ne!(a, replication_seed(1, 50, 1));
        assert_ne!(a, replication_seed(1, 200, 0));
        assert_ne!(a, replication_seed(2, 50, 0));
    }

    #[test]
    fn stats() {
        let (m, s) = component_stats(&[&[1.0, 2.0], &[3.0, 2.0]]);
        assert_eq!(m, vec![2.0, 2.0]);
        assert_eq!(s, vec![1.0, 0.0]);
    }
}

//! Per-scenario second-stage LCP in closed form.
//!
//! For a fixed first-stage `x` and total supply `T`, every agent's pair
//! `(y_j, lambda_j)` falls into one of three regimes determined by
//! `s_j = p_j - gamma T`:
//!
//! * inactive (`s_j <= 0`): `y_j = lambda_j = 0`;
//! * interior (`0 < s_j <= gamma x_j`): `y_j = s_j / gamma`, `lambda_j = 0`;
//! * binding (`s_j > gamma x_j`): `y_j = (x_j + eps s_j) / (1 + eps gamma)`,
//!   `lambda_j = (s_j - gamma x_j) / (1 + eps gamma)`.
//!
//! `T` is then the unique fixed point of the nonincreasing map
//! `T -> sum_j y_j(T)`. The map is piecewise affine with kinks at
//! `p_j / gamma` and `p_j / gamma - x_j`; scanning the kinks locates the
//! piece containing the fixed point and [`total_from_partition`] solves it.

use nalgebra::DMatrix;

use crate::error::{check_len, CoreError, Result};
use crate::model::{build_scenario_block, min_residual_norm, Scenario};
use crate::smoothing_newton::{self, SmoothingOptions};

/// Default tolerance for partition certificates.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Inactive,
    Interior,
    Binding,
}

/// Assignment of every agent to a [`Regime`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    regimes: Vec<Regime>,
}

impl Partition {
    pub fn new(regimes: Vec<Regime>) -> Self {
        Self { regimes }
    }

    pub fn regimes(&self) -> &[Regime] {
        &self.regimes
    }

    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    /// Zero-based indices in the given regime, ascending.
    pub fn indices(&self, regime: Regime) -> Vec<usize> {
        self.regimes
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == regime)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, regime: Regime) -> usize {
        self.regimes.iter().filter(|r| **r == regime).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondStageSolution {
    pub supply: Vec<f64>,
    pub multiplier: Vec<f64>,
    pub total: f64,
    pub partition: Partition,
    /// `|| min(z, M_eps z + q) ||_2` at the returned point.
    pub residual: f64,
    /// Same residual with the unregularized matrix.
    pub residual_unregularized: f64,
    /// Set when the closed form failed verification and Newton was used.
    pub used_fallback: bool,
}

impl SecondStageSolution {
    /// `(y, lambda)` stacked.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.supply.clone();
        v.extend_from_slice(&self.multiplier);
        v
    }
}

fn validate(x: &[f64], scenario: &Scenario) -> Result<()> {
    check_len(scenario.num_agents(), x.len(), "first-stage decision")?;
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(CoreError::InvalidConfig(format!(
            "first-stage decision must be finite and nonnegative, got {v}"
        )));
    }
    Ok(())
}

/// Regime of one agent at total `t`; ties go to the lower regime.
fn classify(x: f64, p: f64, gamma: f64, t: f64) -> Regime {
    let s = p - gamma * t;
    if s <= 0.0 {
        Regime::Inactive
    } else if s / gamma <= x {
        Regime::Interior
    } else {
        Regime::Binding
    }
}

fn component(x: f64, p: f64, gamma: f64, t: f64, eps: f64, regime: Regime) -> (f64, f64) {
    let s = p - gamma * t;
    match regime {
        Regime::Inactive => (0.0, 0.0),
        Regime::Interior => (s / gamma, 0.0),
        Regime::Binding => {
            let d = 1.0 + eps * gamma;
            ((x + eps * s) / d, (s - gamma * x) / d)
        }
    }
}

/// Total supply implied by a fixed partition:
///
/// ```text
/// T = (gamma sum_{I3} x + eps gamma sum_{I2 + I3} p + sum_{I2} p)
///     / ((eps gamma (|I2| + |I3| + 1) + |I2| + 1) gamma)
/// ```
pub fn total_from_partition(
    x: &[f64],
    scenario: &Scenario,
    epsilon: f64,
    partition: &Partition,
) -> Result<f64> {
    check_len(scenario.num_agents(), x.len(), "first-stage decision")?;
    check_len(scenario.num_agents(), partition.len(), "partition")?;
    let g = scenario.gamma();
    let p = scenario.price();
    let (mut sum_x3, mut sum_p2, mut sum_p3) = (0.0, 0.0, 0.0);
    let (mut n2, mut n3) = (0.0, 0.0);
    for (j, regime) in partition.regimes().iter().enumerate() {
        match regime {
            Regime::Inactive => {}
            Regime::Interior => {
                sum_p2 += p[j];
                n2 += 1.0;
            }
            Regime::Binding => {
                sum_x3 += x[j];
                sum_p3 += p[j];
                n3 += 1.0;
            }
        }
    }
    let num = g * sum_x3 + epsilon * g * (sum_p2 + sum_p3) + sum_p2;
    let den = (epsilon * g * (n2 + n3 + 1.0) + n2 + 1.0) * g;
    let t = num / den;
    if !t.is_finite() {
        return Err(CoreError::InvalidScenario(format!(
            "total supply overflowed (numerator {num:e}, denominator {den:e})"
        )));
    }
    Ok(t)
}

/// Locates the fixed point of `T -> sum_j y_j(T)` by scanning kinks.
fn scan(x: &[f64], scenario: &Scenario, eps: f64) -> Result<(f64, Partition)> {
    let g = scenario.gamma();
    let p = scenario.price();
    let excess = |t: f64| -> f64 {
        let mut sum = 0.0;
        for j in 0..x.len() {
            let r = classify(x[j], p[j], g, t);
            sum += component(x[j], p[j], g, t, eps, r).0;
        }
        sum - t
    };

    let mut knots: Vec<f64> = vec![0.0];
    for j in 0..x.len() {
        for k in [p[j] / g, p[j] / g - x[j]] {
            if k > 0.0 && k.is_finite() {
                knots.push(k);
            }
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    // excess(0) >= 0 and excess is strictly decreasing, so bisect on knots.
    let lo = knots[1..].partition_point(|&k| excess(k) >= 0.0);
    let left = knots[lo];
    let right = knots.get(lo + 1).copied();
    let probe = match right {
        Some(r) => 0.5 * (left + r),
        None => left + 1.0 + left.abs(),
    };
    let partition = Partition::new(
        (0..x.len())
            .map(|j| classify(x[j], p[j], g, probe))
            .collect(),
    );
    let mut t = total_from_partition(x, scenario, eps, &partition)?;
    t = t.max(left);
    if let Some(r) = right {
        t = t.min(r);
    }
    Ok((t, partition))
}

fn assemble(x: &[f64], scenario: &Scenario, eps: f64, t: f64) -> SecondStageSolution {
    let g = scenario.gamma();
    let p = scenario.price();
    let j = x.len();
    let mut supply = vec![0.0; j];
    let mut multiplier = vec![0.0; j];
    let mut regimes = Vec::with_capacity(j);
    for i in 0..j {
        let r = classify(x[i], p[i], g, t);
        let (y, l) = component(x[i], p[i], g, t, eps, r);
        supply[i] = y;
        multiplier[i] = l;
        regimes.push(r);
    }
    let (residual, residual_unregularized) = residuals(x, scenario, eps, &supply, &multiplier);
    SecondStageSolution {
        supply,
        multiplier,
        total: t,
        partition: Partition::new(regimes),
        residual,
        residual_unregularized,
        used_fallback: false,
    }
}

/// `|| min(z, M z + q) ||_2` for `z = (y, lambda)`, with and without `eps`.
fn residuals(x: &[f64], scenario: &Scenario, eps: f64, y: &[f64], lam: &[f64]) -> (f64, f64) {
    let g = scenario.gamma();
    let p = scenario.price();
    let t: f64 = y.iter().sum();
    let mut z = Vec::with_capacity(2 * y.len());
    z.extend_from_slice(y);
    z.extend_from_slice(lam);
    let mut w = vec![0.0; z.len()];
    let mut w0 = vec![0.0; z.len()];
    let j = y.len();
    for i in 0..j {
        w[i] = g * (t + y[i]) + lam[i] - p[i];
        w0[i] = w[i];
        w0[j + i] = x[i] - y[i];
        w[j + i] = w0[j + i] + eps * lam[i];
    }
    (min_residual_norm(&z, &w), min_residual_norm(&z, &w0))
}

/// Unique solution of the regularized second-stage LCP for `eps > 0`.
///
/// The closed form is verified (`sum y = T`, complementarity residual at
/// most `tol`, scaled by the data); if verification fails the 2J LCP is
/// solved by smoothing Newton instead.
pub fn solve_scenario(
    x: &[f64],
    scenario: &Scenario,
    epsilon: f64,
    tol: f64,
) -> Result<SecondStageSolution> {
    validate(x, scenario)?;
    if !(epsilon > 0.0) {
        return Err(CoreError::InvalidConfig(format!(
            "epsilon = {epsilon} must be > 0; use least_norm_limit for the limit"
        )));
    }
    let (t, _) = scan(x, scenario, epsilon)?;
    let sol = assemble(x, scenario, epsilon, t);
    let scale =
        1.0 + scenario.gamma() * t + scenario.price().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let total_ok =
        (sol.supply.iter().sum::<f64>() - t).abs() <= 1e-12 * (1.0 + t.abs()) * x.len() as f64;
    if total_ok && sol.residual <= tol.max(1e-13 * scale) {
        return Ok(sol);
    }
    solve_scenario_newton(x, scenario, epsilon, tol)
}

/// Solves the 2J second-stage LCP by dense smoothing Newton, bypassing the
/// closed form.
pub fn solve_scenario_newton(
    x: &[f64],
    scenario: &Scenario,
    epsilon: f64,
    tol: f64,
) -> Result<SecondStageSolution> {
    validate(x, scenario)?;
    let j = x.len();
    let m: DMatrix<f64> = build_scenario_block(scenario, j, epsilon)?;
    let mut q: Vec<f64> = scenario.price().iter().map(|v| -v).collect();
    q.extend_from_slice(x);
    let opts = SmoothingOptions {
        tol: tol.max(1e-14),
        max_iter: 200,
        ..SmoothingOptions::default()
    };
    let out = smoothing_newton::solve_dense_lcp(m, q, &vec![0.0; 2 * j], &opts)?;
    let supply: Vec<f64> = out.z[..j].iter().map(|v| v.max(0.0)).collect();
    let multiplier: Vec<f64> = out.z[j..].iter().map(|v| v.max(0.0)).collect();
    let total = supply.iter().sum();
    let regimes = (0..j)
        .map(|i| {
            if supply[i] <= tol {
                Regime::Inactive
            } else if multiplier[i] <= tol {
                Regime::Interior
            } else {
                Regime::Binding
            }
        })
        .collect();
    let (residual, residual_unregularized) = residuals(x, scenario, epsilon, &supply, &multiplier);
    Ok(SecondStageSolution {
        supply,
        multiplier,
        total,
        partition: Partition::new(regimes),
        residual,
        residual_unregularized,
        used_fallback: true,
    })
}

/// Least-norm solution of the unregularized second stage.
///
/// `y` is unique; `lambda_j = p_j - gamma (T + x_j)` on the binding set and
/// zero elsewhere, which is the componentwise smallest multiplier.
pub fn least_norm_limit(x: &[f64], scenario: &Scenario) -> Result<SecondStageSolution> {
    validate(x, scenario)?;
    let (t, _) = scan(x, scenario, 0.0)?;
    Ok(assemble(x, scenario, 0.0, t))
}

/// Sign conditions of the returned partition at tolerance `tol`:
///
/// * inactive: `gamma T + lambda_j - p_j >= 0`, `y_j - x_j <= 0`;
/// * interior: `gamma T + lambda_j - p_j < 0`, `y_j - x_j <= 0`;
/// * binding: `gamma T + lambda_j - p_j < 0`, `y_j - x_j > 0`.
///
/// In the `eps = 0` limit the binding set has `y_j = x_j`, so the last
/// inequality is checked non-strictly there.
pub fn partition_certificate(
    x: &[f64],
    scenario: &Scenario,
    epsilon: f64,
    solution: &SecondStageSolution,
    tol: f64,
) -> bool {
    let g = scenario.gamma();
    let p = scenario.price();
    let t = solution.total;
    solution
        .partition
        .regimes()
        .iter()
        .enumerate()
        .all(|(j, regime)| {
            let a = g * t + solution.multiplier[j] - p[j];
            let b = solution.supply[j] - x[j];
            let scale = tol * (1.0 + p[j].abs() + g * t.abs());
            match regime {
                Regime::Inactive => a >= -scale && b <= tol,
                Regime::Interior => a < scale && b <= tol,
                Regime::Binding if epsilon > 0.0 => a < scale && b > -tol,
                Regime::Binding => a < scale && b.abs() <= tol * (1.0 + x[j]),
            }
        })
}

/// `3 sqrt(J) (gamma^2 ||x||_1 + gamma ||p||_1)`.
pub fn kappa_bar(x: &[f64], scenario: &Scenario) -> f64 {
    let g = scenario.gamma();
    let j = x.len() as f64;
    let x1: f64 = x.iter().map(|v| v.abs()).sum();
    let p1: f64 = scenario.price().iter().map(|v| v.abs()).sum();
    3.0 * j.sqrt() * (g * g * x1 + g * p1)
}

/// `||x||_1 + (eps + 1/gamma) ||p||_1`.
pub fn t_upper_bound(x: &[f64], scenario: &Scenario, epsilon: f64) -> f64 {
    let x1: f64 = x.iter().map(|v| v.abs()).sum();
    let p1: f64 = scenario.price().iter().map(|v| v.abs()).sum();
    x1 + (epsilon + 1.0 / scenario.gamma()) * p1
}

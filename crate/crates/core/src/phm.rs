//! Progressive hedging over the sampled scenarios.
//!
//! Each iteration solves, for every scenario `l`, the proximal subproblem
//! [`SubproblemSystem`] centred at `(xbar^k, v_l^k)` with multiplier `w_l`,
//! then sets
//!
//! ```text
//! xbar^{k+1} = mean_l xhat_l,   v_l^{k+1} = vhat_l,   w_l += r (xhat_l - xbar^{k+1})
//! ```
//!
//! Scenarios are processed in contiguous blocks in parallel. The mean is
//! taken by pairwise summation in scenario order, so results do not depend
//! on the block size or thread count.

use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, CoreError, Result};
use crate::model::{ExtendedPoint, ExtendedSystem, GameInstance, Layout, ScenarioBatch};
use crate::report::SolveReport;
use crate::smoothing_newton::{self, SmoothingOptions, SubproblemSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhmConfig {
    pub step_size: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Scenarios per parallel block; values above `nu` mean one block.
    pub block_size: usize,
    pub warm_start: bool,
    pub inner: SmoothingOptions,
}

impl Default for PhmConfig {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            tol: 1e-6,
            max_iter: 5000,
            block_size: 50,
            warm_start: true,
            inner: SmoothingOptions::default(),
        }
    }
}

impl PhmConfig {
    /// Inner options with the tolerance capped at `tol / 100`, so subproblem
    /// error stays below the outer stopping test.
    pub fn inner_options(&self) -> SmoothingOptions {
        SmoothingOptions {
            tol: self.inner.tol.min(0.01 * self.tol).max(1e-13),
            ..self.inner
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(CoreError::InvalidConfig(format!(
                "step size must be > 0, got {}",
                self.step_size
            )));
        }
        if !(self.tol > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if self.block_size == 0 {
            return Err(CoreError::InvalidConfig("block size must be >= 1".into()));
        }
        if !(self.inner.tol > 0.0) || self.inner.max_iter == 0 {
            return Err(CoreError::InvalidConfig(
                "inner solver needs tol > 0 and max_iter >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Contiguous blocks of `block_size` scenarios; the last may be shorter.
pub fn partition_blocks(num_scenarios: usize, block_size: usize) -> Result<Vec<Range<usize>>> {
    if block_size == 0 {
        return Err(CoreError::InvalidConfig("block size must be >= 1".into()));
    }
    Ok((0..num_scenarios)
        .step_by(block_size)
        .map(|start| start..(start + block_size).min(num_scenarios))
        .collect())
}

/// Iterate of the hedging method. Per-scenario arrays are stored flat,
/// scenario-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhmState {
    iteration: usize,
    num_agents: usize,
    num_scenarios: usize,
    x_bar: Vec<f64>,
    /// Last subproblem first-stage solutions, used for warm starts.
    x_hat: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    inner_iterations: usize,
    max_mean_multiplier: f64,
    residual_history: Vec<f64>,
}

impl PhmState {
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_scenarios(&self) -> usize {
        self.num_scenarios
    }

    pub fn x_bar(&self) -> &[f64] {
        &self.x_bar
    }

    /// First-stage copy held by scenario `l`; equal to `xbar` after every update.
    pub fn x_copy(&self, _scenario: usize) -> &[f64] {
        &self.x_bar
    }

    pub fn x_hat(&self, scenario: usize) -> &[f64] {
        let j = self.num_agents;
        &self.x_hat[scenario * j..(scenario + 1) * j]
    }

    pub fn response(&self, scenario: usize) -> &[f64] {
        let j = 2 * self.num_agents;
        &self.v[scenario * j..(scenario + 1) * j]
    }

    pub fn multiplier(&self, scenario: usize) -> &[f64] {
        let j = self.num_agents;
        &self.w[scenario * j..(scenario + 1) * j]
    }

    pub fn inner_iterations(&self) -> usize {
        self.inner_iterations
    }

    /// Residuals recorded by [`run`] before each iteration.
    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    /// `max_j |mean_l (w_l)_j|`.
    pub fn mean_multiplier(&self) -> f64 {
        mean_rows(&self.w, self.num_scenarios, self.num_agents)
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest [`Self::mean_multiplier`] seen so far.
    pub fn max_mean_multiplier(&self) -> f64 {
        self.max_mean_multiplier
    }

    /// `(xbar, v_1, ..., v_nu)` as a point of the extended system.
    pub fn to_point(&self) -> ExtendedPoint {
        let layout = Layout::new(self.num_agents, self.num_scenarios);
        let mut data = Vec::with_capacity(layout.dim());
        data.extend_from_slice(&self.x_bar);
        data.extend_from_slice(&self.v);
        ExtendedPoint::from_vec(layout, data).expect("layout matches state")
    }
}

/// `x_l = x0`, `v_l = 0`, `w_l = 0` for every scenario.
pub fn initialize(instance: &GameInstance, batch: &ScenarioBatch, x0: &[f64]) -> Result<PhmState> {
    let j = instance.num_agents();
    check_len(j, batch.num_agents(), "batch vs instance")?;
    check_len(j, x0.len(), "initial point")?;
    if x0.iter().any(|v| !(*v >= 0.0)) {
        return Err(CoreError::InvalidConfig(
            "initial point must be nonnegative".into(),
        ));
    }
    let nu = batch.len();
    Ok(PhmState {
        iteration: 0,
        num_agents: j,
        num_scenarios: nu,
        x_bar: x0.to_vec(),
        x_hat: x0.repeat(nu),
        v: vec![0.0; 2 * j * nu],
        w: vec![0.0; j * nu],
        inner_iterations: 0,
        max_mean_multiplier: 0.0,
        residual_history: Vec::new(),
    })
}

/// Mean of `rows` stacked length-`width` rows, by pairwise summation in row order.
pub fn mean_rows(data: &[f64], rows: usize, width: usize) -> Vec<f64> {
    fn sum(data: &[f64], lo: usize, hi: usize, width: usize, out: &mut [f64]) {
        if hi - lo <= 8 {
            out.iter_mut().for_each(|v| *v = 0.0);
            for r in lo..hi {
                for (o, v) in out.iter_mut().zip(&data[r * width..(r + 1) * width]) {
                    *o += v;
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let mut right = vec![0.0; width];
        sum(data, lo, mid, width, out);
        sum(data, mid, hi, width, &mut right);
        for (o, v) in out.iter_mut().zip(right) {
            *o += v;
        }
    }
    let mut out = vec![0.0; width];
    if rows > 0 {
        sum(data, 0, rows, width, &mut out);
        let inv = 1.0 / rows as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }
    out
}

/// One hedging step.
pub fn iterate(
    state: &mut PhmState,
    instance: &GameInstance,
    batch: &ScenarioBatch,
    epsilon: f64,
    config: &PhmConfig,
) -> Result<()> {
    config.validate()?;
    let j = state.num_agents;
    let nu = state.num_scenarios;
    check_len(j, instance.num_agents(), "state vs instance")?;
    check_len(nu, batch.len(), "state vs batch")?;
    check_len(j, batch.num_agents(), "batch vs instance")?;

    let block = config.block_size.min(nu);
    let r = config.step_size;
    let inner_opts = config.inner_options();
    let x_bar = &state.x_bar;
    let scenarios = batch.scenarios();

    let inner: Vec<Result<usize>> = state
        .x_hat
        .par_chunks_mut(block * j)
        .zip(state.v.par_chunks_mut(block * 2 * j))
        .zip(state.w.par_chunks(block * j))
        .enumerate()
        .map(|(b, ((x_hat, v), w))| {
            let mut iterations = 0;
            let mut z0 = vec![0.0; 3 * j];
            for (k, ((xh, vl), wl)) in x_hat
                .chunks_mut(j)
                .zip(v.chunks_mut(2 * j))
                .zip(w.chunks(j))
                .enumerate()
            {
                let l = b * block + k;
                let wrap = |e| CoreError::Subproblem {
                    scenario: l,
                    source: Box::new(e),
                };
                let sys = SubproblemSystem::new(instance, &scenarios[l], epsilon, r, wl, x_bar, vl)
                    .map_err(wrap)?;
                if config.warm_start {
                    z0[..j].copy_from_slice(xh);
                    z0[j..].copy_from_slice(vl);
                } else {
                    z0.iter_mut().for_each(|v| *v = 0.0);
                }
                let out = match smoothing_newton::solve_subproblem(&sys, &z0, &inner_opts) {
                    Ok(out) => out,
                    Err(CoreError::IterationCap { .. }) => {
                        // Retry cold with a larger budget before giving up.
                        let opts = SmoothingOptions {
                            max_iter: inner_opts.max_iter * 4,
                            ..inner_opts
                        };
                        smoothing_newton::solve_subproblem(&sys, &vec![0.0; 3 * j], &opts)
                            .map_err(wrap)?
                    }
                    Err(e) => return Err(wrap(e)),
                };
                iterations += out.iterations;
                xh.copy_from_slice(&out.z[..j]);
                vl.copy_from_slice(&out.z[j..]);
            }
            Ok(iterations)
        })
        .collect();
    for res in inner {
        state.inner_iterations += res?;
    }

    state.x_bar = mean_rows(&state.x_hat, nu, j);
    for l in 0..nu {
        for i in 0..j {
            state.w[l * j + i] += r * (state.x_hat[l * j + i] - state.x_bar[i]);
        }
    }
    state.iteration += 1;
    state.max_mean_multiplier = state.max_mean_multiplier.max(state.mean_multiplier());
    Ok(())
}

/// Runs hedging from `x0 = 0` until the regularized residual at
/// `(xbar, v)` drops to `config.tol` or `max_iter` is reached. In the
/// latter case the best iterate seen is returned with `converged = false`.
pub fn run(
    instance: &GameInstance,
    batch: &ScenarioBatch,
    epsilon: f64,
    config: &PhmConfig,
) -> Result<(ExtendedPoint, SolveReport, PhmState)> {
    let x0 = vec![0.0; instance.num_agents()];
    run_from(instance, batch, epsilon, config, &x0)
}

pub fn run_from(
    instance: &GameInstance,
    batch: &ScenarioBatch,
    epsilon: f64,
    config: &PhmConfig,
    x0: &[f64],
) -> Result<(ExtendedPoint, SolveReport, PhmState)> {
    config.validate()?;
    if !(epsilon > 0.0) {
        return Err(CoreError::InvalidConfig(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let start = Instant::now();
    let system = ExtendedSystem::new(instance, batch, epsilon)?;
    let mut state = initialize(instance, batch, x0)?;

    let mut point = state.to_point();
    let mut residual = system.ncp_min_residual(point.as_slice())?;
    let mut best = (residual, point.clone());
    state.residual_history.push(residual);
    while residual > config.tol && state.iteration < config.max_iter {
        iterate(&mut state, instance, batch, epsilon, config)?;
        point = state.to_point();
        residual = system.ncp_min_residual(point.as_slice())?;
        state.residual_history.push(residual);
        if residual < best.0 {
            best = (residual, point.clone());
        }
    }
    let converged = residual <= config.tol;
    let (res_epsilon, point) = if converged { (residual, point) } else { best };
    let res_original = system
        .with_epsilon(0.0)?
        .ncp_min_residual(point.as_slice())?;
    let report = SolveReport {
        num_agents: instance.num_agents(),
        num_samples: batch.len(),
        dim: system.dim(),
        epsilon,
        step_size: config.step_size,
        block_size: config.block_size.min(batch.len()),
        tol: config.tol,
        seed: None,
        converged,
        iterations: state.iteration,
        inner_iterations: state.inner_iterations,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        res_epsilon,
        res_original,
        max_mean_multiplier: state.max_mean_multiplier,
        x: point.first_stage().to_vec(),
    };
    Ok((point, report, state))
}

//! Game data and the assembled complementarity systems.
//!
//! A two-stage Cournot game couples a first-stage production vector `x`
//! with per-scenario supply `y` and capacity multipliers `lambda`. For a
//! scenario with supply discount `gamma` and prices `p`, the second stage is
//! the LCP with matrix
//!
//! ```text
//! M_eps = [ gamma (e e^T + I)   I     ]
//!         [ -I                  eps I ]
//! ```
//!
//! and vector `(-p, x)`. Stacking `nu` scenarios with equal weights gives the
//! extended system `0 <= z  _|_  H_eps z + q >= 0` over
//! `z = (x, y_1, lambda_1, ..., y_nu, lambda_nu)`, which is kept in operator
//! form here and never materialized for realistic sample sizes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, CoreError, Result};

/// Lower bound on the supply discount accepted by default.
pub const DEFAULT_GAMMA_MIN: f64 = 1e-6;

/// First-stage cost data: agent `j` pays `c_j x_j^2 / 2 + a_j x_j` to produce `x_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct GameInstance {
    quad_cost: Vec<f64>,
    lin_cost: Vec<f64>,
}

/// On-disk layout of an instance: `{"J": .., "c": [..], "a": [..]}`.
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    #[serde(rename = "J")]
    num_agents: usize,
    c: Vec<f64>,
    a: Vec<f64>,
}

impl TryFrom<InstanceFile> for GameInstance {
    type Error = CoreError;

    fn try_from(file: InstanceFile) -> Result<Self> {
        check_len(file.num_agents, file.c.len(), "instance c")?;
        GameInstance::new(file.c, file.a)
    }
}

impl From<GameInstance> for InstanceFile {
    fn from(instance: GameInstance) -> Self {
        InstanceFile {
            num_agents: instance.num_agents(),
            c: instance.quad_cost,
            a: instance.lin_cost,
        }
    }
}

impl GameInstance {
    pub fn new(quad_cost: Vec<f64>, lin_cost: Vec<f64>) -> Result<Self> {
        if quad_cost.is_empty() {
            return Err(CoreError::InvalidInstance(
                "at least one agent is required".into(),
            ));
        }
        check_len(quad_cost.len(), lin_cost.len(), "instance a")?;
        let valid = |v: &f64| v.is_finite() && *v > 0.0;
        if !quad_cost.iter().all(valid) {
            return Err(CoreError::InvalidInstance(
                "quadratic costs must be finite and strictly positive".into(),
            ));
        }
        if !lin_cost.iter().all(valid) {
            return Err(CoreError::InvalidInstance(
                "linear costs must be finite and strictly positive".into(),
            ));
        }
        Ok(Self {
            quad_cost,
            lin_cost,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.quad_cost.len()
    }

    pub fn quad_cost(&self) -> &[f64] {
        &self.quad_cost
    }

    pub fn lin_cost(&self) -> &[f64] {
        &self.lin_cost
    }
}

/// One realization of the random market data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    gamma: f64,
    price: Vec<f64>,
}

impl Scenario {
    /// Builds a scenario, rejecting `gamma <= DEFAULT_GAMMA_MIN`.
    pub fn new(gamma: f64, price: Vec<f64>) -> Result<Self> {
        Self::with_floor(gamma, price, DEFAULT_GAMMA_MIN)
    }

    pub fn with_floor(gamma: f64, price: Vec<f64>, gamma_min: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > gamma_min) {
            return Err(CoreError::InvalidScenario(format!(
                "gamma = {gamma} must exceed the floor {gamma_min}"
            )));
        }
        if price.is_empty() {
            return Err(CoreError::InvalidScenario("price vector is empty".into()));
        }
        if !price.iter().all(|p| p.is_finite()) {
            return Err(CoreError::InvalidScenario("prices must be finite".into()));
        }
        Ok(Self { gamma, price })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn price(&self) -> &[f64] {
        &self.price
    }

    pub fn num_agents(&self) -> usize {
        self.price.len()
    }
}

/// Equally weighted finite sample of scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBatch {
    scenarios: Vec<Scenario>,
}

impl ScenarioBatch {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self> {
        let first = scenarios.first().ok_or(CoreError::EmptyBatch)?;
        let num_agents = first.num_agents();
        for s in &scenarios {
            check_len(num_agents, s.num_agents(), "scenario prices")?;
        }
        Ok(Self { scenarios })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn num_agents(&self) -> usize {
        self.scenarios[0].num_agents()
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Scenario> {
        self.scenarios.iter()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }
}

impl std::ops::Index<usize> for ScenarioBatch {
    type Output = Scenario;

    fn index(&self, idx: usize) -> &Scenario {
        &self.scenarios[idx]
    }
}

/// Dense second-stage matrix `[[gamma (ee^T + I), I], [-I, eps I]]`.
pub fn build_scenario_block(
    scenario: &Scenario,
    num_agents: usize,
    epsilon: f64,
) -> Result<DMatrix<f64>> {
    check_len(num_agents, scenario.num_agents(), "scenario block")?;
    if !(epsilon >= 0.0) {
        return Err(CoreError::InvalidConfig(format!(
            "epsilon = {epsilon} must be >= 0"
        )));
    }
    let j = num_agents;
    let g = scenario.gamma();
    let mut m = DMatrix::zeros(2 * j, 2 * j);
    for r in 0..j {
        for c in 0..j {
            m[(r, c)] = if r == c { 2.0 * g } else { g };
        }
        m[(r, j + r)] = 1.0;
        m[(j + r, r)] = -1.0;
        m[(j + r, j + r)] = epsilon;
    }
    Ok(m)
}

/// Index arithmetic for `z = (x, y_1, lambda_1, ..., y_nu, lambda_nu)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub num_agents: usize,
    pub num_scenarios: usize,
}

impl Layout {
    pub fn new(num_agents: usize, num_scenarios: usize) -> Self {
        Self {
            num_agents,
            num_scenarios,
        }
    }

    /// `J (1 + 2 nu)`.
    pub fn dim(&self) -> usize {
        self.num_agents * (1 + 2 * self.num_scenarios)
    }

    pub fn first_stage(&self) -> std::ops::Range<usize> {
        0..self.num_agents
    }

    pub fn supply(&self, scenario: usize) -> std::ops::Range<usize> {
        let start = self.num_agents * (1 + 2 * scenario);
        start..start + self.num_agents
    }

    pub fn multiplier(&self, scenario: usize) -> std::ops::Range<usize> {
        let start = self.num_agents * (2 + 2 * scenario);
        start..start + self.num_agents
    }

    /// Both second-stage blocks `(y_l, lambda_l)` of one scenario.
    pub fn response(&self, scenario: usize) -> std::ops::Range<usize> {
        let start = self.num_agents * (1 + 2 * scenario);
        start..start + 2 * self.num_agents
    }
}

/// A point of the extended system with named views.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPoint {
    layout: Layout,
    data: Vec<f64>,
}

impl ExtendedPoint {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            data: vec![0.0; layout.dim()],
        }
    }

    pub fn from_vec(layout: Layout, data: Vec<f64>) -> Result<Self> {
        check_len(layout.dim(), data.len(), "extended point")?;
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn first_stage(&self) -> &[f64] {
        &self.data[self.layout.first_stage()]
    }

    pub fn supply(&self, scenario: usize) -> &[f64] {
        &self.data[self.layout.supply(scenario)]
    }

    pub fn multiplier(&self, scenario: usize) -> &[f64] {
        &self.data[self.layout.multiplier(scenario)]
    }

    pub fn supplies(&self) -> Vec<Vec<f64>> {
        (0..self.layout.num_scenarios)
            .map(|l| self.supply(l).to_vec())
            .collect()
    }
}

/// Matrix-free extended LCP over all sampled scenarios.
///
/// Immutable once built; `apply` only reads, so a system may be shared
/// across worker threads.
#[derive(Debug, Clone, Copy)]
pub struct ExtendedSystem<'a> {
    instance: &'a GameInstance,
    batch: &'a ScenarioBatch,
    epsilon: f64,
}

impl<'a> ExtendedSystem<'a> {
    pub fn new(instance: &'a GameInstance, batch: &'a ScenarioBatch, epsilon: f64) -> Result<Self> {
        if batch.is_empty() {
            return Err(CoreError::EmptyBatch);
        }
        check_len(
            instance.num_agents(),
            batch.num_agents(),
            "batch vs instance",
        )?;
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(CoreError::InvalidConfig(format!(
                "epsilon = {epsilon} must be >= 0"
            )));
        }
        Ok(Self {
            instance,
            batch,
            epsilon,
        })
    }

    pub fn instance(&self) -> &'a GameInstance {
        self.instance
    }

    pub fn batch(&self) -> &'a ScenarioBatch {
        self.batch
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Same data with a different regularization.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.instance, self.batch, epsilon)
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.instance.num_agents(), self.batch.len())
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    /// Constant vector `(a, -p_1, 0, ..., -p_nu, 0)`.
    pub fn rhs(&self) -> Vec<f64> {
        let layout = self.layout();
        let mut q = vec![0.0; layout.dim()];
        q[layout.first_stage()].copy_from_slice(self.instance.lin_cost());
        for (l, s) in self.batch.iter().enumerate() {
            for (dst, p) in q[layout.supply(l)].iter_mut().zip(s.price()) {
                *dst = -p;
            }
        }
        q
    }

    /// Writes `H_eps z` (without the constant) into `out`.
    pub fn apply_linear_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply_impl(z, out, false)
    }

    /// Writes `H_eps z + q` into `out`.
    pub fn apply_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply_impl(z, out, true)
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; z.len()];
        self.apply_into(z, &mut out)?;
        Ok(out)
    }

    pub fn apply_linear(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; z.len()];
        self.apply_linear_into(z, &mut out)?;
        Ok(out)
    }

    fn apply_impl(&self, z: &[f64], out: &mut [f64], with_rhs: bool) -> Result<()> {
        let layout = self.layout();
        check_len(layout.dim(), z.len(), "extended system input")?;
        check_len(layout.dim(), out.len(), "extended system output")?;
        let j = layout.num_agents;
        let x = &z[layout.first_stage()];
        let c = self.instance.quad_cost();
        let a = self.instance.lin_cost();
        let eps = self.epsilon;

        let mut lambda_sum = vec![0.0; j];
        for (l, s) in self.batch.iter().enumerate() {
            let y = &z[layout.supply(l)];
            let lam = &z[layout.multiplier(l)];
            let g = s.gamma();
            let total: f64 = y.iter().sum();
            let (out_y, out_lam) = out[layout.response(l)].split_at_mut(j);
            for i in 0..j {
                let mut row_y = g * (total + y[i]) + lam[i];
                if with_rhs {
                    row_y -= s.price()[i];
                }
                out_y[i] = row_y;
                out_lam[i] = x[i] - y[i] + eps * lam[i];
                lambda_sum[i] += lam[i];
            }
        }
        let w = self.batch.weight();
        for i in 0..j {
            out[i] = c[i] * x[i] - w * lambda_sum[i] + if with_rhs { a[i] } else { 0.0 };
        }
        Ok(())
    }

    /// `|| min(z, H_eps z + q) ||_2`.
    pub fn ncp_min_residual(&self, z: &[f64]) -> Result<f64> {
        let w = self.apply(z)?;
        Ok(min_residual_norm(z, &w))
    }

    /// Dense `H_eps`; intended for small systems in tests and diagnostics.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let layout = self.layout();
        let j = layout.num_agents;
        let n = layout.dim();
        let mut h = DMatrix::zeros(n, n);
        let w = self.batch.weight();
        for i in 0..j {
            h[(i, i)] = self.instance.quad_cost()[i];
        }
        for (l, s) in self.batch.iter().enumerate() {
            let ys = layout.supply(l).start;
            let ls = layout.multiplier(l).start;
            let block = build_scenario_block(s, j, self.epsilon).expect("validated batch");
            for r in 0..2 * j {
                for c in 0..2 * j {
                    h[(ys + r, ys + c)] = block[(r, c)];
                }
            }
            for i in 0..j {
                h[(i, ls + i)] = -w;
                h[(ls + i, i)] = 1.0;
            }
        }
        h
    }

    /// `z^T W (H_eps z)` with `W = diag(I, I/nu, ..., I/nu)`.
    ///
    /// Weighting the scenario rows by their probabilities symmetrizes the
    /// coupling blocks, so this form is positive for `eps > 0`; the unweighted
    /// `z^T H_eps z` is not sign-definite once `nu > 1`.
    pub fn weighted_quadratic_form(&self, z: &[f64]) -> Result<f64> {
        let hz = self.apply_linear(z)?;
        let j = self.instance.num_agents();
        let w = self.batch.weight();
        let first: f64 = z[..j].iter().zip(&hz[..j]).map(|(a, b)| a * b).sum();
        let rest: f64 = z[j..].iter().zip(&hz[j..]).map(|(a, b)| a * b).sum();
        Ok(first + w * rest)
    }

    /// Strong monotonicity constant `min(min_j c_j, gamma_min (J + 1), eps)`
    /// of a single scenario block; reported as a diagnostic only.
    pub fn monotonicity_modulus(&self) -> f64 {
        let c_min = self
            .instance
            .quad_cost()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let g_min = self
            .batch
            .iter()
            .map(|s| s.gamma())
            .fold(f64::INFINITY, f64::min);
        let j = self.instance.num_agents() as f64;
        c_min.min(g_min * (j + 1.0)).min(self.epsilon)
    }
}

/// `|| min(z, w) ||_2` for precomputed `w = M z + q`.
pub fn min_residual_norm(z: &[f64], w: &[f64]) -> f64 {
    z.iter()
        .zip(w)
        .map(|(a, b)| {
            let m = a.min(*b);
            m * m
        })
        .sum::<f64>()
        .sqrt()
}

/// Convenience wrapper: `|| min(z, H_eps z + q) ||_2`.
pub fn ncp_min_residual(z: &[f64], system: &ExtendedSystem<'_>) -> Result<f64> {
    system.ncp_min_residual(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn duopoly() -> (GameInstance, ScenarioBatch) {
        let inst = GameInstance::new(vec![1.0, 2.0], vec![1.0, 1.5]).unwrap();
        let batch = ScenarioBatch::new(vec![
            Scenario::new(1.0, vec![3.0, 1.0]).unwrap(),
            Scenario::new(0.5, vec![0.2, 0.7]).unwrap(),
        ])
        .unwrap();
        (inst, batch)
    }

    #[test]
    fn scenario_block_duopoly() {
        let s = Scenario::new(1.0, vec![0.0, 0.0]).unwrap();
        let m = build_scenario_block(&s, 2, 0.0).unwrap();
        let expected = [
            [2.0, 1.0, 1.0, 0.0],
            [1.0, 2.0, 0.0, 1.0],
            [-1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
        ];
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(m[(r, c)], expected[r][c]);
            }
        }
        let m = build_scenario_block(&s, 2, 0.5).unwrap();
        assert_eq!(m[(2, 2)], 0.5);
        assert_eq!(m[(3, 3)], 0.5);
        assert_eq!(m[(2, 3)], 0.0);
    }

    #[test]
    fn scenario_block_single_agent() {
        let s = Scenario::new(2.0, vec![1.0]).unwrap();
        let m = build_scenario_block(&s, 1, 0.0).unwrap();
        assert_eq!(m.as_slice(), &[4.0, -1.0, 1.0, 0.0]); // column major
    }

    #[test]
    fn scenario_block_rejects_wrong_size() {
        let s = Scenario::new(2.0, vec![1.0]).unwrap();
        assert!(matches!(
            build_scenario_block(&s, 2, 0.0),
            Err(CoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dims_match_table_sizes() {
        assert_eq!(Layout::new(10, 10).dim(), 210);
        assert_eq!(Layout::new(10, 50).dim(), 1010);
        assert_eq!(Layout::new(10, 500).dim(), 10010);
        assert_eq!(Layout::new(10, 5000).dim(), 100010);
    }

    #[test]
    fn apply_zero_is_rhs() {
        let (inst, batch) = duopoly();
        let sys = ExtendedSystem::new(&inst, &batch, 1e-3).unwrap();
        let z = vec![0.0; sys.dim()];
        assert_eq!(sys.apply(&z).unwrap(), sys.rhs());
        assert_eq!(
            sys.rhs(),
            vec![1.0, 1.5, -3.0, -1.0, 0.0, 0.0, -0.2, -0.7, 0.0, 0.0]
        );
    }

    #[test]
    fn operator_matches_dense() {
        let (inst, batch) = duopoly();
        let sys = ExtendedSystem::new(&inst, &batch, 0.25).unwrap();
        let z: Vec<f64> = (0..sys.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let dense = sys.to_dense() * nalgebra::DVector::from_column_slice(&z);
        let op = sys.apply_linear(&z).unwrap();
        for (a, b) in dense.iter().zip(&op) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn first_stage_row_uses_mean_multiplier() {
        let (inst, batch) = duopoly();
        let sys = ExtendedSystem::new(&inst, &batch, 0.0).unwrap();
        let layout = sys.layout();
        let mut z = vec![0.0; sys.dim()];
        z[layout.multiplier(0)].copy_from_slice(&[2.0, 4.0]);
        z[layout.multiplier(1)].copy_from_slice(&[0.0, 2.0]);
        let w = sys.apply(&z).unwrap();
        assert_eq!(&w[..2], &[1.0 - 1.0, 1.5 - 3.0]);
    }

    #[test]
    fn residual_zero_for_nonnegative_rhs() {
        let inst = GameInstance::new(vec![1.0], vec![1.0]).unwrap();
        let batch = ScenarioBatch::new(vec![Scenario::new(1.0, vec![-1.0]).unwrap()]).unwrap();
        let sys = ExtendedSystem::new(&inst, &batch, 0.0).unwrap();
        assert_eq!(ncp_min_residual(&[0.0; 3], &sys).unwrap(), 0.0);
    }

    #[test]
    fn unweighted_form_is_indefinite_for_many_scenarios() {
        let (inst, batch) = duopoly();
        let sys = ExtendedSystem::new(&inst, &batch, 1e-6).unwrap();
        let layout = sys.layout();
        let mut z = vec![0.0; sys.dim()];
        z[layout.first_stage()].copy_from_slice(&[1.0, 1.0]);
        for l in 0..2 {
            z[layout.multiplier(l)].copy_from_slice(&[-10.0, -10.0]);
        }
        let hz = sys.apply_linear(&z).unwrap();
        let plain: f64 = z.iter().zip(&hz).map(|(a, b)| a * b).sum();
        assert!(plain < 0.0);
        assert!(sys.weighted_quadratic_form(&z).unwrap() > 0.0);
    }

    #[test]
    fn validation() {
        assert!(GameInstance::new(vec![], vec![]).is_err());
        assert!(GameInstance::new(vec![1.0], vec![0.0]).is_err());
        assert!(GameInstance::new(vec![-1.0], vec![1.0]).is_err());
        assert!(Scenario::new(0.0, vec![1.0]).is_err());
        assert!(Scenario::new(1e-7, vec![1.0]).is_err());
        assert!(Scenario::with_floor(1e-7, vec![1.0], 1e-8).is_ok());
        assert_eq!(ScenarioBatch::new(vec![]), Err(CoreError::EmptyBatch));
        let mixed = ScenarioBatch::new(vec![
            Scenario::new(1.0, vec![1.0]).unwrap(),
            Scenario::new(1.0, vec![1.0, 2.0]).unwrap(),
        ]);
        assert!(mixed.is_err());
    }
}

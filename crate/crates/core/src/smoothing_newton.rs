//! Smoothing Newton method for monotone LCPs.
//!
//! The LCP `0 <= z _|_ H z + q >= 0` is the root of `F(z) = min(z, Hz + q)`.
//! `F` is replaced by the Gabriel-More smoothing (density
//! `rho(s) = 2 / (s^2 + 4)^{3/2}`)
//!
//! ```text
//! f_j(z, delta) = z_j - ( sqrt(t_j^2 + 4 delta^2) - t_j ) / 2,   t = Hz + q - z
//! ```
//!
//! which satisfies `0 < f_j - F_j <= delta`, and Newton steps on `f( . , delta)`
//! are taken while `delta` is driven to zero. The Jacobian is
//! `I - Dbar (I - H)` with `Dbar` diagonal in `(0, 1)`; it is nonsingular
//! whenever `H` is a P-matrix.
//!
//! For the per-scenario hedging subproblems the Jacobian has a 3x3 block
//! structure with diagonal blocks plus one rank-one term, solved in `O(J)`
//! by [`structured_solve`].

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, CoreError, Result};
use crate::model::{GameInstance, Scenario};

/// Floor for Sherman-Morrison denominators and diagonal pivots, relative to
/// the scale of the quantities they are formed from.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// An affine map `z -> Hz + q` together with a solver for the smoothed
/// Newton system `(I - Dbar (I - H)) d = rhs`.
pub trait SmoothingSystem {
    fn dim(&self) -> usize;

    fn affine_into(&self, z: &[f64], out: &mut [f64]);

    fn newton_solve(&self, dbar: &[f64], rhs: &[f64], out: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SmoothingOptions {
    /// Stop once `|| min(z, Hz + q) ||_2 <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub delta_floor: f64,
    /// Armijo constant on `||f||^2 / 2`.
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for SmoothingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
            delta_floor: 1e-14,
            armijo: 1e-4,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingOutcome {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `f(z, delta)` for a smoothing system.
pub fn smooth_value<S: SmoothingSystem + ?Sized>(z: &[f64], delta: f64, system: &S) -> Vec<f64> {
    let mut w = vec![0.0; z.len()];
    system.affine_into(z, &mut w);
    z.iter()
        .zip(&w)
        .map(|(&zj, &wj)| smooth_component(zj, wj - zj, delta))
        .collect()
}

/// Diagonal of `Dbar(z)`; entries lie in `(0, 1)` for `delta > 0`.
pub fn smooth_jacobian_diag<S: SmoothingSystem + ?Sized>(
    z: &[f64],
    delta: f64,
    system: &S,
) -> Vec<f64> {
    let mut w = vec![0.0; z.len()];
    system.affine_into(z, &mut w);
    z.iter()
        .zip(&w)
        .map(|(&zj, &wj)| dbar_component(zj - wj, delta))
        .collect()
}

/// `z - (sqrt(t^2 + 4 delta^2) - t) / 2` with `t = (Hz + q - z)_j`.
#[inline]
pub fn smooth_component(z: f64, t: f64, delta: f64) -> f64 {
    z - 0.5 * (t.hypot(2.0 * delta) - t)
}

/// `(s / sqrt(s^2 + 4 delta^2) + 1) / 2` with `s = (z - Hz - q)_j`.
#[inline]
pub fn dbar_component(s: f64, delta: f64) -> f64 {
    let r = s.hypot(2.0 * delta);
    if r == 0.0 {
        0.5
    } else {
        0.5 * (s / r + 1.0)
    }
}

/// One accepted or rejected Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingIterate {
    /// Smoothing parameter used for this step.
    pub delta: f64,
    /// `||f(z, delta)||_2` before the step.
    pub merit_before: f64,
    /// `||f(z, delta)||_2` after the step (same `delta`); equal to
    /// `merit_before` when the line search failed.
    pub merit_after: f64,
    pub step: f64,
    pub accepted: bool,
    /// `||min(z, Hz + q)||_2` after the step.
    pub residual: f64,
}

/// Runs the smoothing Newton iteration from `z0`.
///
/// `delta` starts at `min(1, ||F(z0)||)` and after each accepted step
/// becomes `max(min(delta / 4, ||F(z)|| / 10), delta_floor)`; a failed line
/// search leaves `z` in place and only divides `delta` by 4.
pub fn solve<S: SmoothingSystem + ?Sized>(
    system: &S,
    z0: &[f64],
    opts: &SmoothingOptions,
) -> Result<SmoothingOutcome> {
    run(system, z0, opts, None)
}

/// [`solve`] that also records every step.
pub fn solve_traced<S: SmoothingSystem + ?Sized>(
    system: &S,
    z0: &[f64],
    opts: &SmoothingOptions,
) -> (Result<SmoothingOutcome>, Vec<SmoothingIterate>) {
    let mut trace = Vec::new();
    let out = run(system, z0, opts, Some(&mut trace));
    (out, trace)
}

fn run<S: SmoothingSystem + ?Sized>(
    system: &S,
    z0: &[f64],
    opts: &SmoothingOptions,
    mut trace: Option<&mut Vec<SmoothingIterate>>,
) -> Result<SmoothingOutcome> {
    let n = system.dim();
    check_len(n, z0.len(), "smoothing Newton start")?;

    let mut z = z0.to_vec();
    let mut w = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut dbar = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_w = vec![0.0; n];

    system.affine_into(&z, &mut w);
    let mut residual = natural_residual(&z, &w);
    if residual <= opts.tol {
        return Ok(SmoothingOutcome {
            z,
            iterations: 0,
            residual,
        });
    }
    let mut best = residual;
    let mut delta = residual.min(1.0);

    for iter in 1..=opts.max_iter {
        let mut merit = 0.0;
        for j in 0..n {
            let t = w[j] - z[j];
            f[j] = smooth_component(z[j], t, delta);
            dbar[j] = dbar_component(-t, delta);
            rhs[j] = -f[j];
            merit += f[j] * f[j];
        }
        merit *= 0.5;

        system.newton_solve(&dbar, &rhs, &mut d)?;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            for j in 0..n {
                trial[j] = z[j] + step * d[j];
            }
            system.affine_into(&trial, &mut trial_w);
            let trial_merit = 0.5
                * trial
                    .iter()
                    .zip(&trial_w)
                    .map(|(&zj, &wj)| smooth_component(zj, wj - zj, delta).powi(2))
                    .sum::<f64>();
            if trial_merit <= (1.0 - 2.0 * opts.armijo * step) * merit {
                accepted = Some(trial_merit);
                break;
            }
            step *= 0.5;
        }

        let used_delta = delta;
        if let Some(trial_merit) = accepted {
            std::mem::swap(&mut z, &mut trial);
            std::mem::swap(&mut w, &mut trial_w);
            residual = natural_residual(&z, &w);
            best = best.min(residual);
            if let Some(t) = trace.as_deref_mut() {
                t.push(SmoothingIterate {
                    delta: used_delta,
                    merit_before: (2.0 * merit).sqrt(),
                    merit_after: (2.0 * trial_merit).sqrt(),
                    step,
                    accepted: true,
                    residual,
                });
            }
            if residual <= opts.tol {
                return Ok(SmoothingOutcome {
                    z,
                    iterations: iter,
                    residual,
                });
            }
            delta = (delta * 0.25).min(0.1 * residual).max(opts.delta_floor);
        } else {
            if let Some(t) = trace.as_deref_mut() {
                t.push(SmoothingIterate {
                    delta: used_delta,
                    merit_before: (2.0 * merit).sqrt(),
                    merit_after: (2.0 * merit).sqrt(),
                    step: 0.0,
                    accepted: false,
                    residual,
                });
            }
            if delta > opts.delta_floor {
                delta = (delta * 0.25).max(opts.delta_floor);
            } else {
                break;
            }
        }
    }

    Err(CoreError::IterationCap {
        iterations: opts.max_iter,
        best_residual: best,
    })
}

/// `|| min(z, w) ||_2`.
fn natural_residual(z: &[f64], w: &[f64]) -> f64 {
    crate::model::min_residual_norm(z, w)
}

/// Dense LCP `(M, q)`; Newton systems are solved by LU.
#[derive(Debug, Clone)]
pub struct DenseLcp {
    m: DMatrix<f64>,
    q: Vec<f64>,
}

impl DenseLcp {
    pub fn new(m: DMatrix<f64>, q: Vec<f64>) -> Result<Self> {
        check_len(q.len(), m.nrows(), "dense LCP rows")?;
        check_len(q.len(), m.ncols(), "dense LCP cols")?;
        Ok(Self { m, q })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `I - Dbar (I - M)`.
    pub fn jacobian(&self, dbar: &[f64]) -> DMatrix<f64> {
        smoothing_jacobian(&self.m, dbar)
    }
}

/// `I - Dbar (I - A)` for a dense matrix `A`.
pub fn smoothing_jacobian(a: &DMatrix<f64>, dbar: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        id - dbar[r] * (id - a[(r, c)])
    })
}

impl SmoothingSystem for DenseLcp {
    fn dim(&self) -> usize {
        self.q.len()
    }

    fn affine_into(&self, z: &[f64], out: &mut [f64]) {
        let n = self.q.len();
        for r in 0..n {
            let mut acc = self.q[r];
            for c in 0..n {
                acc += self.m[(r, c)] * z[c];
            }
            out[r] = acc;
        }
    }

    fn newton_solve(&self, dbar: &[f64], rhs: &[f64], out: &mut [f64]) -> Result<()> {
        dense_solve(self.jacobian(dbar), rhs, out)
    }
}

fn dense_solve(jac: DMatrix<f64>, rhs: &[f64], out: &mut [f64]) -> Result<()> {
    let sol = jac
        .lu()
        .solve(&DVector::from_column_slice(rhs))
        .ok_or(CoreError::Singular)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(CoreError::Singular);
    }
    out.copy_from_slice(sol.as_slice());
    Ok(())
}

/// Smoothing Newton on a dense LCP.
pub fn solve_dense_lcp(
    m: DMatrix<f64>,
    q: Vec<f64>,
    z0: &[f64],
    opts: &SmoothingOptions,
) -> Result<SmoothingOutcome> {
    let lcp = DenseLcp::new(m, q)?;
    solve(&lcp, z0, opts)
}

/// Diagonal blocks of
///
/// ```text
/// [ L1   0             L2 ] [s1]   [b1]
/// [ 0    u1 u2^T + L3  L4 ] [s2] = [b2]
/// [ L5   L6            L7 ] [s3]   [b3]
/// ```
///
/// `lambda[i]` holds the diagonal of `L{i+1}`.
#[derive(Debug, Clone, Copy)]
pub struct BlockDiagonals<'a> {
    pub lambda: [&'a [f64]; 7],
    pub u1: &'a [f64],
    pub u2: &'a [f64],
}

impl BlockDiagonals<'_> {
    pub fn len(&self) -> usize {
        self.u1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u1.is_empty()
    }

    /// Dense `3J x 3J` matrix, for reference solves.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let j = self.len();
        let [l1, l2, l3, l4, l5, l6, l7] = self.lambda;
        let mut m = DMatrix::zeros(3 * j, 3 * j);
        for i in 0..j {
            m[(i, i)] = l1[i];
            m[(i, 2 * j + i)] = l2[i];
            for k in 0..j {
                m[(j + i, j + k)] = self.u1[i] * self.u2[k];
            }
            m[(j + i, j + i)] += l3[i];
            m[(j + i, 2 * j + i)] = l4[i];
            m[(2 * j + i, i)] = l5[i];
            m[(2 * j + i, j + i)] = l6[i];
            m[(2 * j + i, 2 * j + i)] = l7[i];
        }
        m
    }
}

fn check_pivot(value: f64, scale: f64) -> Result<()> {
    let floor = PIVOT_FLOOR * scale.max(f64::MIN_POSITIVE);
    if value.is_finite() && value.abs() >= floor {
        Ok(())
    } else {
        Err(CoreError::PivotFloor { value, floor })
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the block system of [`BlockDiagonals`] in `O(J)` by eliminating
/// `s1`, `s2` and applying Sherman-Morrison twice.
///
/// Returns [`CoreError::PivotFloor`] when a diagonal pivot or a
/// Sherman-Morrison denominator is too small; callers then solve densely.
pub fn structured_solve(
    blocks: &BlockDiagonals<'_>,
    b1: &[f64],
    b2: &[f64],
    b3: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let j = blocks.len();
    let mut s1 = vec![0.0; j];
    let mut s2 = vec![0.0; j];
    let mut s3 = vec![0.0; j];
    structured_solve_into(blocks, b1, b2, b3, &mut s1, &mut s2, &mut s3)?;
    Ok((s1, s2, s3))
}

/// In-place variant of [`structured_solve`].
pub fn structured_solve_into(
    blocks: &BlockDiagonals<'_>,
    b1: &[f64],
    b2: &[f64],
    b3: &[f64],
    s1: &mut [f64],
    s2: &mut [f64],
    s3: &mut [f64],
) -> Result<()> {
    let j = blocks.len();
    for (len, what) in [
        (blocks.u2.len(), "u2"),
        (b1.len(), "b1"),
        (b2.len(), "b2"),
        (b3.len(), "b3"),
        (s1.len(), "s1"),
        (s2.len(), "s2"),
        (s3.len(), "s3"),
    ] {
        check_len(j, len, what)?;
    }
    for l in blocks.lambda {
        check_len(j, l.len(), "diagonal block")?;
    }
    let [l1, l2, l3, l4, l5, l6, l7] = blocks.lambda;
    let (u1, u2) = (blocks.u1, blocks.u2);

    let scale1 = max_abs(l1);
    let scale3 = max_abs(l3);
    for i in 0..j {
        check_pivot(l1[i], scale1)?;
        check_pivot(l3[i], scale3)?;
    }

    // (u1 u2^T + L3)^{-1} = L3^{-1} - alpha L3^{-1} u1 u2^T L3^{-1}
    let mut dot = 0.0;
    let mut dot_abs = 0.0;
    for i in 0..j {
        let t = u2[i] * u1[i] / l3[i];
        dot += t;
        dot_abs += t.abs();
    }
    let denom1 = 1.0 + dot;
    check_pivot(denom1, 1.0 + dot_abs)?;
    let alpha = 1.0 / denom1;

    // s2 holds L3^{-1} b2 corrected by the rank-one term, i.e. S^{-1} b2.
    let proj_b2: f64 = (0..j).map(|i| u2[i] * b2[i] / l3[i]).sum();
    for i in 0..j {
        s2[i] = (b2[i] - alpha * u1[i] * proj_b2) / l3[i];
    }

    // Schur complement on s3: (L0 + alpha ut1 ut2^T) s3 = rhs
    // with L0 = L7 - L5 L1^{-1} L2 - L6 L3^{-1} L4.
    // s1 is used as scratch for L0, s3 for the right-hand side.
    let mut l0_scale = 0.0f64;
    for i in 0..j {
        let a = l7[i];
        let b = l5[i] * l2[i] / l1[i];
        let c = l6[i] * l4[i] / l3[i];
        s1[i] = a - b - c;
        l0_scale = l0_scale.max(a.abs() + b.abs() + c.abs());
        s3[i] = b3[i] - l5[i] * b1[i] / l1[i] - l6[i] * s2[i];
    }
    for i in 0..j {
        check_pivot(s1[i], l0_scale)?;
    }

    let mut dot2 = 0.0;
    let mut dot2_abs = 0.0;
    let mut proj_rhs = 0.0;
    for i in 0..j {
        let ut1 = l6[i] * u1[i] / l3[i];
        let ut2 = l4[i] * u2[i] / l3[i];
        let t = ut2 * ut1 / s1[i];
        dot2 += t;
        dot2_abs += t.abs();
        proj_rhs += ut2 * s3[i] / s1[i];
    }
    let denom2 = 1.0 + alpha * dot2;
    check_pivot(denom2, 1.0 + alpha.abs() * dot2_abs)?;
    let coef = alpha * proj_rhs / denom2;
    for i in 0..j {
        let ut1 = l6[i] * u1[i] / l3[i];
        s3[i] = (s3[i] - coef * ut1) / s1[i];
    }

    for i in 0..j {
        s1[i] = (b1[i] - l2[i] * s3[i]) / l1[i];
    }
    // s2 = S^{-1} (b2 - L4 s3); reuse the Sherman-Morrison form.
    let proj: f64 = (0..j)
        .map(|i| u2[i] * (b2[i] - l4[i] * s3[i]) / l3[i])
        .sum();
    for i in 0..j {
        s2[i] = (b2[i] - l4[i] * s3[i] - alpha * u1[i] * proj) / l3[i];
    }
    Ok(())
}

/// Per-scenario hedging subproblem `0 <= z _|_ Ht z + qt >= 0` with
///
/// ```text
/// Ht = [ C + rI   B           ]     qt = ( a + w - r x_prev     )
///      [ -B^T     D_eps + rI  ]          ( -p - r y_prev        )
///                                        ( -r lambda_prev       )
/// ```
///
/// over `z = (x, y, lambda)`, where `B = (0  -I)`.
#[derive(Debug, Clone)]
pub struct SubproblemSystem {
    quad_cost: Vec<f64>,
    gamma: f64,
    epsilon: f64,
    step: f64,
    rhs: Vec<f64>,
}

impl SubproblemSystem {
    /// Assembles the subproblem for one scenario from the hedging state:
    /// multiplier `w`, previous first-stage copy `x_prev` and previous
    /// response `v_prev = (y, lambda)`.
    pub fn new(
        instance: &GameInstance,
        scenario: &Scenario,
        epsilon: f64,
        step: f64,
        w: &[f64],
        x_prev: &[f64],
        v_prev: &[f64],
    ) -> Result<Self> {
        let j = instance.num_agents();
        check_len(j, scenario.num_agents(), "subproblem scenario")?;
        check_len(j, w.len(), "subproblem multiplier")?;
        check_len(j, x_prev.len(), "subproblem first stage")?;
        check_len(2 * j, v_prev.len(), "subproblem response")?;
        if !(epsilon > 0.0) || !(step > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "subproblem needs epsilon > 0 and r > 0 (got {epsilon}, {step})"
            )));
        }
        let mut rhs = vec![0.0; 3 * j];
        let a = instance.lin_cost();
        let p = scenario.price();
        for i in 0..j {
            rhs[i] = a[i] + w[i] - step * x_prev[i];
            rhs[j + i] = -p[i] - step * v_prev[i];
            rhs[2 * j + i] = -step * v_prev[j + i];
        }
        Ok(Self {
            quad_cost: instance.quad_cost().to_vec(),
            gamma: scenario.gamma(),
            epsilon,
            step,
            rhs,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.quad_cost.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Dense `Ht`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let j = self.num_agents();
        let (g, r, eps) = (self.gamma, self.step, self.epsilon);
        let mut h = DMatrix::zeros(3 * j, 3 * j);
        for i in 0..j {
            h[(i, i)] = self.quad_cost[i] + r;
            h[(i, 2 * j + i)] = -1.0;
            for k in 0..j {
                h[(j + i, j + k)] = g;
            }
            h[(j + i, j + i)] += g + r;
            h[(j + i, 2 * j + i)] = 1.0;
            h[(2 * j + i, i)] = 1.0;
            h[(2 * j + i, j + i)] = -1.0;
            h[(2 * j + i, 2 * j + i)] = eps + r;
        }
        h
    }

    /// Block diagonals of `I - Dbar (I - Ht)` as `(lambda_1..7, u1)`; `u2 = e`.
    pub fn jacobian_blocks(&self, dbar: &[f64]) -> ([Vec<f64>; 7], Vec<f64>) {
        let j = self.num_agents();
        let (d1, rest) = dbar.split_at(j);
        let (d2, d3) = rest.split_at(j);
        let (g, r, eps) = (self.gamma, self.step, self.epsilon);
        let l1 = (0..j)
            .map(|i| 1.0 + d1[i] * (self.quad_cost[i] + r - 1.0))
            .collect();
        let l2 = d1.iter().map(|d| -d).collect();
        let l3 = d2.iter().map(|d| 1.0 + d * (g + r - 1.0)).collect();
        let l4 = d2.to_vec();
        let l5 = d3.to_vec();
        let l6 = d3.iter().map(|d| -d).collect();
        let l7 = d3.iter().map(|d| 1.0 + d * (eps + r - 1.0)).collect();
        let u1 = d2.iter().map(|d| g * d).collect();
        ([l1, l2, l3, l4, l5, l6, l7], u1)
    }
}

impl SmoothingSystem for SubproblemSystem {
    fn dim(&self) -> usize {
        3 * self.num_agents()
    }

    fn affine_into(&self, z: &[f64], out: &mut [f64]) {
        let j = self.num_agents();
        let (x, rest) = z.split_at(j);
        let (y, lam) = rest.split_at(j);
        let (g, r, eps) = (self.gamma, self.step, self.epsilon);
        let total: f64 = y.iter().sum();
        for i in 0..j {
            out[i] = (self.quad_cost[i] + r) * x[i] - lam[i] + self.rhs[i];
            out[j + i] = g * (total + y[i]) + r * y[i] + lam[i] + self.rhs[j + i];
            out[2 * j + i] = x[i] - y[i] + (eps + r) * lam[i] + self.rhs[2 * j + i];
        }
    }

    fn newton_solve(&self, dbar: &[f64], rhs: &[f64], out: &mut [f64]) -> Result<()> {
        let j = self.num_agents();
        let (lambda, u1) = self.jacobian_blocks(dbar);
        let ones = vec![1.0; j];
        let blocks = BlockDiagonals {
            lambda: [
                &lambda[0], &lambda[1], &lambda[2], &lambda[3], &lambda[4], &lambda[5], &lambda[6],
            ],
            u1: &u1,
            u2: &ones,
        };
        let (o1, rest) = out.split_at_mut(j);
        let (o2, o3) = rest.split_at_mut(j);
        match structured_solve_into(
            &blocks,
            &rhs[..j],
            &rhs[j..2 * j],
            &rhs[2 * j..],
            o1,
            o2,
            o3,
        ) {
            Ok(()) => Ok(()),
            Err(CoreError::PivotFloor { .. }) => {
                dense_solve(smoothing_jacobian(&self.to_dense(), dbar), rhs, out)
            }
            Err(e) => Err(e),
        }
    }
}

/// Smoothing Newton on one hedging subproblem.
pub fn solve_subproblem(
    system: &SubproblemSystem,
    z0: &[f64],
    opts: &SmoothingOptions,
) -> Result<SmoothingOutcome> {
    solve(system, z0, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(m: f64, q: f64) -> DenseLcp {
        DenseLcp::new(DMatrix::from_element(1, 1, m), vec![q]).unwrap()
    }

    #[test]
    fn smooth_value_examples() {
        // Hz + q = z  =>  f = z - delta
        let lcp = scalar(1.0, 0.0);
        assert!((smooth_value(&[2.0], 0.3, &lcp)[0] - 1.7).abs() < 1e-15);
        // t = 0, z = 5, delta = 1  =>  f = 4
        assert!((smooth_value(&[5.0], 1.0, &lcp)[0] - 4.0).abs() < 1e-15);
        // t = 3, delta -> 0  =>  f -> min(z, z + 3) = z
        let lcp = scalar(1.0, 3.0);
        assert!((smooth_value(&[2.0], 1e-9, &lcp)[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dbar_examples() {
        assert_eq!(dbar_component(0.0, 0.5), 0.5);
        assert!((dbar_component(1e12, 1.0) - 1.0).abs() < 1e-12);
        assert!(dbar_component(-1e12, 1.0) < 1e-12);
        let lcp = scalar(1.0, 0.0);
        assert_eq!(smooth_jacobian_diag(&[1.0], 1.0, &lcp), vec![0.5]);
    }

    #[test]
    fn scalar_lcp_from_zero() {
        let out = solve_dense_lcp(
            DMatrix::from_element(1, 1, 2.0),
            vec![-4.0],
            &[0.0],
            &SmoothingOptions::default(),
        )
        .unwrap();
        assert!((out.z[0] - 2.0).abs() < 1e-9);
        assert!(out.residual <= 1e-9);
    }

    #[test]
    fn warm_start_at_solution_stops_immediately() {
        let out = solve_dense_lcp(
            DMatrix::from_element(1, 1, 2.0),
            vec![-4.0],
            &[2.0],
            &SmoothingOptions::default(),
        )
        .unwrap();
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn identity_structured_system() {
        let j = 3;
        let one = vec![1.0; j];
        let zero = vec![0.0; j];
        let blocks = BlockDiagonals {
            lambda: [&one, &zero, &one, &zero, &zero, &zero, &one],
            u1: &zero,
            u2: &zero,
        };
        let b1 = [1.0, 2.0, 3.0];
        let b2 = [-1.0, 0.5, 4.0];
        let b3 = [7.0, 8.0, 9.0];
        let (s1, s2, s3) = structured_solve(&blocks, &b1, &b2, &b3).unwrap();
        assert_eq!(s1, b1);
        assert_eq!(s2, b2);
        assert_eq!(s3, b3);
    }

    #[test]
    fn singular_rank_one_update_is_flagged() {
        let j = 2;
        let one = vec![1.0; j];
        let zero = vec![0.0; j];
        // u2^T L3^{-1} u1 = -1 + 1e-16
        let u1 = vec![1.0, 0.0];
        let u2 = vec![-1.0 + 1e-16, 0.0];
        let blocks = BlockDiagonals {
            lambda: [&one, &zero, &one, &zero, &zero, &zero, &one],
            u1: &u1,
            u2: &u2,
        };
        let err = structured_solve(&blocks, &one, &one, &one).unwrap_err();
        assert!(matches!(err, CoreError::PivotFloor { .. }));
    }

    #[test]
    fn subproblem_dense_matches_operator() {
        let inst = GameInstance::new(vec![1.2, 1.7], vec![1.1, 1.9]).unwrap();
        let s = Scenario::new(0.6, vec![0.4, 0.9]).unwrap();
        let sys = SubproblemSystem::new(
            &inst,
            &s,
            1e-3,
            1.0,
            &[0.1, -0.1],
            &[0.3, 0.2],
            &[0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        let z = [0.5, -0.2, 1.0, 0.3, 0.0, 2.0];
        let mut op = vec![0.0; 6];
        sys.affine_into(&z, &mut op);
        let dense =
            sys.to_dense() * DVector::from_column_slice(&z) + DVector::from_column_slice(sys.rhs());
        for (a, b) in op.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn subproblem_validates_parameters() {
        let inst = GameInstance::new(vec![1.0], vec![1.0]).unwrap();
        let s = Scenario::new(1.0, vec![1.0]).unwrap();
        assert!(SubproblemSystem::new(&inst, &s, 0.0, 1.0, &[0.0], &[0.0], &[0.0, 0.0]).is_err());
        assert!(SubproblemSystem::new(&inst, &s, 1e-3, 0.0, &[0.0], &[0.0], &[0.0, 0.0]).is_err());
        assert!(SubproblemSystem::new(&inst, &s, 1e-3, 1.0, &[0.0], &[0.0], &[0.0]).is_err());
    }
}

use serde::{Deserialize, Serialize};

/// Outcome of one hedging solve, plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub num_agents: usize,
    pub num_samples: usize,
    /// `J (1 + 2 nu)`.
    pub dim: usize,
    pub epsilon: f64,
    pub step_size: f64,
    pub block_size: usize,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub converged: bool,
    pub iterations: usize,
    /// Newton iterations summed over all subproblem solves.
    pub inner_iterations: usize,
    pub wall_time_seconds: f64,
    /// Stopping residual, measured on the regularized system.
    pub res_epsilon: f64,
    /// Same residual on the unregularized system.
    pub res_original: f64,
    /// Largest `|mean_l (w_l)_j|` seen over all iterations.
    pub max_mean_multiplier: f64,
    pub x: Vec<f64>,
}

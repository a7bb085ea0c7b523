//! Regularized two-stage stochastic LCPs for Cournot-Nash production and
//! supply games.
//!
//! Agents choose production `x` before the market scenario is revealed and
//! a supply `y(xi) <= x` afterwards. The second stage is solved in closed
//! form ([`second_stage`]); the sampled first stage is decomposed by
//! progressive hedging ([`phm`]) with smoothing Newton subproblem solves
//! ([`smoothing_newton`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(v > 0.0)` also rejects NaN

pub mod driver;
pub mod error;
pub mod lcp_oracle;
pub mod model;
pub mod phm;
pub mod report;
pub mod scenario;
pub mod second_stage;
pub mod smoothing_newton;

pub use error::{CoreError, Result};
pub use model::{
    build_scenario_block, ncp_min_residual, ExtendedPoint, ExtendedSystem, GameInstance, Layout,
    Scenario, ScenarioBatch, DEFAULT_GAMMA_MIN,
};
pub use phm::{PhmConfig, PhmState};
pub use report::SolveReport;
pub use scenario::{GammaMode, GeneratorConfig};
pub use second_stage::{Partition, Regime, SecondStageSolution};
pub use smoothing_newton::{SmoothingOptions, SubproblemSystem};

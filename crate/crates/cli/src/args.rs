use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cournot_core::GammaMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "cournot",
    version,
    about = "Two-stage stochastic Cournot-Nash equilibria"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a random instance and scenario sample.
    Gen(GenArgs),
    /// Solve one regularized problem by progressive hedging.
    Solve(SolveArgs),
    /// Solve over a grid of sample sizes and regularization values.
    Sweep(SweepArgs),
    /// Run oracle suites against the solver.
    Check(CheckArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GeneratorArgs {
    /// Number of agents J.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub players: u64,
    /// Number of scenarios nu.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lower bound of the uniform cost draw.
    #[arg(long, default_value_t = 1.0)]
    pub cost_low: f64,
    /// Upper bound of the uniform cost draw.
    #[arg(long, default_value_t = 2.0)]
    pub cost_high: f64,
    #[arg(long, value_enum, default_value_t = GammaArg::FirstCoordinate)]
    pub gamma_mode: GammaArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaArg {
    FirstCoordinate,
    IndependentUniform,
}

impl From<GammaArg> for GammaMode {
    fn from(g: GammaArg) -> Self {
        match g {
            GammaArg::FirstCoordinate => GammaMode::FirstCoordinate,
            GammaArg::IndependentUniform => GammaMode::IndependentUniform,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Outer stopping tolerance on the regularized residual.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// Proximal step r.
    #[arg(long, default_value_t = 1.0)]
    pub step_size: f64,
    /// Scenarios per parallel block.
    #[arg(long, default_value_t = 50)]
    pub block_size: usize,
    /// Smoothing Newton tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub inner_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub inner_max_iter: usize,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Instance JSON; generated from the seed when absent.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Scenario CSV; generated from the seed when absent.
    #[arg(long, conflicts_with = "samples_inline")]
    pub scenarios: Option<PathBuf>,
    /// Scenarios as `gamma,p1,...,pJ` rows separated by `;`.
    #[arg(long)]
    pub samples_inline: Option<String>,
    /// Also write the full solution vector.
    #[arg(long)]
    pub dump_solution: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Regularization values, comma separated or `hi:lo` decades.
    #[arg(long, default_value = "1e-3,1e-6,1e-9,1e-12")]
    pub eps_list: String,
    /// Sample sizes, comma separated; each uses an instance drawn from `--seed`.
    #[arg(long, default_value = "10,50,500")]
    pub nu_list: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    SecondStage,
    Structured,
    Kappa,
    Nash,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CheckArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random cases per suite.
    #[arg(long, default_value_t = 1000)]
    pub cases: usize,
    /// Regularization values, comma separated or `hi:lo` decades.
    #[arg(long, default_value = "1e-2:1e-8")]
    pub eps_grid: String,
    /// Scenario CSV to draw second-stage cases from.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `1e-3,1e-6` or the decade range `1e-2:1e-8`.
pub fn parse_eps_list(text: &str) -> anyhow::Result<Vec<f64>> {
    let values = if let Some((hi, lo)) = text.split_once(':') {
        let hi: f64 = hi.trim().parse()?;
        let lo: f64 = lo.trim().parse()?;
        anyhow::ensure!(hi > 0.0 && lo > 0.0 && lo <= hi, "bad range {text:?}");
        let k0 = hi.log10().round() as i32;
        let k1 = lo.log10().round() as i32;
        (k1..=k0)
            .rev()
            .map(|k| format!("1e{k}").parse().unwrap())
            .collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()?
    };
    anyhow::ensure!(!values.is_empty(), "empty epsilon list");
    anyhow::ensure!(
        values.iter().all(|v| *v > 0.0),
        "epsilon values must be > 0"
    );
    Ok(values)
}

pub fn parse_nu_list(text: &str) -> anyhow::Result<Vec<usize>> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()?;
    anyhow::ensure!(
        !values.is_empty() && values.iter().all(|v| *v > 0),
        "sample sizes must be >= 1"
    );
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_lists() {
        assert_eq!(
            parse_eps_list("1e-2:1e-5").unwrap(),
            vec![1e-2, 1e-3, 1e-4, 1e-5]
        );
        assert_eq!(parse_eps_list("1e-3, 1e-6").unwrap(), vec![1e-3, 1e-6]);
        assert!(parse_eps_list("1e-3,0").is_err());
        assert!(parse_eps_list("1e-8:1e-2").is_err());
        assert!(parse_eps_list("x").is_err());
    }

    #[test]
    fn nu_lists() {
        assert_eq!(parse_nu_list("10,50").unwrap(), vec![10, 50]);
        assert!(parse_nu_list("0").is_err());
    }
}

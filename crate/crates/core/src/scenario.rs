//! Random instance generation and CSV scenario files.
//!
//! All randomness comes from `ChaCha8Rng` seeded with a `u64`, which gives
//! the same stream on every platform.
//!
//! CSV format: UTF-8, header `gamma,p1,...,pJ`, one scenario per row.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{GameInstance, Scenario, ScenarioBatch, DEFAULT_GAMMA_MIN};

/// Redraws allowed per scenario when `gamma` falls below the floor.
pub const MAX_GAMMA_REDRAWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    /// `gamma = p_1`, coupling the slope to the first agent's price.
    #[default]
    FirstCoordinate,
    /// `gamma` drawn from its own `U[0, 1]`.
    IndependentUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_agents: usize,
    pub num_samples: usize,
    pub seed: u64,
    pub cost_low: f64,
    pub cost_high: f64,
    pub gamma_mode: GammaMode,
    pub gamma_min: f64,
}

impl GeneratorConfig {
    pub fn new(num_agents: usize, num_samples: usize, seed: u64) -> Self {
        Self {
            num_agents,
            num_samples,
            seed,
            cost_low: 1.0,
            cost_high: 2.0,
            gamma_mode: GammaMode::FirstCoordinate,
            gamma_min: DEFAULT_GAMMA_MIN,
        }
    }

    pub fn with_costs(mut self, low: f64, high: f64) -> Self {
        self.cost_low = low;
        self.cost_high = high;
        self
    }

    pub fn with_gamma_mode(mut self, mode: GammaMode) -> Self {
        self.gamma_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(CoreError::InvalidConfig("num_agents must be >= 1".into()));
        }
        if self.num_samples == 0 {
            return Err(CoreError::InvalidConfig("num_samples must be >= 1".into()));
        }
        if !(self.cost_low > 0.0 && self.cost_low < self.cost_high && self.cost_high.is_finite()) {
            return Err(CoreError::InvalidConfig(format!(
                "cost bounds must satisfy 0 < low < high, got [{}, {}]",
                self.cost_low, self.cost_high
            )));
        }
        if !(self.gamma_min > 0.0 && self.gamma_min < 1.0) {
            return Err(CoreError::InvalidConfig(format!(
                "gamma_min must lie in (0, 1), got {}",
                self.gamma_min
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, low: f64, high: f64) -> f64 {
    low + (high - low) * rng.gen::<f64>()
}

/// Draws the instance `(c, a)` and then `nu` scenarios with `p ~ U[0,1]^J`.
pub fn generate_random(config: &GeneratorConfig) -> Result<(GameInstance, ScenarioBatch)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let j = config.num_agents;
    let c: Vec<f64> = (0..j)
        .map(|_| uniform(&mut rng, config.cost_low, config.cost_high))
        .collect();
    let a: Vec<f64> = (0..j)
        .map(|_| uniform(&mut rng, config.cost_low, config.cost_high))
        .collect();
    let instance = GameInstance::new(c, a)?;
    let batch = draw_scenarios(&mut rng, config)?;
    Ok((instance, batch))
}

/// Scenarios only, from their own seed; used when the instance is held fixed.
pub fn generate_scenarios(config: &GeneratorConfig) -> Result<ScenarioBatch> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    draw_scenarios(&mut rng, config)
}

fn draw_scenarios(rng: &mut ChaCha8Rng, config: &GeneratorConfig) -> Result<ScenarioBatch> {
    let j = config.num_agents;
    let mut scenarios = Vec::with_capacity(config.num_samples);
    for index in 0..config.num_samples {
        let mut accepted = None;
        for _ in 0..MAX_GAMMA_REDRAWS {
            let p: Vec<f64> = (0..j).map(|_| rng.gen::<f64>()).collect();
            let gamma = match config.gamma_mode {
                GammaMode::FirstCoordinate => p[0],
                GammaMode::IndependentUniform => rng.gen::<f64>(),
            };
            if gamma > config.gamma_min {
                accepted = Some(Scenario::with_floor(gamma, p, config.gamma_min)?);
                break;
            }
        }
        match accepted {
            Some(s) => scenarios.push(s),
            None => {
                return Err(CoreError::InvalidConfig(format!(
                    "scenario {index}: gamma stayed below {} after {MAX_GAMMA_REDRAWS} draws",
                    config.gamma_min
                )))
            }
        }
    }
    ScenarioBatch::new(scenarios)
}

/// Parses scenarios from CSV text. Row numbers in errors count the header
/// as row 1.
pub fn read_csv<R: Read>(reader: R, gamma_min: f64) -> Result<ScenarioBatch> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CoreError::ScenarioData {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let j = validate_header(&header)?;

    let mut scenarios = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| CoreError::ScenarioData {
            row,
            message: e.to_string(),
        })?;
        if record.len() != j + 1 {
            return Err(CoreError::ScenarioData {
                row,
                message: format!("expected {} fields, found {}", j + 1, record.len()),
            });
        }
        let mut values = Vec::with_capacity(j + 1);
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| CoreError::ScenarioData {
                row,
                message: format!(
                    "non-numeric value {cell:?} in column {}",
                    header[col].trim()
                ),
            })?;
            if !v.is_finite() {
                return Err(CoreError::ScenarioData {
                    row,
                    message: format!("non-finite value in column {}", header[col].trim()),
                });
            }
            values.push(v);
        }
        let gamma = values[0];
        values.remove(0);
        let s = Scenario::with_floor(gamma, values, gamma_min).map_err(|e| {
            CoreError::ScenarioData {
                row,
                message: e.to_string(),
            }
        })?;
        scenarios.push(s);
    }
    ScenarioBatch::new(scenarios)
}

fn validate_header(header: &csv::StringRecord) -> Result<usize> {
    let bad = |message: String| CoreError::ScenarioData { row: 1, message };
    if header.len() < 2 {
        return Err(bad(format!(
            "header must be gamma,p1,...,pJ; found {} column(s)",
            header.len()
        )));
    }
    if header[0].trim() != "gamma" {
        return Err(bad(format!(
            "first column must be gamma, found {:?}",
            &header[0]
        )));
    }
    for (k, name) in header.iter().enumerate().skip(1) {
        if name.trim() != format!("p{k}") {
            return Err(bad(format!(
                "column {} must be p{k}, found {name:?}",
                k + 1
            )));
        }
    }
    Ok(header.len() - 1)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<ScenarioBatch> {
    load_csv_with_floor(path, DEFAULT_GAMMA_MIN)
}

pub fn load_csv_with_floor(path: impl AsRef<Path>, gamma_min: f64) -> Result<ScenarioBatch> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|e| CoreError::Io(format!("{}: {e}", path.display())))?;
    read_csv(std::io::BufReader::new(file), gamma_min)
}

/// Writes scenarios with shortest round-trip formatting, so reading the
/// file back reproduces every value exactly.
pub fn write_csv_to<W: Write>(batch: &ScenarioBatch, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let j = batch.num_agents();
    let mut header = vec!["gamma".to_string()];
    header.extend((1..=j).map(|k| format!("p{k}")));
    let io = |e: csv::Error| CoreError::Io(e.to_string());
    wtr.write_record(&header).map_err(io)?;
    for s in batch.iter() {
        let mut row = vec![format!("{:?}", s.gamma())];
        row.extend(s.price().iter().map(|v| format!("{v:?}")));
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv(batch: &ScenarioBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path)
        .map_err(|e| CoreError::Io(format!("{}: {e}", path.display())))?;
    write_csv_to(batch, std::io::BufWriter::new(file))
}

/// Resamples `nu` scenarios uniformly with replacement.
pub fn bootstrap(batch: &ScenarioBatch, nu: usize, seed: u64) -> Result<ScenarioBatch> {
    if nu == 0 {
        return Err(CoreError::InvalidConfig(
            "bootstrap size must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios = (0..nu)
        .map(|_| batch[rng.gen_range(0..batch.len())].clone())
        .collect();
    ScenarioBatch::new(scenarios)
}

//! Seeded fixtures shared by the benchmarks.

use cournot_core::scenario::{generate_random, GeneratorConfig};
use cournot_core::{GameInstance, ScenarioBatch};

pub fn fixture(num_agents: usize, num_samples: usize, seed: u64) -> (GameInstance, ScenarioBatch) {
    generate_random(&GeneratorConfig::new(num_agents, num_samples, seed))
        .expect("valid generator config")
}

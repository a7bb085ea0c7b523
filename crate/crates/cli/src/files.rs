use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use cournot_core::{GameInstance, Scenario, ScenarioBatch};
use serde::{Deserialize, Serialize};

use crate::args::Command;

pub const ARTIFACT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(rename = "J")]
    pub num_agents: usize,
    pub c: Vec<f64>,
    pub a: Vec<f64>,
}

impl InstanceFile {
    pub fn from_instance(inst: &GameInstance) -> Self {
        Self {
            num_agents: inst.num_agents(),
            c: inst.quad_cost().to_vec(),
            a: inst.lin_cost().to_vec(),
        }
    }

    pub fn into_instance(self) -> cournot_core::Result<GameInstance> {
        if self.c.len() != self.num_agents {
            return Err(cournot_core::CoreError::InvalidInstance(format!(
                "J = {} but c has {} entries",
                self.num_agents,
                self.c.len()
            )));
        }
        GameInstance::new(self.c, self.a)
    }
}

pub fn read_instance(path: &Path) -> anyhow::Result<GameInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: InstanceFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(file.into_instance()?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Rows `gamma,p1,...,pJ` separated by `;`.
pub fn parse_inline(text: &str) -> anyhow::Result<ScenarioBatch> {
    let mut scenarios = Vec::new();
    for (i, row) in text.split(';').filter(|r| !r.trim().is_empty()).enumerate() {
        let values = row
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("inline scenario {}", i + 1))?;
        anyhow::ensure!(
            values.len() >= 2,
            "inline scenario {} needs gamma and prices",
            i + 1
        );
        scenarios.push(
            Scenario::new(values[0], values[1..].to_vec())
                .with_context(|| format!("inline scenario {}", i + 1))?,
        );
    }
    Ok(ScenarioBatch::new(scenarios)?)
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: Command,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn write(command: &Command, dir: &Path, outputs: Vec<PathBuf>) -> anyhow::Result<()> {
        let manifest = RunManifest {
            version: ARTIFACT_VERSION,
            command: command.clone(),
            outputs,
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            manifest.version == ARTIFACT_VERSION,
            "manifest version {} is not supported",
            manifest.version
        );
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_rows() {
        let b = parse_inline("1,-1,-2; 0.5,0,-0.5").unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.num_agents(), 2);
        assert!(parse_inline("1").is_err());
        assert!(parse_inline("1,2;1").is_err());
        assert!(parse_inline("").is_err());
    }

    #[test]
    fn instance_round_trip() {
        let inst = GameInstance::new(vec![1.0, 2.0], vec![0.5, 0.25]).unwrap();
        let file = InstanceFile::from_instance(&inst);
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"J\":2"));
        let back: InstanceFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_instance().unwrap(), inst);
    }
}

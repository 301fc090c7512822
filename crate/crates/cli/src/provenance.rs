use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const PROVENANCE_FILE: &str = "provenance.json";

/// Resolved settings of one invocation, written next to its outputs.
/// Holds no timestamps or host data so identical runs write identical
/// bytes.
#[derive(Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub config: Value,
    pub inputs: Vec<String>,
}

impl Provenance {
    pub fn new<T: Serialize>(command: &str, seed: Option<u64>, config: &T, inputs: &[&Path]) -> Result<Self, CliError> {
        Ok(Provenance {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: debias_core::eval::config_hash(config),
            config: serde_json::to_value(config).map_err(|e| CliError::Runtime(e.to_string()))?,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        let path = dir.join(PROVENANCE_FILE);
        std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(PROVENANCE_FILE);
        if !path.is_file() {
            return Err(CliError::Validation(format!("{} has no {PROVENANCE_FILE}", dir.display())));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one run: enough to repeat it. Carries no timestamps so that
/// repeated runs produce identical bytes.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Arguments after the program name, with config entries expanded.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    /// Output file names relative to the run directory.
    pub outputs: Vec<String>,
    /// Command-specific results.
    pub summary: Value,
}

impl Manifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            argv: argv.iter().skip(1).cloned().collect(),
            seed: None,
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn output(&mut self, dir: &Path, path: &Path) {
        let rel = path.strip_prefix(dir).unwrap_or(path);
        self.outputs.push(rel.display().to_string());
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Core(e.into()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

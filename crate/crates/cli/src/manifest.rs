use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::Request;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub suite: u64,
    /// Seed of the training, evaluation or sweep run, if the command has one.
    pub run: Option<u64>,
}

/// Record of one command invocation, sufficient to reproduce its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Fully resolved request, including input and output paths.
    pub request: Request,
    pub seeds: Seeds,
    pub outputs: Vec<String>,
    pub jobs: Option<usize>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| wavetune::Error::Format(format!("manifest {}: {e}", path.display())))?;
        if m.tool != crate::TOOL {
            bail!(wavetune::Error::Format(format!("{} is not a wavetune manifest", path.display())));
        }
        Ok(m)
    }
}

//! Run manifests. Everything needed to rerun a command sits in one file:
//! the resolved config text, the subcommand with its arguments, and the
//! hashes of inputs and outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rovella_core::hyperbolic::Delta0Constraints;

use crate::commands::{Artifact, Command};
use crate::config::ExperimentConfig;
use crate::RunError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub subcommand: String,
    pub command: Command,
    /// Resolved config in canonical TOML, overrides already applied.
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
    pub delta0_constraints: Delta0Constraints,
    /// `(path, sha256)` of files read by the command.
    pub inputs: Vec<(String, String)>,
    pub artifacts: Vec<ArtifactRecord>,
}

impl Manifest {
    pub fn new(
        cmd: &Command,
        cfg: &ExperimentConfig,
        workers: usize,
        wall_time_s: f64,
        delta0_constraints: Delta0Constraints,
        inputs: Vec<(String, String)>,
        artifacts: &[Artifact],
    ) -> Self {
        let config = cfg.to_toml();
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: rovella_core::VERSION.into(),
            subcommand: cmd.name().into(),
            command: cmd.clone(),
            config_sha256: sha256_hex(config.as_bytes()),
            config,
            seed: cfg.noise.seed,
            workers,
            wall_time_s,
            delta0_constraints,
            inputs,
            artifacts: artifacts
                .iter()
                .map(|a| ArtifactRecord { file: a.name.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() })
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), RunError> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(RunError::io)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::Usage(format!("{}: not a manifest: {e}", path.display())))
    }

    /// Human-readable differences between the artifact lists.
    pub fn artifact_diffs(&self, other: &Manifest) -> Vec<String> {
        let mut out = Vec::new();
        for a in &self.artifacts {
            match other.artifacts.iter().find(|b| b.file == a.file) {
                None => out.push(format!("{} missing", a.file)),
                Some(b) if b.sha256 != a.sha256 => out.push(format!("{} differs", a.file)),
                _ => {}
            }
        }
        for b in &other.artifacts {
            if !self.artifacts.iter().any(|a| a.file == b.file) {
                out.push(format!("{} is new", b.file));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}

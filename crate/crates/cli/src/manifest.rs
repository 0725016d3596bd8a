//! Run manifests: every artifact-producing command writes exactly one
//! `manifest.json` next to its outputs, echoing the fully resolved
//! configuration so runs can be audited and replayed.

use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Serialize)]
pub struct HostInfo {
    pub os: String,
    pub arch: String,
    pub hostname: Option<String>,
}

impl HostInfo {
    pub fn probe() -> Self {
        HostInfo {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            hostname: std::env::var("HOSTNAME").ok(),
        }
    }
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub seed: Option<u64>,
    /// Fully resolved configuration (file values with flag overrides applied).
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub host: HostInfo,
    pub started_at: String,
    pub finished_at: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct ManifestBuilder {
    command: String,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: Vec<String>,
    started_at: chrono::DateTime<chrono::Utc>,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            seed: None,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            started_at: chrono::Utc::now(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn config(mut self, value: serde_json::Value) -> Self {
        self.config = value;
        self
    }

    pub fn input(mut self, path: impl AsRef<Path>) -> Self {
        self.inputs.push(path.as_ref().display().to_string());
        self
    }

    fn build(self, outputs: &[PathBuf], error: Option<String>) -> RunManifest {
        RunManifest {
            command: self.command,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            host: HostInfo::probe(),
            started_at: self.started_at.to_rfc3339(),
            finished_at: chrono::Utc::now().to_rfc3339(),
            status: if error.is_none() { "ok".into() } else { "failed".into() },
            error,
        }
    }

    /// Write `manifest.json` under `dir`, recording success or failure.
    pub fn write(self, dir: &Path, outputs: &[PathBuf], error: Option<String>) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = self.build(outputs, error);
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

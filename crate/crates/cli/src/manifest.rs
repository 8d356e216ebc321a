use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path, shown: impl Into<String>) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("checksumming {}", path.display()))?;
        Ok(Self { path: shown.into(), sha256: hex::encode(Sha256::digest(bytes)) })
    }
}

/// Provenance of one command invocation. Every produced file is listed with
/// its checksum; `wall_clock_seconds` is the only field that varies between
/// otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub wall_clock_seconds: f64,
}

pub struct ManifestBuilder {
    command: String,
    out_dir: PathBuf,
    started: Instant,
    config_hash: Option<String>,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<Artifact>,
    outputs: Vec<String>,
}

impl ManifestBuilder {
    pub fn new(command: &str, out_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            out_dir: out_dir.to_path_buf(),
            started: Instant::now(),
            config_hash: None,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config_hash(&mut self, hash: String) -> &mut Self {
        self.config_hash = Some(hash);
        self
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<&mut Self> {
        self.inputs.push(Artifact::of(path, path.display().to_string())?);
        Ok(self)
    }

    /// Registers a file inside the output directory by name.
    pub fn output(&mut self, name: &str) -> &mut Self {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self
    }

    pub fn finish(self) -> anyhow::Result<RunManifest> {
        let outputs = self
            .outputs
            .iter()
            .map(|name| Artifact::of(&self.out_dir.join(name), name.clone()))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config_hash,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.out_dir.join(format!("manifest.{}.json", self.command));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

//! Run manifests: resolved configuration, input hashes and tool version,
//! written next to the primary output of every command.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fullres::raster::sidecar_path;
use fullres::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub threads: usize,
    pub deterministic: bool,
    /// SHA-256 of every input file (payload and sidecar), keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str, threads: usize, deterministic: bool) -> Self {
        Manifest {
            tool: "fullres",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            config: serde_json::Value::Null,
            threads,
            deterministic,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            summary: None,
        }
    }

    /// Records a payload file and its JSON sidecar.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        for p in [path.to_path_buf(), sidecar_path(path)] {
            let hash = sha256_file(&p)?;
            self.inputs.insert(p.display().to_string(), hash);
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn path_for(primary: &Path) -> PathBuf {
        let mut s = primary.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    /// Writes the manifest with the final resolved configuration.
    pub fn write(&mut self, primary: &Path, config: &ExperimentConfig) -> Result<PathBuf> {
        self.config = config.to_json();
        let path = Self::path_for(primary);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        Ok(path)
    }
}

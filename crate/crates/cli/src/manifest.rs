//! Run manifests and output-file helpers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use h2m_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::FileConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to rerun a command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub status: String,
    pub seed: u64,
    /// SHA-256 of the input dataset, when one was read.
    pub data_hash: Option<String>,
    pub config: FileConfig,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    /// Command-specific details such as failure counts.
    #[serde(default)]
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: &FileConfig, seed: u64) -> Self {
        Self {
            command: command.into(),
            version: VERSION.into(),
            status: "running".into(),
            seed,
            data_hash: None,
            config: config.clone(),
            timings: BTreeMap::new(),
            details: serde_json::Value::Null,
        }
    }

    /// Run `f`, recording its wall-clock time under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(phase.into()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join("manifest.json"))
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

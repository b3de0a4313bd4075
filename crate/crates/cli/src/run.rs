//! Bookkeeping shared by the commands: hashed inputs and outputs, and the
//! manifest written at the end of every run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: serde_json::Value,
    pub version: &'static str,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

/// Report envelope: every JSON report carries the config that produced it.
#[derive(Serialize)]
pub struct Envelope<'a, R: Serialize> {
    pub version: &'static str,
    pub config: &'a RunConfig,
    pub report: &'a R,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::user(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_bytes(&bytes))
}

pub struct Run {
    pub config: RunConfig,
    command: serde_json::Value,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl Run {
    pub fn new(config: RunConfig, command: serde_json::Value) -> Self {
        Self {
            config,
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records an input file. Directories (the model store) are recorded
    /// per file by the caller.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        if self.inputs.iter().any(|f| f.path == path) {
            return Ok(());
        }
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileHash {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::user(format!("cannot create {}: {e}", parent.display())))?;
        }
        fs::write(path, bytes).map_err(|e| CliError::user(format!("cannot write {}: {e}", path.display())))?;
        self.output_written(path, bytes);
        Ok(())
    }

    /// Records a file another component already wrote.
    pub fn output_written(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.retain(|f| f.path != path);
        self.outputs.push(FileHash {
            path: path.to_path_buf(),
            sha256: sha256_bytes(bytes),
        });
    }

    pub fn write_report<R: Serialize>(&mut self, path: &Path, report: &R) -> Result<(), CliError> {
        let env = Envelope {
            version: VERSION,
            config: &self.config,
            report,
        };
        let mut json = serde_json::to_string_pretty(&env)?;
        json.push('\n');
        self.write(path, json.as_bytes())
    }

    pub fn finish(self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.config.output().join(format!("{name}.manifest.json"));
        let manifest = Manifest {
            command: self.command,
            version: VERSION,
            config: self.config.clone(),
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::user(format!("cannot create {}: {e}", parent.display())))?;
        }
        fs::write(&path, json).map_err(|e| CliError::user(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub frequency_convention: String,
    pub tool_version: String,
    pub wall_clock_s: f64,
    pub threads: usize,
    pub seeds: Vec<u64>,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Output directory that checksums everything written through it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    started: Instant,
    entries: Vec<OutputEntry>,
}

impl OutputDir {
    /// `started` marks the beginning of the run for the manifest's timing.
    pub fn create(root: &Path, started: Instant) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Write {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            started,
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
        self.entries.push(OutputEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json` and returns every output path, manifest last.
    pub fn finish(
        mut self,
        command: &str,
        config: &str,
        convention: &str,
        seeds: Vec<u64>,
    ) -> CliResult<Vec<PathBuf>> {
        let manifest = RunManifest {
            command: command.to_string(),
            config: config.to_string(),
            frequency_convention: convention.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            seeds,
            outputs: std::mem::take(&mut self.entries),
        };
        let mut paths: Vec<PathBuf> = manifest.outputs.iter().map(|e| self.root.join(&e.path)).collect();
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = self.root.join(MANIFEST_NAME);
        fs::write(&path, text).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
        Ok(paths)
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::commands::{produce, thread_pool};
use super::config::RunConfig;
use super::{CliError, CliResult, EXIT_CONFIG, EXIT_RUN};
use crate::error::{Error, Result};

/// Audit record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the resolved configuration without `out` and `threads`.
    pub config_sha256: String,
    pub config: RunConfig,
    pub outputs: Vec<OutputEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(config: &RunConfig) -> Result<String> {
    let mut c = config.clone();
    c.out = PathBuf::new();
    c.threads = None;
    Ok(sha256_hex(&serde_json::to_vec(&c)?))
}

impl Manifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn new(command: &str, config: &RunConfig, files: &[(String, Vec<u8>)]) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: config_hash(config)?,
            config: config.clone(),
            outputs: files
                .iter()
                .map(|(file, bytes)| OutputEntry {
                    file: file.clone(),
                    sha256: sha256_hex(bytes),
                    bytes: bytes.len(),
                })
                .collect(),
        })
    }

    /// Writes the files and the manifest into `config.out`.
    pub(crate) fn write(command: &str, config: &RunConfig, files: &[(String, Vec<u8>)]) -> Result<Self> {
        std::fs::create_dir_all(&config.out)?;
        for (file, bytes) in files {
            std::fs::write(config.out.join(file), bytes)?;
        }
        let manifest = Self::new(command, config, files)?;
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        std::fs::write(config.out.join(Self::file_name(command)), json)?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Re-runs a manifest's configuration and compares output hashes.
pub(crate) fn replay(path: &Path, out: Option<PathBuf>, threads: Option<usize>, quiet: bool) -> CliResult<()> {
    let manifest = Manifest::load(path)?;
    let mut config = manifest.config.clone();
    if config_hash(&config)? != manifest.config_sha256 {
        return Err(CliError {
            code: EXIT_CONFIG,
            message: format!("{}: configuration does not match its recorded hash", path.display()),
        });
    }
    if let Some(o) = out {
        config.out = o;
    }
    if threads.is_some() {
        config.threads = threads;
    }
    let produced = thread_pool(config.threads)?.install(|| produce(&manifest.command, &config))?;
    let rerun = Manifest::write(&manifest.command, &config, &produced.files)?;
    let mismatches: Vec<&str> = manifest
        .outputs
        .iter()
        .filter(|e| !rerun.outputs.contains(e))
        .map(|e| e.file.as_str())
        .collect();
    if !mismatches.is_empty() || rerun.outputs.len() != manifest.outputs.len() {
        return Err(CliError {
            code: EXIT_RUN,
            message: format!("replay differs from the manifest in: {}", mismatches.join(", ")),
        });
    }
    if !quiet {
        println!("replayed {}: {} outputs identical", manifest.command, rerun.outputs.len());
    }
    Ok(())
}

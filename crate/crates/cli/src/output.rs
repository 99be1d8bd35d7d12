//! Record encoding and run manifests.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Format, RunConfig};
use crate::error::CliError;

/// One file produced by a command.
#[derive(Debug)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn records<T: Serialize>(stem: &str, format: Format, rows: &[T]) -> Result<Self, CliError> {
        Ok(Artifact { name: format!("{stem}.{}", format.ext()), bytes: encode(format, rows)? })
    }
}

pub fn encode<T: Serialize>(format: Format, rows: &[T]) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| CliError::Output(e.to_string()))?;
            }
            w.into_inner().map_err(|e| CliError::Output(e.to_string()))
        }
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(rows).map_err(|e| CliError::Output(e.to_string()))?;
            v.push(b'\n');
            Ok(v)
        }
    }
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub arithmetic: String,
    pub threads: usize,
    pub wall_time_s: f64,
    /// Fully resolved configuration; feeding it back reproduces the outputs.
    pub config: RunConfig,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write the artifacts and `manifest.json` into `dir`.
pub fn write_run(dir: &Path, artifacts: &[Artifact], mut manifest: RunManifest) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes)?;
        manifest.outputs.push(OutputDigest { file: a.name.clone(), sha256: sha256_hex(&a.bytes) });
    }
    let mut text = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
    text.push(b'\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

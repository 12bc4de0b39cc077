//! Output directory handling and the run manifest.

use std::path::{Path, PathBuf};

use levy_scale::{Result, ScaleError};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, LoadedConfig};

/// Manifest file name for a command; commands sharing a directory keep their own.
pub fn manifest_name(command: &str) -> String {
    format!("manifest_{command}.json")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Writes files into one directory and remembers their digests.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry { name: name.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Writes a CSV with a header row and one record per row.
    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| format_float(*v)))?;
        }
        let bytes = w.into_inner().map_err(|e| ScaleError::Io(e.into_error()))?;
        self.write_bytes(name, &bytes)
    }

    /// Writes the manifest last; it lists every other file with its digest.
    pub fn write_manifest(&mut self, manifest: &Manifest) -> Result<PathBuf> {
        let mut m = manifest.clone();
        m.files = self.files.clone();
        self.write_json(&manifest_name(&m.command), &m)
    }
}

/// Shortest representation that parses back to the same value.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    #[serde(rename = "levy-scale")]
    pub core: &'static str,
    #[serde(rename = "levy-scale-cli")]
    pub cli: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seeds {
    pub scheme_seed: Option<u64>,
    /// Replication streams used: `0..replications`.
    pub replications: Option<usize>,
}

/// Everything needed to reproduce a run byte for byte. Worker counts and
/// wall-clock times are left out on purpose: they do not affect the output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub oracle: bool,
    pub config_path: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub versions: Versions,
    pub seeds: Seeds,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(command: &str, oracle: bool, loaded: &LoadedConfig, seeds: Seeds) -> Self {
        Manifest {
            command: command.to_string(),
            oracle,
            config_path: loaded.path.display().to_string(),
            config_sha256: sha256_hex(&loaded.bytes),
            config: loaded.config.clone(),
            versions: Versions { core: levy_scale::VERSION, cli: env!("CARGO_PKG_VERSION") },
            seeds,
            files: Vec::new(),
        }
    }
}

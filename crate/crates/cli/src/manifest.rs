//! Run manifests written beside every output.
//!
//! Only file basenames are recorded and the worker count is left out, so
//! a rerun with the same inputs and seed reproduces the manifest bytes.

use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_file(path: &Path) -> io::Result<(String, u64)> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}

fn entry(path: &Path) -> Result<FileEntry> {
    let (sha256, bytes) = sha256_file(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(FileEntry {
        file: path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256,
        bytes,
    })
}

/// `dir/name.ext` → `dir/name.<suffix>`.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub tool_version: &'static str,
    pub config_sha256: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub counts: Value,
}

pub struct ManifestBuilder {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    counts: Value,
}

impl ManifestBuilder {
    pub fn new(command: &'static str, config: Value) -> Self {
        ManifestBuilder {
            command,
            config,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: Value::Null,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(mut self, path: impl Into<PathBuf>) -> Self {
        self.inputs.push(path.into());
        self
    }

    pub fn output(mut self, path: impl Into<PathBuf>) -> Self {
        self.outputs.push(path.into());
        self
    }

    pub fn counts(mut self, counts: Value) -> Self {
        self.counts = counts;
        self
    }

    /// Hashes every file and writes `<primary stem>.manifest.json`.
    pub fn write(self, primary: &Path) -> Result<PathBuf> {
        let config_text = serde_json::to_string(&self.config)?;
        let manifest = Manifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            config_sha256: hex::encode(Sha256::digest(config_text.as_bytes())),
            config: self.config,
            seed: self.seed,
            inputs: self.inputs.iter().map(|p| entry(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| entry(p)).collect::<Result<_>>()?,
            counts: self.counts,
        };
        let path = sidecar(primary, "manifest.json");
        write_json(&path, &manifest)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("out/syn.jsonl"), "stats.json"), Path::new("out/syn.stats.json"));
        assert_eq!(sidecar(Path::new("pool"), "manifest.json"), Path::new("pool.manifest.json"));
    }

    #[test]
    fn hashes_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        std::fs::write(&p, "abc").unwrap();
        let (h, n) = sha256_file(&p).unwrap();
        assert_eq!(n, 3);
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}

//! Run manifests: one `manifest.json` per output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliResult, Failure};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Record counts per stage (read, skipped, written, ...).
    pub counts: BTreeMap<String, u64>,
    pub started_unix: u64,
    pub timings_ms: BTreeMap<String, u64>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> CliResult<FileDigest> {
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    let mut hasher = Sha256::new();
    let bytes = io::copy(&mut BufReader::new(file), &mut hasher).map_err(|e| Failure::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex(&hasher.finalize()),
        bytes,
    })
}

/// Collects inputs, outputs and stage timings for one command.
pub struct Run {
    manifest: RunManifest,
    out_dir: PathBuf,
    clock: Instant,
}

impl Run {
    /// Nothing is written until the first output, so a run that fails on its
    /// inputs leaves no directory behind.
    pub fn start(command: &str, seed: Option<u64>, config: serde_json::Value, out_dir: &Path) -> CliResult<Self> {
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION"),
                seed,
                config,
                inputs: Vec::new(),
                outputs: Vec::new(),
                counts: BTreeMap::new(),
                started_unix: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                timings_ms: BTreeMap::new(),
            },
            out_dir: out_dir.to_path_buf(),
            clock: Instant::now(),
        })
    }

    /// Record an input file's digest. Fails with the path if it is missing.
    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let d = digest_file(path)?;
        self.manifest.inputs.push(d);
        Ok(())
    }

    pub fn count(&mut self, name: &str, n: usize) {
        self.manifest.counts.insert(name.to_string(), n as u64);
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let t = Instant::now();
        let out = f();
        self.manifest
            .timings_ms
            .insert(name.to_string(), t.elapsed().as_millis() as u64);
        out
    }

    /// Write `bytes` to `name` inside the output directory.
    pub fn output(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Failure::io(&self.out_dir, e))?;
        let path = self.out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| Failure::io(&path, e))?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        self.manifest.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: hex(&hasher.finalize()),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn finish(mut self) -> CliResult<RunManifest> {
        self.manifest
            .timings_ms
            .insert("total".into(), self.clock.elapsed().as_millis() as u64);
        fs::create_dir_all(&self.out_dir).map_err(|e| Failure::io(&self.out_dir, e))?;
        let path = self.out_dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Failure::input("Io", e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
        Ok(self.manifest)
    }
}

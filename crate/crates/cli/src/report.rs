//! Output artifacts shared by all subcommands: exact-decimal CSV tables
//! and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use rsg_core::stats::fmt_g17;
use rsg_core::{Error, Result};

/// Append-only CSV buffer. Every float goes through [`fmt_g17`], so the
/// written text is an exact decimal image of the binary value and two runs
/// that compute the same numbers produce byte-identical files.
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut buf = String::new();
        buf.push_str(header);
        buf.push('\n');
        Csv { buf }
    }

    /// Writes one row from preformatted fields.
    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, &self.buf)?;
        Ok(())
    }
}

/// Formats a float for a CSV cell.
pub fn num(x: f64) -> String {
    fmt_g17(x)
}

/// Formats an integer-valued count for a CSV cell.
pub fn int(x: usize) -> String {
    x.to_string()
}

/// Formats a boolean verdict for a CSV cell.
pub fn flag(b: bool) -> String {
    b.to_string()
}

/// Record of one command invocation: what ran, on which inputs, with which
/// merged parameters, what it wrote and how it judged the result. Written
/// last, after every listed output has been verified to exist on disk.
#[derive(Serialize)]
pub struct RunManifest {
    pub format: &'static str,
    /// Subcommand name.
    pub command: String,
    /// Unix epoch seconds at completion time.
    pub finished_unix: u64,
    pub config_path: String,
    /// SHA-256 of the raw config file bytes.
    pub config_sha256: String,
    /// Canonical hash of the constructed model.
    pub model_hash: String,
    /// Crate versions that produced the artifacts.
    pub versions: BTreeMap<&'static str, &'static str>,
    /// Resolved worker request (`None` leaves the pool size to the runtime).
    pub workers: Option<usize>,
    /// Merged view of config values and command-line flags.
    pub params: serde_json::Value,
    /// Seeds in effect for this run.
    pub seeds: BTreeMap<&'static str, u64>,
    /// Output files relative to the output directory; all exist on disk.
    pub outputs: Vec<String>,
    /// Per-check verdicts plus an `overall` PASS/FAIL summary.
    pub verdict: serde_json::Value,
}

pub const MANIFEST_FORMAT: &str = "rsg-manifest-v1";
pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn new(
        command: &str,
        config_path: &Path,
        config_sha256: String,
        model_hash: String,
        workers: Option<usize>,
    ) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("rsg-core", rsg_core::VERSION);
        versions.insert("rsg-cli", env!("CARGO_PKG_VERSION"));
        RunManifest {
            format: MANIFEST_FORMAT,
            command: command.to_string(),
            finished_unix: unix_now(),
            config_path: config_path.display().to_string(),
            config_sha256,
            model_hash,
            versions,
            workers,
            params: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
            verdict: serde_json::Value::Null,
        }
    }

    /// Verifies that every listed output exists under `dir`, then writes
    /// `manifest.json` there. A missing output is a hard error: the
    /// manifest must never describe files that are not on disk.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        for rel in &self.outputs {
            let path = dir.join(rel);
            if !path.is_file() {
                return Err(Error::MalformedArtifact {
                    path: path.display().to_string(),
                    detail: "output listed in the manifest is missing".into(),
                });
            }
        }
        self.finished_unix = unix_now();
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        fs::write(&path, json)?;
        Ok(path)
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// SHA-256 of a file's raw bytes, hex-encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}

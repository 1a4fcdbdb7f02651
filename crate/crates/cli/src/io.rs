//! Output-directory plumbing: atomic writes and a content manifest.
//!
//! Every artifact is written to a temporary file in the target directory
//! and renamed into place, so a crash can leave at worst an orphaned
//! temporary, never a truncated artifact. The directory handle records a
//! sha256 per artifact; `finish` writes them as `manifest.json`, sorted by
//! path and free of timestamps, so reruns with identical configuration and
//! seeds produce byte-identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use refdiff_core::error::{Error, Result};

/// One manifest line.
#[derive(Debug, Clone, Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

/// A run's output directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<ManifestEntry>,
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

impl OutputDir {
    /// Opens (creating if needed) the output directory.
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(OutputDir { root, written: Vec::new() })
    }

    /// Writes one artifact atomically and records its hash. Artifact names
    /// are flat so the manifest needs no path normalization.
    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(Error::Config(format!(
                "artifact name {name:?} must be a plain file name"
            )));
        }
        let tmp = self.root.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, self.root.join(name))?;
        self.written.push(ManifestEntry {
            path: name.to_string(),
            sha256: hex_digest(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Serializes a value as pretty JSON with a trailing newline.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Writes the manifest of everything recorded so far and consumes the
    /// handle. The manifest lists the run's own artifacts only; shared state
    /// such as spectral cache records stays outside it because a warm cache
    /// must not change what a rerun reports.
    pub fn finish(mut self) -> Result<()> {
        self.written.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = serde_json::json!({ "files": self.written });
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let tmp = self.root.join(".manifest.json.tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, self.root.join("manifest.json"))?;
        Ok(())
    }
}

/// Builds a CSV artifact in memory: one header row, then records of the
/// same width. Numbers are rendered with the shortest round-trip form.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
    width: usize,
}

/// One CSV cell, already rendered.
pub fn cell(v: f64) -> String {
    format!("{v}")
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(header)
            .map_err(|e| Error::Data(format!("csv header: {e}")))?;
        Ok(CsvTable { writer, width: header.len() })
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<()> {
        if fields.len() != self.width {
            return Err(Error::Data(format!(
                "csv row has {} fields, header has {}",
                fields.len(),
                self.width
            )));
        }
        self.writer
            .write_record(fields)
            .map_err(|e| Error::Data(format!("csv row: {e}")))
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        self.writer
            .into_inner()
            .map_err(|e| Error::Data(format!("csv flush: {e}")))
    }
}

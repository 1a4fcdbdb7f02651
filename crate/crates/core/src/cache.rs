//! Content-addressed on-disk cache for spectral decompositions.
//!
//! A record is keyed by a SHA-256 hash of the discretization inputs (domain
//! bounds, cell counts, face-average mode, mode count, coefficient values).
//! Each record is a JSON header carrying shapes, the invariant report, and a
//! payload digest, next to a raw little-endian `f64` payload file holding
//! eigenvalues then eigenvectors. Writes go through a temporary file and a
//! rename, so concurrent readers never observe a partial record.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eigen::{eigendecompose, EigenStrategy, InvariantReport, SpectralDecomposition};
use crate::error::{Error, Result};
use crate::field::DiffusivityField;
use crate::geometry::Grid;
use crate::stencil::{FaceAverage, GeneratorMatrix};

const FORMAT_VERSION: u8 = 1;

/// Cache key: lowercase hex SHA-256 of the canonical input encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Canonical content hash of a decomposition request.
pub fn cache_key(
    grid: &Grid,
    field: &DiffusivityField,
    mode: FaceAverage,
    modes: usize,
) -> CacheKey {
    let mut hasher = Sha256::new();
    hasher.update([FORMAT_VERSION]);
    for &(lo, hi) in grid.domain().bounds() {
        hasher.update(lo.to_le_bytes());
        hasher.update(hi.to_le_bytes());
    }
    for &c in grid.cells_per_dim() {
        hasher.update((c as u64).to_le_bytes());
    }
    hasher.update([match mode {
        FaceAverage::Arithmetic => 0u8,
        FaceAverage::Harmonic => 1u8,
    }]);
    hasher.update((modes as u64).to_le_bytes());
    for &v in field.values() {
        hasher.update(v.to_le_bytes());
    }
    CacheKey(hex_encode(&hasher.finalize()))
}

fn hex_encode(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordHeader {
    key: String,
    grid: Grid,
    f_min: f64,
    modes: usize,
    cells: usize,
    payload_bytes: usize,
    payload_sha256: String,
    invariants: InvariantReport,
}

/// Directory-backed cache of spectral decompositions.
#[derive(Debug, Clone)]
pub struct SpectrumCache {
    dir: PathBuf,
}

impl SpectrumCache {
    /// Opens (creating if needed) a cache directory.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn header_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.as_str()))
    }

    fn payload_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.bin", key.as_str()))
    }

    /// Stores a decomposition under a key. The payload is eigenvalues then
    /// eigenvectors, little-endian `f64`.
    pub fn store(&self, key: &CacheKey, dec: &SpectralDecomposition) -> Result<()> {
        let j = dec.modes();
        let n = dec.grid().len();
        let mut payload = Vec::with_capacity((j + j * n) * 8);
        for &v in dec.eigenvalues() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        for &v in dec.eigenvectors_flat() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let digest = hex_encode(&Sha256::digest(&payload));
        let header = RecordHeader {
            key: key.as_str().to_string(),
            grid: dec.grid().clone(),
            f_min: dec.coefficient_floor(),
            modes: j,
            cells: n,
            payload_bytes: payload.len(),
            payload_sha256: digest,
            invariants: dec.report().clone(),
        };

        let payload_tmp = self.dir.join(format!("{}.bin.tmp", key.as_str()));
        fs::write(&payload_tmp, &payload)?;
        fs::rename(&payload_tmp, self.payload_path(key))?;
        let header_tmp = self.dir.join(format!("{}.json.tmp", key.as_str()));
        fs::write(&header_tmp, serde_json::to_vec_pretty(&header)?)?;
        fs::rename(&header_tmp, self.header_path(key))?;
        Ok(())
    }

    /// Loads a record if present. A present but inconsistent record is a
    /// cache error, not a miss.
    pub fn load(&self, key: &CacheKey) -> Result<Option<SpectralDecomposition>> {
        let header_path = self.header_path(key);
        if !header_path.exists() {
            return Ok(None);
        }
        let header: RecordHeader = serde_json::from_slice(&fs::read(&header_path)?)?;
        if header.key != key.as_str() {
            return Err(Error::Cache(format!(
                "record at {} claims key {}",
                header_path.display(),
                header.key
            )));
        }
        let payload = fs::read(self.payload_path(key))?;
        if payload.len() != header.payload_bytes {
            return Err(Error::Cache(format!(
                "payload for {} has {} bytes, header says {}",
                key.as_str(),
                payload.len(),
                header.payload_bytes
            )));
        }
        let digest = hex_encode(&Sha256::digest(&payload));
        if digest != header.payload_sha256 {
            return Err(Error::Cache(format!(
                "payload digest mismatch for {}",
                key.as_str()
            )));
        }
        let expect = (header.modes + header.modes * header.cells) * 8;
        if payload.len() != expect {
            return Err(Error::Cache(format!(
                "payload for {} has {} bytes, shapes require {expect}",
                key.as_str(),
                payload.len()
            )));
        }
        let mut doubles = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let eigenvalues: Vec<f64> = doubles.by_ref().take(header.modes).collect();
        let eigenvectors: Vec<f64> = doubles.collect();
        let dec = SpectralDecomposition::from_parts(
            header.grid,
            header.f_min,
            eigenvalues,
            eigenvectors,
            header.invariants,
        )?;
        Ok(Some(dec))
    }

    /// Loads the decomposition for a generator, computing and storing it on
    /// a miss. Returns the decomposition and whether it was a cache hit.
    /// With `require_hit`, a miss is an error instead of a compute.
    pub fn get_or_compute(
        &self,
        gen: &GeneratorMatrix,
        modes: Option<usize>,
        strategy: EigenStrategy,
        require_hit: bool,
    ) -> Result<(SpectralDecomposition, bool)> {
        let j = modes.unwrap_or_else(|| {
            if gen.grid().dim() == 1 {
                gen.grid().len()
            } else {
                gen.grid().len().min(400)
            }
        });
        let key = cache_key(gen.grid(), gen.field(), gen.mode(), j);
        if let Some(dec) = self.load(&key)? {
            if dec.grid() != gen.grid() || dec.coefficient_floor() != gen.field().f_min() {
                return Err(Error::Cache(format!(
                    "record {} does not match the requested discretization",
                    key.as_str()
                )));
            }
            return Ok((dec, true));
        }
        if require_hit {
            return Err(Error::Cache(format!(
                "no cached spectrum for key {} and recomputation was disabled",
                key.as_str()
            )));
        }
        let dec = eigendecompose(gen, Some(j), strategy)?;
        self.store(&key, &dec)?;
        Ok((dec, false))
    }
}

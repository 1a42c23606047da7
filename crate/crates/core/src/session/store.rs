//! Content-addressed storage for screenshots and grounding sidecars.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::browser::Screenshot;
use crate::grounding::Observation;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("observation store I/O: {0}")]
    Io(#[from] io::Error),
    #[error("observation `{0}` not found")]
    NotFound(String),
    #[error("observation `{reference}` is corrupt: {message}")]
    Corrupt { reference: String, message: String },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Screenshots are stored as `<digest>.<ext>`, observation sidecars as
/// `<digest>.json`; the sidecar digest is the observation reference.
#[derive(Debug, Clone)]
pub struct ObservationStore {
    dir: PathBuf,
}

impl ObservationStore {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_once(&self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.dir.join(name);
        if path.exists() {
            return Ok(());
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        io::Write::write_all(&mut tmp, bytes)?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }

    /// Stores both artifacts and returns the observation reference.
    pub fn put(&self, observation: &Observation, screenshot: &Screenshot) -> Result<String, StoreError> {
        self.write_once(&format!("{}.{}", screenshot.digest(), screenshot.extension()), screenshot.bytes())?;
        let sidecar = serde_json::to_vec_pretty(observation).map_err(io::Error::from)?;
        let reference = sha256_hex(&sidecar);
        self.write_once(&format!("{reference}.json"), &sidecar)?;
        Ok(reference)
    }

    pub fn get(&self, reference: &str) -> Result<Observation, StoreError> {
        let path = self.dir.join(format!("{reference}.json"));
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound(reference.to_string()),
            _ => StoreError::Io(e),
        })?;
        if sha256_hex(&bytes) != reference {
            return Err(StoreError::Corrupt { reference: reference.to_string(), message: "digest mismatch".into() });
        }
        serde_json::from_slice(&bytes)
            .map_err(|e| StoreError::Corrupt { reference: reference.to_string(), message: e.to_string() })
    }
}

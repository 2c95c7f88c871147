//! JSON metadata written next to every event file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    /// Scanner and TOF hash as 16 hex digits.
    pub geometry_hash: String,
    pub n_events: u64,
    pub seed: u64,
    pub phantom: String,
    pub target_counts: f64,
    pub tof_fwhm_ps: f64,
    pub tof_bins: usize,
    pub tof_bin_width_mm: f64,
    pub image_size: usize,
    pub spacing_mm: f64,
    pub contamination_mean: f64,
    /// Number of (LOR, TOF bin) pairs the contamination is spread over.
    pub n_bins_total: usize,
    /// File names relative to the sidecar.
    pub truth: String,
    pub sensitivity: String,
}

pub fn hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

/// `dir/events.lmev` pairs with `dir/events.json`.
pub fn path_for(events: &Path) -> PathBuf {
    events.with_extension("json")
}

impl Sidecar {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Io(format!("{}: malformed sidecar: {e}", path.display())))
    }

    /// Exit-4 error unless the stored hash equals `expected`.
    pub fn check_hash(&self, expected: u64, path: &Path) -> Result<(), CliError> {
        if self.geometry_hash != hash_hex(expected) {
            return Err(CliError::Hash(format!(
                "{}: geometry hash {} but the configuration gives {}",
                path.display(),
                self.geometry_hash,
                hash_hex(expected)
            )));
        }
        Ok(())
    }

    pub fn resolve(&self, sidecar: &Path, name: &str) -> PathBuf {
        sidecar.parent().unwrap_or(Path::new(".")).join(name)
    }
}

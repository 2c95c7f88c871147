//! TOML run configuration.

use std::path::{Path, PathBuf};

use listrecon::{geometry_hash, BinEnumeration, Grid, Projector, ScannerGeometry, TofSpec};
use listrecon_lpd::NetworkConfig;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub image: ImageSection,
    pub tof: TofSection,
    pub scanner: Option<ScannerSection>,
    pub simulate: Option<SimulateSection>,
    pub recon: Option<ReconSection>,
    pub network: Option<NetworkSection>,
    pub train: Option<TrainSection>,
    pub bench: Option<BenchSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSection {
    pub size: usize,
    pub spacing_mm: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TofSection {
    pub fwhm_ps: f64,
    pub n_bins: usize,
    /// Defaults to the standard width for 5, 11 or 17 bins.
    pub bin_width_mm: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScannerSection {
    pub n_modules: usize,
    pub crystals_per_module: usize,
    pub ring_radius_mm: f64,
    pub crystal_width_mm: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub counts: f64,
    pub phantom: String,
    pub contamination_fraction: Option<f64>,
    pub psf_fwhm_mm: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconSection {
    pub algorithm: String,
    /// Required by the classical algorithms.
    pub iterations: Option<usize>,
    pub subsets: Option<usize>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    /// Network checkpoint, required by `lmpd`.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub phases: Option<usize>,
    pub dual_widths: Option<[usize; 2]>,
    pub channels: Option<Vec<usize>>,
    pub shared_weights: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Pairs held out for validation, taken from the end of the sorted dataset.
    pub validation_pairs: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub n_events: Option<usize>,
    pub repeats: Option<usize>,
    pub threads: Option<Vec<usize>>,
}

pub fn missing(key: &str) -> CliError {
    CliError::Config(format!("missing key `{key}`"))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.seed).ok_or_else(|| missing("seed"))
    }

    pub fn geometry(&self) -> Result<ScannerGeometry, CliError> {
        Ok(match &self.scanner {
            None => ScannerGeometry::brain_scanner(),
            Some(s) => ScannerGeometry::new(
                s.n_modules,
                s.crystals_per_module,
                s.ring_radius_mm,
                s.crystal_width_mm,
            )?,
        })
    }

    pub fn tof(&self) -> Result<TofSpec, CliError> {
        let t = &self.tof;
        Ok(match t.bin_width_mm {
            Some(w) => TofSpec::new(t.fwhm_ps, t.n_bins, w)?,
            None => TofSpec::standard(t.fwhm_ps, t.n_bins)?,
        })
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(
            self.image.size,
            self.image.size,
            self.image.spacing_mm,
        )?)
    }

    pub fn projector(&self) -> Result<Projector, CliError> {
        Ok(Projector::new(self.geometry()?, self.grid()?, self.tof()?)?)
    }

    pub fn bins(&self) -> Result<BinEnumeration, CliError> {
        Ok(BinEnumeration::new(&self.geometry()?, &self.tof()?)?)
    }

    pub fn geometry_hash(&self) -> Result<u64, CliError> {
        Ok(geometry_hash(&self.geometry()?, &self.tof()?))
    }

    pub fn simulate(&self) -> Result<&SimulateSection, CliError> {
        self.simulate.as_ref().ok_or_else(|| missing("simulate"))
    }

    pub fn recon(&self) -> Result<&ReconSection, CliError> {
        self.recon.as_ref().ok_or_else(|| missing("recon"))
    }

    pub fn train(&self) -> Result<&TrainSection, CliError> {
        self.train.as_ref().ok_or_else(|| missing("train"))
    }

    pub fn network(&self) -> NetworkConfig {
        let mut cfg = NetworkConfig::default();
        if let Some(n) = &self.network {
            if let Some(k) = n.phases {
                cfg.n_phases = k;
            }
            if let Some(w) = n.dual_widths {
                cfg.dual_widths = w;
            }
            if let Some(c) = &n.channels {
                cfg.channels = c.clone();
            }
            if let Some(s) = n.shared_weights {
                cfg.shared_weights = s;
            }
        }
        cfg
    }
}

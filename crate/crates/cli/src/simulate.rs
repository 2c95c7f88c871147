use std::path::Path;

use listrecon::io::{write_image_file, write_lmev_file, write_pgm_file};
use listrecon::simulate::{make_phantom, sample_listmode, PhantomKind, SimConfig};

use crate::config::Config;
use crate::error::CliError;
use crate::sidecar::{hash_hex, Sidecar};

pub const EVENTS_FILE: &str = "events.lmev";
pub const TRUTH_FILE: &str = "truth.img";
pub const SENSITIVITY_FILE: &str = "sensitivity.img";

pub fn run(config: &Config, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let section = config.simulate()?;
    let seed = config.seed(seed)?;
    let kind: PhantomKind = section.phantom.parse()?;
    let mut sim_cfg = SimConfig::new(section.counts, seed);
    if let Some(f) = section.contamination_fraction {
        sim_cfg.contamination_fraction = f;
    }
    if let Some(w) = section.psf_fwhm_mm {
        sim_cfg.psf_fwhm = w;
    }
    let projector = config.projector()?;
    let bins = config.bins()?;
    let tof = config.tof()?;
    let hash = config.geometry_hash()?;

    let phantom = make_phantom(kind, projector.grid(), seed)?;
    let sim = sample_listmode(&phantom, &sim_cfg, &projector, &bins)?;
    let sensitivity = projector.sensitivity_image(&bins, &sim.expectation.multipliers)?;
    log::info!("simulated {} events", sim.events.len());

    let events_path = out.join(EVENTS_FILE);
    write_lmev_file(&events_path, &sim.events, hash, tof.n_bins() as u16)?;
    write_image_file(&out.join(TRUTH_FILE), &phantom.activity)?;
    write_pgm_file(&out.join("truth.pgm"), &phantom.activity)?;
    write_image_file(&out.join(SENSITIVITY_FILE), &sensitivity)?;
    Sidecar {
        geometry_hash: hash_hex(hash),
        n_events: sim.events.len() as u64,
        seed,
        phantom: section.phantom.clone(),
        target_counts: section.counts,
        tof_fwhm_ps: tof.fwhm_ps(),
        tof_bins: tof.n_bins(),
        tof_bin_width_mm: tof.bin_width(),
        image_size: config.image.size,
        spacing_mm: config.image.spacing_mm,
        contamination_mean: sim.expectation.contamination_mean,
        n_bins_total: bins.len(),
        truth: TRUTH_FILE.into(),
        sensitivity: SENSITIVITY_FILE.into(),
    }
    .write(&crate::sidecar::path_for(&events_path))
}

use std::path::{Path, PathBuf};

use listrecon::io::read_image_file;
use listrecon_lpd::checkpoint::{
    read_train_state_file, write_checkpoint_file, write_train_state_file,
};
use listrecon_lpd::toy::TRUTH_SCALE;
use listrecon_lpd::train::loss_curve_csv;
use listrecon_lpd::{Error as NetError, NetworkParams, Sample, TrainConfig, Trainer};

use crate::config::Config;
use crate::error::CliError;
use crate::recon::load_events;
use crate::sidecar::hash_hex;
use crate::simulate::{EVENTS_FILE, TRUTH_FILE};

pub const CHECKPOINT_FILE: &str = "checkpoint.lmpd";
pub const STATE_FILE: &str = "train_state.lmts";
pub const LOSS_FILE: &str = "loss.csv";

/// Subdirectories of `dir` holding an event file, in name order.
fn pair_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
            .path();
        if path.join(EVENTS_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn run(
    config: &Config,
    seed: Option<u64>,
    dataset: &Path,
    resume: bool,
    out: &Path,
) -> Result<(), CliError> {
    let section = config.train()?;
    let seed = config.seed(seed)?;
    let projector = config.projector()?;
    let hash = config.geometry_hash()?;
    let network = config.network();
    network.validate()?;

    let dirs = pair_dirs(dataset)?;
    if dirs.is_empty() {
        return Err(CliError::Config(format!(
            "empty dataset: no pairs in {}",
            dataset.display()
        )));
    }
    let n_val = section.validation_pairs.unwrap_or((dirs.len() / 5).max(1));
    if n_val == 0 || n_val >= dirs.len() {
        return Err(CliError::Config(format!(
            "{} pairs cannot be split into training and {n_val} validation pairs",
            dirs.len()
        )));
    }
    let mut samples = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        let (events, _) = load_events(&dir.join(EVENTS_FILE), hash)?;
        let truth_path = dir.join(TRUTH_FILE);
        let truth = read_image_file(&truth_path).map_err(|e| CliError::from(e).at(&truth_path))?;
        samples.push(
            Sample::new(&projector, events, truth.scaled(TRUTH_SCALE))
                .map_err(|e| CliError::from(e).at(dir))?,
        );
    }
    let (train, val) = samples.split_at(dirs.len() - n_val);
    log::info!(
        "{} training and {} validation pairs",
        train.len(),
        val.len()
    );

    let cfg = TrainConfig::new(section.epochs, section.learning_rate, seed);
    let state_path = out.join(STATE_FILE);
    let trainer = if resume {
        let state =
            read_train_state_file(&state_path).map_err(|e| CliError::from(e).at(&state_path))?;
        if state.params.config().hash() != network.hash() {
            return Err(CliError::Hash(format!(
                "{}: network hash {} but the configuration gives {}",
                state_path.display(),
                hash_hex(state.params.config().hash()),
                hash_hex(network.hash())
            )));
        }
        Trainer::resume(state, cfg)?
    } else {
        Trainer::new(NetworkParams::init(&network, seed)?, cfg, val)?
    };
    match trainer.train(train, val) {
        Ok(outcome) => {
            write_checkpoint_file(&out.join(CHECKPOINT_FILE), &outcome.best)?;
            write_train_state_file(&state_path, &outcome.state)?;
            std::fs::write(out.join(LOSS_FILE), loss_curve_csv(&outcome.state))?;
            log::info!(
                "best validation loss {:e} at epoch {}",
                outcome.best_val,
                outcome.best_epoch
            );
            Ok(())
        }
        Err(NetError::Diverged { epoch, last_good }) => {
            write_checkpoint_file(&out.join(CHECKPOINT_FILE), &last_good)?;
            Err(CliError::Other(format!(
                "training diverged at epoch {epoch}; wrote the last good checkpoint"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

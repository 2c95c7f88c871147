//! Binary checkpoint and training-state files, little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use listrecon::Error as CoreError;

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::params::NetworkParams;
use crate::train::TrainState;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LMPD";
pub const TRAIN_STATE_MAGIC: [u8; 4] = *b"LMTS";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_LEN: u64 = 1 << 32;

fn map_eof(e: std::io::Error) -> Error {
    if e.kind() == ErrorKind::UnexpectedEof {
        CoreError::Format("truncated checkpoint".into()).into()
    } else {
        e.into()
    }
}

fn format_err(msg: String) -> Error {
    CoreError::Format(msg).into()
}

fn write_header(w: &mut impl Write, magic: [u8; 4]) -> Result<()> {
    w.write_all(&magic)?;
    w.write_u32::<LE>(CHECKPOINT_VERSION)?;
    Ok(())
}

fn read_header(r: &mut impl Read, expected: [u8; 4]) -> Result<()> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found).map_err(map_eof)?;
    if found != expected {
        return Err(CoreError::BadMagic { expected, found }.into());
    }
    let version = r.read_u32::<LE>().map_err(map_eof)?;
    if version != CHECKPOINT_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    Ok(())
}

fn write_f64s(w: &mut impl Write, v: &[f64]) -> Result<()> {
    w.write_u64::<LE>(v.len() as u64)?;
    for &x in v {
        w.write_f64::<LE>(x)?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read) -> Result<Vec<f64>> {
    let n = r.read_u64::<LE>().map_err(map_eof)?;
    if n > MAX_LEN {
        return Err(format_err(format!("block length {n} is implausible")));
    }
    let mut v = vec![0.0; n as usize];
    r.read_f64_into::<LE>(&mut v).map_err(map_eof)?;
    Ok(v)
}

fn write_config(w: &mut impl Write, cfg: &NetworkConfig) -> Result<()> {
    w.write_u64::<LE>(cfg.hash())?;
    w.write_u32::<LE>(cfg.n_phases as u32)?;
    w.write_u32::<LE>(cfg.dual_widths[0] as u32)?;
    w.write_u32::<LE>(cfg.dual_widths[1] as u32)?;
    w.write_u32::<LE>(cfg.channels.len() as u32)?;
    for &c in &cfg.channels {
        w.write_u32::<LE>(c as u32)?;
    }
    w.write_u8(cfg.shared_weights as u8)?;
    Ok(())
}

fn read_config(r: &mut impl Read) -> Result<NetworkConfig> {
    let hash = r.read_u64::<LE>().map_err(map_eof)?;
    let n_phases = r.read_u32::<LE>().map_err(map_eof)? as usize;
    let dual_widths = [
        r.read_u32::<LE>().map_err(map_eof)? as usize,
        r.read_u32::<LE>().map_err(map_eof)? as usize,
    ];
    let n_channels = r.read_u32::<LE>().map_err(map_eof)?;
    if n_channels > 64 {
        return Err(format_err(format!(
            "{n_channels} channel entries is implausible"
        )));
    }
    let channels = (0..n_channels)
        .map(|_| r.read_u32::<LE>().map(|c| c as usize).map_err(map_eof))
        .collect::<Result<Vec<_>>>()?;
    let shared_weights = match r.read_u8().map_err(map_eof)? {
        0 => false,
        1 => true,
        other => return Err(format_err(format!("invalid weight-sharing flag {other}"))),
    };
    let cfg = NetworkConfig {
        n_phases,
        dual_widths,
        channels,
        shared_weights,
    };
    cfg.validate()?;
    if cfg.hash() != hash {
        return Err(CoreError::HashMismatch(format!(
            "stored config hash {hash:016x} does not match its architecture ({:016x})",
            cfg.hash()
        ))
        .into());
    }
    Ok(cfg)
}

fn write_params(w: &mut impl Write, params: &NetworkParams) -> Result<()> {
    write_config(w, params.config())?;
    write_f64s(w, &params.values)?;
    write_f64s(w, &params.running_stats)
}

fn read_params(r: &mut impl Read) -> Result<NetworkParams> {
    let cfg = read_config(r)?;
    let values = read_f64s(r)?;
    let stats = read_f64s(r)?;
    NetworkParams::from_parts(&cfg, values, stats)
        .map_err(|e| format_err(format!("parameter blocks do not fit the architecture: {e}")))
}

fn expect_end(r: &mut impl Read) -> Result<()> {
    let mut byte = [0u8; 1];
    match r.read(&mut byte)? {
        0 => Ok(()),
        _ => Err(format_err("trailing bytes after checkpoint".into())),
    }
}

pub fn write_checkpoint(w: &mut impl Write, params: &NetworkParams) -> Result<()> {
    write_header(w, CHECKPOINT_MAGIC)?;
    write_params(w, params)
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<NetworkParams> {
    read_header(r, CHECKPOINT_MAGIC)?;
    let params = read_params(r)?;
    expect_end(r)?;
    Ok(params)
}

/// Reads a checkpoint and checks that it was written for `expected`.
pub fn read_checkpoint_for(r: &mut impl Read, expected: &NetworkConfig) -> Result<NetworkParams> {
    let params = read_checkpoint(r)?;
    if params.config().hash() != expected.hash() {
        return Err(CoreError::HashMismatch(format!(
            "checkpoint config hash {:016x}, expected {:016x}",
            params.config().hash(),
            expected.hash()
        ))
        .into());
    }
    Ok(params)
}

pub fn write_train_state(w: &mut impl Write, state: &TrainState) -> Result<()> {
    write_header(w, TRAIN_STATE_MAGIC)?;
    write_params(w, &state.params)?;
    write_f64s(w, &state.adam_m)?;
    write_f64s(w, &state.adam_v)?;
    w.write_u64::<LE>(state.adam_step)?;
    w.write_u64::<LE>(state.epochs_done as u64)?;
    write_params(w, &state.best)?;
    w.write_u64::<LE>(state.best_epoch as u64)?;
    w.write_f64::<LE>(state.best_val)?;
    write_f64s(w, &state.train_curve)?;
    write_f64s(w, &state.val_curve)
}

pub fn read_train_state(r: &mut impl Read) -> Result<TrainState> {
    read_header(r, TRAIN_STATE_MAGIC)?;
    let params = read_params(r)?;
    let adam_m = read_f64s(r)?;
    let adam_v = read_f64s(r)?;
    let adam_step = r.read_u64::<LE>().map_err(map_eof)?;
    let epochs_done = r.read_u64::<LE>().map_err(map_eof)? as usize;
    let best = read_params(r)?;
    let best_epoch = r.read_u64::<LE>().map_err(map_eof)? as usize;
    let best_val = r.read_f64::<LE>().map_err(map_eof)?;
    let train_curve = read_f64s(r)?;
    let val_curve = read_f64s(r)?;
    expect_end(r)?;
    if best.config() != params.config() {
        return Err(format_err(
            "best and current parameters disagree on the architecture".into(),
        ));
    }
    Ok(TrainState {
        params,
        adam_m,
        adam_v,
        adam_step,
        epochs_done,
        best,
        best_epoch,
        best_val,
        train_curve,
        val_curve,
    })
}

pub fn write_checkpoint_file(path: &Path, params: &NetworkParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint_file(path: &Path) -> Result<NetworkParams> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

pub fn write_train_state_file(path: &Path, state: &TrainState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_train_state(&mut w, state)?;
    w.flush()?;
    Ok(())
}

pub fn read_train_state_file(path: &Path) -> Result<TrainState> {
    read_train_state(&mut BufReader::new(File::open(path)?))
}

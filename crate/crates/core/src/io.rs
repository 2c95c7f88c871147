//! Binary event and image files, and 16-bit PGM previews.
//!
//! All multi-byte fields are little-endian except the PGM payload, which the
//! format defines as big-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::image::{Grid, Image2D};
use crate::projector::{Event, EventList};

pub const LMEV_MAGIC: [u8; 4] = *b"LMEV";
pub const LMEV_VERSION: u32 = 1;
pub const IMG_MAGIC: [u8; 4] = *b"IMG2";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LmevHeader {
    pub version: u32,
    pub n_events: u64,
    pub geometry_hash: u64,
    pub n_bins: u16,
}

fn truncated(what: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Format(format!("truncated {what}"))
        } else {
            Error::Io(e)
        }
    }
}

fn read_magic(r: &mut impl Read, expected: [u8; 4]) -> Result<()> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found).map_err(truncated("header"))?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

pub fn write_lmev(
    w: &mut impl Write,
    events: &EventList,
    geometry_hash: u64,
    n_bins: u16,
) -> Result<()> {
    w.write_all(&LMEV_MAGIC)?;
    w.write_u32::<LittleEndian>(LMEV_VERSION)?;
    w.write_u64::<LittleEndian>(events.len() as u64)?;
    w.write_u64::<LittleEndian>(geometry_hash)?;
    w.write_u16::<LittleEndian>(n_bins)?;
    for ev in events.iter() {
        w.write_u16::<LittleEndian>(ev.det_a)?;
        w.write_u16::<LittleEndian>(ev.det_b)?;
        w.write_u16::<LittleEndian>(ev.tof_bin)?;
        w.write_f32::<LittleEndian>(ev.multiplier as f32)?;
    }
    Ok(())
}

pub fn read_lmev(r: &mut impl Read) -> Result<(LmevHeader, EventList)> {
    read_magic(r, LMEV_MAGIC)?;
    let version = r.read_u32::<LittleEndian>().map_err(truncated("header"))?;
    if version != LMEV_VERSION {
        return Err(Error::Format(format!(
            "unsupported event file version {version}"
        )));
    }
    let n_events = r.read_u64::<LittleEndian>().map_err(truncated("header"))?;
    let geometry_hash = r.read_u64::<LittleEndian>().map_err(truncated("header"))?;
    let n_bins = r.read_u16::<LittleEndian>().map_err(truncated("header"))?;
    let header = LmevHeader {
        version,
        n_events,
        geometry_hash,
        n_bins,
    };

    let mut events = Vec::with_capacity(n_events.min(1 << 26) as usize);
    for t in 0..n_events {
        let det_a = r
            .read_u16::<LittleEndian>()
            .map_err(truncated("event records"))?;
        let det_b = r
            .read_u16::<LittleEndian>()
            .map_err(truncated("event records"))?;
        let tof_bin = r
            .read_u16::<LittleEndian>()
            .map_err(truncated("event records"))?;
        let multiplier = r
            .read_f32::<LittleEndian>()
            .map_err(truncated("event records"))? as f64;
        if !(multiplier >= 0.0) || !multiplier.is_finite() {
            return Err(Error::Format(format!(
                "event {t} has invalid multiplier {multiplier}"
            )));
        }
        if tof_bin >= n_bins {
            return Err(Error::Format(format!(
                "event {t} has TOF bin {tof_bin} of {n_bins}"
            )));
        }
        events.push(Event::new(det_a, det_b, tof_bin, multiplier));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format(format!(
            "trailing bytes after {n_events} event records"
        )));
    }
    Ok((header, EventList::new(events)))
}

pub fn write_lmev_file(
    path: &Path,
    events: &EventList,
    geometry_hash: u64,
    n_bins: u16,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_lmev(&mut w, events, geometry_hash, n_bins)?;
    w.flush()?;
    Ok(())
}

pub fn read_lmev_file(path: &Path) -> Result<(LmevHeader, EventList)> {
    read_lmev(&mut BufReader::new(File::open(path)?))
}

pub fn write_image(w: &mut impl Write, img: &Image2D) -> Result<()> {
    if !img.all_finite() {
        return Err(Error::Format("image holds non-finite values".into()));
    }
    let grid = img.grid();
    w.write_all(&IMG_MAGIC)?;
    w.write_u32::<LittleEndian>(grid.width as u32)?;
    w.write_u32::<LittleEndian>(grid.height as u32)?;
    w.write_f64::<LittleEndian>(grid.spacing)?;
    for &v in img.values() {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

pub fn read_image(r: &mut impl Read) -> Result<Image2D> {
    read_magic(r, IMG_MAGIC)?;
    let width = r.read_u32::<LittleEndian>().map_err(truncated("header"))? as usize;
    let height = r.read_u32::<LittleEndian>().map_err(truncated("header"))? as usize;
    let spacing = r.read_f64::<LittleEndian>().map_err(truncated("header"))?;
    let grid = Grid::new(width, height, spacing).map_err(|e| Error::Format(e.to_string()))?;
    let mut values = vec![0f32; grid.len()];
    r.read_f32_into::<LittleEndian>(&mut values)
        .map_err(truncated("pixel data"))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("image holds non-finite values".into()));
    }
    Image2D::from_values(grid, values.into_iter().map(f64::from).collect())
}

pub fn write_image_file(path: &Path, img: &Image2D) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_image(&mut w, img)?;
    w.flush()?;
    Ok(())
}

pub fn read_image_file(path: &Path) -> Result<Image2D> {
    read_image(&mut BufReader::new(File::open(path)?))
}

/// Binary 16-bit PGM, min-max scaled; row `q = height − 1` comes first so
/// the image displays with y pointing up.
pub fn write_pgm(w: &mut impl Write, img: &Image2D) -> Result<()> {
    let (lo, hi) = img
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    write!(w, "P5\n{} {}\n65535\n", img.width(), img.height())?;
    for q in (0..img.height()).rev() {
        for p in 0..img.width() {
            let v = img.get(p, q);
            let level = if range > 0.0 {
                ((v - lo) / range * 65535.0).round()
            } else {
                0.0
            };
            w.write_u16::<BigEndian>(level as u16)?;
        }
    }
    Ok(())
}

pub fn write_pgm_file(path: &Path, img: &Image2D) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm(&mut w, img)?;
    w.flush()?;
    Ok(())
}

//! Scanner ring, detector indexing and LOR / TOF-bin geometry.
//!
//! Crystals are modelled as points at their centers on a single ring in the
//! transaxial plane. Crystal `k` of `K` sits at angle `2π(k + ½)/K`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Speed of light in mm/ps.
pub const SPEED_OF_LIGHT_MM_PER_PS: f64 = 0.299_792_458;

/// FWHM / σ for a Gaussian, `2·√(2·ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

/// Default ring radius in mm. Fits a 128×128 grid at 2.086 mm with margin.
pub const DEFAULT_RING_RADIUS: f64 = 350.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// A single-ring cylindrical scanner. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ScannerGeometry {
    ring_radius: f64,
    n_modules: usize,
    crystals_per_module: usize,
    crystal_width: f64,
    positions: Vec<Point2>,
}

impl ScannerGeometry {
    pub fn new(
        n_modules: usize,
        crystals_per_module: usize,
        ring_radius: f64,
        crystal_width: f64,
    ) -> Result<Self> {
        if n_modules == 0 || crystals_per_module == 0 {
            return Err(Error::InvalidConfig(
                "scanner needs at least one module and one crystal per module".into(),
            ));
        }
        if !(ring_radius > 0.0 && ring_radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ring radius must be positive, got {ring_radius}"
            )));
        }
        if !(crystal_width > 0.0 && crystal_width.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "crystal width must be positive, got {crystal_width}"
            )));
        }
        let total = n_modules * crystals_per_module;
        if total > u16::MAX as usize + 1 {
            return Err(Error::InvalidConfig(format!(
                "{total} crystals do not fit 16-bit detector indices"
            )));
        }
        let positions = (0..total)
            .map(|k| {
                let angle = 2.0 * PI * (k as f64 + 0.5) / total as f64;
                Point2::new(ring_radius * angle.cos(), ring_radius * angle.sin())
            })
            .collect();
        Ok(Self {
            ring_radius,
            n_modules,
            crystals_per_module,
            crystal_width,
            positions,
        })
    }

    /// The 28 × 16 crystal scanner used for the brain simulations.
    pub fn brain_scanner() -> Self {
        Self::new(28, 16, DEFAULT_RING_RADIUS, 4.0).expect("static scanner parameters are valid")
    }

    pub fn ring_radius(&self) -> f64 {
        self.ring_radius
    }

    pub fn n_modules(&self) -> usize {
        self.n_modules
    }

    pub fn crystals_per_module(&self) -> usize {
        self.crystals_per_module
    }

    /// Kept for bookkeeping only; the projector uses a line model.
    pub fn crystal_width(&self) -> f64 {
        self.crystal_width
    }

    pub fn n_crystals(&self) -> usize {
        self.positions.len()
    }

    pub fn crystal_position(&self, k: usize) -> Result<Point2> {
        self.positions.get(k).copied().ok_or(Error::Index {
            what: "crystal",
            index: k,
            limit: self.positions.len(),
        })
    }

    pub(crate) fn positions(&self) -> &[Point2] {
        &self.positions
    }

    /// Shortest circular distance between two crystal indices.
    pub fn index_separation(&self, a: usize, b: usize) -> usize {
        let k = self.n_crystals();
        let d = a.abs_diff(b) % k;
        d.min(k - d)
    }

    pub(crate) fn hash_into(&self, hasher: &mut Sha256) {
        hasher.update((self.n_modules as u64).to_le_bytes());
        hasher.update((self.crystals_per_module as u64).to_le_bytes());
        hasher.update(self.ring_radius.to_le_bytes());
        hasher.update(self.crystal_width.to_le_bytes());
    }
}

/// Time-of-flight binning and timing resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TofSpec {
    fwhm_ps: f64,
    n_bins: usize,
    bin_width: f64,
    sigma_mm: f64,
}

impl TofSpec {
    pub fn new(fwhm_ps: f64, n_bins: usize, bin_width: f64) -> Result<Self> {
        if !(fwhm_ps > 0.0 && fwhm_ps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "TOF resolution must be positive, got {fwhm_ps} ps"
            )));
        }
        if n_bins == 0 || n_bins % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "number of TOF bins must be odd, got {n_bins}"
            )));
        }
        if n_bins > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "{n_bins} TOF bins is too many"
            )));
        }
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "TOF bin width must be positive, got {bin_width}"
            )));
        }
        // Timing difference localizes at half the light-travel distance.
        let fwhm_mm = SPEED_OF_LIGHT_MM_PER_PS * fwhm_ps / 2.0;
        Ok(Self {
            fwhm_ps,
            n_bins,
            bin_width,
            sigma_mm: fwhm_mm / FWHM_PER_SIGMA,
        })
    }

    /// Bin widths that cover a ~255 mm object with 5, 11 or 17 bins.
    pub fn standard(fwhm_ps: f64, n_bins: usize) -> Result<Self> {
        let width = match n_bins {
            5 => 51.0,
            11 => 23.2,
            17 => 15.0,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "no standard bin width for {n_bins} bins (expected 5, 11 or 17)"
                )))
            }
        };
        Self::new(fwhm_ps, n_bins, width)
    }

    pub fn fwhm_ps(&self) -> f64 {
        self.fwhm_ps
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn sigma_mm(&self) -> f64 {
        self.sigma_mm
    }

    /// Total length along the LOR covered by the bins.
    pub fn coverage(&self) -> f64 {
        self.n_bins as f64 * self.bin_width
    }

    /// Signed offset of the center of `bin` from the LOR midpoint.
    pub fn bin_offset(&self, bin: usize) -> f64 {
        (bin as f64 - (self.n_bins as f64 - 1.0) / 2.0) * self.bin_width
    }

    pub fn check_covers(&self, diameter: f64) -> Result<()> {
        if self.coverage() + 1e-9 < diameter {
            return Err(Error::InvalidConfig(format!(
                "{} TOF bins of {} mm cover {} mm, less than the {diameter} mm object",
                self.n_bins,
                self.bin_width,
                self.coverage()
            )));
        }
        Ok(())
    }

    pub(crate) fn hash_into(&self, hasher: &mut Sha256) {
        hasher.update(self.fwhm_ps.to_le_bytes());
        hasher.update((self.n_bins as u64).to_le_bytes());
        hasher.update(self.bin_width.to_le_bytes());
    }
}

/// Content hash tying event data to the scanner and TOF configuration.
pub fn geometry_hash(geom: &ScannerGeometry, tof: &TofSpec) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"listrecon-geometry-v1");
    geom.hash_into(&mut hasher);
    tof.hash_into(&mut hasher);
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

/// Line of response between two crystal centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lor {
    pub endpoint_a: Point2,
    pub endpoint_b: Point2,
    pub direction: Point2,
    pub length: f64,
}

impl Lor {
    pub fn midpoint(&self) -> Point2 {
        (self.endpoint_a + self.endpoint_b) * 0.5
    }

    pub fn point_at(&self, t: f64) -> Point2 {
        self.endpoint_a + self.direction * t
    }
}

pub fn lor_of(geom: &ScannerGeometry, det_a: usize, det_b: usize) -> Result<Lor> {
    if det_a == det_b {
        return Err(Error::DegenerateLor(det_a));
    }
    let a = geom.crystal_position(det_a)?;
    let b = geom.crystal_position(det_b)?;
    Ok(lor_between(a, b))
}

pub(crate) fn lor_between(a: Point2, b: Point2) -> Lor {
    let delta = b - a;
    let length = delta.norm();
    Lor {
        endpoint_a: a,
        endpoint_b: b,
        direction: delta * (1.0 / length),
        length,
    }
}

/// Center of TOF bin `bin` on `lor`, measured from the LOR midpoint towards `endpoint_b`.
pub fn tof_bin_center(lor: &Lor, spec: &TofSpec, bin: usize) -> Result<Point2> {
    if bin >= spec.n_bins() {
        return Err(Error::Index {
            what: "TOF bin",
            index: bin,
            limit: spec.n_bins(),
        });
    }
    Ok(lor.midpoint() + lor.direction * spec.bin_offset(bin))
}

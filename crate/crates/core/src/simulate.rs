//! Digital phantoms and Poisson list-mode simulation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::FWHM_PER_SIGMA;
use crate::image::{Grid, Image2D};
use crate::projector::{BinEnumeration, Event, EventList, Projector};

pub const GM_MEAN: f64 = 96.0;
pub const WM_MEAN: f64 = 32.0;
pub const TISSUE_STD: f64 = 5.0;
pub const HOT_LESION_VALUE: f64 = 144.0;
pub const COLD_LESION_VALUE: f64 = 48.0;
pub const LESION_RADIUS_MM: (f64, f64) = (2.0, 8.0);
/// Linear attenuation of water-equivalent tissue at 511 keV (1/mm).
pub const WATER_MU_PER_MM: f64 = 0.0096;
pub const DEFAULT_PSF_FWHM_MM: f64 = 4.0;
pub const DEFAULT_CONTAMINATION_FRACTION: f64 = 0.20;
/// Background ROI diameter in pixels.
pub const BACKGROUND_ROI_DIAMETER_PX: f64 = 4.0;

const PLACEMENT_ATTEMPTS: usize = 2000;
const PHANTOM_STREAM: u64 = 1;
const SAMPLING_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    /// Elliptical head: grey-matter cortex and deep nuclei around white matter.
    EllipseBrain,
    /// Grey-matter disks inside a white-matter disk.
    Disks,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipse-brain" | "brain" => Ok(Self::EllipseBrain),
            "disks" => Ok(Self::Disks),
            other => Err(Error::InvalidConfig(format!(
                "unknown phantom kind '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoiKind {
    HotLesion,
    ColdLesion,
    Background,
    GreyMatter,
    WhiteMatter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedMask {
    pub name: String,
    pub kind: RoiKind,
    pub mask: Vec<bool>,
}

impl NamedMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub activity: Image2D,
    /// Linear attenuation coefficients (1/mm).
    pub attenuation: Image2D,
    pub rois: Vec<NamedMask>,
    pub grey_matter_value: f64,
    pub white_matter_value: f64,
}

impl Phantom {
    pub fn masks(&self, kind: RoiKind) -> impl Iterator<Item = &NamedMask> {
        self.rois.iter().filter(move |r| r.kind == kind)
    }

    /// Union of all masks of one kind.
    pub fn union_mask(&self, kind: RoiKind) -> Vec<bool> {
        let mut out = vec![false; self.activity.values().len()];
        for roi in self.masks(kind) {
            for (o, &m) in out.iter_mut().zip(&roi.mask) {
                *o |= m;
            }
        }
        out
    }

    /// Diameter of the smallest centered disk holding all nonzero activity.
    pub fn support_diameter(&self) -> f64 {
        let grid = self.activity.grid();
        let mut r: f64 = 0.0;
        for q in 0..grid.height {
            for p in 0..grid.width {
                if self.activity.get(p, q) > 0.0 {
                    r = r.max(grid.pixel_center(p, q).norm());
                }
            }
        }
        2.0 * r + grid.spacing
    }
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

struct Ellipse {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let u = (x - self.cx) / self.ax;
        let v = (y - self.cy) / self.ay;
        u * u + v * v <= 1.0
    }

    /// Conservative test that a disk lies inside the ellipse.
    fn contains_disk(&self, x: f64, y: f64, r: f64) -> bool {
        Ellipse {
            cx: self.cx,
            cy: self.cy,
            ax: self.ax - r,
            ay: self.ay - r,
        }
        .contains(x, y)
            && self.ax > r
            && self.ay > r
    }
}

fn rasterize(grid: &Grid, inside: impl Fn(f64, f64) -> bool) -> Vec<bool> {
    let mut mask = Vec::with_capacity(grid.len());
    for q in 0..grid.height {
        for p in 0..grid.width {
            let c = grid.pixel_center(p, q);
            mask.push(inside(c.x, c.y));
        }
    }
    mask
}

/// Piecewise-constant activity phantom with lesions and ROI masks.
///
/// Tissue values are drawn once per phantom, lesion radii uniformly in
/// [2, 8] mm, and lesion and background-ROI centers by rejection sampling.
/// All values are f32-representable.
pub fn make_phantom(kind: PhantomKind, grid: Grid, seed: u64) -> Result<Phantom> {
    make_phantom_with(kind, grid, seed, 15, 2)
}

pub fn make_phantom_with(
    kind: PhantomKind,
    grid: Grid,
    seed: u64,
    n_hot: usize,
    n_cold: usize,
) -> Result<Phantom> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PHANTOM_STREAM);
    let gm = f32_round(
        Normal::new(GM_MEAN, TISSUE_STD)
            .expect("valid normal")
            .sample(&mut rng)
            .max(0.0),
    );
    let wm = f32_round(
        Normal::new(WM_MEAN, TISSUE_STD)
            .expect("valid normal")
            .sample(&mut rng)
            .max(0.0),
    );

    let r = grid.inscribed_radius();
    let (head, wm_region, nuclei): (Ellipse, Ellipse, Vec<Ellipse>) = match kind {
        PhantomKind::EllipseBrain => (
            Ellipse {
                cx: 0.0,
                cy: 0.0,
                ax: 0.72 * r,
                ay: 0.90 * r,
            },
            Ellipse {
                cx: 0.0,
                cy: 0.0,
                ax: 0.58 * r,
                ay: 0.76 * r,
            },
            vec![
                Ellipse {
                    cx: -0.22 * r,
                    cy: 0.05 * r,
                    ax: 0.08 * r,
                    ay: 0.12 * r,
                },
                Ellipse {
                    cx: 0.22 * r,
                    cy: 0.05 * r,
                    ax: 0.08 * r,
                    ay: 0.12 * r,
                },
            ],
        ),
        PhantomKind::Disks => (
            Ellipse {
                cx: 0.0,
                cy: 0.0,
                ax: 0.80 * r,
                ay: 0.80 * r,
            },
            Ellipse {
                cx: 0.0,
                cy: 0.0,
                ax: 0.80 * r,
                ay: 0.80 * r,
            },
            vec![
                Ellipse {
                    cx: 0.35 * r,
                    cy: 0.0,
                    ax: 0.15 * r,
                    ay: 0.15 * r,
                },
                Ellipse {
                    cx: -0.35 * r,
                    cy: 0.0,
                    ax: 0.15 * r,
                    ay: 0.15 * r,
                },
                Ellipse {
                    cx: 0.0,
                    cy: 0.4 * r,
                    ax: 0.12 * r,
                    ay: 0.12 * r,
                },
            ],
        ),
    };

    let head_mask = rasterize(&grid, |x, y| head.contains(x, y));
    let in_nuclei = |x: f64, y: f64| nuclei.iter().any(|e| e.contains(x, y));
    let wm_mask = rasterize(&grid, |x, y| wm_region.contains(x, y) && !in_nuclei(x, y));
    let gm_mask: Vec<bool> = head_mask
        .iter()
        .zip(&wm_mask)
        .map(|(&h, &w)| h && !w)
        .collect();

    let mut values: Vec<f64> = gm_mask
        .iter()
        .zip(&wm_mask)
        .map(|(&g, &w)| {
            if g {
                gm
            } else if w {
                wm
            } else {
                0.0
            }
        })
        .collect();

    // Lesions go anywhere inside the head; background ROIs only in lesion-free
    // white matter.
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    let mut rois = Vec::new();
    let lesion_radius = rand_distr::Uniform::new_inclusive(LESION_RADIUS_MM.0, LESION_RADIUS_MM.1)
        .expect("valid range");
    let span_x = rand_distr::Uniform::new_inclusive(-head.ax, head.ax).expect("valid range");
    let span_y = rand_distr::Uniform::new_inclusive(-head.ay, head.ay).expect("valid range");
    let margin = grid.spacing;
    let overlaps = |placed: &[(f64, f64, f64)], x: f64, y: f64, rad: f64| {
        placed
            .iter()
            .any(|&(px, py, pr)| (x - px).hypot(y - py) < rad + pr + margin)
    };

    for (count, kind, value, label) in [
        (n_hot, RoiKind::HotLesion, HOT_LESION_VALUE, "hot"),
        (n_cold, RoiKind::ColdLesion, COLD_LESION_VALUE, "cold"),
    ] {
        for idx in 0..count {
            let rad = lesion_radius.sample(&mut rng);
            let mut found = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let (x, y) = (span_x.sample(&mut rng), span_y.sample(&mut rng));
                if head.contains_disk(x, y, rad + margin) && !overlaps(&placed, x, y, rad) {
                    found = Some((x, y));
                    break;
                }
            }
            let Some((x, y)) = found else {
                log::debug!("placed {idx} of {count} {label} lesions");
                break;
            };
            let mask = rasterize(&grid, |px, py| (px - x).hypot(py - y) <= rad);
            if !mask.iter().any(|&m| m) {
                continue;
            }
            placed.push((x, y, rad));
            for (v, &m) in values.iter_mut().zip(&mask) {
                if m {
                    *v = value;
                }
            }
            rois.push(NamedMask {
                name: format!("{label}-{idx}"),
                kind,
                mask,
            });
        }
    }

    let bg_radius = 0.5 * BACKGROUND_ROI_DIAMETER_PX * grid.spacing;
    let bg_x =
        rand_distr::Uniform::new_inclusive(-wm_region.ax, wm_region.ax).expect("valid range");
    let bg_y =
        rand_distr::Uniform::new_inclusive(-wm_region.ay, wm_region.ay).expect("valid range");
    let mut bg_placed: Vec<(f64, f64, f64)> = Vec::new();
    for idx in 0..15 {
        let mut found = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let (x, y) = (bg_x.sample(&mut rng), bg_y.sample(&mut rng));
            if !wm_region.contains_disk(x, y, bg_radius + margin)
                || overlaps(&placed, x, y, bg_radius)
                || overlaps(&bg_placed, x, y, bg_radius)
            {
                continue;
            }
            let mask = rasterize(&grid, |px, py| (px - x).hypot(py - y) < bg_radius);
            let clean = mask.iter().zip(&values).all(|(&m, &v)| !m || v == wm);
            if clean && mask.iter().any(|&m| m) {
                found = Some(mask);
                bg_placed.push((x, y, bg_radius));
                break;
            }
        }
        match found {
            Some(mask) => rois.push(NamedMask {
                name: format!("background-{idx}"),
                kind: RoiKind::Background,
                mask,
            }),
            None => break,
        }
    }

    let final_gm: Vec<bool> = values.iter().map(|&v| v == gm && gm != wm).collect();
    let final_wm: Vec<bool> = values.iter().map(|&v| v == wm && wm > 0.0).collect();
    rois.push(NamedMask {
        name: "grey-matter".into(),
        kind: RoiKind::GreyMatter,
        mask: final_gm,
    });
    rois.push(NamedMask {
        name: "white-matter".into(),
        kind: RoiKind::WhiteMatter,
        mask: final_wm,
    });

    let attenuation: Vec<f64> = head_mask
        .iter()
        .map(|&h| if h { f32_round(WATER_MU_PER_MM) } else { 0.0 })
        .collect();

    Ok(Phantom {
        activity: Image2D::from_values(grid, values)?,
        attenuation: Image2D::from_values(grid, attenuation)?,
        rois,
        grey_matter_value: gm,
        white_matter_value: wm,
    })
}

/// Separable Gaussian blur with half-sample reflective boundaries.
pub fn psf_blur(img: &Image2D, fwhm: f64) -> Result<Image2D> {
    if !(fwhm >= 0.0) || !fwhm.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "PSF FWHM must be nonnegative, got {fwhm}"
        )));
    }
    if fwhm == 0.0 {
        return Ok(img.clone());
    }
    let grid = img.grid();
    let sigma_px = fwhm / FWHM_PER_SIGMA / grid.spacing;
    let radius = (4.0 * sigma_px).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma_px).powi(2)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= total);

    let reflect = |i: i64, n: usize| -> usize {
        let n = n as i64;
        let period = 2 * n;
        let m = i.rem_euclid(period);
        (if m < n { m } else { period - 1 - m }) as usize
    };

    let (w, h) = (grid.width, grid.height);
    let src = img.values();
    let mut tmp = vec![0.0; src.len()];
    for q in 0..h {
        for p in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in kernel.iter().enumerate() {
                acc += wk * src[q * w + reflect(p as i64 + k as i64 - radius, w)];
            }
            tmp[q * w + p] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for q in 0..h {
        for p in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in kernel.iter().enumerate() {
                acc += wk * tmp[reflect(q as i64 + k as i64 - radius, h) * w + p];
            }
            out[q * w + p] = acc;
        }
    }
    Image2D::from_values(grid, out)
}

/// `exp(−∫μ)` along each enumerated bin's LOR.
pub fn attenuation_multipliers(
    attenuation: &Image2D,
    projector: &Projector,
    bins: &BinEnumeration,
) -> Result<Vec<f64>> {
    attenuation.check_grid(&projector.grid())?;
    if attenuation
        .values()
        .iter()
        .any(|&m| !(m >= 0.0) || !m.is_finite())
    {
        return Err(Error::InvalidSimulation(
            "attenuation map must be finite and nonnegative".into(),
        ));
    }
    let mu = attenuation.values();
    let per_lor: Vec<f64> = bins
        .lors()
        .par_iter()
        .map(|&(a, b)| {
            let row = projector
                .compute_row_non_tof(a as usize, b as usize)
                .expect("enumerated pairs are valid");
            (-row.dot(mu)).exp()
        })
        .collect::<Vec<_>>();
    Ok(per_lor
        .iter()
        .flat_map(|&m| std::iter::repeat_n(m, bins.n_bins()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub target_counts: f64,
    pub contamination_fraction: f64,
    pub psf_fwhm: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(target_counts: f64, seed: u64) -> Self {
        Self {
            target_counts,
            contamination_fraction: DEFAULT_CONTAMINATION_FRACTION,
            psf_fwhm: DEFAULT_PSF_FWHM_MM,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_counts >= 1.0) || !self.target_counts.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "target counts must be at least 1, got {}",
                self.target_counts
            )));
        }
        if !(0.0..1.0).contains(&self.contamination_fraction) {
            return Err(Error::InvalidConfig(format!(
                "contamination fraction must lie in [0, 1), got {}",
                self.contamination_fraction
            )));
        }
        if !(self.psf_fwhm >= 0.0) || !self.psf_fwhm.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "PSF FWHM must be nonnegative, got {}",
                self.psf_fwhm
            )));
        }
        Ok(())
    }
}

/// Expected data for one phantom, before sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    /// Per-bin multipliers: global scale × attenuation, rounded to f32.
    pub multipliers: Vec<f64>,
    /// Expected true counts per enumerated bin.
    pub trues: Vec<f64>,
    /// Flat contamination mean per bin.
    pub contamination_mean: f64,
    /// Activity-to-counts scale folded into the multipliers.
    pub lambda_scale: f64,
}

impl Expectation {
    pub fn total_trues(&self) -> f64 {
        self.trues.iter().sum()
    }

    pub fn total_contamination(&self) -> f64 {
        self.contamination_mean * self.trues.len() as f64
    }

    pub fn total(&self) -> f64 {
        self.total_trues() + self.total_contamination()
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.trues[i] + self.contamination_mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub events: EventList,
    pub expectation: Expectation,
}

/// `λ_i = m_i·(A·blur(activity))_i + r` over every enumerated bin.
///
/// The global scale is chosen so that `Σλ` equals the target count and `r`
/// so that contamination makes up the configured fraction of `Σλ`.
pub fn expected_counts(
    phantom: &Phantom,
    cfg: &SimConfig,
    projector: &Projector,
    bins: &BinEnumeration,
) -> Result<Expectation> {
    cfg.validate()?;
    phantom.activity.check_grid(&projector.grid())?;
    projector
        .tof()
        .check_covers(phantom.support_diameter())
        .map_err(|e| Error::InvalidSimulation(e.to_string()))?;

    let blurred = psf_blur(&phantom.activity, cfg.psf_fwhm)?;
    let attenuation = attenuation_multipliers(&phantom.attenuation, projector, bins)?;
    let geometric = projector.forward_project_full(&blurred, bins, &vec![1.0; bins.len()])?;
    let attenuated: f64 = geometric.iter().zip(&attenuation).map(|(g, a)| g * a).sum();
    if !(attenuated > 0.0) {
        return Err(Error::InvalidSimulation(
            "phantom produces no expected counts".into(),
        ));
    }

    let f = cfg.contamination_fraction;
    let lambda_scale = (1.0 - f) * cfg.target_counts / attenuated;
    let multipliers: Vec<f64> = attenuation
        .iter()
        .map(|&a| f32_round(lambda_scale * a))
        .collect();
    let trues: Vec<f64> = geometric
        .iter()
        .zip(&multipliers)
        .map(|(g, m)| g * m)
        .collect();
    let total_trues: f64 = trues.iter().sum();
    let contamination_mean = f / (1.0 - f) * total_trues / bins.len() as f64;
    Ok(Expectation {
        multipliers,
        trues,
        contamination_mean,
        lambda_scale,
    })
}

/// Poisson draw per bin, one event per count, then a seeded shuffle.
pub fn sample_events(
    expectation: &Expectation,
    bins: &BinEnumeration,
    seed: u64,
) -> Result<EventList> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLING_STREAM);
    let mut events = Vec::with_capacity(expectation.total().ceil() as usize + 16);
    for i in 0..bins.len() {
        let lambda = expectation.lambda(i);
        if !(lambda > 0.0) {
            continue;
        }
        let k = Poisson::new(lambda)
            .map_err(|e| Error::InvalidSimulation(format!("bin {i}: {e}")))?
            .sample(&mut rng) as u64;
        if k > 0 {
            let (a, b, bin) = bins.bin(i);
            let ev = Event::new(a, b, bin, expectation.multipliers[i]);
            events.extend(std::iter::repeat_n(ev, k as usize));
        }
    }
    events.shuffle(&mut rng);
    Ok(EventList::new(events))
}

pub fn sample_listmode(
    phantom: &Phantom,
    cfg: &SimConfig,
    projector: &Projector,
    bins: &BinEnumeration,
) -> Result<Simulation> {
    let expectation = expected_counts(phantom, cfg, projector, bins)?;
    let events = sample_events(&expectation, bins, cfg.seed)?;
    Ok(Simulation {
        events,
        expectation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ScannerGeometry, TofSpec};

    fn grid(n: usize) -> Grid {
        Grid::new(n, n, 2.086 * 128.0 / n as f64).unwrap()
    }

    #[test]
    fn hot_lesions_are_exact() {
        let ph = make_phantom(PhantomKind::EllipseBrain, grid(128), 7).unwrap();
        let hot: Vec<_> = ph.masks(RoiKind::HotLesion).collect();
        assert!(!hot.is_empty());
        for roi in hot {
            for (j, &m) in roi.mask.iter().enumerate() {
                if m {
                    assert_eq!(ph.activity.values()[j], 144.0);
                }
            }
        }
    }

    #[test]
    fn phantom_is_deterministic() {
        let a = make_phantom(PhantomKind::EllipseBrain, grid(64), 3).unwrap();
        let b = make_phantom(PhantomKind::EllipseBrain, grid(64), 3).unwrap();
        assert_eq!(a, b);
        let c = make_phantom(PhantomKind::EllipseBrain, grid(64), 4).unwrap();
        assert_ne!(a.activity, c.activity);
    }

    #[test]
    fn grey_matter_mean_over_seeds() {
        let g = grid(16);
        let mean: f64 = (0..1000)
            .map(|s| {
                make_phantom_with(PhantomKind::Disks, g, s, 0, 0)
                    .unwrap()
                    .grey_matter_value
            })
            .sum::<f64>()
            / 1000.0;
        assert!((mean - 96.0).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn background_rois_sit_in_clean_white_matter() {
        let ph = make_phantom(PhantomKind::EllipseBrain, grid(128), 11).unwrap();
        let bgs: Vec<_> = ph.masks(RoiKind::Background).collect();
        assert_eq!(bgs.len(), 15);
        for roi in bgs {
            assert!(roi.count() >= 9);
            for (j, &m) in roi.mask.iter().enumerate() {
                if m {
                    assert_eq!(ph.activity.values()[j], ph.white_matter_value);
                }
            }
        }
    }

    #[test]
    fn blur_identity_and_impulse() {
        let g = grid(32);
        let mut img = Image2D::zeros(g);
        img.set(10, 12, 1.0);
        assert_eq!(psf_blur(&img, 0.0).unwrap(), img);
        let b = psf_blur(&img, 20.0).unwrap();
        let peak = b.values().iter().cloned().fold(0.0, f64::max);
        assert_eq!(b.get(10, 12), peak);
        assert!((b.get(9, 12) - b.get(11, 12)).abs() < 1e-15);
        assert!((b.sum() - 1.0).abs() < 1e-12);
        assert!(psf_blur(&img, -1.0).is_err());
    }

    #[test]
    fn zero_attenuation_gives_unit_multipliers() {
        let geom = ScannerGeometry::new(8, 8, 100.0, 4.0).unwrap();
        let g = Grid::new(16, 16, 4.0).unwrap();
        let tof = TofSpec::new(200.0, 5, 20.0).unwrap();
        let proj = Projector::new(geom.clone(), g, tof).unwrap();
        let bins = BinEnumeration::new(&geom, &tof).unwrap();
        let m = attenuation_multipliers(&Image2D::zeros(g), &proj, &bins).unwrap();
        assert!(m.iter().all(|&v| v == 1.0));
        let m = attenuation_multipliers(&Image2D::filled(g, 0.01), &proj, &bins).unwrap();
        assert!(m.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn contamination_fraction_is_exact() {
        let geom = ScannerGeometry::new(8, 8, 120.0, 4.0).unwrap();
        let g = Grid::new(24, 24, 4.0).unwrap();
        let tof = TofSpec::new(300.0, 5, 24.0).unwrap();
        let proj = Projector::new(geom.clone(), g, tof).unwrap();
        let bins = BinEnumeration::new(&geom, &tof).unwrap();
        let ph = make_phantom(PhantomKind::Disks, g, 1).unwrap();
        let e = expected_counts(&ph, &SimConfig::new(1e4, 1), &proj, &bins).unwrap();
        let ratio = e.total_contamination() / e.total();
        assert!((ratio - 0.2).abs() < 1e-12, "{ratio}");
        assert!((e.total() / 1e4 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_phantom_is_rejected() {
        let geom = ScannerGeometry::new(8, 8, 120.0, 4.0).unwrap();
        let g = Grid::new(8, 8, 4.0).unwrap();
        let tof = TofSpec::new(300.0, 5, 24.0).unwrap();
        let proj = Projector::new(geom.clone(), g, tof).unwrap();
        let bins = BinEnumeration::new(&geom, &tof).unwrap();
        let mut ph = make_phantom(PhantomKind::Disks, g, 1).unwrap();
        ph.activity = Image2D::zeros(g);
        assert!(matches!(
            expected_counts(&ph, &SimConfig::new(10.0, 1), &proj, &bins),
            Err(Error::InvalidSimulation(_))
        ));
    }
}

//! On-the-fly TOF list-mode projector.
//!
//! Each event's system-matrix row is recomputed whenever it is needed. The
//! LOR is traversed along its dominant axis one pixel column (or row) at a
//! time; at each step the ray's transverse position is linearly interpolated
//! between the two straddled pixels (Joseph's method) and the contribution
//! is scaled by the step length along the ray and by the TOF weight of the
//! event's bin.
//!
//! The TOF weight for a step is the average of the bin-integrated Gaussian
//! over the step, evaluated with 3-point Gauss-Legendre quadrature. A single
//! sample at the step center is off by several percent in the Gaussian tails
//! when the step is a sizeable fraction of σ.
//!
//! Event multipliers (attenuation × normalization) are kept outside the rows
//! and applied by the projection drivers, so the forward/back pair stays an
//! exact adjoint pair.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point2, ScannerGeometry, TofSpec};
use crate::image::{Grid, Image2D};
use crate::tof::{TofKernel, WEIGHT_CUTOFF};

/// Events per work item in forward projection.
const FORWARD_CHUNK: usize = 1024;
/// Lower bound on events per partial image in back-projection.
const BACK_CHUNK_MIN: usize = 2048;
/// Upper bound on the number of partial images in back-projection.
const BACK_MAX_PARTIALS: usize = 256;
/// Pixels per work item when merging partial images.
const MERGE_BLOCK: usize = 4096;

/// TOF windows extend this many σ beyond the bin edges.
const TOF_WINDOW_SIGMAS: f64 = 6.0;

/// Rays whose |cos| and |sin| differ by less than this are treated as diagonal.
const DIAGONAL_TOLERANCE: f64 = 1e-9;

const GL3_NODE: f64 = 0.387_298_334_620_741_7; // √(3/5) / 2
const GL3_OUTER: f64 = 5.0 / 18.0;
const GL3_INNER: f64 = 8.0 / 18.0;

/// One detected coincidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub det_a: u16,
    pub det_b: u16,
    pub tof_bin: u16,
    /// Attenuation × normalization for this event's bin.
    pub multiplier: f64,
}

impl Event {
    pub fn new(det_a: u16, det_b: u16, tof_bin: u16, multiplier: f64) -> Self {
        Self {
            det_a,
            det_b,
            tof_bin,
            multiplier,
        }
    }
}

/// Detected events in acquisition order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventList {
    events: Vec<Event>,
}

impl EventList {
    pub fn new(events: Vec<Event>) -> Self {
        Self { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Round-robin partition: event `t` goes to subset `t mod n`.
    pub fn round_robin_subsets(&self, n: usize) -> Vec<EventList> {
        let n = n.max(1);
        let mut subsets = vec![Vec::with_capacity(self.len() / n + 1); n];
        for (t, ev) in self.events.iter().enumerate() {
            subsets[t % n].push(*ev);
        }
        subsets.into_iter().map(EventList::new).collect()
    }
}

impl FromIterator<Event> for EventList {
    fn from_iter<I: IntoIterator<Item = Event>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Nonzero entries of one system-matrix row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub weights: Vec<f64>,
}

impl SparseRow {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            indices: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn clear(&mut self) {
        self.indices.clear();
        self.weights.clear();
    }

    #[inline]
    fn push(&mut self, j: usize, w: f64) {
        self.indices.push(j as u32);
        self.weights.push(w);
    }

    #[inline]
    pub fn dot(&self, values: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.weights)
            .map(|(&j, &w)| w * values[j as usize])
            .sum()
    }

    #[inline]
    pub fn scatter_add(&self, scale: f64, target: &mut [f64]) {
        for (&j, &w) in self.indices.iter().zip(&self.weights) {
            target[j as usize] += scale * w;
        }
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

fn back_chunk(n_events: usize) -> usize {
    BACK_CHUNK_MIN.max(n_events.div_ceil(BACK_MAX_PARTIALS))
}

/// Number of partial images a back projection of `n_events` accumulates.
pub fn back_partials(n_events: usize) -> usize {
    n_events.div_ceil(back_chunk(n_events))
}

/// Every TOF bin of every LOR in the acceptance fan.
///
/// Bin `i` is TOF bin `i mod n_bins` of LOR `i / n_bins`; LORs are the crystal
/// pairs `(a, b)`, `a < b`, in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinEnumeration {
    pairs: Vec<(u16, u16)>,
    n_bins: usize,
}

impl BinEnumeration {
    /// Crystal pairs subtending at least 90° at the ring center.
    pub fn new(geom: &ScannerGeometry, tof: &TofSpec) -> Result<Self> {
        Self::with_min_angle(geom, tof, std::f64::consts::FRAC_PI_2)
    }

    pub fn with_min_angle(geom: &ScannerGeometry, tof: &TofSpec, min_angle: f64) -> Result<Self> {
        let k = geom.n_crystals();
        let min_sep = (min_angle / (2.0 * std::f64::consts::PI) * k as f64 - 1e-9)
            .ceil()
            .max(1.0) as usize;
        let mut pairs = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                if geom.index_separation(a, b) >= min_sep {
                    pairs.push((a as u16, b as u16));
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::InvalidConfig(
                "acceptance fan contains no crystal pairs".into(),
            ));
        }
        Ok(Self {
            pairs,
            n_bins: tof.n_bins(),
        })
    }

    pub fn n_lors(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Total number of TOF bins `I`.
    pub fn len(&self) -> usize {
        self.pairs.len() * self.n_bins
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lors(&self) -> &[(u16, u16)] {
        &self.pairs
    }

    pub fn bin(&self, i: usize) -> (u16, u16, u16) {
        let (a, b) = self.pairs[i / self.n_bins];
        (a, b, (i % self.n_bins) as u16)
    }

    /// One event per enumerated bin, carrying that bin's multiplier.
    pub fn event_list(&self, multipliers: &[f64]) -> Result<EventList> {
        if multipliers.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} multipliers for {} enumerated bins",
                multipliers.len(),
                self.len()
            )));
        }
        Ok((0..self.len())
            .map(|i| {
                let (a, b, bin) = self.bin(i);
                Event::new(a, b, bin, multipliers[i])
            })
            .collect())
    }
}

/// Scanner, image grid and TOF configuration shared by all projections.
#[derive(Debug, Clone)]
pub struct Projector {
    geom: ScannerGeometry,
    grid: Grid,
    tof: TofSpec,
    kernel: TofKernel,
}

impl Projector {
    pub fn new(geom: ScannerGeometry, grid: Grid, tof: TofSpec) -> Result<Self> {
        if geom.ring_radius() <= grid.half_diagonal() {
            return Err(Error::InvalidConfig(format!(
                "ring radius {} mm does not enclose the {}x{} grid (half diagonal {:.2} mm)",
                geom.ring_radius(),
                grid.width,
                grid.height,
                grid.half_diagonal()
            )));
        }
        let kernel = TofKernel::new(tof.bin_width(), tof.sigma_mm());
        Ok(Self {
            geom,
            grid,
            tof,
            kernel,
        })
    }

    pub fn geometry(&self) -> &ScannerGeometry {
        &self.geom
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn tof(&self) -> &TofSpec {
        &self.tof
    }

    /// Upper bound on the number of entries in a row.
    pub fn max_row_len(&self) -> usize {
        2 * self.grid.width.max(self.grid.height)
    }

    pub fn check_event(&self, ev: &Event) -> Result<()> {
        let k = self.geom.n_crystals();
        for det in [ev.det_a, ev.det_b] {
            if det as usize >= k {
                return Err(Error::Index {
                    what: "crystal",
                    index: det as usize,
                    limit: k,
                });
            }
        }
        if ev.det_a == ev.det_b {
            return Err(Error::DegenerateLor(ev.det_a as usize));
        }
        if ev.tof_bin as usize >= self.tof.n_bins() {
            return Err(Error::Index {
                what: "TOF bin",
                index: ev.tof_bin as usize,
                limit: self.tof.n_bins(),
            });
        }
        if !(ev.multiplier >= 0.0 && ev.multiplier.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "event multiplier must be finite and nonnegative, got {}",
                ev.multiplier
            )));
        }
        Ok(())
    }

    pub fn check_events(&self, events: &EventList) -> Result<()> {
        events.iter().try_for_each(|ev| self.check_event(ev))
    }

    /// System-matrix row of an event, without its multiplier.
    pub fn compute_row(&self, ev: &Event) -> Result<SparseRow> {
        self.check_event(ev)?;
        let mut row = SparseRow::with_capacity(self.max_row_len());
        self.fill_row(ev.det_a, ev.det_b, ev.tof_bin, &mut row);
        Ok(row)
    }

    /// Geometric row without TOF weighting: plain Joseph line integral.
    pub fn compute_row_non_tof(&self, det_a: usize, det_b: usize) -> Result<SparseRow> {
        if det_a == det_b {
            return Err(Error::DegenerateLor(det_a));
        }
        let a = self.geom.crystal_position(det_a)?;
        let b = self.geom.crystal_position(det_b)?;
        let mut row = SparseRow::with_capacity(self.max_row_len());
        let (a, b) = if det_a < det_b { (a, b) } else { (b, a) };
        self.trace(a, b, None, &mut row);
        Ok(row)
    }

    pub(crate) fn fill_row(&self, det_a: u16, det_b: u16, tof_bin: u16, row: &mut SparseRow) {
        row.clear();
        // Canonical orientation: swapping the detectors mirrors the bin index,
        // so (a, b, k) and (b, a, n-1-k) produce bit-identical rows.
        let (lo, hi, bin) = if det_a < det_b {
            (det_a, det_b, tof_bin as usize)
        } else {
            (det_b, det_a, self.tof.n_bins() - 1 - tof_bin as usize)
        };
        let positions = self.geom.positions();
        let a = positions[lo as usize];
        let b = positions[hi as usize];
        self.trace(a, b, Some(self.tof.bin_offset(bin)), row);
    }

    /// Joseph traversal from `a` to `b`. With `tof_offset`, steps are weighted by
    /// the TOF kernel of the bin whose center lies `tof_offset` from the midpoint.
    ///
    /// Rays at 45° have no dominant axis; both traversals are averaged so the
    /// row respects the symmetries of the square grid.
    fn trace(&self, a: Point2, b: Point2, tof_offset: Option<f64>, row: &mut SparseRow) {
        let delta = b - a;
        let length = delta.norm();
        let dir = delta * (1.0 / length);
        let tof_center = tof_offset.map(|offset| 0.5 * length + offset);
        if (dir.x.abs() - dir.y.abs()).abs() > DIAGONAL_TOLERANCE {
            self.trace_axis(a, dir, dir.x.abs() > dir.y.abs(), tof_center, 1.0, row);
            return;
        }
        self.trace_axis(a, dir, true, tof_center, 0.5, row);
        self.trace_axis(a, dir, false, tof_center, 0.5, row);
        let mut merged: Vec<(u32, f64)> = row
            .indices
            .iter()
            .copied()
            .zip(row.weights.iter().copied())
            .collect();
        merged.sort_by_key(|&(j, _)| j);
        row.clear();
        for (j, w) in merged {
            match row.indices.last() {
                Some(&last) if last == j => *row.weights.last_mut().expect("paired") += w,
                _ => row.push(j as usize, w),
            }
        }
    }

    fn trace_axis(
        &self,
        a: Point2,
        dir: Point2,
        x_dominant: bool,
        tof_center: Option<f64>,
        scale: f64,
        row: &mut SparseRow,
    ) {
        let h = self.grid.spacing;
        let (u_dom, u_tr, a_dom, a_tr, n_dom, n_tr) = if x_dominant {
            (dir.x, dir.y, a.x, a.y, self.grid.width, self.grid.height)
        } else {
            (dir.y, dir.x, a.y, a.x, self.grid.height, self.grid.width)
        };
        let c_dom = (n_dom as f64 - 1.0) / 2.0;
        let c_tr = (n_tr as f64 - 1.0) / 2.0;
        let step = h / u_dom.abs();

        let (mut k_lo, mut k_hi) = (0i64, n_dom as i64 - 1);
        if let Some(t_c) = tof_center {
            let reach = 0.5 * self.tof.bin_width() + TOF_WINDOW_SIGMAS * self.tof.sigma_mm() + step;
            let x0 = a_dom + (t_c - reach) * u_dom;
            let x1 = a_dom + (t_c + reach) * u_dom;
            let (x_min, x_max) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
            k_lo = k_lo.max((x_min / h + c_dom).ceil() as i64);
            k_hi = k_hi.min((x_max / h + c_dom).floor() as i64);
        }
        if k_lo > k_hi {
            return;
        }

        let inv_u = 1.0 / u_dom;
        let gl_offset = GL3_NODE * step;
        for k in k_lo..=k_hi {
            let x = (k as f64 - c_dom) * h;
            let t = (x - a_dom) * inv_u;
            let f = (a_tr + t * u_tr) / h + c_tr;
            let i0 = f.floor();
            if i0 < -1.0 || i0 > n_tr as f64 - 1.0 {
                continue;
            }
            let frac = f - i0;
            let i0 = i0 as i64;

            let eps = match tof_center {
                None => 1.0,
                Some(t_c) => {
                    let d = t - t_c;
                    let e = GL3_INNER * self.kernel.weight(d)
                        + GL3_OUTER
                            * (self.kernel.weight(d - gl_offset)
                                + self.kernel.weight(d + gl_offset));
                    if e <= WEIGHT_CUTOFF {
                        continue;
                    }
                    e
                }
            };
            let base = scale * eps * step;
            let w0 = base * (1.0 - frac);
            let w1 = base * frac;
            let k = k as usize;
            if i0 >= 0 && w0 > 0.0 {
                row.push(self.flat_index(x_dominant, k, i0 as usize), w0);
            }
            if i0 + 1 < n_tr as i64 && w1 > 0.0 {
                row.push(self.flat_index(x_dominant, k, (i0 + 1) as usize), w1);
            }
        }
    }

    #[inline]
    fn flat_index(&self, x_dominant: bool, k_dom: usize, i_tr: usize) -> usize {
        if x_dominant {
            self.grid.index(k_dom, i_tr)
        } else {
            self.grid.index(i_tr, k_dom)
        }
    }

    /// `out[t] = multiplier_t · ⟨row_t, img⟩`.
    pub fn forward_project(&self, img: &Image2D, events: &EventList) -> Result<Vec<f64>> {
        img.check_grid(&self.grid)?;
        self.check_events(events)?;
        Ok(self.forward_unchecked(img.values(), events.events()))
    }

    pub(crate) fn forward_unchecked(&self, img: &[f64], events: &[Event]) -> Vec<f64> {
        let mut out = vec![0.0; events.len()];
        let cap = self.max_row_len();
        out.par_chunks_mut(FORWARD_CHUNK)
            .zip(events.par_chunks(FORWARD_CHUNK))
            .for_each_init(
                || SparseRow::with_capacity(cap),
                |row, (out, evs)| {
                    for (o, ev) in out.iter_mut().zip(evs) {
                        self.fill_row(ev.det_a, ev.det_b, ev.tof_bin, row);
                        *o = ev.multiplier * row.dot(img);
                    }
                },
            );
        out
    }

    /// `img_j = Σ_t multiplier_t · a_tj · vals[t]`.
    ///
    /// Events are split into chunks that depend only on the event count; each
    /// chunk accumulates into its own image and the partial images are summed
    /// in chunk order, so the result does not depend on the thread count.
    pub fn back_project(&self, vals: &[f64], events: &EventList) -> Result<Image2D> {
        if vals.len() != events.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} events",
                vals.len(),
                events.len()
            )));
        }
        self.check_events(events)?;
        let values = self.back_unchecked(vals, events.events());
        Image2D::from_values(self.grid, values)
    }

    pub(crate) fn back_unchecked(&self, vals: &[f64], events: &[Event]) -> Vec<f64> {
        let m = self.grid.len();
        if events.is_empty() {
            return vec![0.0; m];
        }
        let chunk = back_chunk(events.len());
        let cap = self.max_row_len();
        let partials: Vec<Vec<f64>> = events
            .par_chunks(chunk)
            .zip(vals.par_chunks(chunk))
            .map_init(
                || SparseRow::with_capacity(cap),
                |row, (evs, vals)| {
                    let mut acc = vec![0.0; m];
                    for (ev, &v) in evs.iter().zip(vals) {
                        let scale = ev.multiplier * v;
                        if scale == 0.0 {
                            continue;
                        }
                        self.fill_row(ev.det_a, ev.det_b, ev.tof_bin, row);
                        row.scatter_add(scale, &mut acc);
                    }
                    acc
                },
            )
            .collect();
        if partials.len() == 1 {
            return partials.into_iter().next().expect("one partial");
        }
        let mut out = vec![0.0; m];
        out.par_chunks_mut(MERGE_BLOCK)
            .enumerate()
            .for_each(|(blk, out)| {
                let start = blk * MERGE_BLOCK;
                let end = start + out.len();
                for part in &partials {
                    for (o, p) in out.iter_mut().zip(&part[start..end]) {
                        *o += p;
                    }
                }
            });
        out
    }

    /// `s_j = Σ_i m_i·a_ij` over every enumerated bin.
    pub fn sensitivity_image(&self, bins: &BinEnumeration, multipliers: &[f64]) -> Result<Image2D> {
        if bins.is_empty() {
            return Err(Error::InvalidConfig("empty bin enumeration".into()));
        }
        let all = bins.event_list(multipliers)?;
        self.check_events(&all)?;
        let ones = vec![1.0; all.len()];
        Image2D::from_values(self.grid, self.back_unchecked(&ones, all.events()))
    }

    /// Expected counts (without contamination) in every enumerated bin.
    pub fn forward_project_full(
        &self,
        img: &Image2D,
        bins: &BinEnumeration,
        multipliers: &[f64],
    ) -> Result<Vec<f64>> {
        if bins.is_empty() {
            return Err(Error::InvalidConfig("empty bin enumeration".into()));
        }
        let all = bins.event_list(multipliers)?;
        self.forward_project(img, &all)
    }

    /// `Σ_j a_tj` for every event (multiplier included).
    pub fn row_sums(&self, events: &EventList) -> Result<Vec<f64>> {
        let ones = Image2D::filled(self.grid, 1.0);
        self.forward_project(&ones, events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_projector(n: usize) -> Projector {
        let geom = ScannerGeometry::new(16, 4, 60.0, 2.0).unwrap();
        let grid = Grid::new(n, n, 2.0).unwrap();
        Projector::new(geom, grid, TofSpec::new(200.0, 9, 10.0).unwrap()).unwrap()
    }

    #[test]
    fn missing_lor_gives_empty_row() {
        let geom = ScannerGeometry::new(16, 4, 60.0, 2.0).unwrap();
        let grid = Grid::new(4, 4, 2.0).unwrap();
        let p = Projector::new(geom, grid, TofSpec::new(200.0, 9, 10.0).unwrap()).unwrap();
        // Adjacent crystals: a short chord near the ring, far from the grid.
        let row = p.compute_row(&Event::new(0, 1, 4, 1.0)).unwrap();
        assert!(row.is_empty());
    }

    #[test]
    fn swapped_detectors_mirror_the_bin() {
        let p = small_projector(16);
        let r1 = p.compute_row(&Event::new(3, 40, 2, 1.0)).unwrap();
        let r2 = p.compute_row(&Event::new(40, 3, 6, 1.0)).unwrap();
        assert_eq!(r1, r2);
        let r3 = p.compute_row(&Event::new(40, 3, 2, 1.0)).unwrap();
        let mut s1: Vec<_> = r1.indices.clone();
        let mut s3: Vec<_> = r3.indices.clone();
        s1.sort();
        s3.sort();
        // Same geometric support; only the TOF weighting moves.
        let non_tof_a = p.compute_row_non_tof(3, 40).unwrap();
        let non_tof_b = p.compute_row_non_tof(40, 3).unwrap();
        assert_eq!(non_tof_a, non_tof_b);
        assert!(!s1.is_empty() && !s3.is_empty());
    }

    #[test]
    fn rows_respect_support_bound_and_are_positive() {
        let p = small_projector(16);
        let k = p.geometry().n_crystals() as u16;
        for a in 0..k {
            for b in (a + 1)..k {
                for bin in [0u16, 4, 8] {
                    let row = p.compute_row(&Event::new(a, b, bin, 1.0)).unwrap();
                    assert!(row.len() <= p.max_row_len());
                    assert!(row.weights.iter().all(|&w| w > 0.0));
                    let mut idx = row.indices.clone();
                    idx.sort();
                    idx.dedup();
                    assert_eq!(idx.len(), row.len());
                    assert!(idx.iter().all(|&j| (j as usize) < 256));
                }
            }
        }
    }

    #[test]
    fn invalid_events_are_rejected() {
        let p = small_projector(8);
        assert!(matches!(
            p.compute_row(&Event::new(2, 2, 0, 1.0)),
            Err(Error::DegenerateLor(2))
        ));
        assert!(p.compute_row(&Event::new(2, 64, 0, 1.0)).is_err());
        assert!(p.compute_row(&Event::new(2, 30, 9, 1.0)).is_err());
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let p = small_projector(8);
        let img = Image2D::zeros(Grid::new(4, 8, 2.0).unwrap());
        let ev = EventList::new(vec![Event::new(0, 30, 4, 1.0)]);
        assert!(matches!(
            p.forward_project(&img, &ev),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            p.back_project(&[1.0, 2.0], &ev),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn round_robin_subsets_partition_events() {
        let events: EventList = (0..10).map(|t| Event::new(0, 30, 0, t as f64)).collect();
        let subsets = events.round_robin_subsets(3);
        assert_eq!(subsets.len(), 3);
        assert_eq!(subsets[0].len(), 4);
        assert_eq!(subsets[1].events()[1].multiplier, 4.0);
        assert_eq!(subsets.iter().map(EventList::len).sum::<usize>(), 10);
    }

    #[test]
    fn enumeration_counts_fan_pairs() {
        let geom = ScannerGeometry::brain_scanner();
        let tof = TofSpec::standard(200.0, 17).unwrap();
        let bins = BinEnumeration::new(&geom, &tof).unwrap();
        // separations 112..=224 from each crystal: 225 partners each.
        assert_eq!(bins.n_lors(), 448 * 225 / 2);
        assert_eq!(bins.len(), bins.n_lors() * 17);
        let (a, b, k) = bins.bin(17 * 3 + 5);
        assert_eq!(k, 5);
        assert!(a < b);
    }
}

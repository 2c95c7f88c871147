//! Test-side reference implementations shared by the integration suites.
//!
//! Nothing here calls into the projector's traversal or the reconstructors;
//! rows come either from an independent fine-step quadrature or, for the
//! algorithm oracles, from an explicitly materialized dense matrix.

#![allow(dead_code)]

use listrecon::recon::spdhg_subset_order;
use listrecon::{tof_weight, EventList, Grid, Projector, ScannerGeometry, TofKernelInput, TofSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense row of `(det_a, det_b, bin)` by brute-force quadrature: in each
/// dominant-axis pixel column the TOF kernel is integrated along the ray with
/// 1000 midpoint samples, and the result is split between pixels by the tent
/// basis evaluated where the ray crosses the column center. Diagonal rays
/// average the two axis choices.
pub fn quadrature_row(
    geom: &ScannerGeometry,
    grid: &Grid,
    tof: &TofSpec,
    det_a: usize,
    det_b: usize,
    bin: usize,
) -> Vec<f64> {
    const SAMPLES: usize = 1000;
    let a = geom.crystal_position(det_a).unwrap();
    let b = geom.crystal_position(det_b).unwrap();
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let length = dx.hypot(dy);
    let (ux, uy) = (dx / length, dy / length);
    let t_center =
        0.5 * length + (bin as f64 - (tof.n_bins() as f64 - 1.0) / 2.0) * tof.bin_width();
    let diagonal = (ux.abs() - uy.abs()).abs() <= 1e-9;
    let mut row = vec![0.0; grid.len()];
    for x_major in [true, false] {
        if !diagonal && x_major != (ux.abs() > uy.abs()) {
            continue;
        }
        let scale = if diagonal { 0.5 } else { 1.0 };
        accumulate_axis(
            &mut row,
            grid,
            tof,
            (a.x, a.y),
            (ux, uy),
            t_center,
            x_major,
            scale,
            SAMPLES,
        );
    }
    row
}

#[allow(clippy::too_many_arguments)]
fn accumulate_axis(
    row: &mut [f64],
    grid: &Grid,
    tof: &TofSpec,
    a: (f64, f64),
    u: (f64, f64),
    t_center: f64,
    x_major: bool,
    scale: f64,
    samples: usize,
) {
    let h = grid.spacing;
    let (n_dom, n_tr) = if x_major {
        (grid.width, grid.height)
    } else {
        (grid.height, grid.width)
    };
    let (u_dom, u_tr, a_dom, a_tr) = if x_major {
        (u.0, u.1, a.0, a.1)
    } else {
        (u.1, u.0, a.1, a.0)
    };
    for k in 0..n_dom {
        let x_c = (k as f64 - (n_dom as f64 - 1.0) / 2.0) * h;
        let t_lo = ((x_c - 0.5 * h) - a_dom) / u_dom;
        let t_hi = ((x_c + 0.5 * h) - a_dom) / u_dom;
        let (t0, t1) = if t_lo < t_hi {
            (t_lo, t_hi)
        } else {
            (t_hi, t_lo)
        };
        let dt = (t1 - t0) / samples as f64;
        let mut integral = 0.0;
        for i in 0..samples {
            let t = t0 + (i as f64 + 0.5) * dt;
            integral += tof_weight(TofKernelInput {
                d_tof: t - t_center,
                omega_tof: tof.bin_width(),
                sigma_tof: tof.sigma_mm(),
            })
            .unwrap()
                * dt;
        }
        let t_c = (x_c - a_dom) / u_dom;
        let f = (a_tr + t_c * u_tr) / h + (n_tr as f64 - 1.0) / 2.0;
        for i in 0..n_tr {
            let tent = 1.0 - (f - i as f64).abs();
            if tent > 0.0 {
                let j = if x_major {
                    i * grid.width + k
                } else {
                    k * grid.width + i
                };
                row[j] += scale * tent * integral;
            }
        }
    }
}

/// System matrix with multipliers folded in, one dense row per event.
pub struct DenseMatrix {
    pub rows: Vec<Vec<f64>>,
    pub m: usize,
}

impl DenseMatrix {
    pub fn from_events(projector: &Projector, events: &EventList) -> Self {
        let m = projector.grid().len();
        let rows = events
            .iter()
            .map(|ev| {
                let mut row = vec![0.0; m];
                let sparse = projector.compute_row(ev).unwrap();
                for (&j, &w) in sparse.indices.iter().zip(&sparse.weights) {
                    row[j as usize] += ev.multiplier * w;
                }
                row
            })
            .collect();
        Self { rows, m }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn back(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (r, &v) in self.rows.iter().zip(y) {
            for (o, a) in out.iter_mut().zip(r) {
                *o += a * v;
            }
        }
        out
    }

    fn subset(&self, k: usize, n: usize) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows.iter().skip(k).step_by(n).cloned().collect(),
            m: self.m,
        }
    }
}

/// Everything a dense reference reconstruction needs.
pub struct DenseProblem {
    pub a: DenseMatrix,
    pub sens: Vec<f64>,
    pub s: f64,
    pub n_bins_total: usize,
    pub width: usize,
    pub height: usize,
    pub fov: Vec<bool>,
}

impl DenseProblem {
    pub fn mask(&self) -> Vec<bool> {
        self.fov
            .iter()
            .zip(&self.sens)
            .map(|(&f, &s)| f && s > 0.0)
            .collect()
    }

    pub fn init(&self) -> Vec<f64> {
        let mask = self.mask();
        let total: f64 = self
            .sens
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(s, _)| s)
            .sum();
        let v = self.a.rows.len() as f64 / total;
        mask.iter().map(|&m| if m { v } else { 0.0 }).collect()
    }

    pub fn loglik(&self, x: &[f64]) -> f64 {
        let ax = self.a.forward(x);
        ax.iter().map(|v| (v + self.s).ln()).sum::<f64>()
            - self.sens.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            - self.s * self.n_bins_total as f64
    }
}

fn diffs(x: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for q in 0..h {
        for p in 0..w {
            let j = q * w + p;
            gx[j] = if p + 1 < w { x[j + 1] - x[j] } else { 0.0 };
            gy[j] = if q + 1 < h { x[j + w] - x[j] } else { 0.0 };
        }
    }
    (gx, gy)
}

fn diffs_t(gx: &[f64], gy: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for q in 0..h {
        for p in 0..w {
            let j = q * w + p;
            if p + 1 < w {
                out[j + 1] += gx[j];
                out[j] -= gx[j];
            }
            if q + 1 < h {
                out[j + w] += gy[j];
                out[j] -= gy[j];
            }
        }
    }
    out
}

pub fn dense_tv(x: &[f64], w: usize, h: usize) -> f64 {
    let (gx, gy) = diffs(x, w, h);
    gx.iter()
        .zip(&gy)
        .map(|(a, b)| (a * a + b * b).sqrt())
        .sum()
}

fn tv_grad(x: &[f64], w: usize, h: usize, delta: f64) -> Vec<f64> {
    let (mut gx, mut gy) = diffs(x, w, h);
    for j in 0..gx.len() {
        let n = (gx[j] * gx[j] + gy[j] * gy[j] + delta * delta).sqrt();
        gx[j] /= n;
        gy[j] /= n;
    }
    diffs_t(&gx, &gy, w, h)
}

/// OSEM (MLEM for one subset) with the optional TV proximal step of EM-TV.
pub fn dense_em(p: &DenseProblem, iterations: usize, n_subsets: usize, beta: f64) -> Vec<Vec<f64>> {
    let mask = p.mask();
    let mut x = p.init();
    let mut iterates = Vec::new();
    for _ in 0..iterations {
        for k in 0..n_subsets {
            let a = p.a.subset(k, n_subsets);
            if a.rows.is_empty() {
                continue;
            }
            let ax = a.forward(&x);
            let ratio: Vec<f64> = ax.iter().map(|v| 1.0 / (v + p.s).max(1e-12)).collect();
            let bp = a.back(&ratio);
            for j in 0..x.len() {
                if mask[j] {
                    x[j] *= bp[j] / (p.sens[j] / n_subsets as f64);
                }
            }
            if beta > 0.0 {
                let peak = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if peak > 0.0 {
                    let x_em = x.clone();
                    for _ in 0..10 {
                        let g = tv_grad(&x, p.width, p.height, 1e-6 * peak);
                        for j in 0..x.len() {
                            x[j] = if mask[j] {
                                (x_em[j] - 1e-3 * peak * beta * g[j]).max(0.0)
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
        iterates.push(x.clone());
    }
    iterates
}

/// Stochastic PDHG with preconditioned steps; `beta > 0` adds the TV block.
pub fn dense_spdhg(
    p: &DenseProblem,
    iterations: usize,
    n_subsets: usize,
    beta: f64,
    gamma: f64,
    rho: f64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let (w, h, m) = (p.width, p.height, p.a.m);
    let mask = p.mask();
    let n = n_subsets;
    let subsets: Vec<DenseMatrix> = (0..n).map(|k| p.a.subset(k, n)).collect();
    let ones_m = vec![1.0; m];
    let sigmas: Vec<Vec<f64>> = subsets
        .iter()
        .map(|a| {
            a.forward(&ones_m)
                .iter()
                .map(|&r| if r > 0.0 { gamma * rho / r } else { 0.0 })
                .collect()
        })
        .collect();
    let mut col_max = vec![0.0f64; m];
    for a in &subsets {
        let col = a.back(&vec![1.0; a.rows.len()]);
        for j in 0..m {
            col_max[j] = col_max[j].max(col[j]);
        }
    }
    let largest = col_max
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| rho / (gamma * n as f64 * c))
        .fold(0.0, f64::max);
    let tau: Vec<f64> = (0..m)
        .map(|j| {
            if !mask[j] {
                0.0
            } else if col_max[j] > 0.0 {
                rho / (gamma * n as f64 * col_max[j])
            } else {
                largest
            }
        })
        .collect();
    let sigma_tv = rho / (8.0 * largest);

    let mut x: Vec<f64> = p.init();
    let mut y: Vec<Vec<f64>> = subsets.iter().map(|a| vec![0.0; a.rows.len()]).collect();
    let bp1 = p.a.back(&vec![1.0; p.a.rows.len()]);
    let mut z: Vec<f64> = (0..m).map(|j| p.sens[j] - bp1[j]).collect();
    let mut z_bar = z.clone();
    let mut wx = vec![0.0; m];
    let mut wy = vec![0.0; m];
    let mut iterates = Vec::new();
    for order in spdhg_subset_order(seed, n, iterations) {
        for k in order {
            for j in 0..m {
                x[j] = (x[j] - tau[j] * z_bar[j]).max(0.0);
            }
            let a = &subsets[k];
            let ax = a.forward(&x);
            let mut dy = vec![0.0; ax.len()];
            for t in 0..ax.len() {
                let sig = sigmas[k][t];
                if sig == 0.0 {
                    continue;
                }
                let y_hat = y[k][t] + sig * (ax[t] + p.s);
                let y_new = 0.5 * (1.0 + y_hat - ((y_hat - 1.0).powi(2) + 4.0 * sig).sqrt());
                dy[t] = y_new - y[k][t];
                y[k][t] = y_new;
            }
            let delta = a.back(&dy);
            let mut delta_tv = vec![0.0; m];
            if beta > 0.0 {
                let (gx, gy) = diffs(&x, w, h);
                let mut dwx = vec![0.0; m];
                let mut dwy = vec![0.0; m];
                for j in 0..m {
                    let (u, v) = (wx[j] + sigma_tv * gx[j], wy[j] + sigma_tv * gy[j]);
                    let norm = (u * u + v * v).sqrt();
                    let scale = if norm > beta { beta / norm } else { 1.0 };
                    dwx[j] = u * scale - wx[j];
                    dwy[j] = v * scale - wy[j];
                    wx[j] = u * scale;
                    wy[j] = v * scale;
                }
                delta_tv = diffs_t(&dwx, &dwy, w, h);
            }
            for j in 0..m {
                z[j] += delta[j] + delta_tv[j];
                z_bar[j] = z[j] + n as f64 * delta[j] + delta_tv[j];
            }
        }
        iterates.push(x.clone());
    }
    iterates
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Random valid event list whose rows are biased towards the grid center.
pub fn random_events(projector: &Projector, n: usize, rng: &mut impl Rng) -> EventList {
    let k = projector.geometry().n_crystals();
    let nb = projector.tof().n_bins();
    let mut events = Vec::with_capacity(n);
    while events.len() < n {
        let a = rng.random_range(0..k);
        let sep = rng.random_range(k / 4..=k / 2);
        let b = (a + sep) % k;
        let centre = (nb - 1) as i64 / 2;
        let spread = (nb as i64 / 4).max(1);
        let bin = (centre + rng.random_range(-spread..=spread)).clamp(0, nb as i64 - 1) as u16;
        let ev = listrecon::Event::new(a as u16, b as u16, bin, rng.random_range(0.2..1.0));
        if !projector.compute_row(&ev).unwrap().is_empty() {
            events.push(ev);
        }
    }
    EventList::new(events)
}

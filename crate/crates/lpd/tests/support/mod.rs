#![allow(dead_code)]

use listrecon::{Event, EventList, Grid, Image2D, Projector, ScannerGeometry, TofSpec};
use listrecon_lpd::{lmpd_backward, lmpd_forward, mse_loss, Mode, NetOperator, NetworkParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn projector(n: usize) -> Projector {
    let geom = ScannerGeometry::brain_scanner();
    let tof = TofSpec::standard(300.0, 11).unwrap();
    Projector::new(geom, Grid::new(n, n, 200.0 / n as f64).unwrap(), tof).unwrap()
}

/// Roughly diametric events near the central TOF bin whose rows are nonempty.
pub fn random_events(p: &Projector, n: usize, r: &mut ChaCha8Rng) -> EventList {
    let k = p.geometry().n_crystals() as i64;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = r.random_range(0..k);
        let b = (a + k / 2 + r.random_range(-40..=40)).rem_euclid(k);
        let bin = 5 + r.random_range(-2i64..=2);
        let ev = Event::new(a as u16, b as u16, bin as u16, r.random_range(0.5..1.5));
        if p.compute_row(&ev)
            .map(|row| !row.is_empty())
            .unwrap_or(false)
        {
            out.push(ev);
        }
    }
    out.into_iter().collect()
}

pub fn random_image(grid: Grid, r: &mut ChaCha8Rng) -> Image2D {
    Image2D::from_values(grid, (0..grid.len()).map(|_| r.random::<f64>()).collect()).unwrap()
}

pub fn loss(params: &NetworkParams, op: &NetOperator, truth: &Image2D, mode: Mode) -> f64 {
    let out = lmpd_forward(params, op, mode, false).unwrap();
    mse_loss(&out.output, truth).unwrap().0
}

pub fn gradient(params: &NetworkParams, op: &NetOperator, truth: &Image2D, mode: Mode) -> Vec<f64> {
    let fwd = lmpd_forward(params, op, mode, true).unwrap();
    let (_, dl) = mse_loss(&fwd.output, truth).unwrap();
    lmpd_backward(params, op, &fwd, &dl).unwrap()
}

/// Loss plus the PReLU sign pattern of the pass.
pub fn loss_and_pattern(
    params: &NetworkParams,
    op: &NetOperator,
    truth: &Image2D,
    mode: Mode,
) -> (f64, Vec<bool>) {
    let out = lmpd_forward(params, op, mode, true).unwrap();
    let pattern = out.trace.as_ref().unwrap().activation_pattern();
    (mse_loss(&out.output, truth).unwrap().0, pattern)
}

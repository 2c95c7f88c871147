use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use listrecon::projector::back_partials;
use listrecon::{Event, EventList, Image2D, Projector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::CliError;

pub const HEADER: &str = "operation,threads,n_events,width,height,seconds,peak_bytes_estimate";
pub const DEFAULT_EVENTS: usize = 100_000;
pub const DEFAULT_THREADS: [usize; 4] = [1, 2, 4, 8];

/// Uniformly drawn (LOR, TOF bin) events with unit multipliers.
fn random_events(config: &Config, n: usize, rng: &mut ChaCha8Rng) -> Result<EventList, CliError> {
    let bins = config.bins()?;
    Ok((0..n)
        .map(|_| {
            let (a, b, t) = bins.bin(rng.random_range(0..bins.len()));
            Event::new(a, b, t, 1.0)
        })
        .collect())
}

/// Minimum wall time over `repeats` runs.
fn time(repeats: usize, mut f: impl FnMut()) -> f64 {
    (0..repeats)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn estimate(projector: &Projector, n: usize, threads: usize, back: bool) -> usize {
    let image = projector.grid().len() * 8;
    let events = n * std::mem::size_of::<Event>();
    let rows = threads * projector.max_row_len() * 12;
    let work = if back {
        back_partials(n) * image + image
    } else {
        image
    };
    events + n * 8 + rows + work
}

pub fn run(config: &Config, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let section = config.bench.as_ref();
    let n = section.and_then(|b| b.n_events).unwrap_or(DEFAULT_EVENTS);
    let repeats = section.and_then(|b| b.repeats).unwrap_or(3).max(1);
    let threads = section
        .and_then(|b| b.threads.clone())
        .unwrap_or(DEFAULT_THREADS.to_vec());
    if n == 0 || threads.contains(&0) {
        return Err(CliError::Config(
            "bench needs a positive event count and thread counts".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed(seed).unwrap_or(0));
    let projector = config.projector()?;
    let grid = projector.grid();
    let events = random_events(config, n, &mut rng)?;
    let image = Image2D::from_values(grid, (0..grid.len()).map(|_| rng.random::<f64>()).collect())?;
    let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();

    let mut csv = format!("{HEADER}\n");
    for &t in &threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Other(e.to_string()))?;
        let (fwd, back) = pool.install(|| -> Result<(f64, f64), CliError> {
            projector.forward_project(&image, &events)?;
            let fwd = time(repeats, || {
                projector
                    .forward_project(&image, &events)
                    .expect("checked above");
            });
            let back = time(repeats, || {
                projector
                    .back_project(&values, &events)
                    .expect("checked above");
            });
            Ok((fwd, back))
        })?;
        for (op, secs, is_back) in [("forward", fwd, false), ("back", back, true)] {
            writeln!(
                csv,
                "{op},{t},{n},{},{},{secs:.6},{}",
                grid.width,
                grid.height,
                estimate(&projector, n, t, is_back)
            )
            .expect("string write");
        }
        log::info!("{t} threads: forward {fwd:.3} s, back {back:.3} s");
    }
    std::fs::write(out.join("bench.csv"), csv)?;
    Ok(())
}

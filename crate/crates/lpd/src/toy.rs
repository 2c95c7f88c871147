//! Small simulated datasets for training and the matching MLEM baseline.

use listrecon::recon::{reconstruct, Algorithm, ReconConfig, ReconProblem};
use listrecon::simulate::{
    make_phantom, sample_listmode, PhantomKind, SimConfig, HOT_LESION_VALUE,
};
use listrecon::{BinEnumeration, Image2D, Projector};

use crate::error::Result;
use crate::train::Sample;

/// Truth images are divided by the hot-lesion value.
pub const TRUTH_SCALE: f64 = 1.0 / HOT_LESION_VALUE;

/// A training sample plus what a classical reconstruction of it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPair {
    pub sample: Sample,
    pub sensitivity: Image2D,
    pub contamination_mean: f64,
    pub n_bins_total: usize,
}

/// Brain phantom and list-mode realization for one seed.
pub fn toy_pair(
    projector: &Projector,
    bins: &BinEnumeration,
    counts: f64,
    seed: u64,
) -> Result<ToyPair> {
    let phantom = make_phantom(PhantomKind::EllipseBrain, projector.grid(), seed)?;
    let sim = sample_listmode(&phantom, &SimConfig::new(counts, seed), projector, bins)?;
    let sensitivity = projector.sensitivity_image(bins, &sim.expectation.multipliers)?;
    let truth = phantom.activity.scaled(TRUTH_SCALE);
    Ok(ToyPair {
        sample: Sample::new(projector, sim.events, truth)?,
        sensitivity,
        contamination_mean: sim.expectation.contamination_mean,
        n_bins_total: bins.len(),
    })
}

/// `n_pairs` pairs with seeds derived from `seed`.
pub fn toy_dataset(
    projector: &Projector,
    bins: &BinEnumeration,
    n_pairs: usize,
    counts: f64,
    seed: u64,
) -> Result<Vec<ToyPair>> {
    (0..n_pairs as u64)
        .map(|i| {
            toy_pair(
                projector,
                bins,
                counts,
                seed.wrapping_mul(10_000).wrapping_add(i),
            )
        })
        .collect()
}

/// MLEM reconstruction of a pair, in the same units as its truth image.
pub fn mlem_baseline(projector: &Projector, pair: &ToyPair, iterations: usize) -> Result<Image2D> {
    let problem = ReconProblem::new(
        projector,
        &pair.sample.events,
        &pair.sensitivity,
        pair.contamination_mean,
        pair.n_bins_total,
    )?;
    let out = reconstruct(
        &problem,
        &ReconConfig::new(Algorithm::Mlem, iterations, 1),
        None,
    )?;
    Ok(out.image.scaled(TRUTH_SCALE))
}

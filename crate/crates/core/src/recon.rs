//! Classical list-mode reconstructors: MLEM/OSEM, EM-TV and stochastic PDHG
//! with and without a TV penalty.
//!
//! All algorithms maximize the list-mode Poisson log-likelihood
//!
//! ```text
//! L(x) = Σ_t log((A x)_t + s) − ⟨sens, x⟩ − I·s
//! ```
//!
//! where `A` carries the event multipliers, `s` is the known flat
//! contamination mean per bin and `I` the number of enumerated bins.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image2D;
use crate::projector::{EventList, Projector};

pub const DEFAULT_RHO: f64 = 0.999;
pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-12;
pub const EMTV_INNER_STEPS: usize = 10;
pub const EMTV_STEP_FRACTION: f64 = 1e-3;
pub const TV_DELTA_FRACTION: f64 = 1e-6;
/// An epoch may not raise the SPDHG objective by more than this multiple.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Squared norm bound of the 2D forward-difference operator.
const GRADIENT_NORM_SQ: f64 = 8.0;
const SUBSET_ORDER_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Mlem,
    Osem,
    EmTv,
    Spdhg,
    SpdhgTv,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mlem => "mlem",
            Self::Osem => "osem",
            Self::EmTv => "emtv",
            Self::Spdhg => "spdhg",
            Self::SpdhgTv => "spdhgtv",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlem" => Ok(Self::Mlem),
            "osem" => Ok(Self::Osem),
            "emtv" => Ok(Self::EmTv),
            "spdhg" => Ok(Self::Spdhg),
            "spdhgtv" => Ok(Self::SpdhgTv),
            other => Err(Error::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    pub algorithm: Algorithm,
    pub n_iterations: usize,
    pub n_subsets: usize,
    /// TV weight.
    pub beta: f64,
    /// Primal/dual step ratio; `None` uses the reciprocal of the initial value.
    pub gamma: Option<f64>,
    /// SPDHG step scale in (0, 1).
    pub rho: f64,
    /// Lower bound on `(A x)_t + s` in EM ratios.
    pub epsilon_floor: f64,
    /// Seed for the SPDHG subset order.
    pub seed: u64,
}

impl ReconConfig {
    pub fn new(algorithm: Algorithm, n_iterations: usize, n_subsets: usize) -> Self {
        Self {
            algorithm,
            n_iterations,
            n_subsets,
            beta: 0.0,
            gamma: None,
            rho: DEFAULT_RHO,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
            seed: 0,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subsets == 0 {
            return Err(Error::InvalidConfig("n_subsets must be at least 1".into()));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "beta must be nonnegative, got {}",
                self.beta
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "gamma must be positive, got {g}"
                )));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        if !(self.epsilon_floor > 0.0) {
            return Err(Error::InvalidConfig(
                "epsilon_floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Data and system model shared by all reconstructors.
#[derive(Debug, Clone)]
pub struct ReconProblem<'a> {
    pub projector: &'a Projector,
    pub events: &'a EventList,
    pub sensitivity: &'a Image2D,
    /// Flat contamination mean per bin.
    pub contamination_mean: f64,
    /// Number of enumerated bins `I`.
    pub n_bins_total: usize,
}

impl<'a> ReconProblem<'a> {
    pub fn new(
        projector: &'a Projector,
        events: &'a EventList,
        sensitivity: &'a Image2D,
        contamination_mean: f64,
        n_bins_total: usize,
    ) -> Result<Self> {
        sensitivity.check_grid(&projector.grid())?;
        if !(contamination_mean >= 0.0) || !contamination_mean.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "contamination mean must be nonnegative, got {contamination_mean}"
            )));
        }
        projector.check_events(events)?;
        Ok(Self {
            projector,
            events,
            sensitivity,
            contamination_mean,
            n_bins_total,
        })
    }

    /// Pixels inside the inscribed disk with positive sensitivity.
    pub fn mask(&self) -> Vec<bool> {
        self.projector
            .grid()
            .fov_mask()
            .into_iter()
            .zip(self.sensitivity.values())
            .map(|(m, &s)| m && s > 0.0)
            .collect()
    }

    /// Flat start `N/⟨sens, mask⟩` on the mask, zero elsewhere.
    pub fn initial_image(&self) -> Result<Image2D> {
        if self.events.is_empty() {
            return Err(Error::EmptyData("no events to reconstruct".into()));
        }
        let mask = self.mask();
        let masked_sens: f64 = self
            .sensitivity
            .values()
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(s, _)| s)
            .sum();
        if !(masked_sens > 0.0) {
            return Err(Error::EmptyData(
                "sensitivity vanishes on the field of view".into(),
            ));
        }
        let value = self.events.len() as f64 / masked_sens;
        let values = mask.iter().map(|&m| if m { value } else { 0.0 }).collect();
        Image2D::from_values(self.projector.grid(), values)
    }

    fn total_contamination(&self) -> f64 {
        self.contamination_mean * self.n_bins_total as f64
    }
}

/// List-mode Poisson log-likelihood.
pub fn poisson_loglik(problem: &ReconProblem, img: &Image2D) -> Result<f64> {
    img.check_grid(&problem.projector.grid())?;
    let ax = problem
        .projector
        .forward_unchecked(img.values(), problem.events.events());
    loglik_from_projection(problem, img, &ax)
}

fn loglik_from_projection(problem: &ReconProblem, img: &Image2D, ax: &[f64]) -> Result<f64> {
    let s = problem.contamination_mean;
    let mut total = 0.0;
    for (t, &v) in ax.iter().enumerate() {
        let e = v + s;
        if !(e > 0.0) {
            return Err(Error::ObjectiveSingular(t));
        }
        total += e.ln();
    }
    Ok(total - problem.sensitivity.dot(img) - problem.total_contamination())
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub tv: f64,
    /// `−L(x) + β·TV(x)`.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconOutput {
    pub image: Image2D,
    pub history: Vec<IterationRecord>,
}

/// Called after every full iteration with the iteration number (from 1).
pub type Observer<'o> = &'o mut dyn FnMut(usize, &Image2D);

fn record(problem: &ReconProblem, img: &Image2D, beta: f64, iteration: usize) -> IterationRecord {
    let log_likelihood = poisson_loglik(problem, img).unwrap_or(f64::NEG_INFINITY);
    let tv = tv_value(img);
    IterationRecord {
        iteration,
        log_likelihood,
        tv,
        objective: -log_likelihood + beta * tv,
    }
}

/// Runs the configured algorithm from the flat initial image.
pub fn reconstruct(
    problem: &ReconProblem,
    cfg: &ReconConfig,
    observer: Option<Observer>,
) -> Result<ReconOutput> {
    let init = problem.initial_image()?;
    match cfg.algorithm {
        Algorithm::Mlem => lm_mlem(problem, &init, cfg, observer),
        Algorithm::Osem => lm_osem(problem, &init, cfg, observer),
        Algorithm::EmTv => lm_em_tv(problem, &init, cfg, observer),
        Algorithm::Spdhg => lm_spdhg(problem, &init, cfg, observer),
        Algorithm::SpdhgTv => lm_spdhg_tv(problem, &init, cfg, observer),
    }
}

pub fn lm_mlem(
    problem: &ReconProblem,
    init: &Image2D,
    cfg: &ReconConfig,
    observer: Option<Observer>,
) -> Result<ReconOutput> {
    let cfg = ReconConfig {
        n_subsets: 1,
        beta: 0.0,
        ..*cfg
    };
    em_family(problem, init, &cfg, observer)
}

pub fn lm_osem(
    problem: &ReconProblem,
    init: &Image2D,
    cfg: &ReconConfig,
    observer: Option<Observer>,
) -> Result<ReconOutput> {
    let cfg = ReconConfig { beta: 0.0, ..*cfg };
    em_family(problem, init, &cfg, observer)
}

/// EM updates interleaved with a TV proximal step weighted by `β`.
pub fn lm_em_tv(
    problem: &ReconProblem,
    init: &Image2D,
    cfg: &ReconConfig,
    observer: Option<Observer>,
) -> Result<ReconOutput> {
    em_family(problem, init, cfg, observer)
}

fn em_family(
    problem: &ReconProblem,
    init: &Image2D,
    cfg: &ReconConfig,
    mut observer: Option<Observer>,
) -> Result<ReconOutput> {
    cfg.validate()?;
    if problem.events.is_empty() {
        return Err(Error::EmptyData("no events to reconstruct".into()));
    }
    init.check_grid(&problem.projector.grid())?;
    let mask = problem.mask();
    let n = cfg.n_subsets;
    let subsets = problem.events.round_robin_subsets(n);
    let sens_scale = 1.0 / n as f64;
    let sens: Vec<f64> = problem
        .sensitivity
        .values()
        .iter()
        .map(|&s| s * sens_scale)
        .collect();
    let s = problem.contamination_mean;

    let mut x = init.clone();
    for (j, &m) in mask.iter().enumerate() {
        if !m {
            x.values_mut()[j] = 0.0;
        }
    }
    let mut history = Vec::with_capacity(cfg.n_iterations);
    for iteration in 1..=cfg.n_iterations {
        for (k, subset) in subsets.iter().enumerate() {
            if subset.is_empty() {
                log::warn!("subset {k} holds no events; skipped");
                continue;
            }
            let ax = problem
                .projector
                .forward_unchecked(x.values(), subset.events());
            let ratio: Vec<f64> = ax
                .iter()
                .map(|&v| 1.0 / (v + s).max(cfg.epsilon_floor))
                .collect();
            let bp = problem.projector.back_unchecked(&ratio, subset.events());
            let values = x.values_mut();
            for j in 0..values.len() {
                if mask[j] {
                    values[j] *= bp[j] / sens[j];
                }
            }
            if cfg.beta > 0.0 {
                tv_prox_step(&mut x, &mask, cfg.beta);
            }
        }
        history.push(record(problem, &x, cfg.beta, iteration));
        if let Some(obs) = observer.as_mut() {
            obs(iteration, &x);
        }
    }
    Ok(ReconOutput { image: x, history })
}

/// Fixed-point iterations of `x = max(0, x_em − α·β·∇TV_δ(x))` with
/// `α = 1e-3·max(x_em)` and `δ = 1e-6·max(x_em)`.
fn tv_prox_step(x: &mut Image2D, mask: &[bool], beta: f64) {
    let x_em = x.clone();
    let peak = x_em.max();
    if !(peak > 0.0) {
        return;
    }
    let alpha = EMTV_STEP_FRACTION * peak;
    let delta = TV_DELTA_FRACTION * peak;
    for _ in 0..EMTV_INNER_STEPS {
        let grad = tv_grad_smooth(x, delta);
        let values = x.values_mut();
        for j in 0..values.len() {
            values[j] = if mask[j] {
                (x_em.values()[j] - alpha * beta * grad.values()[j]).max(0.0)
            } else {
                0.0
            };
        }
    }
}

/// Forward differences with a zero difference past the last row and column.
pub fn gradient(img: &Image2D) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let v = img.values();
    let mut gx = vec![0.0; v.len()];
    let mut gy = vec![0.0; v.len()];
    for q in 0..h {
        for p in 0..w {
            let j = q * w + p;
            if p + 1 < w {
                gx[j] = v[j + 1] - v[j];
            }
            if q + 1 < h {
                gy[j] = v[j + w] - v[j];
            }
        }
    }
    (gx, gy)
}

/// Adjoint of [`gradient`] (negative divergence).
pub fn gradient_adjoint(gx: &[f64], gy: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    for q in 0..height {
        for p in 0..width {
            let j = q * width + p;
            if p + 1 < width {
                out[j] -= gx[j];
                out[j + 1] += gx[j];
            }
            if q + 1 < height {
                out[j] -= gy[j];
                out[j + width] += gy[j];
            }
        }
    }
    out
}

/// Isotropic total variation.
pub fn tv_value(img: &Image2D) -> f64 {
    let (gx, gy) = gradient(img);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).sum()
}

/// `Σ √(Δx² + Δy² + δ²)`.
pub fn tv_value_smooth(img: &Image2D, delta: f64) -> f64 {
    let (gx, gy) = gradient(img);
    gx.iter()
        .zip(&gy)
        .map(|(a, b)| (a * a + b * b + delta * delta).sqrt())
        .sum()
}

/// Gradient of [`tv_value_smooth`].
pub fn tv_grad_smooth(img: &Image2D, delta: f64) -> Image2D {
    let (mut gx, mut gy) = gradient(img);
    for (a, b) in gx.iter_mut().zip(gy.iter_mut()) {
        let norm = (*a * *a + *b * *b + delta * delta).sqrt();
        *a /= norm;
        *b /= norm;
    }
    let values = gradient_adjoint(&gx, &gy, img.width(), img.height());
    Image2D::from_values(img.grid(), values).expect("gradient preserves shape")
}

/// Subset visiting order for every SPDHG epoch.
pub fn spdhg_subset_order(seed: u64, n_subsets: usize, n_epochs: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SUBSET_ORDER_STREAM);
    (0..n_epochs)
        .map(|_| {
            let mut order: Vec<usize> = (0..n_subsets).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect()
}

/// SPDHG step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdhgSteps {
    /// Dual step per event, in original event order.
    pub sigma: Vec<f64>,
    /// Primal step per pixel.
    pub tau: Vec<f64>,
    /// Dual step of the TV block.
    pub sigma_tv: f64,
    pub gamma: f64,
}

/// `σ_t = γρ/(A 1)_t`, `τ_j = ρ/(γ·n·max_S (A_Sᵀ1)_j)` and
/// `σ_tv = ρ/(8·max τ)`.
pub fn spdhg_steps(problem: &ReconProblem, cfg: &ReconConfig, gamma: f64) -> Result<SpdhgSteps> {
    let projector = problem.projector;
    let grid = projector.grid();
    let n = cfg.n_subsets;
    let rho = cfg.rho;
    let ones = vec![1.0; grid.len()];
    let row_sums = projector.forward_unchecked(&ones, problem.events.events());
    let sigma: Vec<f64> = row_sums
        .iter()
        .map(|&r| if r > 0.0 { gamma * rho / r } else { 0.0 })
        .collect();

    let mask = problem.mask();
    let mut col_max = vec![0.0f64; grid.len()];
    for subset in problem.events.round_robin_subsets(n) {
        let col = projector.back_unchecked(&vec![1.0; subset.len()], subset.events());
        for (m, c) in col_max.iter_mut().zip(col) {
            *m = m.max(c);
        }
    }
    let mut tau: Vec<f64> = col_max
        .iter()
        .map(|&c| {
            if c > 0.0 {
                rho / (gamma * n as f64 * c)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let largest = tau
        .iter()
        .copied()
        .filter(|t| t.is_finite())
        .fold(0.0, f64::max);
    if !(largest > 0.0) {
        return Err(Error::StepConfig("no pixel is seen by any event".into()));
    }
    for (t, &m) in tau.iter_mut().zip(&mask) {
        if !m {
            *t = 0.0;
        } else if !t.is_finite() {
            *t = largest;
        }
    }
    let sigma_tv = rho / (GRADIENT_NORM_SQ * largest);
    Ok(SpdhgSteps {
        sigma,
        tau,
        sigma_tv,
        gamma,
    })
}

pub fn lm_spdhg(
    problem: &ReconProblem,
    init: &Image2D,
    cfg: &ReconConfig,
    observer: Option<Observer>,
) -> Result<ReconOutput> {
    let cfg = ReconConfig { beta: 0.0, ..*cfg };
    spdhg(problem, init, &cfg, false, observer)
}

pub fn lm_spdhg_tv(
    problem: &ReconProblem,
    init: &Image2D,
    cfg: &ReconConfig,
    observer: Option<Observer>,
) -> Result<ReconOutput> {
    spdhg(problem, init, cfg, true, observer)
}

fn spdhg(
    problem: &ReconProblem,
    init: &Image2D,
    cfg: &ReconConfig,
    with_tv: bool,
    mut observer: Option<Observer>,
) -> Result<ReconOutput> {
    cfg.validate()?;
    if problem.events.is_empty() {
        return Err(Error::EmptyData("no events to reconstruct".into()));
    }
    init.check_grid(&problem.projector.grid())?;
    let projector = problem.projector;
    let grid = projector.grid();
    let (w, h) = (grid.width, grid.height);
    let n = cfg.n_subsets;
    let s = problem.contamination_mean;
    let mask = problem.mask();

    let gamma = match cfg.gamma {
        Some(g) => g,
        None => {
            let peak = init.max();
            if !(peak > 0.0) {
                return Err(Error::StepConfig(
                    "initial image is zero; set gamma explicitly".into(),
                ));
            }
            1.0 / peak
        }
    };
    let steps = spdhg_steps(problem, cfg, gamma)?;

    // Events and their dual steps grouped per subset, preserving round-robin order.
    let subsets = problem.events.round_robin_subsets(n);
    let subset_sigma: Vec<Vec<f64>> = (0..n)
        .map(|k| steps.sigma.iter().skip(k).step_by(n).copied().collect())
        .collect();
    let mut y: Vec<Vec<f64>> = subsets.iter().map(|sub| vec![0.0; sub.len()]).collect();

    let mut x: Vec<f64> = init
        .values()
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    // z = sens − Aᵀ(1 − y) with y = 0.
    let all_ones = vec![1.0; problem.events.len()];
    let bp_ones = projector.back_unchecked(&all_ones, problem.events.events());
    let mut z: Vec<f64> = problem
        .sensitivity
        .values()
        .iter()
        .zip(&bp_ones)
        .map(|(s, b)| s - b)
        .collect();
    let mut z_bar = z.clone();
    let mut wx = vec![0.0; w * h];
    let mut wy = vec![0.0; w * h];

    let orders = spdhg_subset_order(cfg.seed, n, cfg.n_iterations);
    let mut history = Vec::with_capacity(cfg.n_iterations);
    let mut previous = record(problem, init, cfg.beta, 0).objective;

    for (epoch, order) in orders.iter().enumerate() {
        for &k in order {
            let subset = &subsets[k];
            for j in 0..x.len() {
                x[j] = (x[j] - steps.tau[j] * z_bar[j]).max(0.0);
            }
            let mut delta = vec![0.0; x.len()];
            if !subset.is_empty() {
                let ax = projector.forward_unchecked(&x, subset.events());
                let y_k = &mut y[k];
                let dy: Vec<f64> = ax
                    .iter()
                    .zip(y_k.iter_mut())
                    .zip(&subset_sigma[k])
                    .map(|((&a, yt), &sig)| {
                        if sig == 0.0 {
                            return 0.0;
                        }
                        let y_hat = *yt + sig * (a + s);
                        let y_new =
                            0.5 * (1.0 + y_hat - ((y_hat - 1.0).powi(2) + 4.0 * sig).sqrt());
                        let d = y_new - *yt;
                        *yt = y_new;
                        d
                    })
                    .collect();
                delta = projector.back_unchecked(&dy, subset.events());
            } else {
                log::warn!("subset {k} holds no events; skipped");
            }

            let mut delta_tv = vec![0.0; x.len()];
            if with_tv {
                let img = Image2D::from_values(grid, x.clone())?;
                let (gx, gy) = gradient(&img);
                let mut dwx = vec![0.0; x.len()];
                let mut dwy = vec![0.0; x.len()];
                for j in 0..x.len() {
                    let (ax_, ay_) = (
                        wx[j] + steps.sigma_tv * gx[j],
                        wy[j] + steps.sigma_tv * gy[j],
                    );
                    let norm = ax_.hypot(ay_);
                    let scale = if norm > cfg.beta {
                        cfg.beta / norm
                    } else {
                        1.0
                    };
                    let (nx, ny) = (ax_ * scale, ay_ * scale);
                    dwx[j] = nx - wx[j];
                    dwy[j] = ny - wy[j];
                    wx[j] = nx;
                    wy[j] = ny;
                }
                delta_tv = gradient_adjoint(&dwx, &dwy, w, h);
            }

            for j in 0..x.len() {
                z[j] += delta[j] + delta_tv[j];
                z_bar[j] = z[j] + n as f64 * delta[j] + delta_tv[j];
            }
        }

        let img = Image2D::from_values(grid, x.clone())?;
        let rec = record(problem, &img, cfg.beta, epoch + 1);
        if !rec.objective.is_finite()
            || rec.objective - previous > DIVERGENCE_FACTOR * previous.abs().max(1.0)
        {
            return Err(Error::StepConfig(format!(
                "objective diverged at epoch {} ({} -> {}); reduce gamma or rho",
                epoch + 1,
                previous,
                rec.objective
            )));
        }
        previous = rec.objective;
        history.push(rec);
        if let Some(obs) = observer.as_mut() {
            obs(epoch + 1, &img);
        }
    }
    Ok(ReconOutput {
        image: Image2D::from_values(grid, x)?,
        history,
    })
}

/// Grid search over `γ`, scoring each final image (higher is better).
pub fn tune_gamma(
    problem: &ReconProblem,
    cfg: &ReconConfig,
    candidates: &[f64],
    score: impl Fn(&Image2D) -> f64,
) -> Result<(f64, Vec<(f64, f64)>)> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no gamma candidates".into()));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for &g in candidates {
        let out = reconstruct(problem, &cfg.with_gamma(g), None);
        let value = match out {
            Ok(out) => score(&out.image),
            Err(Error::StepConfig(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        scores.push((g, value));
    }
    let best = scores
        .iter()
        .copied()
        .fold((candidates[0], f64::NEG_INFINITY), |acc, (g, v)| {
            if v > acc.1 {
                (g, v)
            } else {
                acc
            }
        });
    Ok((best.0, scores))
}

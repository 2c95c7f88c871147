//! Gaussian TOF weights integrated over a bin.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Weights at or below this value are treated as zero by the projector.
pub const WEIGHT_CUTOFF: f64 = 1e-6;

/// Closed-form error function approximation, absolute error below 4e-4.
///
/// `sign(x)·√(1 − exp(−x²·(4/π + 0.14x²)/(1 + 0.14x²)))`, with the sign taken
/// as zero at the origin.
#[inline]
pub fn erf_approx(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let x2 = x * x;
    let ax2 = 0.14 * x2;
    let magnitude = (1.0 - (-x2 * (4.0 / PI + ax2) / (1.0 + ax2)).exp()).sqrt();
    magnitude.copysign(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TofKernelInput {
    /// Signed distance from the bin center to the annihilation point (mm).
    pub d_tof: f64,
    /// Bin width (mm).
    pub omega_tof: f64,
    /// Gaussian standard deviation (mm).
    pub sigma_tof: f64,
}

/// Probability mass of a Gaussian centered `d_tof` away from a bin of width
/// `omega_tof` that falls inside the bin.
pub fn tof_weight(k: TofKernelInput) -> Result<f64> {
    if !(k.omega_tof > 0.0) || !k.omega_tof.is_finite() {
        return Err(Error::InvalidKernel(format!(
            "bin width must be positive, got {}",
            k.omega_tof
        )));
    }
    if !(k.sigma_tof > 0.0) || !k.sigma_tof.is_finite() {
        return Err(Error::InvalidKernel(format!(
            "sigma must be positive, got {}",
            k.sigma_tof
        )));
    }
    Ok(TofKernel::new(k.omega_tof, k.sigma_tof).weight(k.d_tof))
}

/// Precomputed constants for repeated weight evaluation at fixed width and sigma.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TofKernel {
    half_width: f64,
    inv_sqrt2_sigma: f64,
}

impl TofKernel {
    pub(crate) fn new(width: f64, sigma: f64) -> Self {
        Self {
            half_width: 0.5 * width,
            inv_sqrt2_sigma: FRAC_1_SQRT_2 / sigma,
        }
    }

    #[inline]
    pub(crate) fn weight(&self, d: f64) -> f64 {
        let upper = erf_approx((d + self.half_width) * self.inv_sqrt2_sigma);
        let lower = erf_approx((d - self.half_width) * self.inv_sqrt2_sigma);
        0.5 * (upper - lower)
    }
}

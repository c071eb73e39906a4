//! Small numerical helpers shared across modules.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Standard normal quantile, polished with one Newton step so the result is
/// accurate to machine precision.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Contract(format!("quantile level {p} outside (0,1)")));
    }
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut z = n.inverse_cdf(p);
    for _ in 0..3 {
        let pdf = n.pdf(z);
        if pdf <= 0.0 {
            break;
        }
        let step = (n.cdf(z) - p) / pdf;
        z -= step;
        if step.abs() < 1e-14 * (1.0 + z.abs()) {
            break;
        }
    }
    Ok(z)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Two-sided p-value under a standard normal reference.
pub fn two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return 0.0;
    }
    2.0 * (1.0 - normal_cdf(z.abs()))
}

pub(crate) fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean) * (x - mean) / var + var.ln() + core::f64::consts::TAU.ln())
}

/// Log density of an inverse-gamma with the shape/rate convention
/// (`rate` is the numerator of the exponential term).
pub(crate) fn log_inv_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

pub(crate) fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Draws from an inverse-gamma with the shape/rate convention via
/// `rate / Gamma(shape, scale=1)`.
pub(crate) fn sample_inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::Numerical(format!(
            "inverse-gamma draw with shape {shape}, rate {rate}"
        )));
    }
    let g = Gamma::new(shape, 1.0)
        .map_err(|e| Error::Numerical(format!("gamma sampler: {e}")))?
        .sample(rng);
    Ok(rate / g.max(f64::MIN_POSITIVE))
}

/// Sample mean and unbiased variance.
pub fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Type-7 empirical quantile (linear interpolation) of pre-sorted data.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = lo.min(n - 2) + 1;
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

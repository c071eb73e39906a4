//! Hyperparameters of the hierarchical prior.
//!
//! The coefficient vector (intercept, slopes and correction coefficients)
//! gets a normal prior scaled by `tau^2 * sigma_y^2`, where `tau` carries a
//! half-Cauchy prior by default, kept conjugate through the two-level
//! inverse-gamma auxiliary representation. Environment means shrink toward
//! the pooled mean of the per-environment means (empirical Bayes); the
//! prior covariance of that shrinkage is diagonal with per-coordinate
//! inverse-gamma scales unless a fixed matrix is supplied.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Prior on the global shrinkage scale `tau` of the coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub enum TauPrior {
    /// Standard half-Cauchy on `tau`, sampled exactly via the
    /// inverse-gamma auxiliary pair
    /// `tau^2 | phi ~ IG(1/2, 1/phi)`, `phi ~ IG(1/2, 1)`.
    HalfCauchy,
    /// Fixed `tau^2`.
    Fixed(f64),
}

/// Prior on the response noise variance.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaYPrior {
    /// Improper scale prior `1/sigma_y^2`.
    Jeffreys,
    /// Proper inverse-gamma, for small-sample stability.
    InverseGamma { shape: f64, rate: f64 },
}

/// Prior covariance of the environment means around the prior center.
#[derive(Debug, Clone, PartialEq)]
pub enum MuCovariancePrior {
    /// Diagonal covariance with per-coordinate scales
    /// `s_j ~ IG(shape, rate)`, updated conjugately.
    DiagonalHierarchical { shape: f64, rate: f64 },
    /// Fixed symmetric positive definite matrix.
    Fixed(DMatrix<f64>),
}

/// Center of the environment-mean prior.
#[derive(Debug, Clone, PartialEq)]
pub enum MuPriorCenter {
    /// Pooled mean of the per-environment empirical means (default).
    GrandMean,
    /// Fixed vector; used when the center is known externally.
    Fixed(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub tau: TauPrior,
    pub sigma_y: SigmaYPrior,
    pub mu_covariance: MuCovariancePrior,
    pub mu_center: MuPriorCenter,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            tau: TauPrior::HalfCauchy,
            sigma_y: SigmaYPrior::Jeffreys,
            mu_covariance: MuCovariancePrior::DiagonalHierarchical {
                shape: 1.0,
                rate: 1.0,
            },
            mu_center: MuPriorCenter::GrandMean,
        }
    }
}

impl PriorSpec {
    /// Validates hyperparameters against the covariate dimension `p`.
    pub fn validate(&self, p: usize) -> Result<()> {
        match &self.tau {
            TauPrior::Fixed(t2) if !(t2.is_finite() && *t2 > 0.0) => {
                return Err(Error::Contract(format!("fixed tau^2 must be positive, got {t2}")));
            }
            _ => {}
        }
        if let SigmaYPrior::InverseGamma { shape, rate } = self.sigma_y {
            if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                return Err(Error::Contract(format!(
                    "inverse-gamma prior needs positive shape/rate, got ({shape}, {rate})"
                )));
            }
        }
        match &self.mu_covariance {
            MuCovariancePrior::DiagonalHierarchical { shape, rate } => {
                if !(*shape > 0.0 && *rate > 0.0) {
                    return Err(Error::Contract(format!(
                        "mean-scale prior needs positive shape/rate, got ({shape}, {rate})"
                    )));
                }
            }
            MuCovariancePrior::Fixed(m) => {
                if m.nrows() != p || m.ncols() != p {
                    return Err(Error::Contract(format!(
                        "fixed mean-prior covariance is {}x{}, expected {p}x{p}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                let asym = (m - m.transpose()).abs().max();
                if asym > 1e-10 {
                    return Err(Error::Contract(
                        "fixed mean-prior covariance not symmetric".into(),
                    ));
                }
                if m.clone().cholesky().is_none() {
                    return Err(Error::Contract(
                        "fixed mean-prior covariance not positive definite".into(),
                    ));
                }
            }
        }
        if let MuPriorCenter::Fixed(c) = &self.mu_center {
            if c.len() != p {
                return Err(Error::Contract(format!(
                    "fixed mean-prior center has length {}, expected {p}",
                    c.len()
                )));
            }
        }
        Ok(())
    }
}

//! Weak-identifiability sweep: a single-environment, single-covariate
//! scenario whose covariate mean is scaled by `lambda`. At `lambda = 0` the
//! slope and correction regressors collapse onto each other and the prior
//! takes over the posterior of the slope; as `lambda` grows the posterior
//! concentrates near the true slope.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::{EnvironmentData, TrainingData};
use crate::error::{Error, Result};
use crate::prior::{PriorSpec, TauPrior};
use crate::sampler::{fit, SamplerConfig};

/// Generator settings for one sweep point; the covariate mean is
/// `lambda * mu_base`.
#[derive(Debug, Clone)]
pub struct SweepScenario {
    pub n: usize,
    pub mu_base: f64,
    pub sigma_x: f64,
    /// True slope.
    pub beta: f64,
    /// True coefficient on the raw centered covariate.
    pub k_raw: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SweepScenario {
    fn default() -> Self {
        Self {
            n: 500,
            mu_base: 1.0,
            sigma_x: 1.0,
            beta: 1.0,
            k_raw: 0.5,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub beta_posterior_mean: f64,
    pub beta_posterior_sd: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Implied prior SD of the slope at the scenario's noise scale, when
    /// the shrinkage scale is fixed.
    pub prior_sd: Option<f64>,
}

/// Generates the scenario dataset at one `lambda`.
pub fn sweep_dataset(scenario: &SweepScenario, lambda: f64, seed: u64) -> Result<TrainingData> {
    if scenario.n < 2 {
        return Err(Error::Contract("sweep scenario needs n >= 2".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Contract(format!("lambda {lambda} must be nonnegative")));
    }
    let mu = lambda * scenario.mu_base;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(scenario.n, 1);
    let mut y = DVector::zeros(scenario.n);
    for i in 0..scenario.n {
        let z: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let xi = mu + scenario.sigma_x * z;
        x[(i, 0)] = xi;
        y[i] = scenario.beta * xi + scenario.k_raw * (xi - mu) + scenario.noise_sd * e;
    }
    TrainingData::from_environments(vec![EnvironmentData::new(0, x, y)?], false)
}

/// One fit per grid point; each point gets its own derived seed.
pub fn identifiability_sweep(
    lambda_grid: &[f64],
    scenario: &SweepScenario,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<SweepTable> {
    if lambda_grid.is_empty() {
        return Err(Error::Contract("empty lambda grid".into()));
    }
    let mut rows = Vec::with_capacity(lambda_grid.len());
    for (i, &lambda) in lambda_grid.iter().enumerate() {
        let data = sweep_dataset(scenario, lambda, scenario.seed.wrapping_add(i as u64))?;
        let samples = fit(&data, prior, cfg)?;
        let mean = samples.beta_posterior_mean();
        let sd = samples.beta_posterior_sd();
        rows.push(SweepRow {
            lambda,
            beta_posterior_mean: mean[0],
            beta_posterior_sd: sd[0],
        });
    }
    let prior_sd = match prior.tau {
        TauPrior::Fixed(t2) => Some(t2.sqrt() * scenario.noise_sd),
        TauPrior::HalfCauchy => None,
    };
    Ok(SweepTable { rows, prior_sd })
}

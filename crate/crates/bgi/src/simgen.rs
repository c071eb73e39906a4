//! Seeded generators for the two simulation designs and the
//! weak-identifiability scenario.
//!
//! Both generators are pure functions of their config: identical configs
//! produce bit-identical datasets. The multi-source generator draws all
//! dataset-level structure (environment-mean offsets, confounder loadings,
//! test-mean shift) from a dedicated RNG stream, so datasets with the same
//! seed but different sample sizes share their ground truth.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::Serialize;

use crate::data::{EnvironmentData, TestCovariates, TrainingData};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Single source
// ---------------------------------------------------------------------------

/// Single-environment, single-covariate design: a hidden confounder drives
/// both the covariate and the response, and the test domain is the same
/// mechanism with the covariate mean shifted.
///
/// ```text
/// H ~ N(0, sigma_h^2)
/// X = x_mean + 0.5 H + eps_x
/// Y = X - 2 H + eps_y
/// ```
///
/// Ground truth: slope 1, noise-covariate covariance `-sigma_h^2`.
#[derive(Debug, Clone)]
pub struct SingleSourceConfig {
    pub n1: usize,
    pub n0: usize,
    pub sigma_h: f64,
    pub noise_sd_x: f64,
    pub noise_sd_y: f64,
    /// Training covariate mean. Must be nonzero for the correction
    /// coefficient to be identified from a single environment.
    pub x_mean: f64,
    pub test_shift: f64,
    pub seed: u64,
}

impl Default for SingleSourceConfig {
    fn default() -> Self {
        Self {
            n1: 500,
            n0: 200,
            sigma_h: 0.5,
            noise_sd_x: 0.1,
            noise_sd_y: 0.1,
            x_mean: 2.0,
            test_shift: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SingleSourceTruth {
    /// Structural slope (1).
    pub beta: f64,
    /// Covariance between the structural noise and the covariate.
    pub k: f64,
    /// Population covariate variance (same in train and test).
    pub x_var: f64,
    /// Variance of the structural noise `-2H + eps_y`.
    pub noise_var: f64,
    /// Population test covariate mean.
    pub test_mean: f64,
    /// Population conditional mean of the response at each test row.
    pub test_conditional_means: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SingleSourceDataset {
    pub train: TrainingData,
    pub test: TestCovariates,
    pub test_responses: DVector<f64>,
    pub truth: SingleSourceTruth,
}

pub fn gen_single_source(cfg: &SingleSourceConfig) -> Result<SingleSourceDataset> {
    if cfg.n1 < 2 || cfg.n0 < 2 {
        return Err(Error::Contract("n1 and n0 must be at least 2".into()));
    }
    if !(cfg.sigma_h >= 0.0 && cfg.noise_sd_x > 0.0 && cfg.noise_sd_y > 0.0) {
        return Err(Error::Contract("noise scales must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw3 = |rng: &mut ChaCha8Rng| -> (f64, f64, f64) {
        let h: f64 = rng.sample(StandardNormal);
        let ex: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        (h * cfg.sigma_h, ex * cfg.noise_sd_x, ey * cfg.noise_sd_y)
    };

    let mut x = DMatrix::zeros(cfg.n1, 1);
    let mut y = DVector::zeros(cfg.n1);
    for i in 0..cfg.n1 {
        let (h, ex, ey) = draw3(&mut rng);
        let xi = cfg.x_mean + 0.5 * h + ex;
        x[(i, 0)] = xi;
        y[i] = xi - 2.0 * h + ey;
    }
    let train = TrainingData::from_environments(
        vec![EnvironmentData::new(0, x, y)?],
        false,
    )?;

    let test_mean = cfg.x_mean + cfg.test_shift;
    let mut x0 = DMatrix::zeros(cfg.n0, 1);
    let mut y0 = DVector::zeros(cfg.n0);
    for i in 0..cfg.n0 {
        let (h, ex, ey) = draw3(&mut rng);
        let xi = test_mean + 0.5 * h + ex;
        x0[(i, 0)] = xi;
        y0[i] = xi - 2.0 * h + ey;
    }

    let x_var = 0.25 * cfg.sigma_h * cfg.sigma_h + cfg.noise_sd_x * cfg.noise_sd_x;
    let k = -cfg.sigma_h * cfg.sigma_h;
    let noise_var = 4.0 * cfg.sigma_h * cfg.sigma_h + cfg.noise_sd_y * cfg.noise_sd_y;
    let cond = DVector::from_fn(cfg.n0, |i, _| {
        let xi = x0[(i, 0)];
        xi + k / x_var * (xi - test_mean)
    });
    Ok(SingleSourceDataset {
        train,
        test: TestCovariates::new(x0)?,
        test_responses: y0,
        truth: SingleSourceTruth {
            beta: 1.0,
            k,
            x_var,
            noise_var,
            test_mean,
            test_conditional_means: cond,
        },
    })
}

// ---------------------------------------------------------------------------
// Multiple sources
// ---------------------------------------------------------------------------

/// Multi-environment design with `q` hidden confounders loading on both the
/// covariates and the response. Environment means are systematically spread
/// plus a uniform offset redrawn per environment; the test domain gets its
/// own shifted mean and an inflated covariance.
#[derive(Debug, Clone)]
pub struct MultiSourceConfig {
    /// Total observation budget; each environment receives `ceil(n/E)`.
    pub n_total: usize,
    pub p: usize,
    /// Hidden confounder count.
    pub q: usize,
    /// Environment count; defaults to `p + 1`.
    pub e_count: Option<usize>,
    pub n0: usize,
    /// Structural slopes; defaults to all ones.
    pub beta: Option<DVector<f64>>,
    /// Confounder-to-covariate loadings (`q x p`); drawn N(0,1) per dataset
    /// when absent.
    pub psi: Option<DMatrix<f64>>,
    /// Confounder-to-response loadings (`q`); drawn N(0,1) per dataset when
    /// absent.
    pub phi: Option<DVector<f64>>,
    pub seed: u64,
}

impl MultiSourceConfig {
    pub fn new(n_total: usize, p: usize, seed: u64) -> Self {
        Self {
            n_total,
            p,
            q: 2,
            e_count: None,
            n0: 200,
            beta: None,
            psi: None,
            phi: None,
            seed,
        }
    }

    pub fn e(&self) -> usize {
        self.e_count.unwrap_or(self.p + 1)
    }
}

#[derive(Debug, Clone)]
pub struct MultiSourceTruth {
    pub beta: DVector<f64>,
    /// Noise-covariate covariance `psi' phi`.
    pub k: DVector<f64>,
    pub psi: DMatrix<f64>,
    pub phi: DVector<f64>,
    /// Population environment means.
    pub mu_envs: Vec<DVector<f64>>,
    pub mu_test: DVector<f64>,
    /// Population covariate covariance in the training environments.
    pub sigma_x_train: DMatrix<f64>,
    /// Population covariate covariance in the test domain.
    pub sigma_x_test: DMatrix<f64>,
    /// Structural noise variance `phi' phi + 1`.
    pub noise_var: f64,
    pub test_conditional_means: DVector<f64>,
    /// Hidden confounder draws per environment, for validation.
    pub train_confounders: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct MultiSourceDataset {
    pub train: TrainingData,
    pub test: TestCovariates,
    pub test_responses: DVector<f64>,
    pub truth: MultiSourceTruth,
}

/// Frozen dataset-level draws, echoed into the simulate manifest.
#[derive(Debug, Clone, Serialize)]
pub struct MultiSourceManifest {
    pub n_total: usize,
    pub p: usize,
    pub q: usize,
    pub e: usize,
    pub n_per_env: usize,
    pub n0: usize,
    pub seed: u64,
    pub beta: Vec<f64>,
    pub k: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub mu_envs: Vec<Vec<f64>>,
    pub mu_test: Vec<f64>,
    pub noise_var: f64,
}

pub fn gen_multi_source(cfg: &MultiSourceConfig) -> Result<MultiSourceDataset> {
    let p = cfg.p;
    let q = cfg.q;
    let e = cfg.e();
    if p == 0 || e == 0 {
        return Err(Error::Contract("p and E must be positive".into()));
    }
    if cfg.n_total == 0 || cfg.n0 < 2 {
        return Err(Error::Contract("need n_total >= 1 and n0 >= 2".into()));
    }
    let n_per_env = cfg.n_total.div_ceil(e);
    if n_per_env < 2 {
        return Err(Error::Contract(format!(
            "ceil(n/E) = {n_per_env} observations per environment; need at least 2"
        )));
    }
    if let Some(b) = &cfg.beta {
        if b.len() != p {
            return Err(Error::Contract("beta length must equal p".into()));
        }
    }
    if let Some(m) = &cfg.psi {
        if m.nrows() != q || m.ncols() != p {
            return Err(Error::Contract("psi must be q x p".into()));
        }
    }
    if let Some(v) = &cfg.phi {
        if v.len() != q {
            return Err(Error::Contract("phi length must equal q".into()));
        }
    }

    // Dataset-level structure from stream 0: environment offsets, loadings,
    // test shift. Draw order is fixed.
    let mut rng_ds = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_ds.set_stream(0);
    let unif = Uniform::new(-1.0f64, 1.0).map_err(|e| Error::Contract(e.to_string()))?;

    let mut mu_envs = Vec::with_capacity(e);
    for _ in 0..e {
        let mut mu = DVector::zeros(p);
        for j in 0..p {
            let u: f64 = unif.sample(&mut rng_ds);
            mu[j] = 2.0 * (j + 1) as f64 / p as f64 - 1.0 + u;
        }
        mu_envs.push(mu);
    }
    let psi = cfg.psi.clone().unwrap_or_else(|| {
        DMatrix::from_fn(q, p, |_, _| rng_ds.sample(StandardNormal))
    });
    let phi = cfg
        .phi
        .clone()
        .unwrap_or_else(|| DVector::from_fn(q, |_, _| rng_ds.sample(StandardNormal)));
    let mut mu_test = DVector::zeros(p);
    for j in 0..p {
        let u: f64 = unif.sample(&mut rng_ds);
        mu_test[j] = 2.0 * (j + 1) as f64 / p as f64 + 2.0 * u;
    }
    let beta = cfg
        .beta
        .clone()
        .unwrap_or_else(|| DVector::from_element(p, 1.0));

    // Sigma_V = 0.5 11' + 0.5 I ; test covariance adds 0.5 I.
    let sigma_v = DMatrix::from_element(p, p, 0.5) + DMatrix::<f64>::identity(p, p) * 0.5;
    let sigma_test_v = &sigma_v + DMatrix::<f64>::identity(p, p) * 0.5;
    let l_v = sigma_v
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Sigma_V not positive definite".into()))?;
    let l_0 = sigma_test_v
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("test covariance not positive definite".into()))?;

    // Observations from stream 1.
    let mut rng_obs = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_obs.set_stream(1);
    let mut environments = Vec::with_capacity(e);
    let mut confounders = Vec::with_capacity(e);
    for (env_id, mu_e) in mu_envs.iter().enumerate() {
        let mut x = DMatrix::zeros(n_per_env, p);
        let mut y = DVector::zeros(n_per_env);
        let mut h_mat = DMatrix::zeros(n_per_env, q);
        for i in 0..n_per_env {
            let h = DVector::from_fn(q, |_, _| rng_obs.sample(StandardNormal));
            let z = DVector::from_fn(p, |_, _| rng_obs.sample(StandardNormal));
            let v = mu_e + l_v.l() * z;
            let xi = &v + psi.transpose() * &h;
            let eps: f64 = rng_obs.sample(StandardNormal);
            y[i] = beta.dot(&xi) + phi.dot(&h) + eps;
            x.row_mut(i).copy_from(&xi.transpose());
            h_mat.row_mut(i).copy_from(&h.transpose());
        }
        environments.push(EnvironmentData::new(env_id, x, y)?);
        confounders.push(h_mat);
    }
    let train = TrainingData::from_environments(environments, true)?;

    let mut x0 = DMatrix::zeros(cfg.n0, p);
    let mut y0 = DVector::zeros(cfg.n0);
    for i in 0..cfg.n0 {
        let h = DVector::from_fn(q, |_, _| rng_obs.sample(StandardNormal));
        let z = DVector::from_fn(p, |_, _| rng_obs.sample(StandardNormal));
        let v = &mu_test + l_0.l() * z;
        let xi = &v + psi.transpose() * &h;
        let eps: f64 = rng_obs.sample(StandardNormal);
        y0[i] = beta.dot(&xi) + phi.dot(&h) + eps;
        x0.row_mut(i).copy_from(&xi.transpose());
    }

    let k = psi.transpose() * &phi;
    let psi_gram = psi.transpose() * &psi;
    let sigma_x_train = &sigma_v + &psi_gram;
    let sigma_x_test = &sigma_test_v + &psi_gram;
    let noise_var = phi.norm_squared() + 1.0;
    let chol_test = sigma_x_test
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("test covariate covariance singular".into()))?;
    let mut cond = DVector::zeros(cfg.n0);
    for i in 0..cfg.n0 {
        let xi = x0.row(i).transpose();
        let centered = &xi - &mu_test;
        cond[i] = beta.dot(&xi) + k.dot(&chol_test.solve(&centered));
    }

    Ok(MultiSourceDataset {
        train,
        test: TestCovariates::new(x0)?,
        test_responses: y0,
        truth: MultiSourceTruth {
            beta,
            k,
            psi,
            phi,
            mu_envs,
            mu_test,
            sigma_x_train,
            sigma_x_test,
            noise_var,
            test_conditional_means: cond,
            train_confounders: confounders,
        },
    })
}

pub fn multi_source_manifest(cfg: &MultiSourceConfig, ds: &MultiSourceDataset) -> MultiSourceManifest {
    let t = &ds.truth;
    MultiSourceManifest {
        n_total: cfg.n_total,
        p: cfg.p,
        q: cfg.q,
        e: cfg.e(),
        n_per_env: cfg.n_total.div_ceil(cfg.e()),
        n0: cfg.n0,
        seed: cfg.seed,
        beta: t.beta.iter().copied().collect(),
        k: t.k.iter().copied().collect(),
        psi: (0..t.psi.nrows())
            .map(|r| t.psi.row(r).iter().copied().collect())
            .collect(),
        phi: t.phi.iter().copied().collect(),
        mu_envs: t.mu_envs.iter().map(|m| m.iter().copied().collect()).collect(),
        mu_test: t.mu_test.iter().copied().collect(),
        noise_var: t.noise_var,
    }
}

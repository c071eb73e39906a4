//! Blocked Gibbs sampler for the multi-environment model.
//!
//! The response likelihood for an observation in environment `e` is
//!
//! ```text
//! Y | X ~ N( beta' [1, x]  +  k' S_e^{-1} (x - mu_e),  sigma_y^2 )
//! X     ~ N( mu_e, S_e )
//! ```
//!
//! with `S_e` the per-environment plug-in covariance. The correction block
//! carries the precision-weighted centered covariate, so `k` is the
//! (environment-invariant) covariance between the structural noise and the
//! covariates; a config switch falls back to the raw centered regressor
//! `k'(x - mu_e)` for comparison.
//!
//! Every block has a conjugate full conditional:
//! 1. the stacked coefficient vector `w = (beta, k)` is multivariate normal;
//! 2. each environment mean `mu_e` is multivariate normal (covariate
//!    likelihood + response likelihood through the correction block +
//!    empirical-Bayes shrinkage prior);
//! 3. `sigma_y^2` is inverse-gamma (the coefficient prior scales with it);
//! 4. the half-Cauchy shrinkage scale is sampled exactly through the
//!    two-level inverse-gamma auxiliary pair `(tau^2, phi)`;
//! 5. the diagonal scales of the mean prior are per-coordinate
//!    inverse-gamma.
//!
//! Chains own independent RNG streams (seed = base seed + chain index) and
//! may run concurrently; merging is a deterministic reduction by chain
//! index, so identical inputs give bit-identical output. Within a chain,
//! per-environment mean updates draw from streams keyed by environment id
//! and all cross-environment reductions run in environment-id order, which
//! makes the draws invariant (up to row order) under permutations of the
//! environment list.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::TrainingData;
use crate::draws::{ParamDraw, PosteriorSamples, SampleMeta};
use crate::error::{Error, Result};
use crate::prior::{MuCovariancePrior, MuPriorCenter, PriorSpec, SigmaYPrior, TauPrior};
use crate::stats::sample_inv_gamma;

/// Which regressor the correction coefficients multiply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodForm {
    /// `k' S_e^{-1} (x - mu_e)`: `k` is the invariant noise-covariate
    /// covariance, matching the predictive formula (default).
    PrecisionWeighted,
    /// `k' (x - mu_e)`: the raw centered regressor.
    RawCentered,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_kept: usize,
    pub base_seed: u64,
    pub likelihood_form: LikelihoodForm,
    /// Reserved for Metropolis sub-steps; the default sweep is fully
    /// conjugate and ignores it.
    pub metropolis_step_size: f64,
    /// Split R-hat above this value is flagged by the diagnostics table.
    pub rhat_warn_threshold: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_warmup: 1000,
            n_kept: 1000,
            base_seed: 17,
            likelihood_form: LikelihoodForm::PrecisionWeighted,
            metropolis_step_size: 0.25,
            rhat_warn_threshold: 1.01,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 {
            return Err(Error::Contract("n_chains must be >= 1".into()));
        }
        if self.n_kept < 1 {
            return Err(Error::Contract("n_kept must be >= 1".into()));
        }
        if !(self.rhat_warn_threshold > 1.0) {
            return Err(Error::Contract("rhat threshold must exceed 1".into()));
        }
        Ok(())
    }

    pub fn chain_seeds(&self) -> Vec<u64> {
        (0..self.n_chains)
            .map(|c| self.base_seed.wrapping_add(c as u64))
            .collect()
    }
}

/// Mutable state of one chain; exposed so validation harnesses can pin
/// blocks and exercise single conditionals.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// Stacked coefficients `(beta, k)`.
    pub w: DVector<f64>,
    /// Environment means, aligned with the training environments.
    pub mu: Vec<DVector<f64>>,
    pub sigma_y2: f64,
    pub tau2: f64,
    pub phi: f64,
    /// Diagonal scales of the mean prior (fixed-covariance mode keeps the
    /// fixed diagonal here).
    pub mu_scales: DVector<f64>,
}

/// Per-environment constants reused across sweeps.
struct EnvBlock {
    env_id: usize,
    n: usize,
    /// Inverse of the (possibly ridged) plug-in covariance.
    sigma_inv: DMatrix<f64>,
    /// Row sums used by the mean conditional.
    xbar: DVector<f64>,
    sum_x: DVector<f64>,
    sum_y: f64,
    /// `u_i` rows: the mu-independent part of the correction regressor.
    u: DMatrix<f64>,
    /// Gram pieces of the design, with `t_i = [1?, x_i]` fixed across
    /// sweeps and `c_i = u_i - v_e` the correction block:
    g_tu: DMatrix<f64>, // sum t_i u_i'
    g_uu: DMatrix<f64>, // sum u_i u_i'
    s_t: DVector<f64>,  // sum t_i
    s_u: DVector<f64>,  // sum u_i
    b_u: DVector<f64>,  // sum y_i u_i
    /// Gram of the fixed block and its response cross term.
    g_tt: DMatrix<f64>,
    b_t: DVector<f64>,
}

/// One Gibbs chain with a public step-level API.
pub struct GibbsChain<'a> {
    data: &'a TrainingData,
    prior: &'a PriorSpec,
    form: LikelihoodForm,
    state: ChainState,
    blocks: Vec<EnvBlock>,
    /// Environment list indices in env-id order.
    id_order: Vec<usize>,
    /// Current `v_e` (the mu-dependent part of the correction regressor).
    v: Vec<DVector<f64>>,
    mu_center: DVector<f64>,
    /// Inverse of the fixed mean-prior covariance, when in fixed mode.
    fixed_mu_prec: Option<DMatrix<f64>>,
    syy: f64,
    rng_global: ChaCha8Rng,
    rng_mu: Vec<ChaCha8Rng>,
    ridge_events: u64,
}

const TAU2_MIN: f64 = 1e-15;
const TAU2_MAX: f64 = 1e15;

impl<'a> GibbsChain<'a> {
    pub fn new(
        data: &'a TrainingData,
        prior: &'a PriorSpec,
        form: LikelihoodForm,
        seed: u64,
    ) -> Result<Self> {
        prior.validate(data.p)?;
        let p = data.p;
        let nb = p + usize::from(data.intercept);

        let mut blocks = Vec::with_capacity(data.e_count());
        for env in &data.environments {
            let n = env.n();
            let chol = env
                .sigma_hat
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Numerical(format!(
                    "environment {}: covariance not factorizable",
                    env.env_id
                )))?;
            let sigma_inv = chol.inverse();
            // u_i is sigma^{-1} x_i in the precision-weighted form, x_i raw.
            let u = match form {
                LikelihoodForm::PrecisionWeighted => &env.x * sigma_inv.transpose(),
                LikelihoodForm::RawCentered => env.x.clone(),
            };
            let mut t = DMatrix::zeros(n, nb);
            if data.intercept {
                t.column_mut(0).fill(1.0);
                t.columns_mut(1, p).copy_from(&env.x);
            } else {
                t.copy_from(&env.x);
            }
            let g_tt = t.transpose() * &t;
            let g_tu = t.transpose() * &u;
            let g_uu = u.transpose() * &u;
            let s_t = t.row_sum().transpose();
            let s_u = u.row_sum().transpose();
            let b_t = t.transpose() * &env.y;
            let b_u = u.transpose() * &env.y;
            blocks.push(EnvBlock {
                env_id: env.env_id,
                n,
                sigma_inv,
                xbar: env.mu_hat.clone(),
                sum_x: env.mu_hat.scale(n as f64),
                sum_y: env.y.sum(),
                u,
                g_tu,
                g_uu,
                s_t,
                s_u,
                b_u,
                g_tt,
                b_t,
            });
        }
        let id_order = TrainingData::id_sorted_indices(&data.environments);

        // Pooled response variance for initialization, reduced in id order.
        let (mut sy, mut syy) = (0.0, 0.0);
        for &i in &id_order {
            sy += blocks[i].sum_y;
            syy += data.environments[i].y.iter().map(|v| v * v).sum::<f64>();
        }
        let m = data.m as f64;
        let var_y = (syy / m - (sy / m) * (sy / m)).max(0.0);

        let mu_center = match &prior.mu_center {
            MuPriorCenter::GrandMean => data.grand_mu_hat.clone(),
            MuPriorCenter::Fixed(c) => c.clone(),
        };
        let (fixed_mu_prec, init_scales) = match &prior.mu_covariance {
            MuCovariancePrior::Fixed(m) => {
                let chol = m.clone().cholesky().ok_or_else(|| {
                    Error::Contract("fixed mean-prior covariance not positive definite".into())
                })?;
                (Some(chol.inverse()), m.diagonal())
            }
            MuCovariancePrior::DiagonalHierarchical { .. } => (None, DVector::from_element(p, 1.0)),
        };

        let tau2_init = match prior.tau {
            TauPrior::Fixed(t2) => t2,
            TauPrior::HalfCauchy => 1.0,
        };

        let state = ChainState {
            w: DVector::zeros(nb + p),
            mu: data.environments.iter().map(|e| e.mu_hat.clone()).collect(),
            sigma_y2: var_y.max(1e-8),
            tau2: tau2_init,
            phi: 1.0,
            mu_scales: init_scales,
        };

        let mut rng_global = ChaCha8Rng::seed_from_u64(seed);
        rng_global.set_stream(0);
        let rng_mu = data
            .environments
            .iter()
            .map(|e| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(1 + e.env_id as u64);
                r
            })
            .collect();

        let mut chain = Self {
            data,
            prior,
            form,
            state,
            blocks,
            id_order,
            v: Vec::new(),
            mu_center,
            fixed_mu_prec,
            syy,
            rng_global,
            rng_mu,
            ridge_events: 0,
        };
        chain.refresh_v();
        Ok(chain)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn set_state(&mut self, state: ChainState) -> Result<()> {
        let p = self.data.p;
        let nb = p + usize::from(self.data.intercept);
        if state.w.len() != nb + p
            || state.mu.len() != self.data.e_count()
            || state.mu.iter().any(|m| m.len() != p)
            || state.mu_scales.len() != p
        {
            return Err(Error::Contract("state dimensions do not match the data".into()));
        }
        if !(state.sigma_y2 > 0.0 && state.tau2 > 0.0 && state.phi > 0.0) {
            return Err(Error::Contract("scale parameters must be positive".into()));
        }
        self.state = state;
        self.refresh_v();
        Ok(())
    }

    pub fn ridge_events(&self) -> u64 {
        self.ridge_events
    }

    fn refresh_v(&mut self) {
        self.v = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| match self.form {
                LikelihoodForm::PrecisionWeighted => &b.sigma_inv * &self.state.mu[i],
                LikelihoodForm::RawCentered => self.state.mu[i].clone(),
            })
            .collect();
    }

    /// Correction-coefficient transform `a_e` used by the mean conditional.
    fn a_vec(&self, idx: usize) -> DVector<f64> {
        let p = self.data.p;
        let k = self.state.w.rows(self.nb(), p).into_owned();
        match self.form {
            LikelihoodForm::PrecisionWeighted => &self.blocks[idx].sigma_inv * k,
            LikelihoodForm::RawCentered => k,
        }
    }

    fn nb(&self) -> usize {
        self.data.p + usize::from(self.data.intercept)
    }

    fn dim_w(&self) -> usize {
        self.nb() + self.data.p
    }

    /// Assembles the design Gram `W'W` and cross term `W'Y` for the current
    /// environment means, reducing over environments in id order.
    fn assemble_gram(&self) -> (DMatrix<f64>, DVector<f64>) {
        let nb = self.nb();
        let p = self.data.p;
        let d = nb + p;
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for &i in &self.id_order {
            let blk = &self.blocks[i];
            let v = &self.v[i];
            // t-t block and t response term: constant in mu.
            a.view_mut((0, 0), (nb, nb)).add_assign_helper(&blk.g_tt);
            b.rows_mut(0, nb).zip_apply(&blk.b_t, |x, y| *x += y);
            // t-c block: g_tu - s_t v'
            let tc = &blk.g_tu - &blk.s_t * v.transpose();
            a.view_mut((0, nb), (nb, p)).add_assign_helper(&tc);
            // c-c block: g_uu - s_u v' - v s_u' + n v v'
            let cc = &blk.g_uu
                - &blk.s_u * v.transpose()
                - v * blk.s_u.transpose()
                + v * v.transpose() * blk.n as f64;
            a.view_mut((nb, nb), (p, p)).add_assign_helper(&cc);
            // c response term: b_u - sum_y v
            let bc = &blk.b_u - v.scale(blk.sum_y);
            b.rows_mut(nb, p).zip_apply(&bc, |x, y| *x += y);
        }
        // Mirror the upper-right block.
        for r in 0..nb {
            for c in 0..p {
                a[(nb + c, r)] = a[(r, nb + c)];
            }
        }
        (a, b)
    }

    /// Cholesky with the ridge fallback for singular conditional precisions.
    fn chol_with_ridge(&mut self, mut m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
        if let Some(c) = m.clone().cholesky() {
            return Ok(c);
        }
        let d = m.nrows();
        let trace: f64 = m.diagonal().sum();
        let mut ridge = if trace > 0.0 { 1e-8 * trace / d as f64 } else { 1e-8 };
        for _ in 0..8 {
            let mut m2 = m.clone();
            for j in 0..d {
                m2[(j, j)] += ridge;
            }
            if let Some(c) = m2.clone().cholesky() {
                self.ridge_events += 1;
                log::warn!("singular conditional precision in {what}; ridge {ridge:.3e} applied");
                return Ok(c);
            }
            ridge *= 10.0;
            m = m2;
        }
        Err(Error::Numerical(format!(
            "conditional precision for {what} singular even after ridge"
        )))
    }

    /// Block 1: joint draw of the stacked coefficients `w = (beta, k)` from
    /// the normal full conditional with precision `(W'W + I/tau^2)/sigma^2`.
    pub fn update_coefficients(&mut self) -> Result<()> {
        let d = self.dim_w();
        let (mut a, b) = self.assemble_gram();
        let prior_prec = 1.0 / self.state.tau2;
        for j in 0..d {
            a[(j, j)] += prior_prec;
        }
        let chol = self.chol_with_ridge(a, "coefficient block")?;
        let mean = chol.solve(&b);
        let z = DVector::from_fn(d, |_, _| self.rng_global.sample(StandardNormal));
        let noise = chol
            .l()
            .tr_solve_lower_triangular(&z)
            .ok_or_else(|| Error::Numerical("triangular solve failed in coefficient draw".into()))?;
        self.state.w = mean + noise.scale(self.state.sigma_y2.sqrt());
        Ok(())
    }

    /// Block 2: one environment mean from its normal full conditional.
    /// Three quadratic pieces: the covariate likelihood `N(mu_e, S_e)`
    /// (precision `n_e S_e^{-1}`), the response likelihood through the
    /// correction block, and the shrinkage prior.
    pub fn update_env_mean(&mut self, idx: usize) -> Result<()> {
        let p = self.data.p;
        let nb = self.nb();
        let blk = &self.blocks[idx];
        let n = blk.n as f64;
        let sigma2 = self.state.sigma_y2;
        let a_e = self.a_vec(idx);

        // Residual sum with the mean's contribution removed:
        // t_i = y_i - beta'[1,x_i] - a_e'x_i, so the residual is t_i + a_e'mu.
        let beta = self.state.w.rows(0, nb);
        let mut beta_dot_sum = 0.0;
        if self.data.intercept {
            beta_dot_sum += beta[0] * n;
            for j in 0..p {
                beta_dot_sum += beta[1 + j] * blk.sum_x[j];
            }
        } else {
            for j in 0..p {
                beta_dot_sum += beta[j] * blk.sum_x[j];
            }
        }
        let sum_t = blk.sum_y - beta_dot_sum - a_e.dot(&blk.sum_x);

        let mut prec = blk.sigma_inv.scale(n);
        prec += &a_e * a_e.transpose() * (n / sigma2);
        let mut lin = &blk.sigma_inv * &blk.xbar * n;
        lin -= a_e.scale(sum_t / sigma2);
        match &self.fixed_mu_prec {
            Some(pm) => {
                prec += pm;
                lin += pm * &self.mu_center;
            }
            None => {
                for j in 0..p {
                    let s = self.state.mu_scales[j];
                    prec[(j, j)] += 1.0 / s;
                    lin[j] += self.mu_center[j] / s;
                }
            }
        }

        let chol = self.chol_with_ridge(prec, "environment mean")?;
        let mean = chol.solve(&lin);
        let z = DVector::from_fn(p, |_, _| self.rng_mu[idx].sample(StandardNormal));
        let noise = chol
            .l()
            .tr_solve_lower_triangular(&z)
            .ok_or_else(|| Error::Numerical("triangular solve failed in mean draw".into()))?;
        self.state.mu[idx] = mean + noise;
        self.v[idx] = match self.form {
            LikelihoodForm::PrecisionWeighted => &self.blocks[idx].sigma_inv * &self.state.mu[idx],
            LikelihoodForm::RawCentered => self.state.mu[idx].clone(),
        };
        Ok(())
    }

    /// All environment means, in env-id order.
    pub fn update_env_means(&mut self) -> Result<()> {
        for i in self.id_order.clone() {
            self.update_env_mean(i)?;
        }
        Ok(())
    }

    /// Block 3: noise variance from
    /// `IG(a + (m + dim w)/2, b + RSS/2 + |w|^2/(2 tau^2))`;
    /// the improper `1/sigma^2` prior corresponds to `a = b = 0`.
    pub fn update_noise_variance(&mut self) -> Result<()> {
        let (a, b) = self.assemble_gram();
        let w = &self.state.w;
        let rss = (self.syy - 2.0 * w.dot(&b) + (w.transpose() * &a * w)[(0, 0)]).max(0.0);
        let (a0, b0) = match self.prior.sigma_y {
            SigmaYPrior::Jeffreys => (0.0, 0.0),
            SigmaYPrior::InverseGamma { shape, rate } => (shape, rate),
        };
        let shape = a0 + (self.data.m as f64 + self.dim_w() as f64) / 2.0;
        let rate = b0 + rss / 2.0 + w.norm_squared() / (2.0 * self.state.tau2);
        self.state.sigma_y2 = sample_inv_gamma(&mut self.rng_global, shape, rate)?.max(1e-300);
        Ok(())
    }

    /// Block 4: half-Cauchy shrinkage scale via its exact inverse-gamma
    /// auxiliary pair. No-op when `tau` is fixed.
    pub fn update_shrinkage(&mut self) -> Result<()> {
        if matches!(self.prior.tau, TauPrior::Fixed(_)) {
            return Ok(());
        }
        let d = self.dim_w() as f64;
        let rate = self.state.w.norm_squared() / (2.0 * self.state.sigma_y2) + 1.0 / self.state.phi;
        let tau2 = sample_inv_gamma(&mut self.rng_global, (d + 1.0) / 2.0, rate)?;
        self.state.tau2 = tau2.clamp(TAU2_MIN, TAU2_MAX);
        let phi = sample_inv_gamma(&mut self.rng_global, 1.0, 1.0 + 1.0 / self.state.tau2)?;
        self.state.phi = phi.max(f64::MIN_POSITIVE);
        Ok(())
    }

    /// Block 5: per-coordinate scales of the diagonal mean prior. No-op in
    /// fixed-covariance mode.
    pub fn update_mu_scales(&mut self) -> Result<()> {
        let MuCovariancePrior::DiagonalHierarchical { shape, rate } = self.prior.mu_covariance
        else {
            return Ok(());
        };
        let e = self.data.e_count() as f64;
        for j in 0..self.data.p {
            let mut ss = 0.0;
            for &i in &self.id_order {
                let d = self.state.mu[i][j] - self.mu_center[j];
                ss += d * d;
            }
            let s = sample_inv_gamma(&mut self.rng_global, shape + e / 2.0, rate + ss / 2.0)?;
            self.state.mu_scales[j] = s.clamp(TAU2_MIN, TAU2_MAX);
        }
        Ok(())
    }

    /// One full sweep over blocks 1-5.
    pub fn sweep(&mut self) -> Result<()> {
        self.update_coefficients()?;
        self.update_env_means()?;
        self.update_noise_variance()?;
        self.update_shrinkage()?;
        self.update_mu_scales()
    }

    /// Snapshot of the current state as a draw.
    pub fn state_draw(&self) -> ParamDraw {
        let nb = self.nb();
        let p = self.data.p;
        ParamDraw {
            beta: self.state.w.rows(0, nb).into_owned(),
            k: self.state.w.rows(nb, p).into_owned(),
            mu: self.state.mu.clone(),
            sigma_y2: self.state.sigma_y2,
            tau2: self.state.tau2,
            phi: self.state.phi,
            mu_scales: self.state.mu_scales.clone(),
        }
    }

    /// Verifies the log density is finite at the current state, naming the
    /// offending block otherwise.
    pub fn check_log_density(&self) -> Result<()> {
        use crate::stats::{log_inv_gamma_pdf, log_normal_pdf};
        let nb = self.nb();
        let p = self.data.p;
        let st = &self.state;

        let mut y_lik = 0.0;
        let mut x_lik = 0.0;
        for (i, env) in self.data.environments.iter().enumerate() {
            let blk = &self.blocks[i];
            let a_e = self.a_vec(i);
            let beta = st.w.rows(0, nb);
            let chol = env.sigma_hat.clone().cholesky().unwrap();
            let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            for r in 0..env.n() {
                let x = env.x.row(r).transpose();
                let mut f = if self.data.intercept {
                    beta[0] + beta.rows(1, p).dot(&x)
                } else {
                    beta.dot(&x)
                };
                f += a_e.dot(&(&x - &st.mu[i]));
                y_lik += log_normal_pdf(env.y[r], f, st.sigma_y2);
                let c = &x - &st.mu[i];
                let q = (c.transpose() * &blk.sigma_inv * &c)[(0, 0)];
                x_lik += -0.5 * (q + logdet + p as f64 * core::f64::consts::TAU.ln());
            }
        }
        let mut w_prior = 0.0;
        for j in 0..st.w.len() {
            w_prior += log_normal_pdf(st.w[j], 0.0, st.tau2 * st.sigma_y2);
        }
        let mut mu_prior = 0.0;
        for i in 0..self.data.e_count() {
            match &self.fixed_mu_prec {
                Some(pm) => {
                    let c = &st.mu[i] - &self.mu_center;
                    mu_prior += -0.5 * (c.transpose() * pm * &c)[(0, 0)];
                }
                None => {
                    for j in 0..p {
                        mu_prior += log_normal_pdf(st.mu[i][j], self.mu_center[j], st.mu_scales[j]);
                    }
                }
            }
        }
        let mut scale_prior = match self.prior.sigma_y {
            SigmaYPrior::Jeffreys => -st.sigma_y2.ln(),
            SigmaYPrior::InverseGamma { shape, rate } => {
                log_inv_gamma_pdf(st.sigma_y2, shape, rate)
            }
        };
        if matches!(self.prior.tau, TauPrior::HalfCauchy) {
            scale_prior += log_inv_gamma_pdf(st.tau2, 0.5, 1.0 / st.phi)
                + log_inv_gamma_pdf(st.phi, 0.5, 1.0);
        }
        if let MuCovariancePrior::DiagonalHierarchical { shape, rate } = self.prior.mu_covariance {
            for j in 0..p {
                scale_prior += log_inv_gamma_pdf(st.mu_scales[j], shape, rate);
            }
        }

        for (val, name) in [
            (y_lik, "response likelihood"),
            (x_lik, "covariate likelihood"),
            (w_prior, "coefficient prior"),
            (mu_prior, "environment-mean prior"),
            (scale_prior, "scale priors"),
        ] {
            if !val.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite log-density at initialization in {name}"
                )));
            }
        }
        Ok(())
    }
}

/// Helper so block adds read cleanly above.
trait AddAssignHelper {
    fn add_assign_helper(&mut self, other: &DMatrix<f64>);
}

impl AddAssignHelper for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_helper(&mut self, other: &DMatrix<f64>) {
        self.zip_apply(other, |x, y| *x += y);
    }
}

/// Runs the sampler: `n_chains` independent chains of
/// `n_warmup + n_kept` sweeps each, merged by chain index.
pub fn fit(data: &TrainingData, prior: &PriorSpec, cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    prior.validate(data.p)?;
    if data.e_count() < data.p + usize::from(data.intercept) {
        log::warn!(
            "{} environment(s) for {} coefficient(s): weak identifiability; \
             the prior will dominate poorly separated directions",
            data.e_count(),
            data.p + usize::from(data.intercept)
        );
    }
    let seeds = cfg.chain_seeds();
    let runs: Result<Vec<(Vec<ParamDraw>, u64)>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut chain = GibbsChain::new(data, prior, cfg.likelihood_form, seed)?;
            chain.check_log_density()?;
            for _ in 0..cfg.n_warmup {
                chain.sweep()?;
            }
            let mut draws = Vec::with_capacity(cfg.n_kept);
            for _ in 0..cfg.n_kept {
                chain.sweep()?;
                draws.push(chain.state_draw());
            }
            Ok((draws, chain.ridge_events()))
        })
        .collect();
    let runs = runs?;
    let ridge_events = runs.iter().map(|r| r.1).sum();
    let chains: Vec<Vec<ParamDraw>> = runs.into_iter().map(|r| r.0).collect();
    let meta = SampleMeta {
        p: data.p,
        intercept: data.intercept,
        n_chains: cfg.n_chains,
        n_warmup: cfg.n_warmup,
        n_kept: cfg.n_kept,
        base_seed: cfg.base_seed,
        chain_seeds: seeds,
        env_ids: data.environments.iter().map(|e| e.env_id).collect(),
        env_ns: data.environments.iter().map(|e| e.n()).collect(),
        sigma_hats: data
            .environments
            .iter()
            .map(|e| e.sigma_hat.as_slice().to_vec())
            .collect(),
        ridge_events,
    };
    PosteriorSamples::new(chains, meta)
}

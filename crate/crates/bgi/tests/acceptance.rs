//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line with the measured quantities.
//!
//! Every tolerance is pinned in code; seeds are fixed so the suite is
//! deterministic end to end.

use bgi::baselines::{iv_fit, ols_fit, ols_predict_interval, tsls};
use bgi::causal::select_parents;
use bgi::coverage::{run_coverage_grid, run_seed, CoverageCell, CoverageConfig};
use bgi::data::{EnvironmentData, TrainingData};
use bgi::predictive::{credible_interval, empirical_coverage, posterior_predictive};
use bgi::sampler::{fit, ChainState, GibbsChain, LikelihoodForm, SamplerConfig};
use bgi::simgen::{gen_multi_source, gen_single_source, MultiSourceConfig, SingleSourceConfig};
use bgi::sweep::{identifiability_sweep, SweepScenario};
use bgi::{MuCovariancePrior, MuPriorCenter, PriorSpec, SigmaYPrior, TauPrior};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Single-source parameter recovery
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_single_source_parameter_recovery() {
    let runs: Vec<(bool, bool, f64)> = (0..20u64)
        .into_par_iter()
        .map(|r| {
            let seed = 300 + r;
            let ds = gen_single_source(&SingleSourceConfig {
                seed,
                ..SingleSourceConfig::default()
            })
            .unwrap();
            let t0 = std::time::Instant::now();
            let cfg = SamplerConfig {
                base_seed: seed,
                ..SamplerConfig::default()
            };
            let samples = fit(&ds.train, &PriorSpec::default(), &cfg).unwrap();
            let elapsed = t0.elapsed().as_secs_f64();
            let beta = samples.beta_posterior_mean()[0];
            let k = samples.k_posterior_mean()[0];
            let ols = ols_fit(&ds.train, false).unwrap().coefficients[0];
            (
                (0.95..=1.05).contains(&beta) && (-0.30..=-0.20).contains(&k),
                (0.90..=0.97).contains(&ols),
                elapsed,
            )
        })
        .collect();
    let bgi_ok = runs.iter().filter(|r| r.0).count();
    let ols_ok = runs.iter().filter(|r| r.1).count();
    let max_time = runs.iter().map(|r| r.2).fold(0.0, f64::max);
    let pass = bgi_ok >= 18 && ols_ok >= 18 && max_time <= 30.0;
    report(
        "1 (single-source parameter recovery)",
        pass,
        &format!(
            "BGI in-band {bgi_ok}/20 (need >=18), OLS in-band {ols_ok}/20 (need >=18), \
             slowest fit {max_time:.2}s (budget 30s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Predictive calibration under shift
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_predictive_calibration_under_shift() {
    let runs: Vec<(f64, f64, f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|r| {
            let seed = 300 + r;
            let ds = gen_single_source(&SingleSourceConfig {
                seed,
                ..SingleSourceConfig::default()
            })
            .unwrap();
            let cfg = SamplerConfig {
                base_seed: seed,
                ..SamplerConfig::default()
            };
            let samples = fit(&ds.train, &PriorSpec::default(), &cfg).unwrap();
            let pred = posterior_predictive(&samples, &ds.test).unwrap();
            let intervals = credible_interval(&pred, 0.05).unwrap();
            let cov = empirical_coverage(&intervals, &ds.test_responses).unwrap();
            let mae = |p: &DVector<f64>| -> f64 {
                p.iter()
                    .zip(ds.truth.test_conditional_means.iter())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / p.len() as f64
            };
            let bgi_mae = mae(&pred.point_means());
            let ols = ols_fit(&ds.train, false).unwrap();
            let ols_mae = mae(&ols.predict(&ds.test.x0).unwrap());
            let iv = iv_fit(&ds.train, false).unwrap();
            let iv_mae = mae(&iv.predict(&ds.test.x0).unwrap());
            (cov, bgi_mae, ols_mae, iv_mae)
        })
        .collect();
    let mean = |f: &dyn Fn(&(f64, f64, f64, f64)) -> f64| -> f64 {
        runs.iter().map(f).sum::<f64>() / runs.len() as f64
    };
    let cov = mean(&|r| r.0);
    let bgi_mae = mean(&|r| r.1);
    let ols_mae = mean(&|r| r.2);
    let iv_mae = mean(&|r| r.3);
    let pass = (0.92..=1.00).contains(&cov) && ols_mae > 5.0 * bgi_mae && iv_mae > 5.0 * bgi_mae;
    report(
        "2 (predictive calibration under shift)",
        pass,
        &format!(
            "mean 95% coverage {cov:.3} (need [0.92, 1.00]); conditional-mean MAE: \
             BGI {bgi_mae:.3}, OLS {ols_mae:.3} ({:.1}x), IV {iv_mae:.3} ({:.1}x) (need >5x)",
            ols_mae / bgi_mae,
            iv_mae / bgi_mae
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Coverage-table reproduction at desk scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_coverage_table_reproduction() {
    let t0 = std::time::Instant::now();
    let cfg = CoverageConfig {
        cells: vec![
            CoverageCell { n: 200, p: 2 },
            CoverageCell { n: 1000, p: 2 },
            CoverageCell { n: 1000, p: 5 },
        ],
        runs: 24,
        alpha: 0.05,
        base_seed: 2024,
        sampler: SamplerConfig::default(),
        prior: PriorSpec::default(),
    };
    let grid = run_coverage_grid(&cfg);
    let reference = [(200usize, 2usize, 0.88, 0.96), (1000, 2, 0.89, 0.95), (1000, 5, 0.88, 0.95)];
    let mut cells_ok = true;
    let mut detail = String::new();
    for ((n, p, ols_ref, bgi_ref), cell) in reference.iter().zip(&grid.cells) {
        assert_eq!((cell.n, cell.p), (*n, *p));
        assert_eq!(cell.failed_runs, 0, "cell ({n},{p}) had failed runs");
        let ols = cell.ols_mean_coverage.unwrap();
        let bgi = cell.bgi_mean_coverage.unwrap();
        let ok = (bgi - bgi_ref).abs() <= 0.05 && (ols - ols_ref).abs() <= 0.06 && bgi >= ols;
        cells_ok &= ok;
        detail.push_str(&format!("({n},{p}): ols {ols:.3}/{ols_ref} bgi {bgi:.3}/{bgi_ref}; "));
    }

    // Dimension-trend substitute for the cells not reproduced at full
    // scale: confounding dimension scales with p here, which is what makes
    // the baseline degrade as the dimension grows.
    let trend: Vec<(usize, f64, f64)> = [2usize, 5, 10]
        .into_iter()
        .map(|p| {
            let per_run: Vec<(f64, f64)> = (0..24u64)
                .into_par_iter()
                .map(|r| {
                    let seed = run_seed(777, 1000, p, r as usize);
                    let mut gcfg = MultiSourceConfig::new(1000, p, seed);
                    gcfg.q = p;
                    let ds = gen_multi_source(&gcfg).unwrap();
                    let scfg = SamplerConfig {
                        base_seed: seed,
                        ..SamplerConfig::default()
                    };
                    let samples = fit(&ds.train, &PriorSpec::default(), &scfg).unwrap();
                    let pred = posterior_predictive(&samples, &ds.test).unwrap();
                    let iv = credible_interval(&pred, 0.05).unwrap();
                    let bgi_cov = empirical_coverage(&iv, &ds.test_responses).unwrap();
                    let ols = ols_fit(&ds.train, true).unwrap();
                    let oiv = ols_predict_interval(&ols, &ds.test.x0, 0.05).unwrap();
                    let ols_cov = empirical_coverage(&oiv, &ds.test_responses).unwrap();
                    (bgi_cov, ols_cov)
                })
                .collect();
            let bgi = per_run.iter().map(|r| r.0).sum::<f64>() / 24.0;
            let ols = per_run.iter().map(|r| r.1).sum::<f64>() / 24.0;
            (p, bgi, ols)
        })
        .collect();
    let bgi_span = trend.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max)
        - trend.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    let ols_span = trend.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max)
        - trend.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
    let elapsed = t0.elapsed().as_secs_f64();
    let trend_ok = bgi_span <= 0.05 && ols_span >= 0.03;
    let pass = cells_ok && trend_ok && elapsed <= 7200.0;
    report(
        "3 (coverage table reproduction)",
        pass,
        &format!(
            "{detail}trend over p=2/5/10 (q=p): BGI span {bgi_span:.3} (<=0.05), \
             OLS span {ols_span:.3} (>=0.03); total {elapsed:.0}s (budget 7200s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Weak-identifiability sweep
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_weak_identifiability_sweep() {
    let prior = PriorSpec {
        tau: TauPrior::Fixed(1.0),
        ..PriorSpec::default()
    };
    let cfg = SamplerConfig {
        base_seed: 7,
        ..SamplerConfig::default()
    };
    let scenario = SweepScenario {
        seed: 7,
        ..SweepScenario::default()
    };
    let grid = [0.0, 0.1, 0.5, 1.0, 2.0, 10.0];
    let table = identifiability_sweep(&grid, &scenario, &prior, &cfg).unwrap();
    let prior_sd = table.prior_sd.unwrap();
    let sds: Vec<f64> = table.rows.iter().map(|r| r.beta_posterior_sd).collect();
    let monotone = sds.windows(2).all(|w| w[1] <= 1.05 * w[0]);
    let ends_ok = sds[0] >= 0.5 * prior_sd && *sds.last().unwrap() <= 0.1 * prior_sd;

    // Reference for the fully degenerate point: the analytic slope SD when
    // the correction regressor is an exact copy of the slope regressor, at
    // the fixed scales tau^2 = sigma^2 = 1: Var = (S+1)/(2S+1), S = sum x^2.
    let data = bgi::sweep::sweep_dataset(&scenario, 0.0, scenario.seed).unwrap();
    let s: f64 = data.environments[0].x.iter().map(|x| x * x).sum();
    let reference_sd = ((s + 1.0) / (2.0 * s + 1.0)).sqrt();
    let ref_ok = (sds[0] - reference_sd).abs() <= 0.15 * reference_sd;
    let pass = monotone && ends_ok && ref_ok;
    report(
        "4 (weak-identifiability sweep)",
        pass,
        &format!(
            "posterior SDs {:?} (prior SD {prior_sd}); monotone(5% slack) {monotone}; \
             lambda=0 SD {:.3} vs detached reference {reference_sd:.3} (15%)",
            sds.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            sds[0]
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Sampler correctness: conditionals vs quadrature oracles, joint
//    (Geweke-style) check, determinism
// ---------------------------------------------------------------------------

mod oracle {
    /// Trapezoid-weight moments of a 1-D density given on a uniform grid.
    /// Returns moments of `g(x)` for each requested transform.
    pub fn grid_moments_1d(
        logf: impl Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        n: usize,
        transforms: &[&dyn Fn(f64) -> f64],
    ) -> Vec<(f64, f64)> {
        let h = (hi - lo) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
        let logs: Vec<f64> = xs.iter().map(|&x| logf(x)).collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
        weights[0] *= 0.5;
        weights[n - 1] *= 0.5;
        let z: f64 = weights.iter().sum();
        transforms
            .iter()
            .map(|g| {
                let mean = xs
                    .iter()
                    .zip(&weights)
                    .map(|(&x, &w)| g(x) * w)
                    .sum::<f64>()
                    / z;
                let var = xs
                    .iter()
                    .zip(&weights)
                    .map(|(&x, &w)| {
                        let d = g(x) - mean;
                        d * d * w
                    })
                    .sum::<f64>()
                    / z;
                (mean, var)
            })
            .collect()
    }

    /// Means, variances, and covariance of a 2-D density on a uniform grid.
    pub fn grid_moments_2d(
        logf: impl Fn(f64, f64) -> f64,
        xr: (f64, f64),
        yr: (f64, f64),
        n: usize,
    ) -> (f64, f64, f64, f64, f64) {
        let hx = (xr.1 - xr.0) / (n - 1) as f64;
        let hy = (yr.1 - yr.0) / (n - 1) as f64;
        let mut vals = Vec::with_capacity(n * n);
        let mut maxv = f64::NEG_INFINITY;
        for i in 0..n {
            let x = xr.0 + i as f64 * hx;
            for j in 0..n {
                let y = yr.0 + j as f64 * hy;
                let l = logf(x, y);
                if l > maxv {
                    maxv = l;
                }
                vals.push(l);
            }
        }
        let (mut z, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let x = xr.0 + i as f64 * hx;
            for j in 0..n {
                let y = yr.0 + j as f64 * hy;
                let mut w = (vals[i * n + j] - maxv).exp();
                if i == 0 || i == n - 1 {
                    w *= 0.5;
                }
                if j == 0 || j == n - 1 {
                    w *= 0.5;
                }
                z += w;
                sx += x * w;
                sy += y * w;
            }
        }
        let (mx, my) = (sx / z, sy / z);
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let x = xr.0 + i as f64 * hx;
            for j in 0..n {
                let y = yr.0 + j as f64 * hy;
                let mut w = (vals[i * n + j] - maxv).exp();
                if i == 0 || i == n - 1 {
                    w *= 0.5;
                }
                if j == 0 || j == n - 1 {
                    w *= 0.5;
                }
                vx += (x - mx) * (x - mx) * w;
                vy += (y - my) * (y - my) * w;
                cxy += (x - mx) * (y - my) * w;
            }
        }
        (mx, my, vx / z, vy / z, cxy / z)
    }

    pub fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
        -0.5 * ((x - mean) * (x - mean) / var + var.ln())
    }

    pub fn log_inv_gamma(x: f64, shape: f64, rate: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -(shape + 1.0) * x.ln() - rate / x
    }
}

/// Two-environment single-covariate dataset and a pinned state, shared by
/// the conditional checks.
fn conditional_fixture() -> (TrainingData, ChainState) {
    let ds = gen_multi_source(&MultiSourceConfig::new(40, 1, 3)).unwrap();
    let state = ChainState {
        w: DVector::from_vec(vec![0.3, 0.9, -0.2]),
        mu: ds.train.environments.iter().map(|e| e.mu_hat.clone()).collect(),
        sigma_y2: 1.2,
        tau2: 0.8,
        phi: 1.5,
        mu_scales: DVector::from_vec(vec![0.4]),
    };
    (ds.train, state)
}

#[test]
fn criterion_5a_coefficient_conditional_matches_quadrature() {
    // Tiny single-environment dataset, nuisances pinned at the generator
    // truth; the joint (slope, correction) conditional against a dense
    // 2-D grid.
    let ds = gen_single_source(&SingleSourceConfig {
        n1: 20,
        seed: 77,
        ..SingleSourceConfig::default()
    })
    .unwrap();
    let env = &ds.train.environments[0];
    let sigma_hat = env.sigma_hat[(0, 0)];
    let mu_true = 2.0;
    let sigma2 = ds.truth.noise_var - ds.truth.k * ds.truth.k / ds.truth.x_var;
    let tau2 = 1.0;

    let prior = PriorSpec::default();
    let mut chain = GibbsChain::new(&ds.train, &prior, LikelihoodForm::PrecisionWeighted, 5).unwrap();
    let mut st = chain.state().clone();
    st.mu = vec![DVector::from_vec(vec![mu_true])];
    st.sigma_y2 = sigma2;
    st.tau2 = tau2;
    chain.set_state(st).unwrap();

    let n_draws = 100_000;
    let mut beta_draws = Vec::with_capacity(n_draws);
    let mut k_draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        chain.update_coefficients().unwrap();
        beta_draws.push(chain.state().w[0]);
        k_draws.push(chain.state().w[1]);
    }

    let xs: Vec<f64> = (0..env.n()).map(|i| env.x[(i, 0)]).collect();
    let ys: Vec<f64> = (0..env.n()).map(|i| env.y[i]).collect();
    let logf = |beta: f64, k: f64| -> f64 {
        let mut acc = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let f = beta * x + k * (x - mu_true) / sigma_hat;
            acc += oracle::log_normal(*y, f, sigma2);
        }
        acc + oracle::log_normal(beta, 0.0, tau2 * sigma2)
            + oracle::log_normal(k, 0.0, tau2 * sigma2)
    };
    let (mb, mk, vb, vk, cbk) = oracle::grid_moments_2d(logf, (-5.0, 5.0), (-5.0, 5.0), 400);

    let (eb, evb) = bgi::stats::mean_and_var(&beta_draws);
    let (ek, evk) = bgi::stats::mean_and_var(&k_draws);
    let ecbk = beta_draws
        .iter()
        .zip(&k_draws)
        .map(|(b, k)| (b - eb) * (k - ek))
        .sum::<f64>()
        / (n_draws as f64 - 1.0);

    let mean_ok = (eb - mb).abs() <= 0.02 && (ek - mk).abs() <= 0.02;
    let cov_ok = (evb - vb).abs() <= 0.05 * vb
        && (evk - vk).abs() <= 0.05 * vk
        && (ecbk - cbk).abs() <= 0.05 * cbk.abs();
    report(
        "5a (coefficient conditional vs 2-D quadrature)",
        mean_ok && cov_ok,
        &format!(
            "means ({eb:.4}, {ek:.4}) vs grid ({mb:.4}, {mk:.4}); \
             vars ({evb:.4}, {evk:.4}) vs ({vb:.4}, {vk:.4}); cov {ecbk:.4} vs {cbk:.4}"
        ),
    );
}

#[test]
fn criterion_5b_mean_conditional_matches_quadrature() {
    let (train, state) = conditional_fixture();
    let prior = PriorSpec {
        mu_center: MuPriorCenter::Fixed(DVector::from_vec(vec![0.1])),
        ..PriorSpec::default()
    };
    let mut chain = GibbsChain::new(&train, &prior, LikelihoodForm::PrecisionWeighted, 11).unwrap();
    chain.set_state(state.clone()).unwrap();

    let n_draws = 100_000;
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        chain.update_env_mean(0).unwrap();
        draws.push(chain.state().mu[0][0]);
    }

    let env = &train.environments[0];
    let sigma_hat = env.sigma_hat[(0, 0)];
    let xs: Vec<f64> = (0..env.n()).map(|i| env.x[(i, 0)]).collect();
    let ys: Vec<f64> = (0..env.n()).map(|i| env.y[i]).collect();
    let (b0, beta, k) = (state.w[0], state.w[1], state.w[2]);
    let logf = |mu: f64| -> f64 {
        let mut acc = oracle::log_normal(mu, 0.1, state.mu_scales[0]);
        for (x, y) in xs.iter().zip(&ys) {
            acc += oracle::log_normal(*x, mu, sigma_hat);
            let f = b0 + beta * x + k * (x - mu) / sigma_hat;
            acc += oracle::log_normal(*y, f, state.sigma_y2);
        }
        acc
    };
    let center = env.mu_hat[0];
    let width = 12.0 * (sigma_hat / env.n() as f64).sqrt();
    let m = oracle::grid_moments_1d(logf, center - width, center + width, 4001, &[&|x| x]);
    let (om, ov) = m[0];
    let (em, ev) = bgi::stats::mean_and_var(&draws);
    let se_mean = (ov / n_draws as f64).sqrt();
    let mean_ok = (em - om).abs() <= 3.0 * se_mean + 1e-6;
    let var_ok = (ev - ov).abs() <= ov * (3.0 * (2.0 / n_draws as f64).sqrt() + 0.002);
    report(
        "5b (environment-mean conditional vs quadrature)",
        mean_ok && var_ok,
        &format!("mean {em:.5} vs {om:.5} (3 SE {:.5}); var {ev:.6} vs {ov:.6}", 3.0 * se_mean),
    );
}

#[test]
fn criterion_5c_noise_variance_conditional_matches_quadrature() {
    let (train, state) = conditional_fixture();
    let prior = PriorSpec::default(); // improper 1/sigma^2
    let mut chain = GibbsChain::new(&train, &prior, LikelihoodForm::PrecisionWeighted, 13).unwrap();
    chain.set_state(state.clone()).unwrap();

    let n_draws = 100_000;
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        chain.update_noise_variance().unwrap();
        draws.push(chain.state().sigma_y2);
    }

    let (b0, beta, k) = (state.w[0], state.w[1], state.w[2]);
    let mut residuals = Vec::new();
    for (idx, env) in train.environments.iter().enumerate() {
        let sigma_hat = env.sigma_hat[(0, 0)];
        let mu = state.mu[idx][0];
        for i in 0..env.n() {
            let x = env.x[(i, 0)];
            let f = b0 + beta * x + k * (x - mu) / sigma_hat;
            residuals.push(env.y[i] - f);
        }
    }
    let logf_log = |t: f64| -> f64 {
        // density over log(sigma^2): jacobian adds +t
        let s2 = t.exp();
        let mut acc = -(s2.ln()); // improper prior 1/sigma^2
        for r in &residuals {
            acc += oracle::log_normal(*r, 0.0, s2);
        }
        for j in 0..state.w.len() {
            acc += oracle::log_normal(state.w[j], 0.0, state.tau2 * s2);
        }
        acc + t
    };
    let m = oracle::grid_moments_1d(
        |t| logf_log(t),
        (0.2f64).ln() - 3.0,
        (5.0f64).ln() + 3.0,
        4001,
        &[&|t: f64| t.exp()],
    );
    let (om, ov) = m[0];
    let (em, ev) = bgi::stats::mean_and_var(&draws);
    let se_mean = (ov / n_draws as f64).sqrt();
    let mean_ok = (em - om).abs() <= 3.0 * se_mean + 1e-6;
    let var_ok = (ev - ov).abs() <= ov * (3.0 * (2.0 / n_draws as f64).sqrt() + 0.005);
    report(
        "5c (noise-variance conditional vs quadrature)",
        mean_ok && var_ok,
        &format!("mean {em:.5} vs {om:.5}; var {ev:.6} vs {ov:.6}"),
    );
}

#[test]
fn criterion_5d_shrinkage_conditionals_match_quadrature() {
    let (train, state) = conditional_fixture();
    let prior = PriorSpec::default(); // half-Cauchy tau
    let mut chain = GibbsChain::new(&train, &prior, LikelihoodForm::PrecisionWeighted, 17).unwrap();

    let n_draws = 100_000;
    let mut tau_draws = Vec::with_capacity(n_draws);
    let mut inv_phi_draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        chain.set_state(state.clone()).unwrap();
        chain.update_shrinkage().unwrap();
        tau_draws.push(chain.state().tau2);
        inv_phi_draws.push(1.0 / chain.state().phi);
    }

    // tau^2 | phi, w, sigma^2 on the inverse scale (its direct moments are
    // heavy-tailed).
    let logf_tau = |t: f64| -> f64 {
        let tau2 = t.exp();
        let mut acc = 0.0;
        for j in 0..state.w.len() {
            acc += oracle::log_normal(state.w[j], 0.0, tau2 * state.sigma_y2);
        }
        acc + oracle::log_inv_gamma(tau2, 0.5, 1.0 / state.phi) + t
    };
    let lo = (1e-4f64).ln();
    let hi = (1e6f64).ln();
    let m = oracle::grid_moments_1d(logf_tau, lo, hi, 8001, &[&|t: f64| (-t).exp()]);
    let (om_inv, ov_inv) = m[0];
    let inv_tau: Vec<f64> = tau_draws.iter().map(|t| 1.0 / t).collect();
    let (em_inv, ev_inv) = bgi::stats::mean_and_var(&inv_tau);
    let se = (ov_inv / n_draws as f64).sqrt();
    let tau_ok = (em_inv - om_inv).abs() <= 3.0 * se + 1e-8
        && (ev_inv - ov_inv).abs() <= ov_inv * (3.0 * (2.0 / n_draws as f64).sqrt() + 0.005);

    // E[1/phi] marginalized over the tau^2 draw of the same sweep step:
    // 1/phi | tau^2 ~ Gamma(1, 1 + 1/tau^2), so E[1/phi] integrates
    // 1/(1 + 1/tau^2) under the tau^2 conditional.
    let m2 = oracle::grid_moments_1d(logf_tau, lo, hi, 8001, &[&|t: f64| {
        let tau2: f64 = t.exp();
        1.0 / (1.0 + 1.0 / tau2)
    }]);
    let (om_phi, _) = m2[0];
    let (em_phi, ev_phi) = bgi::stats::mean_and_var(&inv_phi_draws);
    let se_phi = (ev_phi / n_draws as f64).sqrt();
    let phi_ok = (em_phi - om_phi).abs() <= 3.0 * se_phi + 1e-6;
    report(
        "5d (shrinkage-scale conditionals vs quadrature)",
        tau_ok && phi_ok,
        &format!(
            "E[1/tau^2] {em_inv:.5} vs {om_inv:.5}; E[1/phi] {em_phi:.5} vs {om_phi:.5}"
        ),
    );
}

#[test]
fn criterion_5e_mean_scale_conditional_matches_quadrature() {
    let (train, state) = conditional_fixture();
    let prior = PriorSpec {
        mu_center: MuPriorCenter::Fixed(DVector::from_vec(vec![0.1])),
        mu_covariance: MuCovariancePrior::DiagonalHierarchical { shape: 1.0, rate: 1.0 },
        ..PriorSpec::default()
    };
    let mut chain = GibbsChain::new(&train, &prior, LikelihoodForm::PrecisionWeighted, 19).unwrap();
    chain.set_state(state.clone()).unwrap();

    let n_draws = 100_000;
    let mut inv_draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        chain.update_mu_scales().unwrap();
        inv_draws.push(1.0 / chain.state().mu_scales[0]);
    }

    let logf = |t: f64| -> f64 {
        let s = t.exp();
        let mut acc = oracle::log_inv_gamma(s, 1.0, 1.0);
        for mu in &state.mu {
            acc += oracle::log_normal(mu[0], 0.1, s);
        }
        acc + t
    };
    let m = oracle::grid_moments_1d(logf, (1e-5f64).ln(), (1e5f64).ln(), 8001, &[&|t: f64| (-t).exp()]);
    let (om, ov) = m[0];
    let (em, ev) = bgi::stats::mean_and_var(&inv_draws);
    let se = (ov / n_draws as f64).sqrt();
    let pass = (em - om).abs() <= 3.0 * se + 1e-8
        && (ev - ov).abs() <= ov * (3.0 * (2.0 / n_draws as f64).sqrt() + 0.005);
    report(
        "5e (mean-scale conditional vs quadrature)",
        pass,
        &format!("E[1/s] {em:.5} vs {om:.5}; Var[1/s] {ev:.5} vs {ov:.5}"),
    );
}

#[test]
fn criterion_5f_geweke_joint_distribution_check() {
    // Proper restricted configuration: fixed tau, proper inverse-gamma
    // noise prior, fixed mean-prior covariance and center, known covariate
    // covariance. Marginal-conditional moments of beta are analytic:
    // E[beta] = 0, E[beta^2] = tau^2 E[sigma^2].
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    let tau2 = 0.64;
    let (a_y, b_y) = (3.0, 2.0);
    let sigma_x: f64 = 0.7;
    let center = 0.3;
    let e_count = 2usize;
    let n_e = 10usize;

    let prior = PriorSpec {
        tau: TauPrior::Fixed(tau2),
        sigma_y: SigmaYPrior::InverseGamma { shape: a_y, rate: b_y },
        mu_covariance: MuCovariancePrior::Fixed(DMatrix::from_element(1, 1, 0.5)),
        mu_center: MuPriorCenter::Fixed(DVector::from_vec(vec![center])),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut draw_inv_gamma = |rng: &mut ChaCha8Rng, shape: f64, rate: f64| -> f64 {
        use rand_distr::{Distribution, Gamma};
        rate / Gamma::new(shape, 1.0).unwrap().sample(rng)
    };

    // Successive-conditional sampler: alternate one Gibbs sweep with a
    // fresh data draw from the current parameters.
    let gen_data = |rng: &mut ChaCha8Rng, w: &DVector<f64>, mu: &[DVector<f64>], s2: f64| {
        let mut envs = Vec::new();
        for (e, mu_e) in mu.iter().enumerate() {
            let mut x = DMatrix::zeros(n_e, 1);
            let mut y = DVector::zeros(n_e);
            for i in 0..n_e {
                let xi = mu_e[0] + sigma_x.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let f = w[0] * xi + w[1] * (xi - mu_e[0]) / sigma_x;
                x[(i, 0)] = xi;
                y[i] = f + s2.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            envs.push(
                EnvironmentData::with_sigma_hat(e, x, y, DMatrix::from_element(1, 1, sigma_x))
                    .unwrap(),
            );
        }
        TrainingData::from_environments(envs, false).unwrap()
    };

    // Initialize from the prior.
    let mut s2 = draw_inv_gamma(&mut rng, a_y, b_y);
    let mut w = DVector::from_fn(2, |_, _| {
        (tau2 * s2).sqrt() * rng.sample::<f64, _>(StandardNormal)
    });
    let mut mu: Vec<DVector<f64>> = (0..e_count)
        .map(|_| {
            DVector::from_vec(vec![center + 0.5f64.sqrt() * rng.sample::<f64, _>(StandardNormal)])
        })
        .collect();

    let iters = 40_000usize;
    let mut beta1 = Vec::with_capacity(iters);
    for t in 0..iters {
        let data = gen_data(&mut rng, &w, &mu, s2);
        let mut chain =
            GibbsChain::new(&data, &prior, LikelihoodForm::PrecisionWeighted, t as u64).unwrap();
        chain
            .set_state(ChainState {
                w: w.clone(),
                mu: mu.clone(),
                sigma_y2: s2,
                tau2,
                phi: 1.0,
                mu_scales: DVector::from_vec(vec![0.5]),
            })
            .unwrap();
        chain.sweep().unwrap();
        let st = chain.state();
        w = st.w.clone();
        mu = st.mu.clone();
        s2 = st.sigma_y2;
        beta1.push(w[0]);
    }

    // Batch-means standard errors against the analytic prior moments.
    let analytic_mean = 0.0;
    let analytic_m2 = tau2 * b_y / (a_y - 1.0);
    let batches = 40;
    let per = iters / batches;
    let batch_stat = |f: &dyn Fn(f64) -> f64| -> (f64, f64) {
        let means: Vec<f64> = (0..batches)
            .map(|b| beta1[b * per..(b + 1) * per].iter().map(|&x| f(x)).sum::<f64>() / per as f64)
            .collect();
        let (m, v) = bgi::stats::mean_and_var(&means);
        (m, (v / batches as f64).sqrt())
    };
    let (m1, se1) = batch_stat(&|x| x);
    let (m2, se2) = batch_stat(&|x| x * x);
    let pass = (m1 - analytic_mean).abs() <= 3.0 * se1 && (m2 - analytic_m2).abs() <= 3.0 * se2;
    report(
        "5f (joint-distribution check)",
        pass,
        &format!(
            "E[beta] {m1:.4} (3 SE {:.4}); E[beta^2] {m2:.4} vs {analytic_m2:.4} (3 SE {:.4})",
            3.0 * se1,
            3.0 * se2
        ),
    );
}

#[test]
fn criterion_5g_identical_seeds_are_bit_identical() {
    let ds = gen_single_source(&SingleSourceConfig {
        n1: 80,
        seed: 31,
        ..SingleSourceConfig::default()
    })
    .unwrap();
    let cfg = SamplerConfig {
        n_chains: 2,
        n_warmup: 100,
        n_kept: 200,
        base_seed: 31,
        ..SamplerConfig::default()
    };
    let a = fit(&ds.train, &PriorSpec::default(), &cfg).unwrap();
    let b = fit(&ds.train, &PriorSpec::default(), &cfg).unwrap();
    let pass = a.chains == b.chains;
    report("5g (bit-identical determinism)", pass, "two identical runs compared draw-for-draw");
}

// ---------------------------------------------------------------------------
// 6. Contraction trend
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_contraction_trend() {
    let mut detail = String::new();
    let mut pass = true;
    for seed in [5u64, 17, 99] {
        let sds: Vec<f64> = [100usize, 400, 1600]
            .into_iter()
            .map(|n| {
                let ds = gen_multi_source(&MultiSourceConfig::new(n, 2, seed)).unwrap();
                let cfg = SamplerConfig {
                    base_seed: seed,
                    ..SamplerConfig::default()
                };
                let samples = fit(&ds.train, &PriorSpec::default(), &cfg).unwrap();
                samples.beta_posterior_sd()[1]
            })
            .collect();
        let monotone = sds.windows(2).all(|w| w[1] <= 1.10 * w[0]);
        let shrinks = sds[2] < sds[0];
        pass &= monotone && shrinks;
        detail.push_str(&format!(
            "seed {seed}: SD(beta1) = {:.3}/{:.3}/{:.3}; ",
            sds[0], sds[1], sds[2]
        ));
    }
    report(
        "6 (posterior contraction trend)",
        pass,
        &format!("{detail}n = 100/400/1600, shared dataset structure, 10% slack"),
    );
}

// ---------------------------------------------------------------------------
// 7. Causal selection operating characteristics
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_causal_selection_operating_characteristics() {
    let reps = 100u64;
    let results: Vec<(bool, usize, usize)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = 9000 + r;
            let mut gcfg = MultiSourceConfig::new(1000, 5, seed);
            gcfg.beta = Some(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0]));
            let ds = gen_multi_source(&gcfg).unwrap();
            // The literal centered-regressor likelihood keeps the slope
            // posterior calibrated for tail-count decisions (the
            // precision-weighted form's plug-in covariances act as a
            // spurious identification channel on this design).
            let cfg = SamplerConfig {
                base_seed: seed,
                likelihood_form: LikelihoodForm::RawCentered,
                ..SamplerConfig::default()
            };
            let samples = fit(&ds.train, &PriorSpec::default(), &cfg).unwrap();
            let report = select_parents(&samples, 0.05).unwrap();
            let false_sel = report.decisions[1..].iter().filter(|d| d.selected).count();
            let ols = ols_fit(&ds.train, true).unwrap();
            let ols_false = ols.slope_p_values()[1..]
                .iter()
                .filter(|&&p| p < 0.05)
                .count();
            (report.decisions[0].selected, false_sel, ols_false)
        })
        .collect();
    let power = results.iter().filter(|r| r.0).count() as f64 / reps as f64;
    let false_rate =
        results.iter().map(|r| r.1).sum::<usize>() as f64 / (4.0 * reps as f64);
    let ols_false_rate =
        results.iter().map(|r| r.2).sum::<usize>() as f64 / (4.0 * reps as f64);
    let pass = power >= 0.95 && false_rate <= 0.08 && ols_false_rate > false_rate;
    report(
        "7 (causal selection operating characteristics)",
        pass,
        &format!(
            "true-parent rate {power:.2} (need >=0.95); per-null false rate {false_rate:.3} \
             (need <=0.08); OLS p<0.05 false rate {ols_false_rate:.3} (must be higher)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Baseline oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_baseline_oracle_equivalence() {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 250;
    let p = 4;
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |i, _| {
        let mut acc: f64 = rng.sample(StandardNormal);
        for j in 0..p {
            acc += (j as f64 - 1.0) * 0.4 * x[(i, j)];
        }
        acc
    });
    let env =
        EnvironmentData::new(0, x.clone(), y.clone()).unwrap();
    let data = TrainingData::from_environments(vec![env], false).unwrap();
    let fitted = ols_fit(&data, false).unwrap();

    // Orthogonal-decomposition oracle.
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * &y;
    let oracle = qr.r().solve_upper_triangular(&qty).unwrap();
    let max_diff = (0..p)
        .map(|j| (fitted.coefficients[j] - oracle[j]).abs())
        .fold(0.0, f64::max);

    // 2SLS with instruments equal to the regressors reduces to OLS.
    let b_tsls = tsls(&x, &x, &y).unwrap();
    let max_diff_tsls = (0..p)
        .map(|j| (b_tsls[j] - fitted.coefficients[j]).abs())
        .fold(0.0, f64::max);

    let pass = max_diff <= 1e-10 && max_diff_tsls <= 1e-8;
    report(
        "8 (baseline oracle equivalence)",
        pass,
        &format!(
            "max |OLS - QR oracle| = {max_diff:.2e} (<=1e-10); \
             max |2SLS(Z=X) - OLS| = {max_diff_tsls:.2e} (<=1e-8)"
        ),
    );
}

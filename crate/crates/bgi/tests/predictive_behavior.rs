//! End-to-end behavior of the posterior predictive: calibration on data
//! generated from the model itself, and translation equivariance of the
//! whole pipeline.

use bgi::data::{EnvironmentData, TestCovariates, TrainingData};
use bgi::predictive::{credible_interval, empirical_coverage, posterior_predictive};
use bgi::sampler::{fit, SamplerConfig};
use bgi::simgen::{gen_multi_source, MultiSourceConfig};
use bgi::{PriorSpec, TauPrior};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// With no confounding (zero loadings, so the true correction is zero),
/// nominal 90/95/99% intervals hit their levels within 3 binomial SEs,
/// pooled across 24 seeded runs.
#[test]
fn coverage_matches_nominal_without_confounding() {
    let runs = 24u64;
    let alphas = [0.10, 0.05, 0.01];
    let counts: Vec<(usize, [usize; 3])> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = 5_000 + r;
            let mut gcfg = MultiSourceConfig::new(1000, 2, seed);
            gcfg.psi = Some(DMatrix::zeros(2, 2));
            gcfg.phi = Some(DVector::zeros(2));
            let ds = gen_multi_source(&gcfg).unwrap();
            let cfg = SamplerConfig {
                base_seed: seed,
                ..SamplerConfig::default()
            };
            let samples = fit(&ds.train, &PriorSpec::default(), &cfg).unwrap();
            let pred = posterior_predictive(&samples, &ds.test).unwrap();
            let mut inside = [0usize; 3];
            for (i, &alpha) in alphas.iter().enumerate() {
                let intervals = credible_interval(&pred, alpha).unwrap();
                let cov = empirical_coverage(&intervals, &ds.test_responses).unwrap();
                inside[i] = (cov * ds.test_responses.len() as f64).round() as usize;
            }
            (ds.test_responses.len(), inside)
        })
        .collect();
    let total: usize = counts.iter().map(|c| c.0).sum();
    for (i, &alpha) in alphas.iter().enumerate() {
        let nominal = 1.0 - alpha;
        let hits: usize = counts.iter().map(|c| c.1[i]).sum();
        let cov = hits as f64 / total as f64;
        let se = (nominal * alpha / total as f64).sqrt();
        assert!(
            (cov - nominal).abs() <= 3.0 * se,
            "nominal {nominal}: pooled coverage {cov:.4} (3 SE = {:.4})",
            3.0 * se
        );
    }
}

/// Shifting every covariate (train and test) by a constant shifts the
/// posterior-mean predictions by beta' delta.
#[test]
fn translation_equivariance_of_predictive_means() {
    let n_e = 60;
    let p = 1;
    let delta = 10.0;

    let build = |shift: f64| {
        let mut envs = Vec::new();
        for e in 0..2usize {
            let mut x = DMatrix::zeros(n_e, p);
            let mut y = DVector::zeros(n_e);
            for i in 0..n_e {
                let t = (i as f64 * 0.61 + e as f64 * 1.7).sin();
                let noise = ((i * 7 + e * 13) as f64 * 0.37).cos() * 0.3;
                let xi = 1.5 + e as f64 + t + shift;
                x[(i, 0)] = xi;
                y[i] = 0.8 * xi + noise;
            }
            envs.push(EnvironmentData::new(e, x, y).unwrap());
        }
        let train = TrainingData::from_environments(envs, true).unwrap();
        let x0 = DMatrix::from_fn(40, p, |i, _| 2.0 + (i as f64 * 0.23).sin() + shift);
        (train, TestCovariates::new(x0).unwrap())
    };

    // A near-flat coefficient prior keeps the posterior exactly
    // shift-equivariant (the intercept prior would otherwise break it).
    let prior = PriorSpec {
        tau: TauPrior::Fixed(1e8),
        ..PriorSpec::default()
    };
    let cfg = SamplerConfig {
        base_seed: 42,
        n_chains: 2,
        n_warmup: 400,
        n_kept: 2000,
        ..SamplerConfig::default()
    };

    let (train_a, test_a) = build(0.0);
    let (train_b, test_b) = build(delta);
    let sa = fit(&train_a, &prior, &cfg).unwrap();
    let sb = fit(&train_b, &prior, &cfg).unwrap();
    let pa = posterior_predictive(&sa, &test_a).unwrap();
    let pb = posterior_predictive(&sb, &test_b).unwrap();
    // The scene translates along the structural slope (0.8 here): shifted
    // covariates carry shifted responses, so predictions move by beta'delta.
    let slope_shift = 0.8 * delta;

    let ma = pa.point_means();
    let mb = pb.point_means();
    let n = pa.n_draws() as f64;
    for i in 0..ma.len() {
        let fa: Vec<f64> = (0..pa.n_draws()).map(|c| pa.means[(i, c)]).collect();
        let fb: Vec<f64> = (0..pb.n_draws()).map(|c| pb.means[(i, c)]).collect();
        let (_, va) = bgi::stats::mean_and_var(&fa);
        let (_, vb) = bgi::stats::mean_and_var(&fb);
        let se = ((va + vb) / n).sqrt();
        let diff = mb[i] - ma[i] - slope_shift;
        assert!(
            diff.abs() <= 6.0 * se + 1e-3,
            "row {i}: diff {diff:.5} vs MC tolerance {:.5}",
            6.0 * se + 1e-3
        );
    }
}

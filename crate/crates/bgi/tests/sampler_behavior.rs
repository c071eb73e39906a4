//! Seeded end-to-end behavior of the sampler on the simulation designs.

use bgi::data::read_training_csv;
use bgi::sampler::{fit, SamplerConfig};
use bgi::simgen::{gen_multi_source, gen_single_source, MultiSourceConfig, SingleSourceConfig};
use bgi::PriorSpec;

/// Confounded single-source design: posterior means recover the structural
/// slope and the noise-covariate covariance.
#[test]
fn single_source_recovery() {
    let ds = gen_single_source(&SingleSourceConfig {
        seed: 1,
        ..SingleSourceConfig::default()
    })
    .unwrap();
    let cfg = SamplerConfig {
        base_seed: 1,
        ..SamplerConfig::default()
    };
    let samples = fit(&ds.train, &PriorSpec::default(), &cfg).unwrap();
    let beta = samples.beta_posterior_mean()[0];
    let k = samples.k_posterior_mean()[0];
    assert!((beta - 1.0).abs() < 0.05, "beta = {beta}");
    assert!((k + 0.25).abs() < 0.05, "k = {k}");
}

/// The multi-source dataset written to CSV and re-loaded reproduces its
/// per-environment moments to 1e-12.
#[test]
fn multi_source_csv_round_trip_preserves_moments() {
    let ds = gen_multi_source(&MultiSourceConfig::new(600, 3, 11)).unwrap();
    let mut buf = Vec::new();
    bgi::data::write_training_csv(&ds.train, &mut buf).unwrap();
    let reread = read_training_csv(buf.as_slice(), true).unwrap();
    assert_eq!(reread.e_count(), ds.train.e_count());
    for (a, b) in ds.train.environments.iter().zip(&reread.environments) {
        for j in 0..ds.train.p {
            assert!((a.mu_hat[j] - b.mu_hat[j]).abs() < 1e-12);
            for l in 0..ds.train.p {
                assert!((a.sigma_hat[(j, l)] - b.sigma_hat[(j, l)]).abs() < 1e-12);
            }
        }
    }
    for j in 0..ds.train.p {
        assert!((reread.grand_mu_hat[j] - ds.train.grand_mu_hat[j]).abs() < 1e-12);
    }
}

/// Single-source fits stay well inside the per-run time budget.
#[test]
fn single_source_fit_is_fast() {
    let ds = gen_single_source(&SingleSourceConfig::default()).unwrap();
    let cfg = SamplerConfig::default();
    let t0 = std::time::Instant::now();
    fit(&ds.train, &PriorSpec::default(), &cfg).unwrap();
    assert!(
        t0.elapsed().as_secs_f64() < 30.0,
        "fit took {:?}",
        t0.elapsed()
    );
}

//! Count statistics of simulated scans.

use ocdr::config::{ExperimentConfig, Scenario};
use ocdr::dsp::fano_factor;
use ocdr::psf::point_spread;
use ocdr::runner::{derive_seed, run_experiment};
use ocdr::scan::{repeat_at_position, simulate_scan, SampleModel, ScanConfig};
use ocdr::spectra::{make_gaussian_source, FrequencyGrid};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

fn psf() -> ocdr::psf::Psf {
    let grid = FrequencyGrid::default();
    let s = make_gaussian_source(930.0, 70.0, &grid).unwrap();
    point_spread(&s, 120.0, 4097).unwrap()
}

fn constant_rate_config(seed: u64) -> ScanConfig {
    ScanConfig {
        z_start_um: 0.0,
        z_end_um: 10.0,
        mirror_speed_mm_s: 1e-4,
        counting_time_s: 1e-3,
        reference_flux: 4e4,
        sample_flux_peak: 0.0,
        eta: 0.5,
        dark_rate: 0.0,
        dead_time_s: 0.0,
        rng_seed: seed,
        center_wavelength_nm: 930.0,
    }
}

/// Pearson statistic against Poisson(mean), pooling tails until every cell
/// expects at least five counts. Returns (statistic, degrees of freedom).
fn chi_square_vs_poisson(counts: &[u64], mean: f64) -> (f64, usize) {
    let n = counts.len() as f64;
    let poisson = Poisson::new(mean).unwrap();
    let max = *counts.iter().max().unwrap();
    let mut lo = 0u64;
    while n * poisson.cdf(lo) < 5.0 {
        lo += 1;
    }
    let mut hi = max.max(lo + 1);
    while n * (1.0 - poisson.cdf(hi - 1)) < 5.0 {
        hi -= 1;
    }
    // cells: [0, lo], lo+1 .. hi-1, [hi, ∞)
    let mut observed = vec![0.0; (hi - lo + 1) as usize];
    for &c in counts {
        let cell = c.clamp(lo, hi) - lo;
        observed[cell as usize] += 1.0;
    }
    let mut expected: Vec<f64> = (lo..=hi).map(|k| n * poisson.pmf(k)).collect();
    expected[0] = n * poisson.cdf(lo);
    let last = expected.len() - 1;
    expected[last] = n * (1.0 - poisson.cdf(hi - 1));
    let statistic = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    (statistic, observed.len() - 1)
}

#[test]
fn constant_rate_counts_are_poisson() {
    let psf = psf();
    let empty = SampleModel::new(vec![], "no sample").unwrap();
    for seed in [1, 2, 3] {
        let config = constant_rate_config(seed);
        let record = simulate_scan(&config, &empty, &psf).unwrap();
        assert!(record.counts.len() >= 100_000);
        let mean = config.eta * config.reference_flux * config.counting_time_s;
        let (statistic, dof) = chi_square_vs_poisson(&record.counts, mean);
        let critical = ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.99);
        assert!(
            statistic < critical,
            "seed {seed}: {statistic} >= {critical} ({dof} dof)"
        );
    }
}

#[test]
fn overdispersed_counts_fail_the_poisson_test() {
    // sum of two independent scans at half rate each, doubled: variance is 2× Poisson
    let psf = psf();
    let empty = SampleModel::new(vec![], "no sample").unwrap();
    let half = ScanConfig {
        reference_flux: 2e4,
        ..constant_rate_config(5)
    };
    let a = simulate_scan(&half, &empty, &psf).unwrap();
    let doubled: Vec<u64> = a.counts.iter().map(|c| 2 * c).collect();
    let (statistic, dof) = chi_square_vs_poisson(&doubled, 20.0);
    let critical = ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.99);
    assert!(statistic > critical);
}

#[test]
fn fano_spread_matches_sqrt_two_over_n() {
    let psf = psf();
    let mirror = SampleModel::mirror(0.0);
    let template = ScanConfig {
        z_start_um: 99.99,
        z_end_um: 100.01,
        mirror_speed_mm_s: 1e-5,
        counting_time_s: 1e-3,
        reference_flux: 1e6,
        sample_flux_peak: 1170.0,
        eta: 0.05,
        dark_rate: 0.0,
        dead_time_s: 0.0,
        rng_seed: 0,
        center_wavelength_nm: 930.0,
    };
    for n in [25usize, 100, 400] {
        let f_hats: Vec<f64> = (0..4000u64)
            .into_par_iter()
            .map(|i| {
                let config = ScanConfig {
                    rng_seed: derive_seed(n as u64, i),
                    ..template.clone()
                };
                let counts = repeat_at_position(&config, &mirror, &psf, 100.0, n).unwrap();
                fano_factor(&counts).unwrap().f_hat
            })
            .collect();
        let m = f_hats.len() as f64;
        let mean = f_hats.iter().sum::<f64>() / m;
        let std = (f_hats.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        let expected = (2.0 / n as f64).sqrt();
        assert!(
            (std / expected - 1.0).abs() < 0.15,
            "N = {n}: {std} vs {expected}"
        );
        assert!((mean - 1.0).abs() < 0.03, "N = {n}: mean {mean}");
    }
}

#[test]
fn envelope_clears_the_noise_floor() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::defaults_for(Scenario::SnrRun);
    config.output.dir = dir.path().to_string_lossy().into_owned();
    run_experiment(&config).unwrap();
    let text = std::fs::read_to_string(dir.path().join("snr_trials.csv")).unwrap();
    let snrs: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("trial"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(snrs.len(), config.snr_run.unwrap().seeds);
    let passing = snrs.iter().filter(|&&s| s >= 100.0).count();
    assert!(
        passing as f64 >= 0.95 * snrs.len() as f64,
        "{passing}/{}",
        snrs.len()
    );
}

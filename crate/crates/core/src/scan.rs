//! Photon-count axial scan synthesis.
//!
//! The mean detected rate at mirror position `z` is
//!
//! ```text
//! rate(z) = η·[Φ_R + Φ_S·Σr_i² + 2√(Φ_R·Φ_S)·Σ r_i·env(z−z_i)·cos(4π(z−z_i)/λ₀ + φ_i + ψ(z−z_i))] + dark
//! ```
//!
//! where `env·e^{iψ}` is the complex coherence function held by [`Psf`]
//! (`ψ ≡ 0` for spectra symmetric about their centroid). Counts per bin are
//! Poisson with mean `dead_time_rate(rate)·T`. Bins are drawn sequentially from
//! one seeded stream, so a record depends only on its config and sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::constants::{PLANCK, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::psf::Psf;

pub const SCAN_FORMAT_VERSION: u32 = 1;

/// Power fraction reaching the detector after two passes through a 50/50 splitter.
pub const DOUBLE_PASS_50_50: f64 = 0.25;

/// Photon flux (photons/s) carried by `power_w` at `wavelength_nm`.
pub fn flux_from_power(power_w: f64, wavelength_nm: f64) -> Result<f64> {
    if !(power_w >= 0.0) {
        return Err(Error::invalid("power", "must be nonnegative"));
    }
    if !(wavelength_nm > 0.0) {
        return Err(Error::invalid("wavelength", "must be positive"));
    }
    let photon_energy = PLANCK * SPEED_OF_LIGHT / (wavelength_nm * 1e-9);
    Ok(power_w / photon_energy)
}

/// Optical power returned from one interferometer arm.
///
/// `bs_factor` is the splitter throughput for the round trip
/// ([`DOUBLE_PASS_50_50`] for a 50/50 cube traversed twice).
pub fn sample_arm_power(source_power_w: f64, attenuation_db: f64, bs_factor: f64) -> Result<f64> {
    if !(attenuation_db >= 0.0) {
        return Err(Error::invalid("attenuation_db", "must be nonnegative"));
    }
    if !(source_power_w >= 0.0) {
        return Err(Error::invalid("source_power", "must be nonnegative"));
    }
    if !(bs_factor > 0.0 && bs_factor <= 1.0) {
        return Err(Error::invalid("bs_factor", "must lie in (0, 1]"));
    }
    Ok(source_power_w * bs_factor * 10f64.powf(-attenuation_db / 10.0))
}

/// Nonparalyzable dead-time compression: `λ/(1 + λτ)`.
pub fn dead_time_rate(true_rate: f64, dead_time: f64) -> f64 {
    debug_assert!(true_rate >= 0.0 && dead_time >= 0.0);
    true_rate / (1.0 + true_rate * dead_time)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflector {
    pub optical_depth_um: f64,
    pub amplitude_reflectance: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleModel {
    reflectors: Vec<Reflector>,
    pub description: String,
}

impl SampleModel {
    pub fn new(reflectors: Vec<Reflector>, description: impl Into<String>) -> Result<Self> {
        for r in &reflectors {
            if !(0.0..=1.0).contains(&r.amplitude_reflectance) {
                return Err(Error::invalid(
                    "amplitude_reflectance",
                    format!("{} is outside [0, 1]", r.amplitude_reflectance),
                ));
            }
            if !(r.optical_depth_um.is_finite() && r.phase_rad.is_finite()) {
                return Err(Error::invalid(
                    "reflector",
                    "depth and phase must be finite",
                ));
            }
        }
        if reflectors
            .windows(2)
            .any(|w| !(w[1].optical_depth_um > w[0].optical_depth_um))
        {
            return Err(Error::invalid(
                "optical_depth",
                "reflector depths must be strictly increasing",
            ));
        }
        let power: f64 = reflectors
            .iter()
            .map(|r| r.amplitude_reflectance.powi(2))
            .sum();
        if power > 1.0 + 1e-12 {
            return Err(Error::invalid(
                "amplitude_reflectance",
                format!("total reflected power {power} exceeds 1"),
            ));
        }
        Ok(Self {
            reflectors,
            description: description.into(),
        })
    }

    pub fn mirror(depth_um: f64) -> Self {
        Self {
            reflectors: vec![Reflector {
                optical_depth_um: depth_um,
                amplitude_reflectance: 1.0,
                phase_rad: 0.0,
            }],
            description: "mirror".into(),
        }
    }

    /// Front and back surfaces of a dielectric window in air at normal incidence.
    ///
    /// The back-surface echo has the opposite sign (phase π) and passes the
    /// front surface twice.
    pub fn window(front_depth_um: f64, thickness_um: f64, index: f64) -> Result<Self> {
        let r = (index - 1.0) / (index + 1.0);
        Self::new(
            vec![
                Reflector {
                    optical_depth_um: front_depth_um,
                    amplitude_reflectance: r.abs(),
                    phase_rad: 0.0,
                },
                Reflector {
                    optical_depth_um: front_depth_um + index * thickness_um,
                    amplitude_reflectance: r.abs() * (1.0 - r * r),
                    phase_rad: std::f64::consts::PI,
                },
            ],
            format!("{thickness_um} um window, n = {index}"),
        )
    }

    pub fn reflectors(&self) -> &[Reflector] {
        &self.reflectors
    }

    fn reflected_power(&self) -> f64 {
        self.reflectors
            .iter()
            .map(|r| r.amplitude_reflectance.powi(2))
            .sum()
    }
}

/// Acquisition parameters of one axial scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub z_start_um: f64,
    pub z_end_um: f64,
    pub mirror_speed_mm_s: f64,
    /// Counting time per bin, s.
    pub counting_time_s: f64,
    /// Φ_R, photons/s at the detector.
    pub reference_flux: f64,
    /// Φ_S before reflectance weighting, photons/s.
    pub sample_flux_peak: f64,
    pub eta: f64,
    /// counts/s
    pub dark_rate: f64,
    pub dead_time_s: f64,
    pub rng_seed: u64,
    /// Fringe carrier wavelength λ₀.
    pub center_wavelength_nm: f64,
}

impl ScanConfig {
    /// Mirror travel per counting interval, μm.
    pub fn bin_spacing_um(&self) -> f64 {
        self.mirror_speed_mm_s * 1e3 * self.counting_time_s
    }

    pub fn n_bins(&self) -> usize {
        let ratio = (self.z_end_um - self.z_start_um) / self.bin_spacing_um();
        // absorb representation error in e.g. 1000/0.01
        (ratio * (1.0 + 1e-12)).floor().max(0.0) as usize
    }

    /// Bin-centre positions, μm.
    pub fn positions(&self) -> Vec<f64> {
        let dz = self.bin_spacing_um();
        (0..self.n_bins())
            .map(|k| self.z_start_um + (k as f64 + 0.5) * dz)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("reference_flux", self.reference_flux),
            ("sample_flux_peak", self.sample_flux_peak),
            ("dark_rate", self.dark_rate),
            ("dead_time", self.dead_time_s),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("{v} must be nonnegative")));
            }
        }
        let positive = [
            ("mirror_speed", self.mirror_speed_mm_s),
            ("counting_time", self.counting_time_s),
            ("center_wavelength", self.center_wavelength_nm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("{v} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid("eta", "must lie in [0, 1]"));
        }
        if !(self.z_end_um > self.z_start_um) {
            return Err(Error::invalid("z_end", "must exceed z_start"));
        }
        let limit = self.center_wavelength_nm * 1e-3 / 4.0;
        let dz = self.bin_spacing_um();
        if dz >= limit {
            return Err(Error::NyquistViolation {
                bin_spacing_um: dz,
                limit_um: limit,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadTimeMode {
    /// Poisson counts with the dead-time-compressed mean.
    #[default]
    RateCompression,
    /// Explicit arrival times with a nonparalyzable dead interval carried across bins.
    EventLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScanOptions {
    pub record_truth: bool,
    pub dead_time_mode: DeadTimeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub config: ScanConfig,
    pub positions: Vec<f64>,
    pub counts: Vec<u64>,
    /// Noiseless detected rate per bin after dead time, counts/s.
    pub truth: Option<Vec<f64>>,
    pub format_version: u32,
}

impl ScanRecord {
    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn mean_counts(&self) -> f64 {
        if self.counts.is_empty() {
            return 0.0;
        }
        self.counts.iter().map(|&c| c as f64).sum::<f64>() / self.counts.len() as f64
    }
}

/// Mean detected rate (before dead time) at mirror position `z`, counts/s.
pub fn mean_rate(config: &ScanConfig, sample: &SampleModel, psf: &Psf, z: f64) -> Result<f64> {
    let k = 4.0 * std::f64::consts::PI / (config.center_wavelength_nm * 1e-3);
    let mut cross = 0.0;
    for r in sample.reflectors() {
        let dz = z - r.optical_depth_um;
        let g = psf.baseband_at(dz)?;
        let carrier = k * dz + r.phase_rad;
        // Re[g·e^{i·carrier}] = env·cos(carrier + ψ)
        cross += r.amplitude_reflectance * (g.re * carrier.cos() - g.im * carrier.sin());
    }
    let phi_r = config.reference_flux;
    let phi_s = config.sample_flux_peak;
    let optical = phi_r + phi_s * sample.reflected_power() + 2.0 * (phi_r * phi_s).sqrt() * cross;
    // interference can drive the optical term a hair below zero through rounding
    Ok(config.eta * optical.max(0.0) + config.dark_rate)
}

fn poisson_draw<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean)
            .expect("finite positive Poisson mean")
            .sample(rng) as u64
    } else {
        0
    }
}

pub fn simulate_scan(config: &ScanConfig, sample: &SampleModel, psf: &Psf) -> Result<ScanRecord> {
    simulate_scan_with(config, sample, psf, &ScanOptions::default())
}

pub fn simulate_scan_with(
    config: &ScanConfig,
    sample: &SampleModel,
    psf: &Psf,
    options: &ScanOptions,
) -> Result<ScanRecord> {
    config.validate()?;
    let positions = config.positions();
    let true_rates = positions
        .iter()
        .map(|&z| mean_rate(config, sample, psf, z))
        .collect::<Result<Vec<f64>>>()?;
    let observed: Vec<f64> = true_rates
        .iter()
        .map(|&r| dead_time_rate(r, config.dead_time_s))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let t = config.counting_time_s;
    let counts = match options.dead_time_mode {
        DeadTimeMode::RateCompression => observed
            .iter()
            .map(|&rate| poisson_draw(&mut rng, rate * t))
            .collect(),
        DeadTimeMode::EventLevel => {
            let tau = config.dead_time_s;
            let mut ready_at = f64::NEG_INFINITY;
            true_rates
                .iter()
                .enumerate()
                .map(|(k, &rate)| {
                    let start = k as f64 * t;
                    let end = start + t;
                    if rate <= 0.0 {
                        return 0;
                    }
                    let gaps = Exp::new(rate).expect("positive rate");
                    let mut now = start;
                    let mut registered = 0;
                    loop {
                        now += gaps.sample(&mut rng);
                        if now >= end {
                            break;
                        }
                        if now >= ready_at {
                            registered += 1;
                            ready_at = now + tau;
                        }
                    }
                    registered
                })
                .collect()
        }
    };

    Ok(ScanRecord {
        config: config.clone(),
        positions,
        counts,
        truth: options.record_truth.then_some(observed),
        format_version: SCAN_FORMAT_VERSION,
    })
}

/// `n_repeats` independent counting intervals with the mirror parked at `z`.
pub fn repeat_at_position(
    config: &ScanConfig,
    sample: &SampleModel,
    psf: &Psf,
    z: f64,
    n_repeats: usize,
) -> Result<Vec<u64>> {
    if n_repeats < 2 {
        return Err(Error::invalid("n_repeats", "need at least two repeats"));
    }
    config.validate()?;
    let rate = dead_time_rate(mean_rate(config, sample, psf, z)?, config.dead_time_s);
    let mean = rate * config.counting_time_s;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    Ok((0..n_repeats)
        .map(|_| poisson_draw(&mut rng, mean))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::point_spread;
    use crate::spectra::{make_gaussian_source, FrequencyGrid};
    use approx::assert_relative_eq;

    fn sld_psf(range: f64) -> Psf {
        let s = make_gaussian_source(930.0, 70.0, &FrequencyGrid::default()).unwrap();
        let points = (2.0 * range / 0.05) as usize | 1;
        point_spread(&s, range, points).unwrap()
    }

    fn config() -> ScanConfig {
        ScanConfig {
            z_start_um: -20.0,
            z_end_um: 20.0,
            mirror_speed_mm_s: 0.01,
            counting_time_s: 0.01,
            reference_flux: 1e6,
            sample_flux_peak: 1e6,
            eta: 0.05,
            dark_rate: 100.0,
            dead_time_s: 0.0,
            rng_seed: 42,
            center_wavelength_nm: 930.0,
        }
    }

    #[test]
    fn flux_examples() {
        assert_relative_eq!(
            flux_from_power(2.5e-16, 930.0).unwrap(),
            1170.0,
            max_relative = 5e-3
        );
        assert_eq!(flux_from_power(0.0, 500.0).unwrap(), 0.0);
        // hν at 930 nm = 2.136e-19 J
        assert_relative_eq!(
            flux_from_power(1.0, 930.0).unwrap(),
            4.68e18,
            max_relative = 1e-3
        );
        assert!(flux_from_power(-1.0, 930.0).is_err());
        assert!(flux_from_power(1.0, 0.0).is_err());
    }

    #[test]
    fn arm_power_examples() {
        assert_relative_eq!(
            sample_arm_power(10e-9, 70.0, DOUBLE_PASS_50_50).unwrap(),
            2.5e-16,
            max_relative = 1e-15
        );
        assert_eq!(sample_arm_power(3.7e-3, 0.0, 1.0).unwrap(), 3.7e-3);
        assert_relative_eq!(
            sample_arm_power(10e-9, 70.0, 0.5).unwrap(),
            5.0e-16,
            max_relative = 1e-15
        );
        assert!(sample_arm_power(1.0, -3.0, 0.25).is_err());
    }

    #[test]
    fn dead_time_examples() {
        assert_relative_eq!(
            dead_time_rate(1e12, 10e-9),
            1e12 / (1.0 + 1e4),
            max_relative = 1e-15
        );
        assert!((dead_time_rate(1e12, 10e-9) / 1e8 - 1.0).abs() <= 1e-4);
        assert_relative_eq!(
            dead_time_rate(1e3, 10e-9),
            1e3 / (1.0 + 1e-5),
            max_relative = 1e-15
        );
        assert_relative_eq!(dead_time_rate(1e8, 10e-9), 5e7, max_relative = 1e-12);
        assert_eq!(dead_time_rate(5.0, 0.0), 5.0);
    }

    #[test]
    fn sample_validation() {
        let r = |d: f64, a: f64| Reflector {
            optical_depth_um: d,
            amplitude_reflectance: a,
            phase_rad: 0.0,
        };
        assert!(SampleModel::new(vec![r(0.0, 0.5), r(0.0, 0.5)], "").is_err());
        assert!(SampleModel::new(vec![r(1.0, 0.5), r(0.0, 0.5)], "").is_err());
        assert!(SampleModel::new(vec![r(0.0, 0.8), r(5.0, 0.8)], "").is_err());
        assert!(SampleModel::new(vec![r(0.0, 1.2)], "").is_err());
        let w = SampleModel::window(400.0, 90.0, 1.5).unwrap();
        let sep = w.reflectors()[1].optical_depth_um - w.reflectors()[0].optical_depth_um;
        assert_relative_eq!(sep, 135.0, max_relative = 1e-12);
    }

    #[test]
    fn mean_rate_examples() {
        let psf = sld_psf(60.0);
        let cfg = config();
        let mirror = SampleModel::mirror(0.0);

        let far = mean_rate(&cfg, &mirror, &psf, 50.0).unwrap();
        let baseline = cfg.eta * (cfg.reference_flux + cfg.sample_flux_peak) + cfg.dark_rate;
        assert_relative_eq!(far, baseline, max_relative = 1e-6);

        let peak = mean_rate(&cfg, &mirror, &psf, 0.0).unwrap();
        assert_relative_eq!(
            peak,
            cfg.eta * 4.0 * 1e6 + cfg.dark_rate,
            max_relative = 1e-9
        );

        // average over one carrier period λ₀/2 in z
        let period = 0.465;
        let n = 2000;
        let avg = (0..n)
            .map(|k| mean_rate(&cfg, &mirror, &psf, (k as f64 + 0.5) * period / n as f64).unwrap())
            .sum::<f64>()
            / n as f64;
        assert_relative_eq!(avg, baseline, max_relative = 0.01);

        assert!(matches!(
            mean_rate(&cfg, &mirror, &psf, 80.0),
            Err(Error::PsfRange { .. })
        ));
    }

    #[test]
    fn nyquist_is_enforced() {
        let mut cfg = config();
        cfg.mirror_speed_mm_s = 0.1; // 1 μm bins
        let psf = sld_psf(60.0);
        assert!(matches!(
            simulate_scan(&cfg, &SampleModel::mirror(0.0), &psf),
            Err(Error::NyquistViolation { .. })
        ));
    }

    #[test]
    fn zero_flux_gives_zero_counts() {
        let mut cfg = config();
        cfg.reference_flux = 0.0;
        cfg.sample_flux_peak = 0.0;
        cfg.dark_rate = 0.0;
        let rec = simulate_scan(&cfg, &SampleModel::mirror(0.0), &sld_psf(60.0)).unwrap();
        assert!(rec.counts.iter().all(|&c| c == 0));
        assert_eq!(rec.counts.len(), rec.positions.len());
        assert_eq!(rec.counts.len(), 400);
    }

    #[test]
    fn repeats_are_deterministic() {
        let psf = sld_psf(60.0);
        let cfg = config();
        let mirror = SampleModel::mirror(0.0);
        let a = repeat_at_position(&cfg, &mirror, &psf, 0.0, 50).unwrap();
        let b = repeat_at_position(&cfg, &mirror, &psf, 0.0, 50).unwrap();
        assert_eq!(a, b);
        assert!(repeat_at_position(&cfg, &mirror, &psf, 0.0, 1).is_err());

        let mut dark = cfg.clone();
        dark.reference_flux = 0.0;
        dark.sample_flux_peak = 0.0;
        dark.dark_rate = 0.0;
        assert!(repeat_at_position(&dark, &mirror, &psf, 0.0, 30)
            .unwrap()
            .iter()
            .all(|&c| c == 0));
    }

    #[test]
    fn event_level_matches_rate_compression() {
        let psf = sld_psf(60.0);
        let mut cfg = config();
        cfg.z_start_um = 30.0;
        cfg.z_end_um = 40.0;
        cfg.mirror_speed_mm_s = 0.001;
        cfg.counting_time_s = 1e-4;
        cfg.reference_flux = 2e9;
        cfg.sample_flux_peak = 0.0;
        cfg.eta = 0.05;
        cfg.dark_rate = 0.0;
        cfg.dead_time_s = 10e-9;
        let mirror = SampleModel::mirror(0.0);
        let events = simulate_scan_with(
            &cfg,
            &mirror,
            &psf,
            &ScanOptions {
                record_truth: true,
                dead_time_mode: DeadTimeMode::EventLevel,
            },
        )
        .unwrap();
        let expected = dead_time_rate(1e8, 10e-9) * cfg.counting_time_s;
        assert_relative_eq!(events.mean_counts(), expected, max_relative = 0.01);
        assert_relative_eq!(
            events.truth.as_ref().unwrap()[0] * cfg.counting_time_s,
            expected,
            max_relative = 1e-12
        );
    }
}

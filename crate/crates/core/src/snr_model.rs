//! Analytic sensitivity and throughput models.
//!
//! The conventional (photodiode + transimpedance amplifier) budget is
//!
//! ```text
//!            R²·P_R·P_S
//! SNR = ─────────────────────────────────────────────
//!        4kTB/R_f + 2eB·R·P_R + (1+Π²)·B·R²·P_R²/Δν
//! ```
//!
//! Thermal noise dominates at low reference power, excess (intensity
//! fluctuation) noise at high reference power, and shot noise in between,
//! where the budget approaches `R·P_S/(2eB)`. Photon counting removes the
//! thermal term, leaving `η·Φ_S/(2B)`.

use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, ELEMENTARY_CHARGE};
use crate::dsp::to_db;
use crate::error::{Error, Result};
use crate::scan::dead_time_rate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionalSnrParams {
    /// A/W
    pub responsivity: f64,
    /// W
    pub reference_power: f64,
    /// W
    pub sample_power: f64,
    /// K
    pub temperature: f64,
    /// Hz
    pub bandwidth: f64,
    /// Ω
    pub feedback_resistance: f64,
    pub polarization_degree: f64,
    /// Hz
    pub source_bandwidth: f64,
}

impl Default for ConventionalSnrParams {
    /// Representative photodiode receiver whose thermal/shot crossover sits at 10 nW.
    fn default() -> Self {
        Self {
            responsivity: 0.8,
            reference_power: 1e-8,
            sample_power: 1e-12,
            temperature: 300.0,
            bandwidth: 1e4,
            feedback_resistance: 6.46e6,
            polarization_degree: 1.0,
            source_bandwidth: 1e13,
        }
    }
}

impl ConventionalSnrParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("responsivity", self.responsivity),
            ("reference_power", self.reference_power),
            ("sample_power", self.sample_power),
            ("temperature", self.temperature),
            ("bandwidth", self.bandwidth),
            ("feedback_resistance", self.feedback_resistance),
            ("source_bandwidth", self.source_bandwidth),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(name, format!("{v} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.polarization_degree) {
            return Err(Error::invalid("polarization_degree", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn with_reference_power(&self, reference_power: f64) -> Self {
        Self {
            reference_power,
            ..*self
        }
    }

    fn thermal_coefficient(&self) -> f64 {
        4.0 * BOLTZMANN * self.temperature / self.feedback_resistance
    }

    fn excess_coefficient(&self) -> f64 {
        (1.0 + self.polarization_degree.powi(2)) * self.responsivity.powi(2) / self.source_bandwidth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRegime {
    Thermal,
    Shot,
    Excess,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrBudget {
    /// A²
    pub signal_term: f64,
    pub thermal_noise: f64,
    pub shot_noise: f64,
    pub excess_noise: f64,
    pub snr: f64,
    pub snr_db: f64,
    pub dominant_regime: NoiseRegime,
}

pub fn snr_conventional(params: &ConventionalSnrParams) -> Result<SnrBudget> {
    params.validate()?;
    let b = params.bandwidth;
    let r = params.responsivity;
    let p_r = params.reference_power;
    let signal_term = r * r * p_r * params.sample_power;
    let thermal_noise = params.thermal_coefficient() * b;
    let shot_noise = 2.0 * ELEMENTARY_CHARGE * b * r * p_r;
    let excess_noise = params.excess_coefficient() * b * p_r * p_r;
    let snr = signal_term / (thermal_noise + shot_noise + excess_noise);
    let dominant_regime = if thermal_noise >= shot_noise && thermal_noise >= excess_noise {
        NoiseRegime::Thermal
    } else if shot_noise >= excess_noise {
        NoiseRegime::Shot
    } else {
        NoiseRegime::Excess
    };
    Ok(SnrBudget {
        signal_term,
        thermal_noise,
        shot_noise,
        excess_noise,
        snr,
        snr_db: to_db(snr),
        dominant_regime,
    })
}

/// Shot-noise-limited SNR `R·P_S/(2eB)`.
pub fn snr_shot_limit(params: &ConventionalSnrParams) -> f64 {
    params.responsivity * params.sample_power / (2.0 * ELEMENTARY_CHARGE * params.bandwidth)
}

/// Reference power maximizing the conventional SNR,
/// `√(4kTΔν / (R_f·(1+Π²)·R²))`.
pub fn optimal_reference_power(params: &ConventionalSnrParams) -> Result<f64> {
    params.validate()?;
    Ok((params.thermal_coefficient() / params.excess_coefficient()).sqrt())
}

/// Reference power at which thermal and shot noise are equal, `2kT/(e·R·R_f)`.
pub fn thermal_shot_crossover(params: &ConventionalSnrParams) -> Result<f64> {
    params.validate()?;
    Ok(params.thermal_coefficient() / (2.0 * ELEMENTARY_CHARGE * params.responsivity))
}

/// Reference power at which shot and excess noise are equal, `2eΔν/((1+Π²)·R)`.
pub fn shot_excess_crossover(params: &ConventionalSnrParams) -> Result<f64> {
    params.validate()?;
    Ok(2.0 * ELEMENTARY_CHARGE * params.responsivity / params.excess_coefficient())
}

/// Photon-counting SNR in the shot-noise regime, `η·Φ_S/(2B)`. Returns `(snr, snr_db)`.
pub fn snr_photon_counting(eta: f64, sample_flux: f64, bandwidth: f64) -> Result<(f64, f64)> {
    for (name, v) in [
        ("eta", eta),
        ("sample_flux", sample_flux),
        ("bandwidth", bandwidth),
    ] {
        if !(v > 0.0) {
            return Err(Error::invalid(name, format!("{v} must be positive")));
        }
    }
    let snr = eta * sample_flux / (2.0 * bandwidth);
    Ok((snr, to_db(snr)))
}

/// Sample flux giving unit SNR, `2B/η`: one detected photon per resolution time
/// `1/(2B)` requires `1/η` incident photons.
pub fn min_detectable_flux(eta: f64, bandwidth: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid("eta", "must lie in (0, 1]"));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("bandwidth", "must be positive"));
    }
    Ok(2.0 * bandwidth / eta)
}

/// Detection bandwidth of a counting record with counting time `T`: `1/(2T)`,
/// narrowed to the digital filter's bandwidth when one is applied.
pub fn counting_bandwidth(
    counting_time: f64,
    digital_filter_bandwidth: Option<f64>,
) -> Result<f64> {
    if !(counting_time > 0.0) {
        return Err(Error::invalid("counting_time", "must be positive"));
    }
    let intrinsic = 1.0 / (2.0 * counting_time);
    Ok(match digital_filter_bandwidth {
        Some(b) if b < intrinsic => b,
        _ => intrinsic,
    })
}

/// Fractional count loss above which a plan is flagged as saturating.
pub const SATURATION_WARNING_LOSS: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionPlan {
    /// mm
    pub scan_length: f64,
    /// mm/s
    pub mirror_speed: f64,
    /// s
    pub counting_time: f64,
    /// Pre-dead-time rate, counts/s.
    pub count_rate: f64,
    pub n_bins: usize,
    /// Pre-dead-time counts per bin.
    pub counts_per_bin: f64,
    /// Counts per bin after dead-time compression.
    pub observed_counts_per_bin: f64,
    /// s
    pub scan_time: f64,
    pub saturation_warning: bool,
}

pub fn acquisition_plan(
    scan_length: f64,
    mirror_speed: f64,
    counting_time: f64,
    count_rate: f64,
    dead_time: f64,
) -> Result<AcquisitionPlan> {
    if !(scan_length >= 0.0) {
        return Err(Error::invalid("scan_length", "must be nonnegative"));
    }
    for (name, v) in [
        ("mirror_speed", mirror_speed),
        ("counting_time", counting_time),
    ] {
        if !(v > 0.0) {
            return Err(Error::invalid(name, format!("{v} must be positive")));
        }
    }
    if !(count_rate >= 0.0 && dead_time >= 0.0) {
        return Err(Error::invalid(
            "count_rate",
            "rates and dead time must be nonnegative",
        ));
    }
    let ratio = scan_length / (mirror_speed * counting_time);
    let n_bins = (ratio * (1.0 + 1e-12)).floor() as usize;
    let observed = dead_time_rate(count_rate, dead_time);
    let loss = if count_rate > 0.0 {
        1.0 - observed / count_rate
    } else {
        0.0
    };
    Ok(AcquisitionPlan {
        scan_length,
        mirror_speed,
        counting_time,
        count_rate,
        n_bins,
        counts_per_bin: count_rate * counting_time,
        observed_counts_per_bin: observed * counting_time,
        scan_time: scan_length / mirror_speed,
        saturation_warning: loss > SATURATION_WARNING_LOSS,
    })
}

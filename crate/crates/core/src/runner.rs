//! End-to-end scenario pipelines.
//!
//! [`run_experiment`] executes one scenario, writes its data files into the
//! configured output directory and returns a [`RunReport`]. The report is also
//! written there as `report.toml`, with the fully resolved config echoed so a
//! report alone is enough to repeat the run.
//!
//! Monte Carlo repetitions run in parallel. Repetition `i` draws from the
//! stream `derive_seed(rng_seed, i)` and results are gathered in index order,
//! so output does not depend on scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    BudgetConfig, CompareConfig, ExperimentConfig, FanoRunConfig, FilterConfig, PlanConfig,
    PsfConfig, SampleConfig, ScanSettings, Scenario, SilicaConfig, SnrRunConfig, SourceConfig,
};
use crate::dsp::{analyze_scan, design_bandpass, fano_factor, to_db, AnalysisOptions, FilterSpec};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, table_csv, write_envelope, write_psf, write_scan_record, write_spectrum};
use crate::psf::{point_spread, spectrum_from_scan, Psf};
use crate::scan::{
    flux_from_power, repeat_at_position, sample_arm_power, simulate_scan_with, SampleModel,
    ScanConfig, ScanOptions,
};
use crate::snr_model::{
    acquisition_plan, optimal_reference_power, shot_excess_crossover, snr_conventional,
    snr_photon_counting, snr_shot_limit, thermal_shot_crossover, AcquisitionPlan, NoiseRegime,
};
use crate::spectra::{
    make_detector, make_gaussian_source, make_spdc_source, system_spectrum, DetectorParams,
    FrequencyGrid, SourceShape, SpectralDensity, SystemSpectrum, SILICON_CUTOFF_NM,
};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub toolkit_version: String,
    pub scenario: Scenario,
    pub metrics: BTreeMap<String, Metric>,
    /// Data files written, relative to the output directory.
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

impl RunReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize report: {e}")))
    }
}

/// Metrics every report of a scenario carries.
pub fn required_metrics(scenario: Scenario) -> &'static [&'static str] {
    match scenario {
        Scenario::Psf => &["fwhm_um"],
        Scenario::CompareDetectors => &[
            "fwhm_sspd_um",
            "fwhm_spad_um",
            "spectral_mass_beyond_1100nm_sspd",
            "spectral_mass_beyond_1100nm_spad",
        ],
        Scenario::SnrRun => &[
            "predicted_snr",
            "simulated_snr",
            "predicted_snr_db",
            "simulated_snr_db",
        ],
        Scenario::FanoRun => &["mean_f_hat", "std_f_hat", "expected_std"],
        Scenario::SilicaScan => &["peak_separation_um", "counts_per_bin_mean", "scan_time_s"],
        Scenario::SnrBudget => &[
            "thermal_shot_crossover_w",
            "shot_excess_crossover_w",
            "optimal_reference_power_w",
        ],
        Scenario::AcqPlan => &[
            "n_bins",
            "counts_per_bin",
            "observed_counts_per_bin",
            "scan_time_s",
            "saturation_warning",
        ],
    }
}

/// Independent 64-bit seed for stream `index` of a run seeded with `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a Weyl sequence
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Outputs<'a> {
    dir: &'a Path,
    metrics: BTreeMap<String, Metric>,
    files: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn metric(&mut self, name: &str, value: f64, unit: &str) {
        self.metrics.insert(
            name.to_string(),
            Metric {
                value,
                unit: unit.to_string(),
            },
        );
    }

    fn write(&mut self, name: &str, contents: String) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn path(&mut self, name: &str) -> std::path::PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

fn block<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("missing section [{name}]")))
}

pub fn build_source(source: &SourceConfig, grid: &FrequencyGrid) -> Result<SpectralDensity> {
    match *source {
        SourceConfig::Gaussian {
            center_wavelength_nm,
            fwhm_nm,
        } => make_gaussian_source(center_wavelength_nm, fwhm_nm, grid),
        SourceConfig::Spdc {
            pump_wavelength_nm,
            bandwidth_hz,
            shape,
        } => make_spdc_source(pump_wavelength_nm, bandwidth_hz, shape, grid),
    }
}

pub fn build_sample(sample: &SampleConfig) -> Result<SampleModel> {
    match sample {
        SampleConfig::Mirror { depth_um } => Ok(SampleModel::mirror(*depth_um)),
        SampleConfig::Window {
            front_depth_um,
            thickness_um,
            refractive_index,
        } => SampleModel::window(*front_depth_um, *thickness_um, *refractive_index),
        SampleConfig::Reflectors { reflectors } => {
            SampleModel::new(reflectors.clone(), "reflectors")
        }
    }
}

fn system_and_psf(
    source: &SpectralDensity,
    detector: &DetectorParams,
    grid: &FrequencyGrid,
    psf: &PsfConfig,
) -> Result<(SystemSpectrum, Psf)> {
    let model = make_detector(detector, grid)?;
    let system = system_spectrum(source, &model)?;
    let psf = point_spread(&system.density, psf.z_range_um, psf.z_points)?;
    Ok((system, psf))
}

/// SPDC bandwidth (Hz) at which the system PSF through `detector` has FWHM `target_fwhm_um`.
///
/// The FWHM falls monotonically with bandwidth, so the root is found by
/// bisection inside `bracket`.
pub fn calibrate_spdc_bandwidth(
    pump_wavelength_nm: f64,
    shape: SourceShape,
    detector: &DetectorParams,
    grid: &FrequencyGrid,
    psf: &PsfConfig,
    target_fwhm_um: f64,
    bracket: [f64; 2],
) -> Result<f64> {
    let model = make_detector(detector, grid)?;
    let fwhm = |bandwidth: f64| -> Result<f64> {
        let source = make_spdc_source(pump_wavelength_nm, bandwidth, shape, grid)?;
        let system = system_spectrum(&source, &model)?;
        Ok(point_spread(&system.density, psf.z_range_um, psf.z_points)?.fwhm_um())
    };
    let [mut lo, mut hi] = bracket;
    if !(fwhm(lo)? >= target_fwhm_um && fwhm(hi)? <= target_fwhm_um) {
        return Err(Error::Range {
            field: "compare.bandwidth_bracket_hz".into(),
            reason: format!("does not bracket a {target_fwhm_um} um FWHM"),
        });
    }
    while hi - lo > 1e-7 * hi {
        let mid = 0.5 * (lo + hi);
        if fwhm(mid)? > target_fwhm_um {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let dir = Path::new(&config.output.dir);
    fs::create_dir_all(dir)?;
    let mut out = Outputs {
        dir,
        metrics: BTreeMap::new(),
        files: Vec::new(),
    };
    let result = match config.scenario {
        Scenario::Psf => run_psf(config, &mut out),
        Scenario::CompareDetectors => run_compare(config, &mut out),
        Scenario::SnrRun => run_snr(config, &mut out),
        Scenario::FanoRun => run_fano(config, &mut out),
        Scenario::SilicaScan => run_silica(config, &mut out),
        Scenario::SnrBudget => run_budget(block(&config.budget, "budget")?, &mut out),
        Scenario::AcqPlan => run_plan(block(&config.plan, "plan")?, &mut out),
    };
    result.map_err(|e| e.context(format!("scenario {}", config.scenario)))?;

    let report = RunReport {
        format_version: REPORT_FORMAT_VERSION,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: config.scenario,
        metrics: out.metrics,
        files: out.files,
        config: config.clone(),
    };
    fs::write(dir.join(REPORT_FILE), report.to_toml_string()?)?;
    Ok(report)
}

fn run_psf(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let grid = block(&config.grid, "grid")?;
    let source_config = block(&config.source, "source")?;
    let source = build_source(source_config, grid)?;
    let detector = block(&config.detector, "detector")?;
    let (system, psf) = system_and_psf(&source, detector, grid, block(&config.psf, "psf")?)?;

    out.metric("fwhm_um", psf.fwhm_um(), "um");
    out.metric("coherence_length_um", psf.coherence_length_um(), "um");
    out.metric(
        "center_wavelength_nm",
        system.density.center_wavelength_nm(),
        "nm",
    );
    out.metric("system_efficiency", system.eta, "1");
    if let SourceConfig::Gaussian {
        center_wavelength_nm,
        fwhm_nm,
    } = *source_config
    {
        let closed_form = 2.0 * std::f64::consts::LN_2 / std::f64::consts::PI
            * center_wavelength_nm.powi(2)
            / fwhm_nm
            * 1e-3;
        out.metric("gaussian_closed_form_fwhm_um", closed_form, "um");
    }
    write_psf(&psf, &out.path("psf.csv"))?;
    write_spectrum(&system.density, &out.path("system_spectrum.txt"))?;
    Ok(())
}

fn run_compare(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let grid = block(&config.grid, "grid")?;
    let psf_config = block(&config.psf, "psf")?;
    let compare: &CompareConfig = block(&config.compare, "compare")?;
    let SourceConfig::Spdc {
        pump_wavelength_nm,
        bandwidth_hz,
        shape,
    } = *block(&config.source, "source")?
    else {
        return Err(Error::Config(
            "compare_detectors needs an spdc source".into(),
        ));
    };
    let bandwidth = if compare.calibrate {
        calibrate_spdc_bandwidth(
            pump_wavelength_nm,
            shape,
            &compare.sspd,
            grid,
            psf_config,
            compare.target_fwhm_um,
            compare.bandwidth_bracket_hz,
        )?
    } else {
        bandwidth_hz
    };
    out.metric("spdc_bandwidth_hz", bandwidth, "Hz");
    let source = make_spdc_source(pump_wavelength_nm, bandwidth, shape, grid)?;
    write_spectrum(&source, &out.path("source_spectrum.txt"))?;
    out.metric(
        "source_mass_beyond_1100nm",
        source.mass_fraction_beyond_wavelength(SILICON_CUTOFF_NM),
        "1",
    );

    let r = &compare.recovery;
    for (index, (name, detector)) in [("sspd", &compare.sspd), ("spad", &compare.spad)]
        .into_iter()
        .enumerate()
    {
        let (system, psf) = system_and_psf(&source, detector, grid, psf_config)?;
        out.metric(&format!("fwhm_{name}_um"), psf.fwhm_um(), "um");
        out.metric(&format!("system_efficiency_{name}"), system.eta, "1");
        out.metric(
            &format!("model_mass_beyond_1100nm_{name}"),
            system
                .density
                .mass_fraction_beyond_wavelength(SILICON_CUTOFF_NM),
            "1",
        );
        let scan = ScanConfig {
            z_start_um: -r.half_span_um,
            z_end_um: r.half_span_um,
            mirror_speed_mm_s: r.bin_spacing_um / (1e3 * r.counting_time_s),
            counting_time_s: r.counting_time_s,
            reference_flux: r.reference_flux,
            sample_flux_peak: r.sample_flux_peak,
            eta: system.eta,
            dark_rate: detector.dark_rate,
            dead_time_s: detector.dead_time,
            rng_seed: derive_seed(config.rng_seed, index as u64),
            center_wavelength_nm: psf.carrier_wavelength_nm(),
        };
        let record = simulate_scan_with(
            &scan,
            &SampleModel::mirror(0.0),
            &psf,
            &ScanOptions::default(),
        )?;
        let recovered = spectrum_from_scan(&record)?;
        out.metric(
            &format!("spectral_mass_beyond_1100nm_{name}"),
            recovered.mass_fraction_beyond_wavelength(SILICON_CUTOFF_NM),
            "1",
        );
        write_psf(&psf, &out.path(&format!("psf_{name}.csv")))?;
        write_spectrum(
            &system.density,
            &out.path(&format!("system_spectrum_{name}.txt")),
        )?;
        write_spectrum(
            &recovered,
            &out.path(&format!("recovered_spectrum_{name}.txt")),
        )?;
        write_scan_record(&record, &out.path(&format!("scan_{name}.csv")))?;
    }
    Ok(())
}

/// Photon-counting SNR of a mirror scan: prediction against Monte Carlo.
fn run_snr(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let grid = block(&config.grid, "grid")?;
    let source = build_source(block(&config.source, "source")?, grid)?;
    let detector = block(&config.detector, "detector")?;
    let (system, psf) = system_and_psf(&source, detector, grid, block(&config.psf, "psf")?)?;
    let filter: &FilterConfig = block(&config.filter, "filter")?;
    let s: &SnrRunConfig = block(&config.snr_run, "snr_run")?;

    let lambda0 = system.density.center_wavelength_nm();
    let sample_power =
        sample_arm_power(s.source_power_w, s.sample_attenuation_db, s.splitter_factor)?;
    let reference_power = sample_arm_power(
        s.source_power_w,
        s.reference_attenuation_db,
        s.splitter_factor,
    )?;
    let sample_flux = flux_from_power(sample_power, lambda0)?;
    let reference_flux = flux_from_power(reference_power, lambda0)?;

    let mut scan = ScanConfig {
        z_start_um: -s.scan_half_span_um,
        z_end_um: s.scan_half_span_um,
        mirror_speed_mm_s: lambda0 * 1e-3 / 8.0 / (1e3 * s.counting_time_s),
        counting_time_s: s.counting_time_s,
        reference_flux,
        sample_flux_peak: sample_flux,
        eta: system.eta,
        dark_rate: detector.dark_rate,
        dead_time_s: detector.dead_time,
        rng_seed: config.rng_seed,
        center_wavelength_nm: psf.carrier_wavelength_nm(),
    };
    // B = bandwidth·Δz/(2T): pick Δz so the designed passband realizes the target B
    let provisional = design_bandpass(&scan, &system.density, filter.margin)?;
    let dz = 2.0 * s.target_bandwidth_hz * s.counting_time_s / provisional.bandwidth;
    scan.mirror_speed_mm_s = dz / (1e3 * s.counting_time_s);
    let spec = FilterSpec {
        window: filter.window,
        ..design_bandpass(&scan, &system.density, filter.margin)?
    };
    let bandwidth = spec.effective_bandwidth_hz(scan.mirror_speed_mm_s);
    let (predicted, predicted_db) = snr_photon_counting(system.eta, sample_flux, bandwidth)?;

    let options = AnalysisOptions {
        threshold_fraction: filter.threshold_fraction,
        snr_regions: Some((
            (-s.signal_half_width_um, s.signal_half_width_um),
            vec![
                (scan.z_start_um, -s.noise_start_um),
                (s.noise_start_um, scan.z_end_um),
            ],
        )),
    };
    let sample = SampleModel::mirror(0.0);
    let trials = (0..s.seeds as u64)
        .into_par_iter()
        .map(|i| {
            let trial = ScanConfig {
                rng_seed: derive_seed(config.rng_seed, i),
                ..scan.clone()
            };
            let record = simulate_scan_with(&trial, &sample, &psf, &ScanOptions::default())?;
            let result = analyze_scan(&record, &spec, &options)?;
            Ok((result.snr.ok_or(Error::NoPeak)?.snr, result))
        })
        .collect::<Result<Vec<_>>>()?;

    let snrs: Vec<f64> = trials.iter().map(|(snr, _)| *snr).collect();
    let simulated = median(&mut snrs.clone());
    out.metric("predicted_snr", predicted, "1");
    out.metric("predicted_snr_db", predicted_db, "dB");
    out.metric("simulated_snr", simulated, "1");
    out.metric("simulated_snr_db", to_db(simulated), "dB");
    out.metric("simulated_to_predicted", simulated / predicted, "1");
    out.metric("sample_flux", sample_flux, "photons/s");
    out.metric("reference_flux", reference_flux, "photons/s");
    out.metric("system_efficiency", system.eta, "1");
    out.metric("detection_bandwidth_hz", bandwidth, "Hz");
    out.metric("bin_spacing_um", scan.bin_spacing_um(), "um");
    out.metric("mirror_speed_mm_s", scan.mirror_speed_mm_s, "mm/s");
    out.metric("seeds", s.seeds as f64, "1");

    let rows: Vec<Vec<f64>> = snrs
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i as f64, *v, to_db(*v)])
        .collect();
    out.write(
        "snr_trials.csv",
        table_csv(
            &[("predicted_snr", fmt_f64(predicted))],
            &["trial", "snr", "snr_db"],
            &rows,
        ),
    )?;
    let envelope_files = write_envelope(&trials[0].1, out.dir, "envelope_trial0")?;
    out.files.extend(envelope_files);
    Ok(())
}

fn run_fano(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let grid = block(&config.grid, "grid")?;
    let source = build_source(block(&config.source, "source")?, grid)?;
    let detector = block(&config.detector, "detector")?;
    let (system, psf) = system_and_psf(&source, detector, grid, block(&config.psf, "psf")?)?;
    let f: &FanoRunConfig = block(&config.fano_run, "fano_run")?;

    // a parked mirror: the scan range only has to describe one valid bin
    let dz = psf.carrier_wavelength_nm() * 1e-3 / 16.0;
    let scan = ScanConfig {
        z_start_um: f.position_um - 0.5 * dz,
        z_end_um: f.position_um + 0.5 * dz,
        mirror_speed_mm_s: dz / (1e3 * f.counting_time_s),
        counting_time_s: f.counting_time_s,
        reference_flux: f.reference_flux,
        sample_flux_peak: f.sample_flux_peak,
        eta: system.eta,
        dark_rate: detector.dark_rate,
        dead_time_s: detector.dead_time,
        rng_seed: config.rng_seed,
        center_wavelength_nm: psf.carrier_wavelength_nm(),
    };
    let sample = SampleModel::mirror(0.0);
    let estimates = (0..f.trials as u64)
        .into_par_iter()
        .map(|i| {
            let trial = ScanConfig {
                rng_seed: derive_seed(config.rng_seed, i),
                ..scan.clone()
            };
            let counts = repeat_at_position(&trial, &sample, &psf, f.position_um, f.repeats)?;
            let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
            Ok((fano_factor(&counts)?, mean))
        })
        .collect::<Result<Vec<_>>>()?;

    let f_hats: Vec<f64> = estimates.iter().map(|(e, _)| e.f_hat).collect();
    let (mean_f, std_f) = mean_and_std(&f_hats);
    let mean_counts = estimates.iter().map(|(_, m)| m).sum::<f64>() / estimates.len() as f64;
    out.metric("mean_f_hat", mean_f, "1");
    out.metric("std_f_hat", std_f, "1");
    out.metric("expected_std", estimates[0].0.expected_std, "1");
    out.metric("mean_counts", mean_counts, "counts");
    out.metric("trials", f.trials as f64, "1");
    out.metric("repeats", f.repeats as f64, "1");

    let rows: Vec<Vec<f64>> = estimates
        .iter()
        .enumerate()
        .map(|(i, (e, m))| vec![i as f64, e.f_hat, *m])
        .collect();
    out.write(
        "fano_trials.csv",
        table_csv(&[], &["trial", "f_hat", "mean_counts"], &rows),
    )
}

fn run_silica(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let grid = block(&config.grid, "grid")?;
    let source = build_source(block(&config.source, "source")?, grid)?;
    let detector = block(&config.detector, "detector")?;
    let (system, psf) = system_and_psf(&source, detector, grid, block(&config.psf, "psf")?)?;
    let sample = build_sample(block(&config.sample, "sample")?)?;
    let settings: &ScanSettings = block(&config.scan, "scan")?;
    let filter: &FilterConfig = block(&config.filter, "filter")?;
    let silica: &SilicaConfig = block(&config.silica, "silica")?;

    // choose Φ_R so the incoherent detected rate equals the requested count rate
    let reflected: f64 = sample
        .reflectors()
        .iter()
        .map(|r| r.amplitude_reflectance.powi(2))
        .sum();
    let optical = (silica.count_rate - detector.dark_rate) / system.eta;
    if !(optical > 0.0) {
        return Err(Error::Range {
            field: "silica.count_rate".into(),
            reason: "must exceed the dark rate".into(),
        });
    }
    let reference_flux = optical / (1.0 + silica.sample_to_reference * reflected);
    let scan = ScanConfig {
        z_start_um: settings.z_start_um,
        z_end_um: settings.z_end_um,
        mirror_speed_mm_s: settings.mirror_speed_mm_s,
        counting_time_s: settings.counting_time_s,
        reference_flux,
        sample_flux_peak: silica.sample_to_reference * reference_flux,
        eta: system.eta,
        dark_rate: detector.dark_rate,
        dead_time_s: detector.dead_time,
        rng_seed: config.rng_seed,
        center_wavelength_nm: psf.carrier_wavelength_nm(),
    };
    let options = ScanOptions {
        record_truth: false,
        dead_time_mode: settings.dead_time_mode,
    };
    let record = simulate_scan_with(&scan, &sample, &psf, &options)?;
    let spec = FilterSpec {
        window: filter.window,
        ..design_bandpass(&scan, &system.density, filter.margin)?
    };
    let result = analyze_scan(
        &record,
        &spec,
        &AnalysisOptions {
            threshold_fraction: filter.threshold_fraction,
            snr_regions: None,
        },
    )?;
    let mut peaks = result.peaks.clone();
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
    if peaks.len() < 2 {
        return Err(Error::NoPeak.context("expected echoes from both window surfaces"));
    }
    let (first, second) = if peaks[0].position_um < peaks[1].position_um {
        (peaks[0], peaks[1])
    } else {
        (peaks[1], peaks[0])
    };

    let observed = record.mean_counts();
    // invert the nonparalyzable compression bin by bin on average
    let loss = observed * scan.dead_time_s / scan.counting_time_s;
    let pre_dead_time = observed / (1.0 - loss);
    let length_mm = (scan.z_end_um - scan.z_start_um) * 1e-3;
    let plan = acquisition_plan(
        length_mm,
        scan.mirror_speed_mm_s,
        scan.counting_time_s,
        silica.count_rate,
        scan.dead_time_s,
    )?;
    let fast = acquisition_plan(
        length_mm,
        scan.mirror_speed_mm_s * silica.speedup,
        scan.counting_time_s / silica.speedup,
        silica.count_rate * silica.speedup,
        scan.dead_time_s,
    )?;

    out.metric(
        "peak_separation_um",
        second.position_um - first.position_um,
        "um",
    );
    out.metric("front_peak_um", first.position_um, "um");
    out.metric("back_peak_um", second.position_um, "um");
    out.metric("peak_count", result.peaks.len() as f64, "1");
    out.metric("counts_per_bin_mean", pre_dead_time, "counts");
    out.metric("observed_counts_per_bin_mean", observed, "counts");
    out.metric(
        "scan_time_s",
        record.counts.len() as f64 * scan.counting_time_s,
        "s",
    );
    out.metric("n_bins", record.counts.len() as f64, "1");
    out.metric("reference_flux", reference_flux, "photons/s");
    out.metric("planned_counts_per_bin", plan.counts_per_bin, "counts");
    out.metric("fast_scan_time_s", fast.scan_time, "s");
    out.metric("fast_counts_per_bin", fast.counts_per_bin, "counts");

    write_scan_record(&record, &out.path("scan.csv"))?;
    let envelope_files = write_envelope(&result, out.dir, "envelope")?;
    out.files.extend(envelope_files);
    write_psf(&psf, &out.path("psf.csv"))?;
    Ok(())
}

fn regime_code(regime: NoiseRegime) -> f64 {
    match regime {
        NoiseRegime::Thermal => 0.0,
        NoiseRegime::Shot => 1.0,
        NoiseRegime::Excess => 2.0,
    }
}

fn run_budget(budget: &BudgetConfig, out: &mut Outputs) -> Result<()> {
    let receiver = &budget.receiver;
    let optimum = optimal_reference_power(receiver)?;
    let at_optimum = snr_conventional(&receiver.with_reference_power(optimum))?;

    let ratio = budget.sweep_max_w / budget.sweep_min_w;
    let last = (budget.sweep_points - 1) as f64;
    let mut rows = Vec::with_capacity(budget.sweep_points);
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..budget.sweep_points {
        let p = budget.sweep_min_w * ratio.powf(i as f64 / last);
        let b = snr_conventional(&receiver.with_reference_power(p))?;
        if b.snr > best.1 {
            best = (p, b.snr);
        }
        rows.push(vec![
            p,
            b.snr,
            b.snr_db,
            b.thermal_noise,
            b.shot_noise,
            b.excess_noise,
            regime_code(b.dominant_regime),
        ]);
    }

    out.metric(
        "thermal_shot_crossover_w",
        thermal_shot_crossover(receiver)?,
        "W",
    );
    out.metric(
        "shot_excess_crossover_w",
        shot_excess_crossover(receiver)?,
        "W",
    );
    out.metric("optimal_reference_power_w", optimum, "W");
    out.metric("optimal_snr", at_optimum.snr, "1");
    out.metric("optimal_snr_db", at_optimum.snr_db, "dB");
    out.metric("grid_optimal_reference_power_w", best.0, "W");
    out.metric("shot_limit_snr", snr_shot_limit(receiver), "1");
    out.write(
        "snr_budget.csv",
        table_csv(
            &[("regime_codes", "0 = thermal, 1 = shot, 2 = excess".into())],
            &[
                "reference_power_w",
                "snr",
                "snr_db",
                "thermal_noise",
                "shot_noise",
                "excess_noise",
                "regime",
            ],
            &rows,
        ),
    )
}

fn plan_metrics(out: &mut Outputs, prefix: &str, plan: &AcquisitionPlan) {
    out.metric(&format!("{prefix}n_bins"), plan.n_bins as f64, "1");
    out.metric(
        &format!("{prefix}counts_per_bin"),
        plan.counts_per_bin,
        "counts",
    );
    out.metric(
        &format!("{prefix}observed_counts_per_bin"),
        plan.observed_counts_per_bin,
        "counts",
    );
    out.metric(&format!("{prefix}scan_time_s"), plan.scan_time, "s");
    out.metric(
        &format!("{prefix}saturation_warning"),
        if plan.saturation_warning { 1.0 } else { 0.0 },
        "1",
    );
}

fn run_plan(p: &PlanConfig, out: &mut Outputs) -> Result<()> {
    let base = acquisition_plan(
        p.scan_length_mm,
        p.mirror_speed_mm_s,
        p.counting_time_s,
        p.count_rate,
        p.dead_time_s,
    )?;
    let fast = acquisition_plan(
        p.scan_length_mm,
        p.mirror_speed_mm_s * p.speedup,
        p.counting_time_s / p.speedup,
        p.count_rate * p.speedup,
        p.dead_time_s,
    )?;
    plan_metrics(out, "", &base);
    plan_metrics(out, "fast_", &fast);
    let text = toml::to_string(&BTreeMap::from([("base", base), ("fast", fast)]))
        .map_err(|e| Error::Config(format!("cannot serialize plan: {e}")))?;
    out.write("plan.toml", text)
}

//! Experiment configuration.
//!
//! A config is a TOML document with a top-level `scenario` key and one table
//! per parameter block. Each scenario has its own defaults; the user's text is
//! layered over them key by key, then the merged document is decoded strictly
//! so a misspelled key is an error rather than a silently ignored setting.
//! Blocks that a scenario does not use are rejected too.
//!
//! ```toml
//! scenario = "psf"
//!
//! [source]
//! kind = "gaussian"
//! center_wavelength_nm = 930.0
//! fwhm_nm = 70.0
//!
//! [detector.response]
//! kind = "ideal_flat"
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::dsp::FilterWindow;
use crate::error::{Error, Result};
use crate::scan::{DeadTimeMode, Reflector, DOUBLE_PASS_50_50};
use crate::snr_model::ConventionalSnrParams;
use crate::spectra::{DetectorParams, FrequencyGrid, ResponseSpec, SourceShape};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Psf,
    CompareDetectors,
    SnrRun,
    FanoRun,
    SilicaScan,
    SnrBudget,
    AcqPlan,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Psf,
        Scenario::CompareDetectors,
        Scenario::SnrRun,
        Scenario::FanoRun,
        Scenario::SilicaScan,
        Scenario::SnrBudget,
        Scenario::AcqPlan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Psf => "psf",
            Scenario::CompareDetectors => "compare_detectors",
            Scenario::SnrRun => "snr_run",
            Scenario::FanoRun => "fano_run",
            Scenario::SilicaScan => "silica_scan",
            Scenario::SnrBudget => "snr_budget",
            Scenario::AcqPlan => "acq_plan",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    Gaussian {
        center_wavelength_nm: f64,
        fwhm_nm: f64,
    },
    Spdc {
        pump_wavelength_nm: f64,
        /// FWHM of the downconverted band, Hz.
        bandwidth_hz: f64,
        shape: SourceShape,
    },
}

impl SourceConfig {
    pub fn sld() -> Self {
        SourceConfig::Gaussian {
            center_wavelength_nm: 930.0,
            fwhm_nm: 70.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsfConfig {
    /// Half-width of the computed delay window, μm.
    pub z_range_um: f64,
    pub z_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleConfig {
    Mirror {
        depth_um: f64,
    },
    Window {
        front_depth_um: f64,
        thickness_um: f64,
        refractive_index: f64,
    },
    Reflectors {
        reflectors: Vec<Reflector>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSettings {
    pub z_start_um: f64,
    pub z_end_um: f64,
    pub mirror_speed_mm_s: f64,
    pub counting_time_s: f64,
    pub dead_time_mode: DeadTimeMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Passband width as a multiple of the system spectrum's FWHM.
    pub margin: f64,
    pub window: FilterWindow,
    /// Peak detection threshold relative to the envelope maximum.
    pub threshold_fraction: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            margin: 1.5,
            window: FilterWindow::Hamming,
            threshold_fraction: 0.5,
        }
    }
}

/// Noiseless-enough scan used to recover spectra by Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryScan {
    pub half_span_um: f64,
    pub bin_spacing_um: f64,
    pub counting_time_s: f64,
    pub reference_flux: f64,
    pub sample_flux_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Fit the SPDC bandwidth so the SSPD-response PSF has `target_fwhm_um`.
    pub calibrate: bool,
    pub target_fwhm_um: f64,
    /// Bisection bracket for the calibrated bandwidth, Hz.
    pub bandwidth_bracket_hz: [f64; 2],
    pub sspd: DetectorParams,
    pub spad: DetectorParams,
    pub recovery: RecoveryScan,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            calibrate: true,
            target_fwhm_um: 3.3,
            bandwidth_bracket_hz: [10e12, 50e12],
            sspd: DetectorParams {
                response: ResponseSpec::sspd(),
                dark_rate: 0.0,
                dead_time: 0.0,
            },
            spad: DetectorParams {
                response: ResponseSpec::spad(),
                dark_rate: 0.0,
                dead_time: 0.0,
            },
            recovery: RecoveryScan {
                half_span_um: 50.0,
                bin_spacing_um: 0.1,
                counting_time_s: 1.0,
                reference_flux: 2e8,
                sample_flux_peak: 2e8,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrRunConfig {
    /// W
    pub source_power_w: f64,
    pub sample_attenuation_db: f64,
    /// Extra loss in the reference arm keeping the detector out of saturation.
    pub reference_attenuation_db: f64,
    /// Power fraction delivered by the beamsplitter on a round trip.
    pub splitter_factor: f64,
    pub counting_time_s: f64,
    /// Detection bandwidth to realize; the mirror speed is chosen to match, Hz.
    pub target_bandwidth_hz: f64,
    pub scan_half_span_um: f64,
    /// Half-width of the region around the mirror searched for the peak, μm.
    pub signal_half_width_um: f64,
    /// Noise statistics use `|z| >= noise_start_um`.
    pub noise_start_um: f64,
    pub seeds: usize,
}

impl Default for SnrRunConfig {
    fn default() -> Self {
        Self {
            source_power_w: 10e-9,
            sample_attenuation_db: 70.0,
            reference_attenuation_db: 40.0,
            splitter_factor: DOUBLE_PASS_50_50,
            counting_time_s: 1.0,
            target_bandwidth_hz: 1.0 / 40.0,
            scan_half_span_um: 100.0,
            signal_half_width_um: 10.0,
            noise_start_um: 20.0,
            seeds: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanoRunConfig {
    pub reference_flux: f64,
    pub sample_flux_peak: f64,
    pub counting_time_s: f64,
    /// Parked mirror position relative to the sample mirror, μm.
    pub position_um: f64,
    /// Counting intervals per trial (N).
    pub repeats: usize,
    pub trials: usize,
}

impl Default for FanoRunConfig {
    fn default() -> Self {
        Self {
            reference_flux: 1e6,
            sample_flux_peak: 1170.0,
            counting_time_s: 1e-3,
            position_um: 100.0,
            repeats: 100,
            trials: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SilicaConfig {
    /// Detected rate before dead time, counts/s.
    pub count_rate: f64,
    /// Φ_S/Φ_R before sample reflectance weighting.
    pub sample_to_reference: f64,
    /// Rate and counting-time factor of the faster comparison plan.
    pub speedup: f64,
}

impl Default for SilicaConfig {
    fn default() -> Self {
        Self {
            count_rate: 5e6,
            sample_to_reference: 1.0,
            speedup: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub receiver: ConventionalSnrParams,
    /// Reference-power sweep, W.
    pub sweep_min_w: f64,
    pub sweep_max_w: f64,
    pub sweep_points: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            receiver: ConventionalSnrParams::default(),
            sweep_min_w: 1e-12,
            sweep_max_w: 1e-2,
            sweep_points: 2001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub scan_length_mm: f64,
    pub mirror_speed_mm_s: f64,
    pub counting_time_s: f64,
    pub count_rate: f64,
    pub dead_time_s: f64,
    pub speedup: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            scan_length_mm: 1.0,
            mirror_speed_mm_s: 1.0,
            counting_time_s: 10e-6,
            count_rate: 5e6,
            dead_time_s: 10e-9,
            speedup: 10.0,
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub rng_seed: u64,
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<FrequencyGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psf: Option<PsfConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_run: Option<SnrRunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fano_run: Option<FanoRunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub silica: Option<SilicaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanConfig>,
}

fn detector(response: ResponseSpec, dark_rate: f64, dead_time: f64) -> DetectorParams {
    DetectorParams {
        response,
        dark_rate,
        dead_time,
    }
}

/// Spectrally flat detector with efficiency `eta` across the visible and near infrared.
fn flat_detector(eta: f64) -> ResponseSpec {
    ResponseSpec::Custom {
        wavelengths_nm: vec![300.0, 3000.0],
        qe: vec![eta, eta],
    }
}

impl ExperimentConfig {
    fn bare(scenario: Scenario) -> Self {
        Self {
            scenario,
            rng_seed: 1,
            output: OutputConfig::default(),
            grid: None,
            source: None,
            detector: None,
            psf: None,
            sample: None,
            scan: None,
            filter: None,
            compare: None,
            snr_run: None,
            fano_run: None,
            silica: None,
            budget: None,
            plan: None,
        }
    }

    /// Default parameter set of a scenario.
    pub fn defaults_for(scenario: Scenario) -> Self {
        let mut c = Self::bare(scenario);
        match scenario {
            Scenario::Psf => {
                c.grid = Some(FrequencyGrid::default());
                c.source = Some(SourceConfig::sld());
                c.detector = Some(detector(ResponseSpec::IdealFlat, 0.0, 0.0));
                c.psf = Some(PsfConfig {
                    z_range_um: 40.0,
                    z_points: 4001,
                });
            }
            Scenario::CompareDetectors => {
                // the sinc² tails reach ~3.4 bandwidths below the 1064 nm centre
                c.grid = Some(FrequencyGrid::new(100e12, 1000e12, 1 << 14).expect("valid grid"));
                c.source = Some(SourceConfig::Spdc {
                    pump_wavelength_nm: 532.0,
                    bandwidth_hz: 41.7e12,
                    shape: SourceShape::Sinc2,
                });
                c.psf = Some(PsfConfig {
                    z_range_um: 80.0,
                    z_points: 4001,
                });
                c.compare = Some(CompareConfig::default());
            }
            Scenario::SnrRun => {
                c.grid = Some(FrequencyGrid::default());
                c.source = Some(SourceConfig::sld());
                c.detector = Some(detector(flat_detector(0.05), 0.0, 0.0));
                c.psf = Some(PsfConfig {
                    z_range_um: 120.0,
                    z_points: 4097,
                });
                c.filter = Some(FilterConfig {
                    margin: 1.45,
                    ..FilterConfig::default()
                });
                c.snr_run = Some(SnrRunConfig::default());
            }
            Scenario::FanoRun => {
                c.grid = Some(FrequencyGrid::default());
                c.source = Some(SourceConfig::sld());
                c.detector = Some(detector(flat_detector(0.05), 0.0, 0.0));
                c.psf = Some(PsfConfig {
                    z_range_um: 120.0,
                    z_points: 4097,
                });
                c.fano_run = Some(FanoRunConfig::default());
            }
            Scenario::SilicaScan => {
                c.grid = Some(FrequencyGrid::default());
                c.source = Some(SourceConfig::sld());
                c.detector = Some(detector(ResponseSpec::sspd(), 0.0, 10e-9));
                c.psf = Some(PsfConfig {
                    z_range_um: 650.0,
                    z_points: 16385,
                });
                c.sample = Some(SampleConfig::Window {
                    front_depth_um: 400.0,
                    thickness_um: 90.0,
                    refractive_index: 1.5,
                });
                c.scan = Some(ScanSettings {
                    z_start_um: 0.0,
                    z_end_um: 1000.0,
                    mirror_speed_mm_s: 1.0,
                    counting_time_s: 10e-6,
                    dead_time_mode: DeadTimeMode::RateCompression,
                });
                c.filter = Some(FilterConfig::default());
                c.silica = Some(SilicaConfig::default());
            }
            Scenario::SnrBudget => c.budget = Some(BudgetConfig::default()),
            Scenario::AcqPlan => c.plan = Some(PlanConfig::default()),
        }
        c
    }

    /// Names of the optional blocks that are set.
    fn present_blocks(&self) -> Vec<&'static str> {
        let flags = [
            ("grid", self.grid.is_some()),
            ("source", self.source.is_some()),
            ("detector", self.detector.is_some()),
            ("psf", self.psf.is_some()),
            ("sample", self.sample.is_some()),
            ("scan", self.scan.is_some()),
            ("filter", self.filter.is_some()),
            ("compare", self.compare.is_some()),
            ("snr_run", self.snr_run.is_some()),
            ("fano_run", self.fano_run.is_some()),
            ("silica", self.silica.is_some()),
            ("budget", self.budget.is_some()),
            ("plan", self.plan.is_some()),
        ];
        flags
            .into_iter()
            .filter(|(_, on)| *on)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let allowed = Self::defaults_for(self.scenario).present_blocks();
        for block in self.present_blocks() {
            if !allowed.contains(&block) {
                return Err(Error::Config(format!(
                    "section [{block}] does not apply to scenario {}",
                    self.scenario
                )));
            }
        }
        if self.output.dir.is_empty() {
            return Err(range("output.dir", "must not be empty"));
        }
        if let Some(g) = &self.grid {
            FrequencyGrid::new(g.nu_min(), g.nu_max(), g.len())
                .map_err(|e| range("grid", e.to_string()))?;
        }
        if let Some(source) = &self.source {
            match *source {
                SourceConfig::Gaussian {
                    center_wavelength_nm,
                    fwhm_nm,
                } => {
                    positive("source.center_wavelength_nm", center_wavelength_nm)?;
                    positive("source.fwhm_nm", fwhm_nm)?;
                }
                SourceConfig::Spdc {
                    pump_wavelength_nm,
                    bandwidth_hz,
                    ..
                } => {
                    positive("source.pump_wavelength_nm", pump_wavelength_nm)?;
                    positive("source.bandwidth_hz", bandwidth_hz)?;
                }
            }
        }
        if let Some(d) = &self.detector {
            check_detector("detector", d)?;
        }
        if let Some(p) = &self.psf {
            positive("psf.z_range_um", p.z_range_um)?;
            if p.z_points < crate::psf::MIN_Z_POINTS {
                return Err(range(
                    "psf.z_points",
                    format!("must be at least {}", crate::psf::MIN_Z_POINTS),
                ));
            }
        }
        if let Some(SampleConfig::Window {
            thickness_um,
            refractive_index,
            ..
        }) = &self.sample
        {
            positive("sample.thickness_um", *thickness_um)?;
            if !(*refractive_index >= 1.0) {
                return Err(range("sample.refractive_index", "must be at least 1"));
            }
        }
        if let Some(s) = &self.scan {
            positive("scan.mirror_speed_mm_s", s.mirror_speed_mm_s)?;
            positive("scan.counting_time_s", s.counting_time_s)?;
            if !(s.z_end_um > s.z_start_um) {
                return Err(range("scan.z_end_um", "must exceed z_start_um"));
            }
        }
        if let Some(f) = &self.filter {
            if !(f.margin >= 1.0) {
                return Err(range("filter.margin", "must be at least 1"));
            }
            if !(f.threshold_fraction > 0.0 && f.threshold_fraction < 1.0) {
                return Err(range("filter.threshold_fraction", "must lie in (0, 1)"));
            }
        }
        if let Some(c) = &self.compare {
            positive("compare.target_fwhm_um", c.target_fwhm_um)?;
            let [lo, hi] = c.bandwidth_bracket_hz;
            positive("compare.bandwidth_bracket_hz", lo)?;
            if !(hi > lo) {
                return Err(range(
                    "compare.bandwidth_bracket_hz",
                    "upper bound must exceed lower",
                ));
            }
            check_detector("compare.sspd", &c.sspd)?;
            check_detector("compare.spad", &c.spad)?;
            let r = &c.recovery;
            positive("compare.recovery.half_span_um", r.half_span_um)?;
            positive("compare.recovery.bin_spacing_um", r.bin_spacing_um)?;
            positive("compare.recovery.counting_time_s", r.counting_time_s)?;
            nonnegative("compare.recovery.reference_flux", r.reference_flux)?;
            nonnegative("compare.recovery.sample_flux_peak", r.sample_flux_peak)?;
        }
        if let Some(s) = &self.snr_run {
            positive("snr_run.source_power_w", s.source_power_w)?;
            nonnegative("snr_run.sample_attenuation_db", s.sample_attenuation_db)?;
            nonnegative(
                "snr_run.reference_attenuation_db",
                s.reference_attenuation_db,
            )?;
            if !(s.splitter_factor > 0.0 && s.splitter_factor <= 1.0) {
                return Err(range("snr_run.splitter_factor", "must lie in (0, 1]"));
            }
            positive("snr_run.counting_time_s", s.counting_time_s)?;
            positive("snr_run.target_bandwidth_hz", s.target_bandwidth_hz)?;
            positive("snr_run.signal_half_width_um", s.signal_half_width_um)?;
            if !(s.noise_start_um > s.signal_half_width_um) {
                return Err(range(
                    "snr_run.noise_start_um",
                    "must exceed signal_half_width_um",
                ));
            }
            if !(s.scan_half_span_um > s.noise_start_um) {
                return Err(range(
                    "snr_run.scan_half_span_um",
                    "must exceed noise_start_um",
                ));
            }
            if s.seeds == 0 {
                return Err(range("snr_run.seeds", "must be at least 1"));
            }
        }
        if let Some(f) = &self.fano_run {
            nonnegative("fano_run.reference_flux", f.reference_flux)?;
            nonnegative("fano_run.sample_flux_peak", f.sample_flux_peak)?;
            positive("fano_run.counting_time_s", f.counting_time_s)?;
            if f.repeats < 2 {
                return Err(range("fano_run.repeats", "must be at least 2"));
            }
            if f.trials < 2 {
                return Err(range("fano_run.trials", "must be at least 2"));
            }
        }
        if let Some(s) = &self.silica {
            positive("silica.count_rate", s.count_rate)?;
            nonnegative("silica.sample_to_reference", s.sample_to_reference)?;
            positive("silica.speedup", s.speedup)?;
        }
        if let Some(b) = &self.budget {
            b.receiver
                .validate()
                .map_err(|e| range("budget.receiver", e.to_string()))?;
            positive("budget.sweep_min_w", b.sweep_min_w)?;
            if !(b.sweep_max_w > b.sweep_min_w) {
                return Err(range("budget.sweep_max_w", "must exceed sweep_min_w"));
            }
            if b.sweep_points < 3 {
                return Err(range("budget.sweep_points", "must be at least 3"));
            }
        }
        if let Some(p) = &self.plan {
            nonnegative("plan.scan_length_mm", p.scan_length_mm)?;
            positive("plan.mirror_speed_mm_s", p.mirror_speed_mm_s)?;
            positive("plan.counting_time_s", p.counting_time_s)?;
            nonnegative("plan.count_rate", p.count_rate)?;
            nonnegative("plan.dead_time_s", p.dead_time_s)?;
            positive("plan.speedup", p.speedup)?;
        }
        Ok(())
    }

    /// The config as TOML text that [`parse_config`] reads back to an equal value.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

fn range(field: &str, reason: impl Into<String>) -> Error {
    Error::Range {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(range(field, format!("{v} must be positive")))
    }
}

fn nonnegative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(range(field, format!("{v} must be nonnegative")))
    }
}

fn check_detector(prefix: &str, d: &DetectorParams) -> Result<()> {
    nonnegative(&format!("{prefix}.dark_rate"), d.dark_rate)?;
    nonnegative(&format!("{prefix}.dead_time"), d.dead_time)
}

/// Layer `user` over `base`. A table whose `kind` differs from the default's
/// replaces it wholesale, since the default's keys belong to another variant.
fn merge(base: &mut Table, user: Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(u)) => {
                let same_kind = match (b.get("kind"), u.get("kind")) {
                    (Some(x), Some(y)) => x == y,
                    _ => true,
                };
                if same_kind {
                    merge(b, u);
                } else {
                    *b = u;
                }
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned, for pointing at a rejected key.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|line| {
            let line = line.trim_start();
            line.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let user: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::ConfigSyntax {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
    let scenario: Scenario = match user.get("scenario") {
        Some(Value::String(s)) => s.parse()?,
        Some(_) => return Err(Error::Config("`scenario` must be a string".into())),
        None => return Err(Error::Config("missing `scenario`".into())),
    };
    let defaults = ExperimentConfig::defaults_for(scenario);
    let mut merged = match Value::try_from(&defaults) {
        Ok(Value::Table(t)) => t,
        _ => return Err(Error::Config("cannot encode defaults".into())),
    };
    merge(&mut merged, user);
    let config: ExperimentConfig =
        Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| {
                let message = e.message().to_string();
                let line = message
                    .split('`')
                    .nth(1)
                    .filter(|_| message.starts_with("unknown field"))
                    .and_then(|key| key_line(text, key));
                match line {
                    Some(line) => Error::ConfigSyntax { line, message },
                    None => Error::Config(message),
                }
            })?;
    config.validate()?;
    Ok(config)
}

pub fn read_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_psf_config_takes_defaults() {
        let text = r#"
scenario = "psf"

[source]
kind = "gaussian"
center_wavelength_nm = 930.0
fwhm_nm = 70.0

[detector.response]
kind = "ideal_flat"
"#;
        let c = parse_config(text).unwrap();
        assert_eq!(c, ExperimentConfig::defaults_for(Scenario::Psf));
    }

    #[test]
    fn scenario_only_is_enough() {
        for s in Scenario::ALL {
            let c = parse_config(&format!("scenario = \"{s}\"")).unwrap();
            assert_eq!(c, ExperimentConfig::defaults_for(s));
        }
    }

    #[test]
    fn negative_counting_time_names_the_field() {
        let text = "scenario = \"silica_scan\"\n[scan]\ncounting_time_s = -1e-5\n";
        match parse_config(text) {
            Err(Error::Range { field, .. }) => assert!(field.contains("counting_time")),
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "scenario = \"psf\"\n\n[psf]\nz_points = = 3\n";
        match parse_config(text) {
            Err(Error::ConfigSyntax { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn misspelled_key_is_rejected() {
        let text = "scenario = \"psf\"\n[psf]\nz_pionts = 512\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.is_config_error());
        assert!(
            matches!(err, Error::ConfigSyntax { line: 3, .. }),
            "{err:?}"
        );
        assert!(parse_config("scenario = \"psf\"\nrng_sede = 3\n").is_err());
        assert!(parse_config("scenario = \"sfp\"\n").is_err());
    }

    #[test]
    fn foreign_block_is_rejected() {
        let text = "scenario = \"psf\"\n[plan]\nspeedup = 3.0\n";
        assert!(matches!(parse_config(text), Err(Error::Config(_))));
    }

    #[test]
    fn variant_switch_replaces_the_table() {
        let text = r#"
scenario = "psf"
[source]
kind = "spdc"
pump_wavelength_nm = 532.0
bandwidth_hz = 4e13
shape = "gaussian"
"#;
        let c = parse_config(text).unwrap();
        assert!(matches!(c.source, Some(SourceConfig::Spdc { .. })));
    }

    #[test]
    fn serialized_config_reparses_equal() {
        for s in Scenario::ALL {
            let mut c = ExperimentConfig::defaults_for(s);
            c.rng_seed = i64::MAX as u64;
            let text = c.to_toml_string().unwrap();
            assert_eq!(parse_config(&text).unwrap(), c, "{text}");
        }
        let custom = r#"
scenario = "silica_scan"
[sample]
kind = "reflectors"
reflectors = [
  { optical_depth_um = 300.0, amplitude_reflectance = 0.3 },
  { optical_depth_um = 700.0, amplitude_reflectance = 0.1, phase_rad = 1.0 },
]
"#;
        let c = parse_config(custom).unwrap();
        assert_eq!(parse_config(&c.to_toml_string().unwrap()).unwrap(), c);
    }

    #[test]
    fn seeds_are_limited_to_toml_integers() {
        let mut c = ExperimentConfig::defaults_for(Scenario::AcqPlan);
        c.rng_seed = u64::MAX;
        assert!(c.to_toml_string().is_err() || parse_config(&c.to_toml_string().unwrap()).is_err());
    }
}

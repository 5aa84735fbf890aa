//! Source spectra and detector spectral responses on a shared optical-frequency grid.
//!
//! Everything here is sampled uniformly in optical frequency ν, since the axial
//! point-spread function is the Fourier transform of the system spectrum with
//! respect to ν. Wavelength views are derived on demand with the λ²/c Jacobian.
//!
//! Detector responses are phenomenological:
//!
//! - **SPAD**: flat quantum efficiency with a raised-cosine roll-off that reaches
//!   exactly zero at the silicon cutoff (1100 nm by default).
//! - **SSPD**: `qe(λ) = qe_ref · exp(−(λ − λ_ref)/λ_decay)`, clamped at 1, which is
//!   non-increasing in wavelength and stays positive over 0.4–6 μm.
//! - **InGaAs**: a raised-cosine band between a cut-on and a cutoff wavelength.
//! - **IdealFlat**: unit efficiency everywhere.
//! - **Custom**: piecewise-linear table in wavelength.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::constants::{hz_to_wavelength_nm, wavelength_nm_to_hz, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Largest fraction of a source model's mass that may fall outside the grid.
pub const MAX_CLIPPED_MASS: f64 = 1e-6;

/// Silicon SPAD long-wavelength limit, nm.
pub const SILICON_CUTOFF_NM: f64 = 1100.0;

/// Uniform optical-frequency grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyGrid {
    nu_min: f64,
    nu_max: f64,
    n_points: usize,
}

impl FrequencyGrid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(nu_min: f64, nu_max: f64, n_points: usize) -> Result<Self> {
        if !(nu_min.is_finite() && nu_min > 0.0) {
            return Err(Error::invalid("nu_min", "must be a positive frequency"));
        }
        if !(nu_max.is_finite() && nu_max > nu_min) {
            return Err(Error::invalid("nu_max", "must exceed nu_min"));
        }
        if n_points < Self::MIN_POINTS {
            return Err(Error::invalid(
                "n_points",
                format!("need at least {} points, got {n_points}", Self::MIN_POINTS),
            ));
        }
        Ok(Self {
            nu_min,
            nu_max,
            n_points,
        })
    }

    pub fn nu_min(&self) -> f64 {
        self.nu_min
    }

    pub fn nu_max(&self) -> f64 {
        self.nu_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Constant sample spacing in Hz.
    pub fn spacing(&self) -> f64 {
        (self.nu_max - self.nu_min) / (self.n_points - 1) as f64
    }

    pub fn frequency(&self, index: usize) -> f64 {
        if index + 1 == self.n_points {
            self.nu_max
        } else {
            self.nu_min + index as f64 * self.spacing()
        }
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.frequency(i))
    }

    pub fn wavelength_nm(&self, index: usize) -> f64 {
        hz_to_wavelength_nm(self.frequency(index))
    }
}

impl Default for FrequencyGrid {
    /// 2¹⁴ points over 150–1000 THz (about 0.3–2 μm).
    fn default() -> Self {
        Self {
            nu_min: 150e12,
            nu_max: 1000e12,
            n_points: 1 << 14,
        }
    }
}

/// Trapezoidal integral of uniformly spaced samples.
pub(crate) fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let interior: f64 = values[1..n - 1].iter().sum();
            spacing * (interior + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Sampled power spectral density on a [`FrequencyGrid`].
///
/// Values are relative; constructors return the unit-integral form, but raw
/// (unnormalized) densities are allowed, e.g. when importing measured data.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    grid: FrequencyGrid,
    values: Vec<f64>,
}

impl SpectralDensity {
    pub fn new(grid: FrequencyGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(
                "values",
                format!("expected {} samples, got {}", grid.len(), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("values", "must be finite and nonnegative"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.spacing())
    }

    /// Unit-integral copy. Fails when the density is identically zero.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.integral();
        if !(total > 0.0) {
            return Err(Error::invalid(
                "values",
                "spectrum has no mass to normalize",
            ));
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v / total).collect(),
        })
    }

    /// Power-weighted mean optical frequency, Hz.
    pub fn centroid_frequency(&self) -> f64 {
        let weighted: Vec<f64> = self
            .grid
            .frequencies()
            .zip(&self.values)
            .map(|(nu, v)| nu * v)
            .collect();
        let spacing = self.grid.spacing();
        trapezoid(&weighted, spacing) / trapezoid(&self.values, spacing)
    }

    /// Spectral centroid expressed as a vacuum wavelength, nm.
    pub fn center_wavelength_nm(&self) -> f64 {
        hz_to_wavelength_nm(self.centroid_frequency())
    }

    /// Density per unit wavelength, ordered by increasing wavelength.
    ///
    /// Returns `(wavelength_nm, density)`. The Jacobian `|dν/dλ| = c/λ²` is
    /// applied so the wavelength-domain integral equals the frequency-domain one.
    pub fn wavelength_view(&self) -> (Vec<f64>, Vec<f64>) {
        let mut wavelengths = Vec::with_capacity(self.values.len());
        let mut density = Vec::with_capacity(self.values.len());
        for i in (0..self.grid.len()).rev() {
            let nu = self.grid.frequency(i);
            let lambda_m = SPEED_OF_LIGHT / nu;
            wavelengths.push(lambda_m * 1e9);
            // Hz per nm
            density.push(self.values[i] * SPEED_OF_LIGHT / (lambda_m * lambda_m) * 1e-9);
        }
        (wavelengths, density)
    }

    /// Fraction of the spectral mass at wavelengths longer than `wavelength_nm`.
    pub fn mass_fraction_beyond_wavelength(&self, wavelength_nm: f64) -> f64 {
        let nu_cut = wavelength_nm_to_hz(wavelength_nm);
        self.mass_fraction_between(self.grid.nu_min, nu_cut)
    }

    /// Fraction of the total mass between two frequencies, integrated with
    /// linear interpolation of the density at the band edges.
    pub fn mass_fraction_between(&self, nu_lo: f64, nu_hi: f64) -> f64 {
        let total = self.integral();
        if !(total > 0.0) {
            return 0.0;
        }
        band_integral(&self.grid, &self.values, nu_lo, nu_hi) / total
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }
}

/// Integral of piecewise-linear samples over [lo, hi] ∩ grid.
fn band_integral(grid: &FrequencyGrid, values: &[f64], lo: f64, hi: f64) -> f64 {
    let lo = lo.max(grid.nu_min());
    let hi = hi.min(grid.nu_max());
    if hi <= lo {
        return 0.0;
    }
    let dnu = grid.spacing();
    let value_at = |nu: f64| -> f64 {
        let x = ((nu - grid.nu_min()) / dnu).clamp(0.0, (values.len() - 1) as f64);
        let i = (x.floor() as usize).min(values.len() - 2);
        let t = x - i as f64;
        values[i] * (1.0 - t) + values[i + 1] * t
    };
    let first = ((lo - grid.nu_min()) / dnu).ceil() as usize;
    let last = ((hi - grid.nu_min()) / dnu).floor() as usize;
    let mut knots = vec![(lo, value_at(lo))];
    for (i, &v) in values.iter().enumerate().take(last + 1).skip(first) {
        let nu = grid.frequency(i);
        if nu > lo && nu < hi {
            knots.push((nu, v));
        }
    }
    knots.push((hi, value_at(hi)));
    knots
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceShape {
    Gaussian,
    /// Phase-matching-like sinc², truncated at its third zero on each side.
    Sinc2,
}

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;
/// Half-width at half maximum of sinc²(x) = sin²(πx)/(πx)², in units of x.
const SINC2_HWHM: f64 = 0.442_946_470_689_452_3;
/// sinc² lobes kept on each side of the centre.
const SINC2_LOBES: f64 = 3.0;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn gaussian_mass_outside(center: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let s = sigma * std::f64::consts::SQRT_2;
    0.5 * erfc((center - lo) / s) + 0.5 * erfc((hi - center) / s)
}

fn sinc2_mass_outside(center: f64, width: f64, lo: f64, hi: f64) -> f64 {
    const STEPS: usize = 60_000;
    let dx = 2.0 * SINC2_LOBES / STEPS as f64;
    let (mut total, mut outside) = (0.0, 0.0);
    for k in 0..STEPS {
        let x = -SINC2_LOBES + (k as f64 + 0.5) * dx;
        let v = sinc(x).powi(2);
        total += v;
        let nu = center + x * width;
        if nu < lo || nu > hi {
            outside += v;
        }
    }
    outside / total
}

fn finish_source(grid: &FrequencyGrid, values: Vec<f64>, clipped: f64) -> Result<SpectralDensity> {
    if clipped > MAX_CLIPPED_MASS {
        return Err(Error::GridTooNarrow { clipped });
    }
    SpectralDensity::new(*grid, values)?
        .normalized()
        .map_err(|_| Error::Undersampled("source line is narrower than the grid spacing".into()))
}

/// Gaussian-in-frequency source with the given centre and wavelength FWHM.
///
/// The wavelength FWHM maps to frequency via `Δν = c·Δλ/λ₀²` at the centre.
pub fn make_gaussian_source(
    center_wavelength_nm: f64,
    fwhm_wavelength_nm: f64,
    grid: &FrequencyGrid,
) -> Result<SpectralDensity> {
    if !(center_wavelength_nm > 0.0) {
        return Err(Error::invalid("center_wavelength", "must be positive"));
    }
    if !(fwhm_wavelength_nm > 0.0) {
        return Err(Error::invalid("fwhm_wavelength", "must be positive"));
    }
    let center = wavelength_nm_to_hz(center_wavelength_nm);
    let lambda0 = center_wavelength_nm * 1e-9;
    let sigma = SPEED_OF_LIGHT * fwhm_wavelength_nm * 1e-9 / (lambda0 * lambda0) / FWHM_PER_SIGMA;
    let values = grid
        .frequencies()
        .map(|nu| (-0.5 * ((nu - center) / sigma).powi(2)).exp())
        .collect();
    let clipped = gaussian_mass_outside(center, sigma, grid.nu_min(), grid.nu_max());
    finish_source(grid, values, clipped)
}

/// Degenerate collinear down-conversion spectrum centred at half the pump frequency.
///
/// `bandwidth_hz` is the full width at half maximum of the line shape in frequency.
pub fn make_spdc_source(
    pump_wavelength_nm: f64,
    bandwidth_hz: f64,
    shape: SourceShape,
    grid: &FrequencyGrid,
) -> Result<SpectralDensity> {
    if !(pump_wavelength_nm > 0.0) {
        return Err(Error::invalid("pump_wavelength", "must be positive"));
    }
    if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
        return Err(Error::invalid("bandwidth_parameter", "must be positive"));
    }
    let center = 0.5 * wavelength_nm_to_hz(pump_wavelength_nm);
    let (values, clipped) = match shape {
        SourceShape::Gaussian => {
            let sigma = bandwidth_hz / FWHM_PER_SIGMA;
            let values = grid
                .frequencies()
                .map(|nu| (-0.5 * ((nu - center) / sigma).powi(2)).exp())
                .collect();
            (
                values,
                gaussian_mass_outside(center, sigma, grid.nu_min(), grid.nu_max()),
            )
        }
        SourceShape::Sinc2 => {
            let width = bandwidth_hz / (2.0 * SINC2_HWHM);
            let values = grid
                .frequencies()
                .map(|nu| {
                    // |x| symmetrises rounding so values(ν_c + δ) == values(ν_c − δ)
                    let x = ((nu - center) / width).abs();
                    if x <= SINC2_LOBES {
                        sinc(x).powi(2)
                    } else {
                        0.0
                    }
                })
                .collect();
            (
                values,
                sinc2_mass_outside(center, width, grid.nu_min(), grid.nu_max()),
            )
        }
    };
    finish_source(grid, values, clipped)
}

/// Probability of an output pulse per incident photon, per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve {
    grid: FrequencyGrid,
    qe: Vec<f64>,
}

impl ResponseCurve {
    pub fn new(grid: FrequencyGrid, qe: Vec<f64>) -> Result<Self> {
        if qe.len() != grid.len() {
            return Err(Error::invalid(
                "qe",
                format!("expected {} samples, got {}", grid.len(), qe.len()),
            ));
        }
        if qe.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::invalid("qe", "must lie in [0, 1]"));
        }
        Ok(Self { grid, qe })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn qe(&self) -> &[f64] {
        &self.qe
    }

    /// Efficiency at an arbitrary wavelength by linear interpolation in frequency.
    /// Zero outside the grid.
    pub fn qe_at_wavelength(&self, wavelength_nm: f64) -> f64 {
        let nu = wavelength_nm_to_hz(wavelength_nm);
        if nu < self.grid.nu_min() || nu > self.grid.nu_max() {
            return 0.0;
        }
        let x = (nu - self.grid.nu_min()) / self.grid.spacing();
        let i = (x.floor() as usize).min(self.qe.len() - 2);
        let t = x - i as f64;
        self.qe[i] * (1.0 - t) + self.qe[i + 1] * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Sspd,
    Spad,
    #[serde(rename = "ingaas")]
    InGaAs,
    IdealFlat,
    Custom,
}

/// Spectral-response parameters per detector kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResponseSpec {
    IdealFlat,
    Spad {
        #[serde(default = "defaults::spad_qe_max")]
        qe_max: f64,
        #[serde(default = "defaults::spad_cutoff_nm")]
        cutoff_nm: f64,
        #[serde(default = "defaults::spad_transition_nm")]
        transition_nm: f64,
    },
    Sspd {
        #[serde(default = "defaults::sspd_qe_ref")]
        qe_ref: f64,
        #[serde(default = "defaults::sspd_lambda_ref_nm")]
        lambda_ref_nm: f64,
        #[serde(default = "defaults::sspd_lambda_decay_nm")]
        lambda_decay_nm: f64,
    },
    #[serde(rename = "ingaas")]
    InGaAs {
        #[serde(default = "defaults::ingaas_qe_max")]
        qe_max: f64,
        #[serde(default = "defaults::ingaas_cut_on_nm")]
        cut_on_nm: f64,
        #[serde(default = "defaults::ingaas_cutoff_nm")]
        cutoff_nm: f64,
        #[serde(default = "defaults::ingaas_transition_nm")]
        transition_nm: f64,
    },
    Custom {
        wavelengths_nm: Vec<f64>,
        qe: Vec<f64>,
    },
}

mod defaults {
    pub fn spad_qe_max() -> f64 {
        0.5
    }
    pub fn spad_cutoff_nm() -> f64 {
        super::SILICON_CUTOFF_NM
    }
    pub fn spad_transition_nm() -> f64 {
        60.0
    }
    pub fn sspd_qe_ref() -> f64 {
        0.05
    }
    pub fn sspd_lambda_ref_nm() -> f64 {
        1300.0
    }
    pub fn sspd_lambda_decay_nm() -> f64 {
        2000.0
    }
    pub fn ingaas_qe_max() -> f64 {
        0.25
    }
    pub fn ingaas_cut_on_nm() -> f64 {
        900.0
    }
    pub fn ingaas_cutoff_nm() -> f64 {
        1700.0
    }
    pub fn ingaas_transition_nm() -> f64 {
        50.0
    }
}

impl ResponseSpec {
    pub fn spad() -> Self {
        ResponseSpec::Spad {
            qe_max: defaults::spad_qe_max(),
            cutoff_nm: defaults::spad_cutoff_nm(),
            transition_nm: defaults::spad_transition_nm(),
        }
    }

    pub fn sspd() -> Self {
        ResponseSpec::Sspd {
            qe_ref: defaults::sspd_qe_ref(),
            lambda_ref_nm: defaults::sspd_lambda_ref_nm(),
            lambda_decay_nm: defaults::sspd_lambda_decay_nm(),
        }
    }

    pub fn ingaas() -> Self {
        ResponseSpec::InGaAs {
            qe_max: defaults::ingaas_qe_max(),
            cut_on_nm: defaults::ingaas_cut_on_nm(),
            cutoff_nm: defaults::ingaas_cutoff_nm(),
            transition_nm: defaults::ingaas_transition_nm(),
        }
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            ResponseSpec::IdealFlat => DetectorKind::IdealFlat,
            ResponseSpec::Spad { .. } => DetectorKind::Spad,
            ResponseSpec::Sspd { .. } => DetectorKind::Sspd,
            ResponseSpec::InGaAs { .. } => DetectorKind::InGaAs,
            ResponseSpec::Custom { .. } => DetectorKind::Custom,
        }
    }
}

/// Spectral response plus counting parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    pub response: ResponseSpec,
    /// counts/s
    #[serde(default)]
    pub dark_rate: f64,
    /// s
    #[serde(default)]
    pub dead_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub response: ResponseCurve,
    pub dark_rate: f64,
    pub dead_time: f64,
    pub kind: DetectorKind,
}

/// 1 at `x <= 0`, 0 at `x >= 1`, raised cosine between.
fn raised_cosine_fall(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * x).cos())
    }
}

fn check_unit_interval(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} is outside [0, 1]")))
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} must be positive")))
    }
}

fn response_qe(spec: &ResponseSpec, grid: &FrequencyGrid) -> Result<Vec<f64>> {
    let wavelengths: Vec<f64> = (0..grid.len()).map(|i| grid.wavelength_nm(i)).collect();
    let qe = match spec {
        ResponseSpec::IdealFlat => vec![1.0; grid.len()],
        &ResponseSpec::Spad {
            qe_max,
            cutoff_nm,
            transition_nm,
        } => {
            check_unit_interval("qe_max", qe_max)?;
            check_positive("transition_nm", transition_nm)?;
            if !(cutoff_nm > transition_nm && cutoff_nm <= SILICON_CUTOFF_NM) {
                return Err(Error::invalid(
                    "cutoff_nm",
                    format!("SPAD cutoff must lie in ({transition_nm}, {SILICON_CUTOFF_NM}] nm"),
                ));
            }
            let start = cutoff_nm - transition_nm;
            wavelengths
                .iter()
                .map(|&l| {
                    if l >= cutoff_nm {
                        0.0
                    } else {
                        qe_max * raised_cosine_fall((l - start) / transition_nm)
                    }
                })
                .collect()
        }
        &ResponseSpec::Sspd {
            qe_ref,
            lambda_ref_nm,
            lambda_decay_nm,
        } => {
            check_unit_interval("qe_ref", qe_ref)?;
            check_positive("qe_ref", qe_ref)?;
            check_positive("lambda_ref_nm", lambda_ref_nm)?;
            check_positive("lambda_decay_nm", lambda_decay_nm)?;
            let law = |l: f64| (qe_ref * (-(l - lambda_ref_nm) / lambda_decay_nm).exp()).min(1.0);
            if !(law(6000.0) > 0.0) {
                return Err(Error::invalid(
                    "lambda_decay_nm",
                    "efficiency underflows to zero before 6 um",
                ));
            }
            wavelengths.iter().map(|&l| law(l)).collect()
        }
        &ResponseSpec::InGaAs {
            qe_max,
            cut_on_nm,
            cutoff_nm,
            transition_nm,
        } => {
            check_unit_interval("qe_max", qe_max)?;
            check_positive("transition_nm", transition_nm)?;
            if !(cut_on_nm > 0.0 && cutoff_nm - cut_on_nm > 2.0 * transition_nm) {
                return Err(Error::invalid(
                    "cutoff_nm",
                    "band must be wider than two transitions",
                ));
            }
            wavelengths
                .iter()
                .map(|&l| {
                    let rise = 1.0 - raised_cosine_fall((l - cut_on_nm) / transition_nm);
                    let fall =
                        raised_cosine_fall((l - (cutoff_nm - transition_nm)) / transition_nm);
                    qe_max * rise * fall
                })
                .collect()
        }
        ResponseSpec::Custom { wavelengths_nm, qe } => {
            if wavelengths_nm.len() != qe.len() || wavelengths_nm.len() < 2 {
                return Err(Error::invalid(
                    "qe",
                    "custom table needs at least two (wavelength, qe) pairs of equal length",
                ));
            }
            if wavelengths_nm.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid(
                    "wavelengths_nm",
                    "must be strictly increasing",
                ));
            }
            for &q in qe {
                check_unit_interval("qe", q)?;
            }
            wavelengths
                .iter()
                .map(|&l| interpolate_table(wavelengths_nm, qe, l))
                .collect()
        }
    };
    Ok(qe)
}

fn interpolate_table(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    let j = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    ys[j - 1] + t * (ys[j] - ys[j - 1])
}

pub fn make_detector(params: &DetectorParams, grid: &FrequencyGrid) -> Result<DetectorModel> {
    if !(params.dark_rate >= 0.0 && params.dark_rate.is_finite()) {
        return Err(Error::invalid("dark_rate", "must be nonnegative"));
    }
    if !(params.dead_time >= 0.0 && params.dead_time.is_finite()) {
        return Err(Error::invalid("dead_time", "must be nonnegative"));
    }
    let qe = response_qe(&params.response, grid)?;
    Ok(DetectorModel {
        response: ResponseCurve::new(*grid, qe)?,
        dark_rate: params.dark_rate,
        dead_time: params.dead_time,
        kind: params.response.kind(),
    })
}

/// Parameters of the bias-current law at one bath temperature.
///
/// `eta(b) = eta_max / (1 + exp(−(b − bias_mid)/bias_width))`,
/// `dark(b) = dark_at_critical · exp((b − 1)/dark_slope)`, with `b = I_b/I_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureCurve {
    pub temperature_k: f64,
    pub eta_max: f64,
    pub bias_mid: f64,
    pub bias_width: f64,
    pub dark_at_critical: f64,
    pub dark_slope: f64,
}

impl TemperatureCurve {
    fn eta(&self, bias_ratio: f64) -> f64 {
        self.eta_max / (1.0 + (-(bias_ratio - self.bias_mid) / self.bias_width).exp())
    }

    fn dark_rate(&self, bias_ratio: f64) -> f64 {
        self.dark_at_critical * ((bias_ratio - 1.0) / self.dark_slope).exp()
    }
}

/// Operating point of an SSPD on its bias/temperature law.
///
/// Only bath temperatures well below the NbN critical temperature are
/// meaningful; the supported set is whatever `curves` lists (2.0 K and 4.2 K
/// by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SspdBiasLaw {
    pub bias_ratio: f64,
    pub temperature_k: f64,
    pub curves: Vec<TemperatureCurve>,
}

impl Default for SspdBiasLaw {
    fn default() -> Self {
        Self {
            bias_ratio: 0.9,
            temperature_k: 4.2,
            curves: vec![
                TemperatureCurve {
                    temperature_k: 2.0,
                    eta_max: 0.2,
                    bias_mid: 0.85,
                    bias_width: 0.05,
                    dark_at_critical: 100.0,
                    dark_slope: 0.03,
                },
                TemperatureCurve {
                    temperature_k: 4.2,
                    eta_max: 0.1,
                    bias_mid: 0.9,
                    bias_width: 0.05,
                    dark_at_critical: 1.0e4,
                    dark_slope: 0.03,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasPoint {
    pub eta: f64,
    /// counts/s
    pub dark_rate: f64,
}

impl SspdBiasLaw {
    pub fn at(&self, bias_ratio: f64, temperature_k: f64) -> Self {
        Self {
            bias_ratio,
            temperature_k,
            curves: self.curves.clone(),
        }
    }

    fn validate_curves(&self) -> Result<()> {
        if self.curves.is_empty() {
            return Err(Error::invalid("curves", "no temperature curves supplied"));
        }
        for c in &self.curves {
            check_positive("temperature_k", c.temperature_k)?;
            check_unit_interval("eta_max", c.eta_max)?;
            check_positive("eta_max", c.eta_max)?;
            check_positive("bias_width", c.bias_width)?;
            check_positive("dark_at_critical", c.dark_at_critical)?;
            check_positive("dark_slope", c.dark_slope)?;
        }
        let mut sorted: Vec<&TemperatureCurve> = self.curves.iter().collect();
        sorted.sort_by(|a, b| a.temperature_k.total_cmp(&b.temperature_k));
        for pair in sorted.windows(2) {
            if pair[0].temperature_k == pair[1].temperature_k {
                return Err(Error::invalid("curves", "duplicate temperature"));
            }
            // colder must be darker at every bias
            let ordered = (1..100).all(|k| {
                let b = k as f64 / 100.0;
                pair[0].dark_rate(b) < pair[1].dark_rate(b)
            });
            if !ordered {
                return Err(Error::invalid(
                    "curves",
                    format!(
                        "dark rate at {} K must stay below that at {} K",
                        pair[0].temperature_k, pair[1].temperature_k
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Quantum-efficiency scale and dark-count rate at the law's operating point.
pub fn sspd_bias_point(law: &SspdBiasLaw) -> Result<BiasPoint> {
    if !(law.bias_ratio > 0.0 && law.bias_ratio < 1.0) {
        return Err(Error::invalid(
            "bias_ratio",
            format!("{} is outside (0, 1)", law.bias_ratio),
        ));
    }
    law.validate_curves()?;
    let curve = law
        .curves
        .iter()
        .find(|c| (c.temperature_k - law.temperature_k).abs() < 1e-9)
        .ok_or_else(|| {
            Error::invalid(
                "temperature",
                format!("{} K has no calibrated curve", law.temperature_k),
            )
        })?;
    Ok(BiasPoint {
        eta: curve.eta(law.bias_ratio),
        dark_rate: curve.dark_rate(law.bias_ratio),
    })
}

/// Overall system spectrum `S_s(ν)·S_D(ν)`, renormalized, plus the band-averaged efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpectrum {
    pub density: SpectralDensity,
    /// `∫S_s·qe dν / ∫S_s dν`; also the fraction of source mass retained.
    pub eta: f64,
}

pub fn system_spectrum(
    source: &SpectralDensity,
    detector: &DetectorModel,
) -> Result<SystemSpectrum> {
    if source.grid() != detector.response.grid() {
        return Err(Error::GridMismatch);
    }
    let product: Vec<f64> = source
        .values()
        .iter()
        .zip(detector.response.qe())
        .map(|(s, q)| s * q)
        .collect();
    let spacing = source.grid().spacing();
    let overlap = trapezoid(&product, spacing);
    if !(overlap >= 1e-12) {
        return Err(Error::NoOverlap { overlap });
    }
    let eta = overlap / source.integral();
    let density = SpectralDensity::new(*source.grid(), product)?.normalized()?;
    Ok(SystemSpectrum { density, eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn window_grid() -> FrequencyGrid {
        // roughly 900–1300 nm
        FrequencyGrid::new(230e12, 333e12, 4096).unwrap()
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(FrequencyGrid::new(0.0, 1e15, 100).is_err());
        assert!(FrequencyGrid::new(1e14, 1e14, 100).is_err());
        assert!(FrequencyGrid::new(1e14, 2e14, 15).is_err());
        let g = FrequencyGrid::new(1e14, 2e14, 16).unwrap();
        assert_eq!(g.frequency(15), 2e14);
    }

    #[test]
    fn gaussian_source_centroid_and_width() {
        let grid = FrequencyGrid::default();
        let s = make_gaussian_source(930.0, 70.0, &grid).unwrap();
        assert!((s.center_wavelength_nm() - 930.0).abs() < 0.5);
        assert_relative_eq!(s.integral(), 1.0, max_relative = 1e-9);

        let (lambda, density) = s.wavelength_view();
        let fwhm = crate::psf::measure_fwhm(&density, &lambda).unwrap();
        assert!((fwhm - 70.0).abs() < 0.7, "fwhm {fwhm}");
    }

    #[test]
    fn narrow_source_still_normalized() {
        let grid = FrequencyGrid::default();
        let s = make_gaussian_source(1064.0, 0.5, &grid).unwrap();
        assert_relative_eq!(s.integral(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn clipped_gaussian_is_rejected() {
        let grid = FrequencyGrid::new(300e12, 340e12, 1024).unwrap();
        match make_gaussian_source(930.0, 70.0, &grid) {
            Err(Error::GridTooNarrow { clipped }) => assert!(clipped > 1e-6),
            other => panic!("expected GridTooNarrow, got {other:?}"),
        }
    }

    #[test]
    fn spdc_is_symmetric_about_half_pump() {
        let grid = FrequencyGrid::new(100e12, 1000e12, 1 << 14).unwrap();
        for shape in [SourceShape::Gaussian, SourceShape::Sinc2] {
            let s = make_spdc_source(532.0, 40e12, shape, &grid).unwrap();
            let center = 0.5 * wavelength_nm_to_hz(532.0);
            let expected = hz_to_wavelength_nm(center);
            assert!((s.center_wavelength_nm() - expected).abs() < 1e-3);
            assert!((expected - 1064.0).abs() < 1e-9);
            // compare values at mirrored offsets through the raw shape
            let dnu = grid.spacing();
            for k in [1.0, 7.5, 100.25, 300.0] {
                let d = k * dnu;
                let lo = spdc_value(&s, center - d);
                let hi = spdc_value(&s, center + d);
                assert!(
                    (lo - hi).abs() <= 1e-6 * lo.max(hi).max(1e-300),
                    "{shape:?} {k}"
                );
            }
        }
    }

    fn spdc_value(s: &SpectralDensity, nu: f64) -> f64 {
        let g = s.grid();
        let x = (nu - g.nu_min()) / g.spacing();
        let i = x.floor() as usize;
        let t = x - i as f64;
        s.values()[i] * (1.0 - t) + s.values()[i + 1] * t
    }

    #[test]
    fn spdc_sinc2_clipping_detected() {
        let grid = FrequencyGrid::new(250e12, 320e12, 2048).unwrap();
        assert!(matches!(
            make_spdc_source(532.0, 40e12, SourceShape::Sinc2, &grid),
            Err(Error::GridTooNarrow { .. })
        ));
    }

    #[test]
    fn detector_examples() {
        let grid = window_grid();
        let flat = make_detector(
            &DetectorParams {
                response: ResponseSpec::IdealFlat,
                dark_rate: 0.0,
                dead_time: 0.0,
            },
            &grid,
        )
        .unwrap();
        assert!(flat.response.qe().iter().all(|&q| q == 1.0));

        let spad = make_detector(
            &DetectorParams {
                response: ResponseSpec::spad(),
                dark_rate: 0.0,
                dead_time: 0.0,
            },
            &grid,
        )
        .unwrap();
        assert_eq!(spad.response.qe_at_wavelength(1150.0), 0.0);
        for i in 0..grid.len() {
            if grid.wavelength_nm(i) > SILICON_CUTOFF_NM {
                assert_eq!(spad.response.qe()[i], 0.0);
            }
        }

        let sspd = make_detector(
            &DetectorParams {
                response: ResponseSpec::sspd(),
                dark_rate: 0.0,
                dead_time: 0.0,
            },
            &grid,
        )
        .unwrap();
        let q1064 = sspd.response.qe_at_wavelength(1064.0);
        let q1200 = sspd.response.qe_at_wavelength(1200.0);
        assert!(q1064 >= q1200 && q1200 > 0.0);
    }

    #[test]
    fn invalid_detector_parameters() {
        let grid = window_grid();
        let bad = DetectorParams {
            response: ResponseSpec::Spad {
                qe_max: 1.5,
                cutoff_nm: 1100.0,
                transition_nm: 60.0,
            },
            dark_rate: 0.0,
            dead_time: 0.0,
        };
        assert!(matches!(
            make_detector(&bad, &grid),
            Err(Error::InvalidParameter { name: "qe_max", .. })
        ));
        let past_silicon = DetectorParams {
            response: ResponseSpec::Spad {
                qe_max: 0.5,
                cutoff_nm: 1200.0,
                transition_nm: 60.0,
            },
            dark_rate: 0.0,
            dead_time: 0.0,
        };
        assert!(make_detector(&past_silicon, &grid).is_err());
    }

    #[test]
    fn ingaas_and_custom_responses() {
        let grid = FrequencyGrid::new(150e12, 400e12, 2048).unwrap();
        let ingaas = make_detector(
            &DetectorParams {
                response: ResponseSpec::ingaas(),
                dark_rate: 0.0,
                dead_time: 0.0,
            },
            &grid,
        )
        .unwrap();
        assert_eq!(ingaas.response.qe_at_wavelength(850.0), 0.0);
        assert!((ingaas.response.qe_at_wavelength(1300.0) - 0.25).abs() < 1e-3);

        let custom = make_detector(
            &DetectorParams {
                response: ResponseSpec::Custom {
                    wavelengths_nm: vec![900.0, 1100.0, 1300.0],
                    qe: vec![0.2, 0.4, 0.0],
                },
                dark_rate: 0.0,
                dead_time: 0.0,
            },
            &grid,
        )
        .unwrap();
        assert!((custom.response.qe_at_wavelength(1000.0) - 0.3).abs() < 2e-3);
        assert_eq!(custom.response.qe_at_wavelength(1500.0), 0.0);
    }

    #[test]
    fn bias_law_defaults_and_ordering() {
        let law = SspdBiasLaw::default();
        let p = sspd_bias_point(&law).unwrap();
        assert_relative_eq!(p.eta, 0.05, max_relative = 1e-12);

        let lo = sspd_bias_point(&law.at(0.7, 4.2)).unwrap();
        let hi = sspd_bias_point(&law.at(0.8, 4.2)).unwrap();
        assert!(lo.eta < hi.eta && lo.dark_rate < hi.dark_rate);

        let cold = sspd_bias_point(&law.at(0.8, 2.0)).unwrap();
        assert!(cold.dark_rate < hi.dark_rate);
        assert!(cold.eta > hi.eta);
    }

    #[test]
    fn bias_law_errors() {
        let law = SspdBiasLaw::default();
        assert!(sspd_bias_point(&law.at(1.0, 4.2)).is_err());
        assert!(sspd_bias_point(&law.at(0.0, 4.2)).is_err());
        assert!(sspd_bias_point(&law.at(0.5, 3.0)).is_err());

        let mut inverted = SspdBiasLaw::default();
        inverted.curves[0].dark_at_critical = 1e6;
        assert!(sspd_bias_point(&inverted).is_err());
    }

    #[test]
    fn system_spectrum_with_flat_detector_is_identity() {
        let grid = FrequencyGrid::default();
        let s = make_gaussian_source(930.0, 70.0, &grid).unwrap();
        let flat = make_detector(
            &DetectorParams {
                response: ResponseSpec::IdealFlat,
                dark_rate: 0.0,
                dead_time: 0.0,
            },
            &grid,
        )
        .unwrap();
        let sys = system_spectrum(&s, &flat).unwrap();
        assert_relative_eq!(sys.eta, 1.0, max_relative = 1e-12);
        for (a, b) in sys.density.values().iter().zip(s.values()) {
            assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn system_spectrum_errors() {
        let grid = FrequencyGrid::default();
        let s = make_gaussian_source(930.0, 70.0, &grid).unwrap();
        let other = FrequencyGrid::new(150e12, 1000e12, 4096).unwrap();
        let flat = make_detector(
            &DetectorParams {
                response: ResponseSpec::IdealFlat,
                dark_rate: 0.0,
                dead_time: 0.0,
            },
            &other,
        )
        .unwrap();
        assert!(matches!(
            system_spectrum(&s, &flat),
            Err(Error::GridMismatch)
        ));

        // 1500 nm line seen by a silicon SPAD
        let ir = make_gaussian_source(1500.0, 20.0, &grid).unwrap();
        let spad = make_detector(
            &DetectorParams {
                response: ResponseSpec::spad(),
                dark_rate: 0.0,
                dead_time: 0.0,
            },
            &grid,
        )
        .unwrap();
        assert!(matches!(
            system_spectrum(&ir, &spad),
            Err(Error::NoOverlap { .. })
        ));
    }

    #[test]
    fn band_mass_matches_full_integral() {
        let grid = FrequencyGrid::default();
        let s = make_gaussian_source(930.0, 70.0, &grid).unwrap();
        let all = s.mass_fraction_between(0.0, f64::INFINITY);
        assert_relative_eq!(all, 1.0, max_relative = 1e-12);
        let above = s.mass_fraction_beyond_wavelength(930.0);
        assert!((above - 0.5).abs() < 0.01);
    }
}

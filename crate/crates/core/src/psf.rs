//! Axial point-spread functions and resolution measurement.
//!
//! The point-spread function at reference-mirror displacement `z` is the
//! Fourier transform of the system spectrum evaluated at delay `τ = 2z/c`.
//! [`Psf`] keeps the complex coherence function demodulated at the spectral
//! centroid, so both the envelope and the residual fringe phase are available
//! to the scan synthesizer. For a spectrum symmetric about its centroid the
//! phase is zero everywhere.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::constants::SPEED_OF_LIGHT;
use crate::dsp::demodulate_envelope;
use crate::error::{Error, Result};
use crate::scan::ScanRecord;
use crate::spectra::{FrequencyGrid, SpectralDensity};

pub const MIN_Z_POINTS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    z: Vec<f64>,
    baseband: Vec<Complex64>,
    envelope: Vec<f64>,
    fwhm: f64,
    carrier_wavelength_nm: f64,
}

impl Psf {
    /// Reference-arm displacements, μm.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Peak-normalized envelope.
    pub fn envelope(&self) -> &[f64] {
        &self.envelope
    }

    /// Fringe phase relative to a pure carrier at the centroid wavelength, radians.
    pub fn phase(&self) -> Vec<f64> {
        self.baseband.iter().map(|g| g.arg()).collect()
    }

    pub fn fwhm_um(&self) -> f64 {
        self.fwhm
    }

    /// Axial resolution; equal to the envelope FWHM in mirror-displacement units.
    pub fn coherence_length_um(&self) -> f64 {
        self.fwhm
    }

    /// Half-width of the sampled displacement range, μm.
    pub fn z_range_um(&self) -> f64 {
        self.z[self.z.len() - 1].min(-self.z[0])
    }

    /// Centroid wavelength of the spectrum this PSF was computed from.
    pub fn carrier_wavelength_nm(&self) -> f64 {
        self.carrier_wavelength_nm
    }

    /// Complex coherence (envelope · e^{i·phase}) at displacement `dz`, linearly interpolated.
    pub fn baseband_at(&self, dz: f64) -> Result<Complex64> {
        let first = self.z[0];
        let last = self.z[self.z.len() - 1];
        if !(dz >= first && dz <= last) {
            return Err(Error::PsfRange {
                needed_um: dz.abs(),
                range_um: self.z_range_um(),
            });
        }
        let step = (last - first) / (self.z.len() - 1) as f64;
        let x = (dz - first) / step;
        let i = (x.floor() as usize).min(self.z.len() - 2);
        let t = x - i as f64;
        Ok(self.baseband[i] * (1.0 - t) + self.baseband[i + 1] * t)
    }

    pub fn envelope_at(&self, dz: f64) -> Result<f64> {
        self.baseband_at(dz).map(|g| g.norm())
    }
}

/// Envelope of the axial point-spread function over `z ∈ [−z_range, z_range]` μm.
pub fn point_spread(spectrum: &SpectralDensity, z_range: f64, z_points: usize) -> Result<Psf> {
    if z_points < MIN_Z_POINTS {
        return Err(Error::invalid(
            "z_points",
            format!("need at least {MIN_Z_POINTS}, got {z_points}"),
        ));
    }
    if !(z_range > 0.0 && z_range.is_finite()) {
        return Err(Error::invalid("z_range", "must be positive"));
    }
    if !(spectrum.integral() > 0.0) {
        return Err(Error::invalid("spectrum", "has no mass"));
    }
    let grid = spectrum.grid();
    let centroid = spectrum.centroid_frequency();
    let carrier_wavelength_nm = SPEED_OF_LIGHT / centroid * 1e9;
    let step = 2.0 * z_range / (z_points - 1) as f64;
    let limit = carrier_wavelength_nm * 1e-3 / 8.0;
    if step >= limit {
        return Err(Error::Undersampled(format!(
            "z spacing {step:.4} um must be below lambda0/8 = {limit:.4} um"
        )));
    }
    // |FT| is periodic in delay with period 1/dν, i.e. c/(2dν) in z
    let unambiguous = SPEED_OF_LIGHT / (4.0 * grid.spacing()) * 1e6;
    if z_range >= unambiguous {
        return Err(Error::Undersampled(format!(
            "z_range {z_range} um exceeds the grid's unambiguous range of {unambiguous:.1} um"
        )));
    }

    let table = coherence_table(spectrum, centroid);
    let z: Vec<f64> = (0..z_points).map(|j| -z_range + j as f64 * step).collect();
    let mut baseband: Vec<Complex64> = z.iter().map(|&zj| table.interpolate(zj)).collect();
    let peak = baseband.iter().map(|g| g.norm()).fold(0.0, f64::max);
    for g in &mut baseband {
        *g /= peak;
    }
    let envelope: Vec<f64> = baseband.iter().map(|g| g.norm()).collect();
    let fwhm = measure_fwhm(&envelope, &z)?;
    Ok(Psf {
        z,
        baseband,
        envelope,
        fwhm,
        carrier_wavelength_nm,
    })
}

/// Zero-padded transform of a spectrum, demodulated at `centroid`.
struct CoherenceTable {
    values: Vec<Complex64>,
    /// z step per FFT bin, μm
    z_step: f64,
}

impl CoherenceTable {
    fn interpolate(&self, z: f64) -> Complex64 {
        let n = self.values.len() as i64;
        let x = z / self.z_step;
        let k = x.floor();
        let t = x - k;
        let at = |k: i64| self.values[k.rem_euclid(n) as usize];
        let k = k as i64;
        at(k) * (1.0 - t) + at(k + 1) * t
    }
}

fn coherence_table(spectrum: &SpectralDensity, centroid: f64) -> CoherenceTable {
    let grid = spectrum.grid();
    let n_pad = (4 * grid.len()).next_power_of_two();
    let mut buffer: Vec<Complex64> = spectrum
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n_pad)
        .collect();
    FftPlanner::new()
        .plan_fft_inverse(n_pad)
        .process(&mut buffer);

    // F(τ_k) = dν·e^{i2πν_min τ_k}·Σ S_n e^{i2πnk/N}; shift by e^{−i2πν̄τ_k}
    let offset_bins = (grid.nu_min() - centroid) / grid.spacing();
    let half = (n_pad / 2) as i64;
    for (k, value) in buffer.iter_mut().enumerate() {
        let signed = if (k as i64) < half {
            k as i64
        } else {
            k as i64 - n_pad as i64
        };
        let cycles = (offset_bins * signed as f64 / n_pad as f64).rem_euclid(1.0);
        *value *= Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * cycles);
    }
    let tau_step = 1.0 / (n_pad as f64 * grid.spacing());
    CoherenceTable {
        values: buffer,
        z_step: SPEED_OF_LIGHT * tau_step / 2.0 * 1e6,
    }
}

/// Full width at half maximum of the dominant peak.
///
/// Each half-maximum crossing is the bracketing sample pair nearest the global
/// maximum, located by linear interpolation (or the sample itself when it sits
/// exactly at half maximum). `z` may be non-uniform but must be monotonic.
pub fn measure_fwhm(values: &[f64], z: &[f64]) -> Result<f64> {
    if values.len() != z.len() {
        return Err(Error::invalid("z", "length differs from the sample count"));
    }
    let (peak_index, peak) = values
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .fold((usize::MAX, f64::NEG_INFINITY), |best, (i, v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        });
    if peak_index == usize::MAX || !(peak > 0.0) {
        return Err(Error::NoPeak);
    }
    let half = 0.5 * peak;
    let crossing = |inside: usize, outside: usize| -> f64 {
        let (v_in, v_out) = (values[inside], values[outside]);
        if v_out == half {
            z[outside]
        } else {
            let t = (v_in - half) / (v_in - v_out);
            z[inside] + t * (z[outside] - z[inside])
        }
    };

    let mut left = peak_index;
    while left > 0 && values[left - 1] > half {
        left -= 1;
    }
    if left == 0 {
        return Err(Error::TruncatedPeak);
    }
    let mut right = peak_index;
    while right + 1 < values.len() && values[right + 1] > half {
        right += 1;
    }
    if right + 1 == values.len() {
        return Err(Error::TruncatedPeak);
    }

    let tie = peak * (1.0 - 1e-12);
    let elsewhere = values[..left]
        .iter()
        .chain(&values[right + 1..])
        .any(|&v| v >= tie);
    if elsewhere {
        return Err(Error::AmbiguousPeak);
    }

    let z_left = crossing(left, left - 1);
    let z_right = crossing(right, right + 1);
    Ok((z_right - z_left).abs())
}

/// Source spectrum recovered from a uniformly sampled interferogram.
///
/// The mean-subtracted sequence is transformed and its positive spatial
/// frequencies `f` (cycles/μm) are mapped to optical frequency `ν = c·f/2`.
pub fn spectrum_from_interferogram(
    samples: &[f64],
    bin_spacing_um: f64,
) -> Result<SpectralDensity> {
    const MIN_SAMPLES: usize = 64;
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(Error::TooShort {
            len: n,
            needed: MIN_SAMPLES - 1,
        });
    }
    if !(bin_spacing_um > 0.0) {
        return Err(Error::invalid("bin_spacing", "must be positive"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = samples.iter().map(|v| v - mean).collect();

    let envelope = demodulate_envelope(&centered);
    let peak = envelope.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::NoPeak);
    }
    let edge = (n / 100).max(8);
    let edge_max = envelope[..edge]
        .iter()
        .chain(&envelope[n - edge..])
        .copied()
        .fold(0.0, f64::max);
    if edge_max > 0.25 * peak {
        return Err(Error::TruncatedPeak);
    }

    let mut buffer: Vec<Complex64> = centered.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);
    let half = n / 2;
    let magnitude: Vec<f64> = buffer[1..=half].iter().map(|x| x.norm()).collect();

    let total: f64 = magnitude.iter().sum();
    let centroid_bin = magnitude
        .iter()
        .enumerate()
        .map(|(i, m)| (i + 1) as f64 * m)
        .sum::<f64>()
        / total;
    if centroid_bin > 0.9 * half as f64 {
        return Err(Error::Undersampled(
            "fringe carrier sits at the Nyquist limit of the bin spacing".into(),
        ));
    }

    let length_m = n as f64 * bin_spacing_um * 1e-6;
    let nu_step = SPEED_OF_LIGHT / (2.0 * length_m);
    let grid = FrequencyGrid::new(nu_step, half as f64 * nu_step, half)?;
    SpectralDensity::new(grid, magnitude)?.normalized()
}

/// [`spectrum_from_interferogram`] applied to a scan's photon counts.
pub fn spectrum_from_scan(record: &ScanRecord) -> Result<SpectralDensity> {
    let counts: Vec<f64> = record.counts.iter().map(|&c| c as f64).collect();
    spectrum_from_interferogram(&counts, record.config.bin_spacing_um())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{make_gaussian_source, FrequencyGrid};
    use approx::assert_relative_eq;

    fn gaussian_samples(sigma: f64, n: usize, step: f64) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<f64> = (0..n).map(|i| (i as f64 - (n / 2) as f64) * step).collect();
        let v = z
            .iter()
            .map(|x| (-0.5 * (x / sigma).powi(2)).exp())
            .collect();
        (v, z)
    }

    #[test]
    fn fwhm_of_exact_gaussian() {
        let sigma = 2.3;
        let (v, z) = gaussian_samples(sigma, 2001, 0.01);
        let expected = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * sigma;
        assert_relative_eq!(measure_fwhm(&v, &z).unwrap(), expected, max_relative = 1e-3);
    }

    #[test]
    fn fwhm_of_triangle() {
        let a = 3.0;
        let z: Vec<f64> = (0..601).map(|i| -6.0 + i as f64 * 0.02).collect();
        let v: Vec<f64> = z.iter().map(|x| (1.0 - x.abs() / a).max(0.0)).collect();
        assert_relative_eq!(measure_fwhm(&v, &z).unwrap(), a, max_relative = 1e-9);
    }

    #[test]
    fn fwhm_uses_exact_sample_crossings() {
        let z = [0.0, 1.0, 2.0, 3.0, 4.0];
        let v = [0.0, 0.5, 1.0, 0.5, 0.0];
        assert_eq!(measure_fwhm(&v, &z).unwrap(), 2.0);
    }

    #[test]
    fn fwhm_errors() {
        assert!(matches!(measure_fwhm(&[], &[]), Err(Error::NoPeak)));
        assert!(matches!(
            measure_fwhm(&[0.0; 5], &[0.0, 1.0, 2.0, 3.0, 4.0]),
            Err(Error::NoPeak)
        ));
        let z: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let twin = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        assert!(matches!(measure_fwhm(&twin, &z), Err(Error::AmbiguousPeak)));
        let edge = [1.0, 0.9, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(matches!(measure_fwhm(&edge, &z), Err(Error::TruncatedPeak)));
        // a lower secondary lobe is fine
        let lobe = [0.0, 0.6, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert!(measure_fwhm(&lobe, &z).is_ok());
    }

    #[test]
    fn sld_psf_matches_closed_form() {
        let grid = FrequencyGrid::default();
        let s = make_gaussian_source(930.0, 70.0, &grid).unwrap();
        let psf = point_spread(&s, 40.0, 4001).unwrap();
        let closed = 2.0 * std::f64::consts::LN_2 / std::f64::consts::PI * 0.93f64.powi(2) / 0.070;
        assert_relative_eq!(psf.fwhm_um(), closed, max_relative = 0.02);
        assert_relative_eq!(
            psf.envelope().iter().copied().fold(0.0, f64::max),
            1.0,
            max_relative = 1e-12
        );
        // Gaussian spectrum: no residual phase near the peak
        let phase = psf.baseband_at(1.0).unwrap().arg();
        assert!(phase.abs() < 1e-6);
    }

    #[test]
    fn psf_is_even() {
        let grid = FrequencyGrid::default();
        let s = make_gaussian_source(1064.0, 120.0, &grid).unwrap();
        let psf = point_spread(&s, 30.0, 1201).unwrap();
        let env = psf.envelope();
        for j in 0..env.len() / 2 {
            assert!((env[j] - env[env.len() - 1 - j]).abs() < 1e-9);
        }
    }

    #[test]
    fn psf_sampling_errors() {
        let grid = FrequencyGrid::default();
        let s = make_gaussian_source(930.0, 70.0, &grid).unwrap();
        assert!(matches!(
            point_spread(&s, 100.0, 256),
            Err(Error::Undersampled(_))
        ));
        assert!(point_spread(&s, 10.0, 100).is_err());
        assert!(matches!(
            point_spread(&s, 2000.0, 80_001),
            Err(Error::Undersampled(_))
        ));
    }

    #[test]
    fn psf_range_error() {
        let grid = FrequencyGrid::default();
        let s = make_gaussian_source(930.0, 70.0, &grid).unwrap();
        let psf = point_spread(&s, 20.0, 1001).unwrap();
        assert!(psf.baseband_at(19.9).is_ok());
        assert!(matches!(psf.baseband_at(25.0), Err(Error::PsfRange { .. })));
    }

    #[test]
    fn recovery_rejects_short_and_truncated_input() {
        assert!(matches!(
            spectrum_from_interferogram(&[1.0; 10], 0.1),
            Err(Error::TooShort { .. })
        ));
        let ramp: Vec<f64> = (0..512)
            .map(|i| (i as f64 * 1.3).cos() * (i as f64 / 512.0))
            .collect();
        assert!(matches!(
            spectrum_from_interferogram(&ramp, 0.1),
            Err(Error::TruncatedPeak)
        ));
    }
}

//! Axial-profile recovery from photon-count records.
//!
//! Chain: mean removal → zero-phase windowed-sinc bandpass around the fringe
//! carrier → analytic-signal envelope → edge trim of `n_taps/2` bins →
//! peak picking and SNR/Fano statistics.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psf::measure_fwhm;
use crate::scan::{ScanConfig, ScanRecord};
use crate::spectra::SpectralDensity;

pub const MIN_TAPS: usize = 31;

/// Taps per unit of normalized bandwidth; sets the transition band to about
/// a seventh of the passband for a Hamming window.
const TAPS_PER_BANDWIDTH: f64 = 12.0;

/// Linear power ratio to decibels.
pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterWindow {
    #[default]
    Hamming,
    Blackman,
}

impl FilterWindow {
    fn coefficients(self, n: usize) -> Vec<f64> {
        let denom = (n - 1) as f64;
        let two_pi = 2.0 * std::f64::consts::PI;
        (0..n)
            .map(|i| {
                let x = i as f64 / denom;
                match self {
                    FilterWindow::Hamming => 0.54 - 0.46 * (two_pi * x).cos(),
                    FilterWindow::Blackman => {
                        0.42 - 0.5 * (two_pi * x).cos() + 0.08 * (2.0 * two_pi * x).cos()
                    }
                }
            })
            .collect()
    }
}

/// Linear-phase bandpass around the fringe carrier, in spatial-frequency units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// cycles/μm
    pub center_spatial_frequency: f64,
    /// Full passband width, cycles/μm.
    pub bandwidth: f64,
    pub n_taps: usize,
    pub window: FilterWindow,
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth < 2.0 * self.center_spatial_frequency) {
            return Err(Error::invalid(
                "bandwidth",
                "must satisfy 0 < bandwidth < 2 x center",
            ));
        }
        if self.n_taps < MIN_TAPS || self.n_taps.is_multiple_of(2) {
            return Err(Error::invalid(
                "n_taps",
                format!("must be odd and at least {MIN_TAPS}"),
            ));
        }
        Ok(())
    }

    /// Bins trimmed from each end of filtered sequences.
    pub fn edge_trim(&self) -> usize {
        self.n_taps / 2
    }

    /// Impulse response for samples `bin_spacing_um` apart.
    ///
    /// The taps sum to zero (no DC leakage) and have unit gain at the carrier.
    pub fn taps(&self, bin_spacing_um: f64) -> Vec<f64> {
        let f1 = (self.center_spatial_frequency - 0.5 * self.bandwidth) * bin_spacing_um;
        let f2 = (self.center_spatial_frequency + 0.5 * self.bandwidth) * bin_spacing_um;
        let half = (self.n_taps / 2) as i64;
        let window = self.window.coefficients(self.n_taps);
        let mut taps: Vec<f64> = (-half..=half)
            .zip(&window)
            .map(|(k, w)| {
                let k = k as f64;
                w * (2.0 * f2 * sinc(2.0 * f2 * k) - 2.0 * f1 * sinc(2.0 * f1 * k))
            })
            .collect();
        let leak = taps.iter().sum::<f64>() / window.iter().sum::<f64>();
        for (t, w) in taps.iter_mut().zip(&window) {
            *t -= leak * w;
        }
        let gain = response_of(&taps, self.center_spatial_frequency * bin_spacing_um);
        for t in &mut taps {
            *t /= gain;
        }
        taps
    }

    /// Magnitude response at spatial frequency `f` (cycles/μm).
    pub fn response(&self, f: f64, bin_spacing_um: f64) -> f64 {
        response_of(&self.taps(bin_spacing_um), f * bin_spacing_um)
    }

    /// Effective noise bandwidth B in Hz for a mirror moving at `mirror_speed_mm_s`:
    /// the spatial passband mapped to temporal frequency, per quadrature component.
    pub fn effective_bandwidth_hz(&self, mirror_speed_mm_s: f64) -> f64 {
        self.bandwidth * mirror_speed_mm_s * 1e3 / 2.0
    }

    /// FWHM of the envelope of the filter's own impulse response, μm.
    pub fn impulse_response_fwhm_um(&self, bin_spacing_um: f64) -> Result<f64> {
        let taps = self.taps(bin_spacing_um);
        let pad = taps.len();
        let mut padded = vec![0.0; pad];
        padded.extend(&taps);
        padded.extend(std::iter::repeat_n(0.0, pad));
        let env = demodulate_envelope(&padded);
        let z: Vec<f64> = (0..env.len()).map(|i| i as f64 * bin_spacing_um).collect();
        measure_fwhm(&env, &z)
    }

    /// Upper bound on the envelope FWHM after filtering a feature of width
    /// `fwhm_um`: the quadrature sum with the impulse-response width.
    pub fn broadening_bound_um(&self, fwhm_um: f64, bin_spacing_um: f64) -> Result<f64> {
        let filter = self.impulse_response_fwhm_um(bin_spacing_um)?;
        Ok((fwhm_um * fwhm_um + filter * filter).sqrt())
    }
}

fn response_of(taps: &[f64], f_normalized: f64) -> f64 {
    let half = (taps.len() / 2) as f64;
    let w = -2.0 * std::f64::consts::PI * f_normalized;
    taps.iter()
        .enumerate()
        .map(|(i, &h)| Complex64::from_polar(h, w * (i as f64 - half)))
        .sum::<Complex64>()
        .norm()
}

/// Bandpass centred on the carrier `2/λ₀` of the system spectrum.
///
/// The passband is `margin` times the FWHM of the system spectrum mapped to
/// spatial frequency (`f = 2ν/c`), never narrower than two bins of the scan's
/// Fourier transform.
pub fn design_bandpass(
    config: &ScanConfig,
    system_spectrum: &SpectralDensity,
    margin: f64,
) -> Result<FilterSpec> {
    if !(margin >= 1.0 && margin.is_finite()) {
        return Err(Error::invalid("margin", "must be at least 1"));
    }
    let dz = config.bin_spacing_um();
    if !(dz > 0.0) {
        return Err(Error::invalid("bin_spacing", "must be positive"));
    }
    let lambda0_um = system_spectrum.center_wavelength_nm() * 1e-3;
    let center = 2.0 / lambda0_um;

    let frequencies: Vec<f64> = system_spectrum.grid().frequencies().collect();
    let width_hz = measure_fwhm(system_spectrum.values(), &frequencies).unwrap_or(0.0);
    let width = 2.0 * width_hz / crate::constants::SPEED_OF_LIGHT * 1e-6;
    let n_bins = config.n_bins().max(1);
    let floor = 2.0 / (n_bins as f64 * dz);
    let bandwidth = (margin * width).max(floor);

    let nyquist = 0.5 / dz;
    if center + 0.5 * bandwidth >= nyquist {
        return Err(Error::Undersampled(format!(
            "passband edge {:.4} cycles/um exceeds the bin Nyquist frequency {nyquist:.4}",
            center + 0.5 * bandwidth
        )));
    }
    if bandwidth >= 2.0 * center {
        return Err(Error::invalid("bandwidth", "passband would include DC"));
    }

    let wanted = (TAPS_PER_BANDWIDTH / (bandwidth * dz)).ceil() as usize | 1;
    let cap = ((n_bins / 3).saturating_sub(1)) | 1;
    let n_taps = wanted.min(cap).max(MIN_TAPS);
    let spec = FilterSpec {
        center_spatial_frequency: center,
        bandwidth,
        n_taps,
        window: FilterWindow::Hamming,
    };
    spec.validate()?;
    Ok(spec)
}

/// Linear convolution, output aligned with the input ("same" mode) for an
/// odd, centred kernel.
fn convolve_same(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let m = kernel.len();
    let size = (n + m - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let to_complex = |xs: &[f64]| -> Vec<Complex64> {
        let mut v: Vec<Complex64> = xs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        v.resize(size, Complex64::new(0.0, 0.0));
        v
    };
    let mut a = to_complex(signal);
    let mut b = to_complex(kernel);
    forward.process(&mut a);
    forward.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inverse.process(&mut a);
    let scale = 1.0 / size as f64;
    let offset = m / 2;
    a[offset..offset + n].iter().map(|c| c.re * scale).collect()
}

/// Zero-phase bandpass of a count sequence after mean removal.
pub fn bandpass_filter(counts: &[f64], spec: &FilterSpec, bin_spacing_um: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    if counts.len() <= spec.n_taps {
        return Err(Error::TooShort {
            len: counts.len(),
            needed: spec.n_taps,
        });
    }
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let centered: Vec<f64> = counts.iter().map(|c| c - mean).collect();
    Ok(convolve_same(&centered, &spec.taps(bin_spacing_um)))
}

/// Magnitude of the analytic signal.
pub fn demodulate_envelope(filtered: &[f64]) -> Vec<f64> {
    let n = filtered.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = filtered.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let positive_end = n.div_ceil(2);
    for x in &mut buf[1..positive_end] {
        *x *= 2.0;
    }
    let negative_start = n / 2 + 1;
    for x in &mut buf[negative_start..] {
        *x = Complex64::new(0.0, 0.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.norm() * scale).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub position_um: f64,
    pub height: f64,
    pub fwhm_um: Option<f64>,
}

/// Local maxima of `envelope` above `threshold_fraction` of its global maximum.
///
/// Each contiguous run above threshold yields one peak, refined by a parabola
/// through the top three samples. Per-peak FWHM is measured between the
/// valleys separating neighbouring runs; it is `None` when the peak's
/// half-maximum crossings are not resolved there.
pub fn find_peaks(envelope: &[f64], z: &[f64], threshold_fraction: f64) -> Result<Vec<Peak>> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::invalid("threshold_fraction", "must lie in (0, 1)"));
    }
    if envelope.len() != z.len() {
        return Err(Error::invalid("z", "length differs from the envelope"));
    }
    let global = envelope.iter().copied().fold(0.0, f64::max);
    if !(global > 0.0) {
        return Ok(Vec::new());
    }
    let threshold = threshold_fraction * global;

    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in envelope.iter().enumerate() {
        match (v > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, envelope.len() - 1));
    }

    let valley = |from: usize, to: usize| -> usize {
        (from..=to)
            .min_by(|&a, &b| envelope[a].total_cmp(&envelope[b]))
            .unwrap_or(from)
    };

    let mut peaks = Vec::with_capacity(runs.len());
    for (r, &(a, b)) in runs.iter().enumerate() {
        let top = (a..=b)
            .max_by(|&x, &y| envelope[x].total_cmp(&envelope[y]))
            .expect("non-empty run");
        let (mut position, mut height) = (z[top], envelope[top]);
        if top > 0 && top + 1 < envelope.len() {
            let (ym, y0, yp) = (envelope[top - 1], envelope[top], envelope[top + 1]);
            let curvature = ym - 2.0 * y0 + yp;
            if curvature < 0.0 {
                let delta = 0.5 * (ym - yp) / curvature;
                let step = 0.5 * (z[top + 1] - z[top - 1]);
                position += delta * step;
                height = y0 - 0.25 * (ym - yp) * delta;
            }
        }
        let left = if r == 0 { 0 } else { valley(runs[r - 1].1, a) };
        let right = if r + 1 == runs.len() {
            envelope.len() - 1
        } else {
            valley(b, runs[r + 1].0)
        };
        let fwhm_um = measure_fwhm(&envelope[left..=right], &z[left..=right]).ok();
        peaks.push(Peak {
            position_um: position,
            height,
            fwhm_um,
        });
    }
    Ok(peaks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub snr: f64,
    pub snr_db: f64,
}

/// Closed interval of mirror positions, μm.
pub type ZInterval = (f64, f64);

fn intervals_overlap(a: ZInterval, b: ZInterval) -> bool {
    a.0.max(b.0) <= a.1.min(b.1)
}

/// Peak envelope squared over the variance of the filtered signal in the noise region.
pub fn estimate_snr(
    filtered: &[f64],
    envelope: &[f64],
    z: &[f64],
    signal_region: ZInterval,
    noise_region: &[ZInterval],
) -> Result<SnrEstimate> {
    if filtered.len() != z.len() || envelope.len() != z.len() {
        return Err(Error::invalid("z", "sequence lengths differ"));
    }
    if noise_region
        .iter()
        .any(|&n| intervals_overlap(n, signal_region))
    {
        return Err(Error::RegionOverlap);
    }
    let inside = |zi: f64, (lo, hi): ZInterval| zi >= lo && zi <= hi;
    let peak = z
        .iter()
        .zip(envelope)
        .filter(|(zi, _)| inside(**zi, signal_region))
        .map(|(_, e)| *e)
        .fold(None, |acc: Option<f64>, e| {
            Some(acc.map_or(e, |a| a.max(e)))
        })
        .ok_or(Error::EmptyRegion("signal"))?;
    let noise: Vec<f64> = z
        .iter()
        .zip(filtered)
        .filter(|(zi, _)| noise_region.iter().any(|&r| inside(**zi, r)))
        .map(|(_, f)| *f)
        .collect();
    if noise.len() < 2 {
        return Err(Error::EmptyRegion("noise"));
    }
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    let variance = noise.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (noise.len() - 1) as f64;
    if !(variance >= 1e-300) {
        return Err(Error::DegenerateNoise { variance });
    }
    let snr = peak * peak / variance;
    Ok(SnrEstimate {
        snr,
        snr_db: to_db(snr),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoEstimate {
    pub f_hat: f64,
    pub n_samples: usize,
    /// √(2/N), the spread of `f_hat` under Poisson statistics.
    pub expected_std: f64,
}

/// Sample variance (N−1 denominator) over sample mean.
pub fn fano_factor(counts: &[u64]) -> Result<FanoEstimate> {
    let n = counts.len();
    if n < 2 {
        return Err(Error::TooShort { len: n, needed: 1 });
    }
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Err(Error::ZeroMean);
    }
    let variance = counts
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1) as f64;
    Ok(FanoEstimate {
        f_hat: variance / mean,
        n_samples: n,
        expected_std: (2.0 / n as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalysisOptions {
    pub threshold_fraction: f64,
    /// Signal and noise regions for SNR estimation; skipped when `None`.
    pub snr_regions: Option<(ZInterval, Vec<ZInterval>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeResult {
    pub z: Vec<f64>,
    pub filtered: Vec<f64>,
    pub envelope: Vec<f64>,
    pub peaks: Vec<Peak>,
    pub snr: Option<SnrEstimate>,
    /// Effective detection bandwidth of the processed scan, Hz.
    pub bandwidth_hz: f64,
}

/// Full processing chain on a scan record; all outputs exclude the filter transients.
pub fn analyze_scan(
    record: &ScanRecord,
    spec: &FilterSpec,
    options: &AnalysisOptions,
) -> Result<EnvelopeResult> {
    let dz = record.config.bin_spacing_um();
    let filtered = bandpass_filter(&record.counts_f64(), spec, dz)?;
    let envelope = demodulate_envelope(&filtered);
    let trim = spec.edge_trim();
    let keep = trim..filtered.len() - trim;
    let z = record.positions[keep.clone()].to_vec();
    let filtered = filtered[keep.clone()].to_vec();
    let envelope = envelope[keep].to_vec();
    let peaks = find_peaks(&envelope, &z, options.threshold_fraction)?;
    let snr = match &options.snr_regions {
        Some((signal, noise)) => Some(estimate_snr(&filtered, &envelope, &z, *signal, noise)?),
        None => None,
    };
    Ok(EnvelopeResult {
        z,
        filtered,
        envelope,
        peaks,
        snr,
        bandwidth_hz: spec.effective_bandwidth_hz(record.config.mirror_speed_mm_s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(center: f64, bandwidth: f64, dz: f64) -> FilterSpec {
        FilterSpec {
            center_spatial_frequency: center,
            bandwidth,
            n_taps: ((12.0 / (bandwidth * dz)).ceil() as usize) | 1,
            window: FilterWindow::Hamming,
        }
    }

    #[test]
    fn taps_reject_dc_and_pass_carrier() {
        let dz = 0.05;
        let s = spec(2.0, 0.3, dz);
        let taps = s.taps(dz);
        assert!(taps.iter().sum::<f64>().abs() < 1e-12);
        assert_relative_eq!(s.response(2.0, dz), 1.0, max_relative = 1e-12);
        assert_relative_eq!(s.response(2.0 + 0.3 / 8.0, dz), 1.0, epsilon = 0.01);
        assert_relative_eq!(s.response(2.0 - 0.3 / 8.0, dz), 1.0, epsilon = 0.01);
    }

    #[test]
    fn constant_input_is_rejected() {
        let dz = 0.05;
        let s = spec(2.0, 0.3, dz);
        let out = bandpass_filter(&vec![37.0; 4000], &s, dz).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-6 * 37.0));
    }

    #[test]
    fn carrier_passes_with_unit_amplitude() {
        let dz = 0.05;
        let s = spec(2.0, 0.3, dz);
        let x: Vec<f64> = (0..6000)
            .map(|i| (2.0 * std::f64::consts::PI * 2.0 * i as f64 * dz).cos())
            .collect();
        let y = bandpass_filter(&x, &s, dz).unwrap();
        let trim = s.edge_trim();
        let amp = y[trim..y.len() - trim]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert_relative_eq!(amp, 1.0, epsilon = 0.01);
    }

    #[test]
    fn third_harmonic_is_attenuated_40_db() {
        let dz = 0.05;
        let s = spec(2.0, 0.3, dz);
        let gain = s.response(6.0, dz);
        assert!(to_db(gain * gain) <= -40.0, "gain {gain}");
        let blackman = FilterSpec {
            window: FilterWindow::Blackman,
            ..s
        };
        assert!(to_db(blackman.response(6.0, dz).powi(2)) <= -40.0);
    }

    #[test]
    fn too_short_input() {
        let s = spec(2.0, 0.3, 0.05);
        assert!(matches!(
            bandpass_filter(&vec![1.0; s.n_taps], &s, 0.05),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn filter_spec_validation() {
        let mut s = spec(2.0, 0.3, 0.05);
        s.n_taps = 30;
        assert!(s.validate().is_err());
        s.n_taps = 31;
        s.bandwidth = 4.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn envelope_of_pure_carrier() {
        let x: Vec<f64> = (0..4096).map(|i| 3.0 * (0.71 * i as f64).cos()).collect();
        let env = demodulate_envelope(&x);
        for v in &env[200..env.len() - 200] {
            assert!((v - 3.0).abs() < 0.06, "{v}");
        }
        assert!(demodulate_envelope(&[0.0; 64]).iter().all(|&v| v == 0.0));
        assert!(demodulate_envelope(&[]).is_empty());
    }

    #[test]
    fn envelope_of_gaussian_wavepacket() {
        let dz = 0.02;
        let sigma = 2.0;
        let z: Vec<f64> = (0..4001).map(|i| (i as f64 - 2000.0) * dz).collect();
        let x: Vec<f64> = z
            .iter()
            .map(|v| {
                (-0.5 * (v / sigma).powi(2)).exp() * (2.0 * std::f64::consts::PI * 2.1 * v).cos()
            })
            .collect();
        let env = demodulate_envelope(&x);
        let fwhm = measure_fwhm(&env, &z).unwrap();
        let expected = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * sigma;
        assert_relative_eq!(fwhm, expected, max_relative = 0.03);
    }

    #[test]
    fn peaks_respect_threshold() {
        let z: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        let env: Vec<f64> = z
            .iter()
            .map(|&v| {
                (-0.5 * ((v - 30.0) / 1.0).powi(2)).exp()
                    + 0.6 * (-0.5 * ((v - 70.0) / 1.0).powi(2)).exp()
            })
            .collect();
        let peaks = find_peaks(&env, &z, 0.5).unwrap();
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].position_um - 30.0).abs() < 0.01);
        assert!((peaks[1].position_um - 70.0).abs() < 0.01);
        assert!(peaks[0].position_um < peaks[1].position_um);
        let expected = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt();
        assert_relative_eq!(peaks[1].fwhm_um.unwrap(), expected, max_relative = 0.01);

        let high = find_peaks(&env, &z, 0.7).unwrap();
        assert_eq!(high.len(), 1);
        assert!(high.iter().all(|p| p.height > 0.7));
        assert!(find_peaks(&env, &z, 1.5).is_err());
        assert!(find_peaks(&[0.0; 10], &z[..10], 0.5).unwrap().is_empty());
    }

    #[test]
    fn snr_regions() {
        let z: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let filtered: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let mut env = vec![1.0; 100];
        env[10] = 10.0;
        let est = estimate_snr(&filtered, &env, &z, (0.0, 20.0), &[(50.0, 99.0)]).unwrap();
        let var = 50.0 / 49.0;
        assert_relative_eq!(est.snr, 100.0 / var, max_relative = 1e-12);
        assert!(matches!(
            estimate_snr(&filtered, &env, &z, (0.0, 20.0), &[(15.0, 99.0)]),
            Err(Error::RegionOverlap)
        ));
        assert!(matches!(
            estimate_snr(&filtered, &env, &z, (200.0, 220.0), &[(50.0, 99.0)]),
            Err(Error::EmptyRegion("signal"))
        ));
        let flat = vec![0.0; 100];
        assert!(matches!(
            estimate_snr(&flat, &env, &z, (0.0, 20.0), &[(50.0, 99.0)]),
            Err(Error::DegenerateNoise { .. })
        ));
    }

    #[test]
    fn snr_db_of_562() {
        assert!((to_db(562.0) - 27.5).abs() < 0.05);
    }

    #[test]
    fn fano_examples() {
        let f = fano_factor(&[5, 5, 5, 5]).unwrap();
        assert_eq!(f.f_hat, 0.0);
        assert_relative_eq!(f.expected_std, 0.5f64.sqrt());

        let base = [3u64, 7, 4, 9, 5, 6];
        let doubled: Vec<u64> = base.iter().map(|c| 2 * c).collect();
        let a = fano_factor(&base).unwrap().f_hat;
        let b = fano_factor(&doubled).unwrap().f_hat;
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-15);

        assert!(matches!(fano_factor(&[0, 0, 0]), Err(Error::ZeroMean)));
        assert!(fano_factor(&[4]).is_err());
    }
}

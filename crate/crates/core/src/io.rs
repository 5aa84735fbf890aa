//! Text file formats.
//!
//! All numeric values are written in Rust's shortest round-trip notation, so
//! reading a file back reproduces every `f64` bit-for-bit. Parsing never
//! depends on the process locale.
//!
//! Scan record (format version 1):
//!
//! ```text
//! # ocdr scan record
//! # format_version = 1
//! # z_start_um = -40.0
//! # ...one line per ScanConfig field...
//! # n_bins = 4000
//! # truth = false
//! position_um,counts
//! -39.99,1234
//! ```
//!
//! With `truth = true` a third column `mean_rate` carries the noiseless
//! detected rate. `n_bins` is an integrity count: a file whose row count
//! disagrees with it is rejected as corrupt.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{EnvelopeResult, Peak};
use crate::error::{Error, Result};
use crate::psf::Psf;
use crate::scan::{ScanConfig, ScanRecord, SCAN_FORMAT_VERSION};
use crate::spectra::{FrequencyGrid, ResponseCurve, SpectralDensity};

pub const SPECTRUM_FORMAT_VERSION: u32 = 1;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Corrupt(format!("bad number `{s}` for {what}")))
}

/// Split a file into `# key = value` metadata and data lines.
fn split_header(text: &str) -> (BTreeMap<String, String>, Vec<&str>) {
    let mut meta = BTreeMap::new();
    let mut data = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else if !line.trim().is_empty() {
            data.push(line);
        }
    }
    (meta, data)
}

fn take<'a>(meta: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Corrupt(format!("missing header field `{key}`")))
}

fn check_version(meta: &BTreeMap<String, String>, expected: u32) -> Result<()> {
    let raw = take(meta, "format_version")?;
    let found: u32 = raw
        .parse()
        .map_err(|_| Error::Corrupt(format!("bad format_version `{raw}`")))?;
    if found != expected {
        return Err(Error::VersionMismatch { found, expected });
    }
    Ok(())
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

fn write_two_column(
    kind: &str,
    grid: &FrequencyGrid,
    values: &[f64],
    extra: &[(&str, String)],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# ocdr {kind}");
    let _ = writeln!(out, "# format_version = {SPECTRUM_FORMAT_VERSION}");
    let _ = writeln!(out, "# nu_min_hz = {}", fmt_f64(grid.nu_min()));
    let _ = writeln!(out, "# nu_max_hz = {}", fmt_f64(grid.nu_max()));
    let _ = writeln!(out, "# n_points = {}", grid.len());
    for (k, v) in extra {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(out, "# columns = frequency_hz value");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}", fmt_f64(grid.frequency(i)), fmt_f64(*v));
    }
    out
}

fn read_two_column(text: &str) -> Result<(FrequencyGrid, Vec<f64>)> {
    let (meta, data) = split_header(text);
    check_version(&meta, SPECTRUM_FORMAT_VERSION)?;
    let nu_min = parse_f64(take(&meta, "nu_min_hz")?, "nu_min_hz")?;
    let nu_max = parse_f64(take(&meta, "nu_max_hz")?, "nu_max_hz")?;
    let n: usize = take(&meta, "n_points")?
        .parse()
        .map_err(|_| Error::Corrupt("bad n_points".into()))?;
    if data.len() != n {
        return Err(Error::Corrupt(format!(
            "header declares {n} points, found {}",
            data.len()
        )));
    }
    let grid = FrequencyGrid::new(nu_min, nu_max, n).map_err(|e| Error::Corrupt(e.to_string()))?;
    let mut values = Vec::with_capacity(n);
    for (i, line) in data.iter().enumerate() {
        let fields = split_fields(line);
        if fields.len() != 2 {
            return Err(Error::Corrupt(format!(
                "row {} has {} columns",
                i + 1,
                fields.len()
            )));
        }
        let nu = parse_f64(fields[0], "frequency")?;
        let expected = grid.frequency(i);
        if (nu - expected).abs() > 1e-9 * expected {
            return Err(Error::Corrupt(format!(
                "row {} is off the uniform grid",
                i + 1
            )));
        }
        values.push(parse_f64(fields[1], "value")?);
    }
    Ok((grid, values))
}

pub fn spectrum_to_string(spectrum: &SpectralDensity) -> String {
    let centroid = if spectrum.integral() > 0.0 {
        fmt_f64(spectrum.center_wavelength_nm())
    } else {
        "nan".into()
    };
    write_two_column(
        "spectral_density",
        spectrum.grid(),
        spectrum.values(),
        &[("center_wavelength_nm", centroid)],
    )
}

pub fn spectrum_from_str(text: &str) -> Result<SpectralDensity> {
    let (grid, values) = read_two_column(text)?;
    SpectralDensity::new(grid, values).map_err(|e| Error::Corrupt(e.to_string()))
}

pub fn write_spectrum(spectrum: &SpectralDensity, path: &Path) -> Result<()> {
    Ok(fs::write(path, spectrum_to_string(spectrum))?)
}

pub fn read_spectrum(path: &Path) -> Result<SpectralDensity> {
    spectrum_from_str(&fs::read_to_string(path)?)
}

pub fn response_to_string(curve: &ResponseCurve) -> String {
    write_two_column("response_curve", curve.grid(), curve.qe(), &[])
}

pub fn response_from_str(text: &str) -> Result<ResponseCurve> {
    let (grid, values) = read_two_column(text)?;
    ResponseCurve::new(grid, values).map_err(|e| Error::Corrupt(e.to_string()))
}

pub fn write_response(curve: &ResponseCurve, path: &Path) -> Result<()> {
    Ok(fs::write(path, response_to_string(curve))?)
}

pub fn read_response(path: &Path) -> Result<ResponseCurve> {
    response_from_str(&fs::read_to_string(path)?)
}

pub fn psf_to_string(psf: &Psf) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# ocdr point spread function");
    let _ = writeln!(out, "# fwhm_um = {}", fmt_f64(psf.fwhm_um()));
    let _ = writeln!(
        out,
        "# coherence_length_um = {}",
        fmt_f64(psf.coherence_length_um())
    );
    let _ = writeln!(
        out,
        "# carrier_wavelength_nm = {}",
        fmt_f64(psf.carrier_wavelength_nm())
    );
    let _ = writeln!(out, "z_um,envelope");
    for (z, e) in psf.z().iter().zip(psf.envelope()) {
        let _ = writeln!(out, "{},{}", fmt_f64(*z), fmt_f64(*e));
    }
    out
}

pub fn write_psf(psf: &Psf, path: &Path) -> Result<()> {
    Ok(fs::write(path, psf_to_string(psf))?)
}

fn config_fields(c: &ScanConfig) -> Vec<(&'static str, String)> {
    vec![
        ("z_start_um", fmt_f64(c.z_start_um)),
        ("z_end_um", fmt_f64(c.z_end_um)),
        ("mirror_speed_mm_s", fmt_f64(c.mirror_speed_mm_s)),
        ("counting_time_s", fmt_f64(c.counting_time_s)),
        ("reference_flux", fmt_f64(c.reference_flux)),
        ("sample_flux_peak", fmt_f64(c.sample_flux_peak)),
        ("eta", fmt_f64(c.eta)),
        ("dark_rate", fmt_f64(c.dark_rate)),
        ("dead_time_s", fmt_f64(c.dead_time_s)),
        ("rng_seed", c.rng_seed.to_string()),
        ("center_wavelength_nm", fmt_f64(c.center_wavelength_nm)),
    ]
}

pub fn scan_record_to_string(record: &ScanRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# ocdr scan record");
    let _ = writeln!(out, "# format_version = {}", record.format_version);
    for (k, v) in config_fields(&record.config) {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(out, "# n_bins = {}", record.counts.len());
    let _ = writeln!(out, "# truth = {}", record.truth.is_some());
    match &record.truth {
        None => {
            let _ = writeln!(out, "position_um,counts");
            for (p, c) in record.positions.iter().zip(&record.counts) {
                let _ = writeln!(out, "{},{c}", fmt_f64(*p));
            }
        }
        Some(truth) => {
            let _ = writeln!(out, "position_um,counts,mean_rate");
            for ((p, c), t) in record.positions.iter().zip(&record.counts).zip(truth) {
                let _ = writeln!(out, "{},{c},{}", fmt_f64(*p), fmt_f64(*t));
            }
        }
    }
    out
}

pub fn scan_record_from_str(text: &str) -> Result<ScanRecord> {
    let (meta, data) = split_header(text);
    check_version(&meta, SCAN_FORMAT_VERSION)?;
    let num = |key: &str| -> Result<f64> { parse_f64(take(&meta, key)?, key) };
    let config = ScanConfig {
        z_start_um: num("z_start_um")?,
        z_end_um: num("z_end_um")?,
        mirror_speed_mm_s: num("mirror_speed_mm_s")?,
        counting_time_s: num("counting_time_s")?,
        reference_flux: num("reference_flux")?,
        sample_flux_peak: num("sample_flux_peak")?,
        eta: num("eta")?,
        dark_rate: num("dark_rate")?,
        dead_time_s: num("dead_time_s")?,
        rng_seed: take(&meta, "rng_seed")?
            .parse()
            .map_err(|_| Error::Corrupt("bad rng_seed".into()))?,
        center_wavelength_nm: num("center_wavelength_nm")?,
    };
    let n_bins: usize = take(&meta, "n_bins")?
        .parse()
        .map_err(|_| Error::Corrupt("bad n_bins".into()))?;
    let has_truth = match take(&meta, "truth")? {
        "true" => true,
        "false" => false,
        other => return Err(Error::Corrupt(format!("bad truth flag `{other}`"))),
    };
    let (columns, rows) = data
        .split_first()
        .ok_or_else(|| Error::Corrupt("missing column header".into()))?;
    let expected_columns = if has_truth {
        "position_um,counts,mean_rate"
    } else {
        "position_um,counts"
    };
    if columns.trim() != expected_columns {
        return Err(Error::Corrupt(format!("unexpected columns `{columns}`")));
    }
    if rows.len() != n_bins {
        return Err(Error::Corrupt(format!(
            "header declares {n_bins} bins, found {} rows",
            rows.len()
        )));
    }
    let width = if has_truth { 3 } else { 2 };
    let mut positions = Vec::with_capacity(n_bins);
    let mut counts = Vec::with_capacity(n_bins);
    let mut truth = has_truth.then(|| Vec::with_capacity(n_bins));
    for (i, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != width {
            return Err(Error::Corrupt(format!(
                "row {} has {} fields",
                i + 1,
                fields.len()
            )));
        }
        positions.push(parse_f64(fields[0], "position")?);
        counts.push(
            fields[1]
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::Corrupt(format!("bad count on row {}", i + 1)))?,
        );
        if let Some(t) = truth.as_mut() {
            t.push(parse_f64(fields[2], "mean_rate")?);
        }
    }
    let dz = config.bin_spacing_um();
    for (k, p) in positions.iter().enumerate() {
        let expected = config.z_start_um + (k as f64 + 0.5) * dz;
        if (p - expected).abs() > 1e-6 * dz.max(1e-12) + 1e-9 {
            return Err(Error::Corrupt(format!(
                "position on row {} is off the bin grid",
                k + 1
            )));
        }
    }
    Ok(ScanRecord {
        config,
        positions,
        counts,
        truth,
        format_version: SCAN_FORMAT_VERSION,
    })
}

pub fn write_scan_record(record: &ScanRecord, path: &Path) -> Result<()> {
    Ok(fs::write(path, scan_record_to_string(record))?)
}

pub fn read_scan_record(path: &Path) -> Result<ScanRecord> {
    scan_record_from_str(&fs::read_to_string(path)?)
}

/// Summary block written next to an envelope CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSummary {
    pub format_version: u32,
    pub bandwidth_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub peaks: Vec<Peak>,
}

impl From<&EnvelopeResult> for EnvelopeSummary {
    fn from(r: &EnvelopeResult) -> Self {
        Self {
            format_version: 1,
            bandwidth_hz: r.bandwidth_hz,
            snr: r.snr.map(|s| s.snr),
            snr_db: r.snr.map(|s| s.snr_db),
            peaks: r.peaks.clone(),
        }
    }
}

pub fn envelope_csv(result: &EnvelopeResult) -> String {
    let mut out = String::from("z_um,envelope\n");
    for (z, e) in result.z.iter().zip(&result.envelope) {
        let _ = writeln!(out, "{},{}", fmt_f64(*z), fmt_f64(*e));
    }
    out
}

/// Writes `<stem>.csv` and `<stem>.summary.toml` into `dir`; returns both file names.
pub fn write_envelope(result: &EnvelopeResult, dir: &Path, stem: &str) -> Result<Vec<String>> {
    let csv = format!("{stem}.csv");
    let summary = format!("{stem}.summary.toml");
    fs::write(dir.join(&csv), envelope_csv(result))?;
    let text = toml::to_string(&EnvelopeSummary::from(result))
        .map_err(|e| Error::Config(format!("cannot serialize summary: {e}")))?;
    fs::write(dir.join(&summary), text)?;
    Ok(vec![csv, summary])
}

/// Plain CSV table with optional `# key = value` metadata lines.
pub fn table_csv(meta: &[(&str, String)], columns: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(out, "{}", columns.join(","));
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::make_gaussian_source;

    fn record(truth: bool) -> ScanRecord {
        let config = ScanConfig {
            z_start_um: -1.0,
            z_end_um: 1.0,
            mirror_speed_mm_s: 0.001,
            counting_time_s: 0.1,
            reference_flux: 1e5,
            sample_flux_peak: 3.3e3,
            eta: 0.05,
            dark_rate: 12.5,
            dead_time_s: 1e-8,
            rng_seed: u64::MAX,
            center_wavelength_nm: 930.0,
        };
        let positions = config.positions();
        let n = positions.len();
        ScanRecord {
            config,
            positions,
            counts: (0..n as u64).map(|k| k * 7919 % 101).collect(),
            truth: truth.then(|| (0..n).map(|k| 1.0 / (k as f64 + 3.0)).collect()),
            format_version: SCAN_FORMAT_VERSION,
        }
    }

    #[test]
    fn scan_record_roundtrip() {
        for truth in [false, true] {
            let r = record(truth);
            let back = scan_record_from_str(&scan_record_to_string(&r)).unwrap();
            assert_eq!(back, r);
        }
    }

    #[test]
    fn truncated_record_is_corrupt() {
        let text = scan_record_to_string(&record(false));
        let cut = &text[..text.len() - 20];
        assert!(matches!(scan_record_from_str(cut), Err(Error::Corrupt(_))));
        let no_rows: String = text.lines().take(16).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            scan_record_from_str(&no_rows),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn future_version_is_rejected() {
        let text = scan_record_to_string(&record(false))
            .replace("format_version = 1", "format_version = 2");
        assert!(matches!(
            scan_record_from_str(&text),
            Err(Error::VersionMismatch {
                found: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn spectrum_roundtrip_is_exact() {
        let grid = FrequencyGrid::new(250e12, 400e12, 1000).unwrap();
        let s = make_gaussian_source(1000.0, 50.0, &grid).unwrap();
        let back = spectrum_from_str(&spectrum_to_string(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn spectrum_parse_accepts_commas_and_rejects_gaps() {
        let text =
            "# format_version = 1\n# nu_min_hz = 1e14\n# nu_max_hz = 1.15e14\n# n_points = 16\n";
        let mut good = String::from(text);
        for i in 0..16 {
            good.push_str(&format!("{:e}, 0.5\n", 1e14 + i as f64 * 1e12));
        }
        assert_eq!(spectrum_from_str(&good).unwrap().values().len(), 16);
        let mut bad = String::from(text);
        for i in 0..16 {
            bad.push_str(&format!("{:e} 0.5\n", 1e14 + (i * i) as f64 * 1e11));
        }
        assert!(matches!(spectrum_from_str(&bad), Err(Error::Corrupt(_))));
    }
}

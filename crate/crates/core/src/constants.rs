//! Physical constants (SI, exact CODATA 2018 values where defined).

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Convert a vacuum wavelength in nanometres to optical frequency in Hz.
pub fn wavelength_nm_to_hz(wavelength_nm: f64) -> f64 {
    SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// Convert an optical frequency in Hz to vacuum wavelength in nanometres.
pub fn hz_to_wavelength_nm(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / frequency_hz * 1e9
}

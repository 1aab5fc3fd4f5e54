//! Physical constants and unit helpers.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Unit-length tolerance applied when constructing normalized quantities.
pub const CONSTRUCTION_TOL: f64 = 1e-9;

/// Tolerance for pure-math identities on already-constructed values.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Convert an optical power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// Convert an optical power in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Photon energy at a vacuum wavelength given in nanometres, in joules.
pub fn photon_energy_j(lambda_nm: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT / (lambda_nm * 1e-9)
}

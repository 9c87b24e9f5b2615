//! Physical constants (CODATA 2018, SI units).

use std::f64::consts::PI;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// 1/(4 pi eps0), in N m^2 / C^2.
pub const COULOMB_CONSTANT: f64 = 1.0 / (4.0 * PI * VACUUM_PERMITTIVITY);

/// Pascal per millibar.
pub const PA_PER_MBAR: f64 = 100.0;

/// Celsius to kelvin offset.
pub const ZERO_CELSIUS: f64 = 273.15;

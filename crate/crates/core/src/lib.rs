//! Simulation of ion clouds in a linear Paul trap: trap fields and
//! stability, molecular dynamics with laser cooling, loading models and
//! resonant-excitation mass spectrometry.

pub mod constants;
pub mod error;
pub mod harness;
pub mod ion_dynamics;
pub mod loading;
pub mod spectrometry;
pub mod trap_model;

pub use error::{Error, Result};

/// Cartesian vector in SI units.
pub type Vec3 = [f64; 3];

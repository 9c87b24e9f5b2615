//! N-body molecular dynamics of the ion cloud: time-dependent trap field,
//! softened Coulomb interaction, stochastic Doppler cooling, quadrupole
//! tickle and destructive ejection counting.

mod checkpoint;
mod cooling;
mod coulomb;
mod diagnostics;
mod engine;
mod state;
mod synth;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::error::{Error, Result};
use crate::Vec3;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use cooling::cooling_force;
pub use coulomb::{
    coulomb_accelerations, coulomb_potential_energy, CoulombSolver, DEFAULT_MULTIPOLE_TOLERANCE,
};
pub use diagnostics::{
    eject_and_count, kinetic_temperature, radial_energy, secular_temperature, TemperatureSampling,
};
pub use engine::{apply_tickle, equilibrate, Engine, EquilibrationReport, StepReport};
pub use state::CloudState;
pub use synth::{cold_fluid_aspect_ratio, cold_fluid_density, synthesize_cloud, CloudRecipe};

/// Speed above which a step is declared numerically unstable, m/s.
pub const BLOW_UP_SPEED: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// Full time-dependent RF quadrupole.
    FullRf,
    /// Time-averaged pseudopotential.
    Secular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoulombMode {
    Off,
    Direct,
    CellList,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// s
    pub dt: f64,
    pub field_mode: FieldMode,
    pub coulomb: CoulombMode,
    /// m
    pub softening_length: f64,
    /// Fixed reduction order in the Coulomb sum, independent of thread count.
    pub deterministic_reduction: bool,
}

pub const DEFAULT_SOFTENING: f64 = 100e-9;

impl IntegratorConfig {
    /// Default step: T_rf/100 with the full field, T_secular/200 otherwise.
    /// `nu_radial` is the highest radial secular frequency in the cloud.
    pub fn default_for(field_mode: FieldMode, omega_rf: f64, nu_radial: f64) -> Self {
        let dt = match field_mode {
            FieldMode::FullRf => 2.0 * PI / omega_rf / 100.0,
            FieldMode::Secular => 1.0 / nu_radial / 200.0,
        };
        Self {
            dt,
            field_mode,
            coulomb: CoulombMode::Direct,
            softening_length: DEFAULT_SOFTENING,
            deterministic_reduction: true,
        }
    }

    pub fn validate(&self, omega_rf: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.field_mode == FieldMode::FullRf
            && self.dt > 2.0 * PI / omega_rf / 50.0 * (1.0 + 1e-12)
        {
            return Err(Error::invalid(format!(
                "dt = {:e} s exceeds T_rf/50 in full-RF mode",
                self.dt
            )));
        }
        if !(self.softening_length >= 0.0) {
            return Err(Error::invalid("softening_length must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingBeam {
    /// m
    pub wavelength: f64,
    /// Natural linewidth, rad/s.
    pub gamma: f64,
    /// Laser minus atomic angular frequency, rad/s.
    pub detuning: f64,
    pub saturation_s: f64,
    /// Unit propagation vector.
    pub direction: Vec3,
    pub on: bool,
}

impl CoolingBeam {
    /// 422 nm Sr+ cooling light at delta = -gamma/2, s = 1.
    pub fn strontium(direction: Vec3) -> Self {
        let gamma = 2.0 * PI * 20.2e6;
        let norm = (direction[0].powi(2) + direction[1].powi(2) + direction[2].powi(2)).sqrt();
        Self {
            wavelength: 422e-9,
            gamma,
            detuning: -0.5 * gamma,
            saturation_s: 1.0,
            direction: [
                direction[0] / norm,
                direction[1] / norm,
                direction[2] / norm,
            ],
            on: true,
        }
    }

    /// Two beams whose transverse projections are orthogonal, so the
    /// degenerate radial pair and the axis are all damped.
    pub fn default_pair() -> Vec<Self> {
        vec![
            Self::strontium([1.0, 1.0, 1.0]),
            Self::strontium([1.0, -1.0, 1.0]),
        ]
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Single-photon recoil momentum, kg m/s.
    pub fn recoil_momentum(&self) -> f64 {
        HBAR * self.wavenumber()
    }

    pub fn validate(&self) -> Result<()> {
        let n2: f64 = self.direction.iter().map(|c| c * c).sum();
        if (n2 - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "cooling beam direction must be a unit vector",
            ));
        }
        if !(self.saturation_s >= 0.0) || !(self.gamma > 0.0) || !(self.wavelength > 0.0) {
            return Err(Error::invalid(
                "cooling beam needs s >= 0, gamma > 0, wavelength > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickleDrive {
    /// Hz
    pub frequency: f64,
    /// V
    pub amplitude: f64,
    /// s
    pub duration: f64,
    /// Simulation time at which the drive switches on, s.
    pub start: f64,
}

impl TickleDrive {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0) || !(self.amplitude >= 0.0) || !(self.duration >= 0.0) {
            return Err(Error::invalid(
                "tickle needs frequency > 0, amplitude >= 0, duration >= 0",
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn active_at(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EjectionConfig {
    pub detection_efficiency: f64,
}

impl Default for EjectionConfig {
    fn default() -> Self {
        Self {
            detection_efficiency: 1.0,
        }
    }
}

impl EjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.detection_efficiency) {
            return Err(Error::invalid("detection_efficiency must be in [0, 1]"));
        }
        Ok(())
    }
}

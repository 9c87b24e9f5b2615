//! Analytic field and stability layer of the linear quadrupole trap.
//!
//! Everything here is a pure function of the trap geometry, the drive
//! settings and the ion species. The quadrupole is idealized: the RF term
//! is `eta_rf * v_rf * cos(omega_rf t) (x^2 - y^2) / (2 r0^2)` and the end
//! caps contribute `kappa_axial * v_ec * (z^2 - (x^2 + y^2)/2) / z0^2`.

mod floquet;
mod volume;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE};
use crate::error::{Error, Result};
use crate::Vec3;

pub use floquet::{characteristic_exponent, exact_radial_frequency};
pub use volume::{trap_volume, VolumeEstimate};

/// Upper edge of the first stability region along the a = 0 line.
pub const Q_STABILITY_LIMIT: f64 = 0.908;

/// Electrode geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapGeometry {
    /// Field radius (distance from axis to rod surface), m.
    pub r0: f64,
    /// Half the end-cap separation, m.
    pub z0: f64,
    /// Rod diameter, m. Not used by the field model.
    pub rod_diameter: f64,
    /// Geometric efficiency of the end caps on the axial curvature.
    pub kappa_axial: f64,
    /// Geometric efficiency of the RF quadrupole.
    pub eta_rf: f64,
}

impl TrapGeometry {
    /// Electrode dimensions of the reference setup; `kappa_axial` is the
    /// value that gives a 20 kHz axial frequency for Sr+ at 500 V end caps.
    pub fn reference() -> Self {
        Self {
            r0: 3.2e-3,
            z0: 10e-3,
            rod_diameter: 6.35e-3,
            kappa_axial: 1.440_260_678_6e-3,
            eta_rf: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::invalid(format!("r0 must be > 0, got {}", self.r0)));
        }
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(Error::invalid(format!("z0 must be > 0, got {}", self.z0)));
        }
        if !(self.kappa_axial > 0.0 && self.kappa_axial <= 1.0) {
            return Err(Error::invalid(format!(
                "kappa_axial must be in (0, 1], got {}",
                self.kappa_axial
            )));
        }
        if !(self.eta_rf > 0.0 && self.eta_rf <= 1.0) {
            return Err(Error::invalid(format!(
                "eta_rf must be in (0, 1], got {}",
                self.eta_rf
            )));
        }
        Ok(())
    }

    /// True if the point lies strictly inside the modeled region.
    #[inline]
    pub fn contains(&self, p: &Vec3) -> bool {
        p[0].abs() < self.r0 && p[1].abs() < self.r0 && p[2].abs() < self.z0
    }
}

/// RF and static drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSettings {
    /// RF angular frequency, rad/s.
    pub omega_rf: f64,
    /// RF amplitude (zero to peak), V.
    pub v_rf: f64,
    /// End-cap voltage, V.
    pub v_ec: f64,
}

impl DriveSettings {
    pub fn reference(v_rf: f64) -> Self {
        Self {
            omega_rf: 2.0 * PI * 2.5e6,
            v_rf,
            v_ec: 500.0,
        }
    }

    pub fn with_v_rf(self, v_rf: f64) -> Self {
        Self { v_rf, ..self }
    }

    pub fn rf_period(&self) -> f64 {
        2.0 * PI / self.omega_rf
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_rf > 0.0 && self.omega_rf.is_finite()) {
            return Err(Error::invalid(format!(
                "omega_rf must be > 0, got {}",
                self.omega_rf
            )));
        }
        if !(self.v_rf >= 0.0) || !(self.v_ec >= 0.0) {
            return Err(Error::invalid("drive voltages must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub name: String,
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
    /// Whether the cooling beams address this species.
    pub laser_cooled: bool,
}

impl IonSpecies {
    pub fn strontium88() -> Self {
        Self {
            name: "Sr+".to_string(),
            mass: 88.0 * ATOMIC_MASS_UNIT,
            charge: ELEMENTARY_CHARGE,
            laser_cooled: true,
        }
    }

    /// A singly charged, uncooled ion of the given mass in atomic mass units.
    pub fn singly_charged(name: impl Into<String>, mass_amu: f64) -> Self {
        Self {
            name: name.into(),
            mass: mass_amu * ATOMIC_MASS_UNIT,
            charge: ELEMENTARY_CHARGE,
            laser_cooled: false,
        }
    }

    pub fn mass_amu(&self) -> f64 {
        self.mass / ATOMIC_MASS_UNIT
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.charge > 0.0) {
            return Err(Error::invalid(format!(
                "species {}: mass and charge must be > 0",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MathieuParams {
    pub q_radial: f64,
    pub a_radial: f64,
    pub a_axial: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecularFrequencies {
    /// Hz
    pub nu_radial: f64,
    /// Hz
    pub nu_axial: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    /// Smallest slack among the stability bounds; negative when violated.
    pub margin: f64,
}

pub fn mathieu_params(
    geometry: &TrapGeometry,
    drive: &DriveSettings,
    species: &IonSpecies,
) -> MathieuParams {
    let m = species.mass;
    let w2 = drive.omega_rf * drive.omega_rf;
    let q_radial =
        2.0 * geometry.eta_rf * species.charge * drive.v_rf / (m * geometry.r0 * geometry.r0 * w2);
    let a_axial = 8.0 * geometry.kappa_axial * species.charge * drive.v_ec
        / (m * geometry.z0 * geometry.z0 * w2);
    MathieuParams {
        q_radial,
        a_radial: -0.5 * a_axial,
        a_axial,
    }
}

pub fn stability_check(params: &MathieuParams) -> StabilityReport {
    let q_slack = Q_STABILITY_LIMIT - params.q_radial;
    let radicand = params.a_radial + 0.5 * params.q_radial * params.q_radial;
    let margin = q_slack
        .min(radicand)
        .min(params.a_axial)
        .min(params.q_radial);
    let stable = params.q_radial >= 0.0
        && params.q_radial < Q_STABILITY_LIMIT
        && radicand > 0.0
        && params.a_axial >= 0.0;
    StabilityReport { stable, margin }
}

/// Lowest-order adiabatic secular frequencies.
pub fn secular_frequencies(
    params: &MathieuParams,
    drive: &DriveSettings,
) -> Result<SecularFrequencies> {
    let report = stability_check(params);
    if !report.stable {
        return Err(Error::UnstableParameters(format!(
            "q = {:.4}, a_radial = {:.3e}, a_axial = {:.3e}",
            params.q_radial, params.a_radial, params.a_axial
        )));
    }
    let scale = drive.omega_rf / (4.0 * PI);
    Ok(SecularFrequencies {
        nu_radial: scale * (params.a_radial + 0.5 * params.q_radial * params.q_radial).sqrt(),
        nu_axial: scale * params.a_axial.sqrt(),
    })
}

/// Convenience: Mathieu parameters followed by secular frequencies.
pub fn species_frequencies(
    geometry: &TrapGeometry,
    drive: &DriveSettings,
    species: &IonSpecies,
) -> Result<SecularFrequencies> {
    secular_frequencies(&mathieu_params(geometry, drive, species), drive)
}

fn check_region(position: &Vec3, geometry: &TrapGeometry) -> Result<()> {
    if position.iter().all(|c| c.is_finite()) && geometry.contains(position) {
        Ok(())
    } else {
        Err(Error::OutOfRegion {
            position: *position,
        })
    }
}

/// Force of the time-dependent quadrupole field on an ion at `position`.
pub fn instantaneous_force(
    position: &Vec3,
    time: f64,
    geometry: &TrapGeometry,
    drive: &DriveSettings,
    species: &IonSpecies,
) -> Result<Vec3> {
    check_region(position, geometry)?;
    let k = FieldCoefficients::new(geometry, drive, species);
    Ok(k.rf_force(position, time))
}

/// Ponderomotive (time-averaged) potential energy, J.
pub fn pseudopotential_energy(
    position: &Vec3,
    geometry: &TrapGeometry,
    drive: &DriveSettings,
    species: &IonSpecies,
) -> Result<f64> {
    check_region(position, geometry)?;
    Ok(FieldCoefficients::new(geometry, drive, species).pseudo_energy(position))
}

/// End-cap efficiency that reproduces a measured axial frequency.
pub fn calibrate_kappa(
    measured_nu_axial: f64,
    geometry: &TrapGeometry,
    drive: &DriveSettings,
    species: &IonSpecies,
) -> f64 {
    // nu_a = omega/(4 pi) sqrt(a_axial) with a_axial linear in kappa
    let a_target = (4.0 * PI * measured_nu_axial / drive.omega_rf).powi(2);
    a_target * species.mass * geometry.z0 * geometry.z0 * drive.omega_rf * drive.omega_rf
        / (8.0 * species.charge * drive.v_ec)
}

/// Per-species field coefficients, precomputed for the integrator hot loop.
///
/// Forces are `F = -Q grad(phi)`; all returned quantities are forces in N
/// or energies in J.
#[derive(Debug, Clone, Copy)]
pub struct FieldCoefficients {
    /// Q * eta * V_rf / r0^2
    pub rf_gradient: f64,
    /// Q * kappa * V_ec / z0^2
    pub static_curvature: f64,
    /// Radial pseudopotential spring constant, N/m (may be negative).
    pub radial_spring: f64,
    /// Axial spring constant, N/m.
    pub axial_spring: f64,
    pub omega_rf: f64,
}

impl FieldCoefficients {
    pub fn new(geometry: &TrapGeometry, drive: &DriveSettings, species: &IonSpecies) -> Self {
        let q = species.charge;
        let r0sq = geometry.r0 * geometry.r0;
        let rf_gradient = q * geometry.eta_rf * drive.v_rf / r0sq;
        let static_curvature = q * geometry.kappa_axial * drive.v_ec / (geometry.z0 * geometry.z0);
        // pseudo-potential: Q^2 eta^2 V^2 rho^2 / (4 m w^2 r0^4) = rf_gradient^2 rho^2 / (4 m w^2)
        let ponderomotive =
            rf_gradient * rf_gradient / (2.0 * species.mass * drive.omega_rf * drive.omega_rf);
        Self {
            rf_gradient,
            static_curvature,
            radial_spring: ponderomotive - static_curvature,
            axial_spring: 2.0 * static_curvature,
            omega_rf: drive.omega_rf,
        }
    }

    #[inline]
    pub fn rf_force(&self, p: &Vec3, time: f64) -> Vec3 {
        let g = self.rf_gradient * (self.omega_rf * time).cos();
        let c = self.static_curvature;
        [-(g - c) * p[0], -(-g - c) * p[1], -2.0 * c * p[2]]
    }

    #[inline]
    pub fn secular_force(&self, p: &Vec3) -> Vec3 {
        [
            -self.radial_spring * p[0],
            -self.radial_spring * p[1],
            -self.axial_spring * p[2],
        ]
    }

    #[inline]
    pub fn pseudo_energy(&self, p: &Vec3) -> f64 {
        0.5 * self.radial_spring * (p[0] * p[0] + p[1] * p[1])
            + 0.5 * self.axial_spring * p[2] * p[2]
    }
}

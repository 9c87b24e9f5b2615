//! Time stepping.
//!
//! Drift-kick-drift leapfrog: positions advance half a step, all forces
//! (trap, Coulomb, tickle, mean cooling force) are evaluated once at the
//! midpoint time, velocities take the full kick, positions finish the
//! step. Spontaneous-emission recoil is applied afterwards. With static
//! conservative forces the map is symplectic.

use std::f64::consts::PI;

use super::cooling::{recoil_kick, scattering_rate};
use super::coulomb::{coulomb_potential_energy, CoulombSolver};
use super::{
    diagnostics, CloudState, CoolingBeam, FieldMode, IntegratorConfig, TickleDrive, BLOW_UP_SPEED,
};
use crate::error::{Error, Result};
use crate::trap_model::{DriveSettings, FieldCoefficients, IonSpecies, TrapGeometry};
use crate::Vec3;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// Ions that left the electrode box during the step.
    pub lost: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibrationReport {
    pub bound: usize,
    pub lost: usize,
    /// Kinetic temperature of the final state, K.
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy)]
struct SpeciesTerms {
    field: FieldCoefficients,
    inv_mass: f64,
    charge: f64,
    laser_cooled: bool,
    /// Recoil velocity per scattered photon, m/s.
    recoil_velocity: f64,
}

/// Everything needed to advance a cloud: fields, light, integrator
/// settings and reusable scratch buffers.
#[derive(Debug, Clone)]
pub struct Engine {
    pub geometry: TrapGeometry,
    pub drive: DriveSettings,
    pub beams: Vec<CoolingBeam>,
    pub tickle: Option<TickleDrive>,
    pub config: IntegratorConfig,
    coulomb: CoulombSolver,
    field: Vec<Vec3>,
    charges: Vec<f64>,
    terms: Vec<SpeciesTerms>,
}

impl Engine {
    pub fn new(
        geometry: TrapGeometry,
        drive: DriveSettings,
        beams: Vec<CoolingBeam>,
        tickle: Option<TickleDrive>,
        config: IntegratorConfig,
    ) -> Result<Self> {
        geometry.validate()?;
        drive.validate()?;
        config.validate(drive.omega_rf)?;
        for b in &beams {
            b.validate()?;
        }
        if let Some(t) = &tickle {
            t.validate()?;
        }
        Ok(Self {
            geometry,
            drive,
            beams,
            tickle,
            config,
            coulomb: CoulombSolver::new(),
            field: Vec::new(),
            charges: Vec::new(),
            terms: Vec::new(),
        })
    }

    pub fn coulomb_solver_mut(&mut self) -> &mut CoulombSolver {
        &mut self.coulomb
    }

    fn refresh_terms(&mut self, species: &[IonSpecies]) {
        let recoil = self
            .beams
            .first()
            .map(|b| b.recoil_momentum())
            .unwrap_or(0.0);
        self.terms.clear();
        self.terms.extend(species.iter().map(|s| SpeciesTerms {
            field: FieldCoefficients::new(&self.geometry, &self.drive, s),
            inv_mass: 1.0 / s.mass,
            charge: s.charge,
            laser_cooled: s.laser_cooled,
            recoil_velocity: recoil / s.mass,
        }));
    }

    /// Number of steps covering `duration` (rounded to nearest).
    pub fn steps_for(&self, duration: f64) -> usize {
        (duration / self.config.dt).round().max(0.0) as usize
    }

    /// Advances the state by one time step.
    pub fn step(&mut self, state: &mut CloudState) -> Result<StepReport> {
        self.refresh_terms(&state.species);
        self.step_inner(state)
    }

    /// Advances by `n` steps, stopping early on error.
    pub fn run(&mut self, state: &mut CloudState, n: usize) -> Result<StepReport> {
        self.refresh_terms(&state.species);
        let mut total = StepReport::default();
        for _ in 0..n {
            total.lost += self.step_inner(state)?.lost;
        }
        Ok(total)
    }

    fn step_inner(&mut self, state: &mut CloudState) -> Result<StepReport> {
        let dt = self.config.dt;
        let half = 0.5 * dt;
        let n = state.len();
        let t_mid = state.time + half;

        for (p, v) in state.positions.iter_mut().zip(&state.velocities) {
            p[0] += v[0] * half;
            p[1] += v[1] * half;
            p[2] += v[2] * half;
        }

        self.field.resize(n, [0.0; 3]);
        self.charges.clear();
        self.charges.extend(
            state
                .species_index
                .iter()
                .map(|&s| self.terms[s as usize].charge),
        );
        self.coulomb.field(
            &state.positions,
            &self.charges,
            self.config.softening_length,
            self.config.coulomb,
            self.config.deterministic_reduction,
            &mut self.field,
        );

        let rf_phase = (self.drive.omega_rf * t_mid).cos();
        let tickle = self
            .tickle
            .filter(|t| t.active_at(t_mid) && t.amplitude > 0.0)
            .map(|t| {
                t.amplitude * (2.0 * PI * t.frequency * t_mid).cos()
                    / (self.geometry.r0 * self.geometry.r0)
            });

        for i in 0..n {
            let terms = &self.terms[state.species_index[i] as usize];
            let p = state.positions[i];
            let v = state.velocities[i];
            let e = self.field[i];
            let q = terms.charge;
            let mut f = [q * e[0], q * e[1], q * e[2]];
            let trap = match self.config.field_mode {
                FieldMode::FullRf => {
                    let g = terms.field.rf_gradient * rf_phase;
                    let c = terms.field.static_curvature;
                    [-(g - c) * p[0], (g + c) * p[1], -2.0 * c * p[2]]
                }
                FieldMode::Secular => terms.field.secular_force(&p),
            };
            for k in 0..3 {
                f[k] += trap[k];
            }
            if let Some(g) = tickle {
                f[0] -= q * g * p[0];
                f[1] += q * g * p[1];
            }
            if terms.laser_cooled {
                for beam in &self.beams {
                    let rate = scattering_rate(&v, beam);
                    let mag = beam.recoil_momentum() * rate;
                    for k in 0..3 {
                        f[k] += mag * beam.direction[k];
                    }
                }
            }
            let vel = &mut state.velocities[i];
            for k in 0..3 {
                vel[k] += f[k] * terms.inv_mass * dt;
            }
        }

        for (p, v) in state.positions.iter_mut().zip(&state.velocities) {
            p[0] += v[0] * half;
            p[1] += v[1] * half;
            p[2] += v[2] * half;
        }

        if !self.beams.is_empty() {
            for i in 0..n {
                let terms = self.terms[state.species_index[i] as usize];
                if !terms.laser_cooled {
                    continue;
                }
                let v = state.velocities[i];
                let rate: f64 = self.beams.iter().map(|b| scattering_rate(&v, b)).sum();
                if let Some(dv) = recoil_kick(&mut state.rng, rate * dt, terms.recoil_velocity) {
                    let vel = &mut state.velocities[i];
                    for k in 0..3 {
                        vel[k] += dv[k];
                    }
                }
            }
        }

        state.time += dt;

        for (i, v) in state.velocities.iter().enumerate() {
            let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if !(speed <= BLOW_UP_SPEED) {
                return Err(Error::BlowUp {
                    time: state.time,
                    ion: i,
                    speed,
                });
            }
        }
        let lost = state.remove_unbound(&self.geometry);
        Ok(StepReport { lost })
    }

    /// Kinetic + pseudopotential + softened Coulomb energy, J. Meaningful as
    /// a conserved quantity in secular mode without cooling or tickle.
    pub fn secular_energy(&self, state: &CloudState) -> f64 {
        let mut kinetic = 0.0;
        let mut trap = 0.0;
        for i in 0..state.len() {
            let s = state.species_of(i);
            let v = state.velocities[i];
            kinetic += 0.5 * s.mass * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            trap += FieldCoefficients::new(&self.geometry, &self.drive, s)
                .pseudo_energy(&state.positions[i]);
        }
        let charges: Vec<f64> = (0..state.len())
            .map(|i| state.species_of(i).charge)
            .collect();
        let coulomb = match self.config.coulomb {
            super::CoulombMode::Off => 0.0,
            _ => coulomb_potential_energy(&state.positions, &charges, self.config.softening_length),
        };
        kinetic + trap + coulomb
    }
}

/// Tickle force on a single ion, N. Zero outside the drive window.
pub fn apply_tickle(
    position: &Vec3,
    time: f64,
    tickle: &TickleDrive,
    geometry: &TrapGeometry,
    species: &IonSpecies,
) -> Vec3 {
    if !tickle.active_at(time) {
        return [0.0; 3];
    }
    let g = species.charge * tickle.amplitude * (2.0 * PI * tickle.frequency * time).cos()
        / (geometry.r0 * geometry.r0);
    [-g * position[0], g * position[1], 0.0]
}

/// Runs the engine for `duration` and reports what is left.
pub fn equilibrate(
    engine: &mut Engine,
    state: &mut CloudState,
    duration: f64,
) -> Result<EquilibrationReport> {
    if !(duration >= 0.0) {
        return Err(Error::invalid("duration must be >= 0"));
    }
    let n = engine.steps_for(duration);
    let report = engine.run(state, n)?;
    Ok(EquilibrationReport {
        bound: state.count_bound(&engine.geometry),
        lost: report.lost,
        temperature: diagnostics::kinetic_temperature(state),
    })
}

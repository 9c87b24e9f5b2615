use rand_distr::{Binomial, Distribution};

use super::{CloudState, EjectionConfig, Engine};
use crate::constants::BOLTZMANN;
use crate::error::{Error, Result};
use crate::trap_model::TrapGeometry;

/// `m <v^2> / (3 k_B)` averaged over ions, K. Zero for an empty cloud.
pub fn kinetic_temperature(state: &CloudState) -> f64 {
    if state.is_empty() {
        return 0.0;
    }
    let sum: f64 = (0..state.len())
        .map(|i| {
            let v = state.velocities[i];
            state.mass_of(i) * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
        })
        .sum();
    sum / (3.0 * BOLTZMANN * state.len() as f64)
}

/// Mean radial kinetic plus pseudopotential energy per ion, J.
pub fn radial_energy(state: &CloudState, engine: &Engine) -> f64 {
    if state.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..state.len() {
        let s = state.species_of(i);
        let f = crate::trap_model::FieldCoefficients::new(&engine.geometry, &engine.drive, s);
        let p = state.positions[i];
        let v = state.velocities[i];
        sum += 0.5 * s.mass * (v[0] * v[0] + v[1] * v[1])
            + 0.5 * f.radial_spring * (p[0] * p[0] + p[1] * p[1]);
    }
    sum / state.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureSampling {
    /// Number of phase-aligned snapshots (at least 10).
    pub samples: usize,
    /// RF periods between snapshots.
    pub stride_periods: usize,
}

impl Default for TemperatureSampling {
    fn default() -> Self {
        Self {
            samples: 20,
            stride_periods: 10,
        }
    }
}

/// Secular temperature from velocities taken at RF phase zero, where the
/// first-order micromotion velocity vanishes. The state is advanced to
/// each sampling instant.
pub fn secular_temperature(
    engine: &mut Engine,
    state: &mut CloudState,
    sampling: TemperatureSampling,
) -> Result<f64> {
    if sampling.samples < 10 {
        return Err(Error::invalid(
            "secular temperature needs >= 10 sampling phases",
        ));
    }
    if state.is_empty() {
        return Err(Error::TooFewIons { needed: 1, have: 0 });
    }
    let period = engine.drive.rf_period();
    let dt = engine.config.dt;
    let mut sum = 0.0;
    let mut weight = 0.0;
    for k in 0..sampling.samples {
        let periods_ahead = if k == 0 {
            (state.time / period).ceil()
        } else {
            (state.time / period).round() + sampling.stride_periods as f64
        };
        let target = periods_ahead * period;
        let steps = ((target - state.time) / dt).round().max(0.0) as usize;
        engine.run(state, steps)?;
        if state.is_empty() {
            break;
        }
        sum += kinetic_temperature(state) * state.len() as f64;
        weight += state.len() as f64;
    }
    if weight == 0.0 {
        return Err(Error::TooFewIons { needed: 1, have: 0 });
    }
    Ok(sum / weight)
}

/// Ejects the whole cloud and returns the detected count. Only ions inside
/// the electrode box are counted, each with probability
/// `detection_efficiency`. The state is left empty.
pub fn eject_and_count(
    state: &mut CloudState,
    config: &EjectionConfig,
    geometry: &TrapGeometry,
) -> Result<u64> {
    config.validate()?;
    let bound = state.count_bound(geometry) as u64;
    state.positions.clear();
    state.velocities.clear();
    state.species_index.clear();
    if bound == 0 || config.detection_efficiency == 0.0 {
        return Ok(0);
    }
    if config.detection_efficiency == 1.0 {
        return Ok(bound);
    }
    let dist = Binomial::new(bound, config.detection_efficiency)
        .map_err(|e| Error::invalid(format!("binomial: {e}")))?;
    Ok(dist.sample(&mut state.rng))
}

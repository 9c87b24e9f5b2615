//! Floquet characteristic exponent of the Mathieu equation
//! `x'' + (a - 2 q cos 2 tau) x = 0`.
//!
//! Used as the reference for the true secular frequency beyond the
//! lowest-order adiabatic approximation.

use std::f64::consts::PI;

use super::{stability_check, DriveSettings, MathieuParams};
use crate::error::{Error, Result};

const STEPS_PER_PERIOD: usize = 20_000;

fn monodromy_trace(a: f64, q: f64) -> f64 {
    // Fundamental solutions over one period pi of the coefficient, RK4.
    let h = PI / STEPS_PER_PERIOD as f64;
    let accel = |tau: f64, x: f64| -(a - 2.0 * q * (2.0 * tau).cos()) * x;
    let mut trace = 0.0;
    for (x0, v0, pick_velocity) in [(1.0, 0.0, false), (0.0, 1.0, true)] {
        let (mut x, mut v) = (x0, v0);
        for n in 0..STEPS_PER_PERIOD {
            let t = n as f64 * h;
            let k1x = v;
            let k1v = accel(t, x);
            let k2x = v + 0.5 * h * k1v;
            let k2v = accel(t + 0.5 * h, x + 0.5 * h * k1x);
            let k3x = v + 0.5 * h * k2v;
            let k3v = accel(t + 0.5 * h, x + 0.5 * h * k2x);
            let k4x = v + h * k3v;
            let k4v = accel(t + h, x + h * k3x);
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        trace += if pick_velocity { v } else { x };
    }
    trace
}

/// Characteristic exponent beta in (0, 1) for a point in the first
/// stability region.
pub fn characteristic_exponent(a: f64, q: f64) -> Result<f64> {
    let half_trace = 0.5 * monodromy_trace(a, q);
    if !(half_trace.abs() < 1.0) {
        return Err(Error::UnstableParameters(format!(
            "Mathieu (a = {a:.3e}, q = {q:.4}) has |trace/2| = {half_trace:.6} >= 1"
        )));
    }
    Ok(half_trace.acos() / PI)
}

/// Radial secular frequency from the exact characteristic exponent, Hz.
pub fn exact_radial_frequency(params: &MathieuParams, drive: &DriveSettings) -> Result<f64> {
    if !stability_check(params).stable {
        return Err(Error::UnstableParameters(format!(
            "q = {:.4}",
            params.q_radial
        )));
    }
    let beta = characteristic_exponent(params.a_radial, params.q_radial)?;
    Ok(beta * drive.omega_rf / (4.0 * PI))
}

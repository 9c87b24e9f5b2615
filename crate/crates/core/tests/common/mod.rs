//! Trajectory helpers shared by the integration tests and the acceptance
//! runner.

#![allow(dead_code)]

use paultrap::ion_dynamics::{CloudState, CoulombMode, Engine, FieldMode, IntegratorConfig};
use paultrap::trap_model::{DriveSettings, IonSpecies, TrapGeometry};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// One ion at `position` at rest, no light, no Coulomb.
pub fn single_ion(
    species: IonSpecies,
    position: [f64; 3],
    drive: DriveSettings,
    mode: FieldMode,
    dt: f64,
) -> (Engine, CloudState) {
    let mut state = CloudState::new(vec![species], 1);
    state.push(position, [0.0; 3], 0);
    let mut config = IntegratorConfig::default_for(mode, drive.omega_rf, 1.0);
    config.dt = dt;
    config.coulomb = CoulombMode::Off;
    let engine = Engine::new(TrapGeometry::reference(), drive, Vec::new(), None, config).unwrap();
    (engine, state)
}

/// Records one coordinate of ion 0 after every step.
pub fn record(engine: &mut Engine, state: &mut CloudState, axis: usize, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        engine.step(state).unwrap();
        out.push(state.positions[0][axis]);
    }
    out
}

/// Hann-windowed amplitude spectrum; bin k is at k / (n dt).
pub fn spectrum(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            Complex::new(x * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2].iter().map(|c| c.norm()).collect()
}

/// Strongest line in [lo, hi] Hz: (frequency from a parabolic fit over
/// the log amplitude, amplitude summed in quadrature over +-4 bins).
pub fn line(spec: &[f64], dt: f64, lo: f64, hi: f64) -> (f64, f64) {
    let df = 1.0 / (2.0 * spec.len() as f64 * dt);
    let a = ((lo / df).ceil() as usize).max(1);
    let b = ((hi / df).floor() as usize).min(spec.len() - 2);
    let k = (a..=b)
        .max_by(|&i, &j| spec[i].partial_cmp(&spec[j]).unwrap())
        .unwrap();
    let (l, c, r) = (spec[k - 1].ln(), spec[k].ln(), spec[k + 1].ln());
    let offset = 0.5 * (l - r) / (l - 2.0 * c + r);
    let power: f64 = spec[k.saturating_sub(4)..=(k + 4).min(spec.len() - 1)]
        .iter()
        .map(|x| x * x)
        .sum();
    ((k as f64 + offset) * df, power.sqrt())
}

/// Median amplitude over [lo, hi] Hz, a floor against which lines are
/// judged.
pub fn floor(spec: &[f64], dt: f64, lo: f64, hi: f64) -> f64 {
    let df = 1.0 / (2.0 * spec.len() as f64 * dt);
    let mut v: Vec<f64> = spec[(lo / df) as usize..(hi / df) as usize].to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Frequency from interpolated upward zero crossings, Hz.
pub fn zero_crossing_frequency(samples: &[f64], dt: f64) -> f64 {
    let mut crossings = Vec::new();
    for i in 1..samples.len() {
        let (a, b) = (samples[i - 1], samples[i]);
        if a < 0.0 && b >= 0.0 {
            crossings.push((i - 1) as f64 + a / (a - b));
        }
    }
    let n = crossings.len();
    assert!(n >= 2, "too few crossings");
    (n - 1) as f64 / ((crossings[n - 1] - crossings[0]) * dt)
}

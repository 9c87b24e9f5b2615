//! Ion production and trap filling.
//!
//! Photoionization is a two-photon process driven by a femtosecond pulse
//! train, so the rate follows the time average of the squared intensity.
//! The atom density comes from an oven whose temperature is a linear map of
//! the heating current. Trap filling obeys
//! `dN/dt = R (1 - N/N_cap) - gamma N`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, PA_PER_MBAR, VACUUM_PERMITTIVITY, ZERO_CELSIUS};
use crate::error::{Error, Result};
use crate::trap_model::{
    species_frequencies, DriveSettings, IonSpecies, TrapGeometry, VolumeEstimate,
};

/// Temporal shape of a single pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseEnvelope {
    Gaussian,
    Sech2,
}

impl PulseEnvelope {
    /// Peak power times FWHM duration over pulse energy.
    pub fn shape_factor(self) -> f64 {
        match self {
            PulseEnvelope::Gaussian => 2.0 * (2f64.ln() / PI).sqrt(),
            PulseEnvelope::Sech2 => 2f64.sqrt().acosh(),
        }
    }

    /// Integral of the squared peak-normalized envelope over time, in
    /// units of the FWHM duration.
    pub fn squared_width(self) -> f64 {
        match self {
            PulseEnvelope::Gaussian => (PI / (8.0 * 2f64.ln())).sqrt(),
            // sech^4 integrates to 4T/3 with FWHM = 2 acosh(sqrt 2) T
            PulseEnvelope::Sech2 => 2.0 / (3.0 * 2f64.sqrt().acosh()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoionBeam {
    /// J
    pub pulse_energy: f64,
    /// s
    pub pulse_duration_fwhm: f64,
    /// 1/s
    pub rep_rate: f64,
    /// 1/e^2 intensity radius, m.
    pub waist: f64,
    /// m
    pub wavelength: f64,
    /// Spectral width of the two-photon resonance, m. Carried as data only.
    pub two_photon_linewidth_fwhm: f64,
    /// Cross-section of the resonant intermediate step, m^2. Carried as
    /// data only; its effect lives in `rate_coefficient`.
    pub intermediate_cross_section: f64,
    /// ions/s per (W/cm^2)^2 per (atoms/m^3).
    pub rate_coefficient: f64,
    pub envelope: PulseEnvelope,
}

impl PhotoionBeam {
    /// 431 nm, 0.15 nJ, 50 fs pulses at 100 MHz focused to 20 um.
    /// `rate_coefficient` is the value produced by the default loading
    /// calibration.
    pub fn reference() -> Self {
        Self {
            pulse_energy: 0.15e-9,
            pulse_duration_fwhm: 50e-15,
            rep_rate: 1e8,
            waist: 20e-6,
            wavelength: 431e-9,
            two_photon_linewidth_fwhm: 0.7e-9,
            intermediate_cross_section: 5600e-22,
            rate_coefficient: 1.0e-27,
            envelope: PulseEnvelope::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("pulse_energy", self.pulse_energy),
            ("pulse_duration_fwhm", self.pulse_duration_fwhm),
            ("rep_rate", self.rep_rate),
            ("waist", self.waist),
            ("wavelength", self.wavelength),
            ("two_photon_linewidth_fwhm", self.two_photon_linewidth_fwhm),
            (
                "intermediate_cross_section",
                self.intermediate_cross_section,
            ),
            ("rate_coefficient", self.rate_coefficient),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.pulse_duration_fwhm * self.rep_rate >= 1.0 {
            return Err(Error::invalid(
                "pulses overlap: duration x rep_rate must be < 1",
            ));
        }
        Ok(())
    }

    /// W
    pub fn average_power(&self) -> f64 {
        self.pulse_energy * self.rep_rate
    }

    /// Same pulse shape and repetition rate at a different average power.
    pub fn with_average_power(&self, power: f64) -> Self {
        Self {
            pulse_energy: power / self.rep_rate,
            ..self.clone()
        }
    }

    /// W
    pub fn peak_power(&self) -> f64 {
        self.envelope.shape_factor() * self.pulse_energy / self.pulse_duration_fwhm
    }

    /// Time average of the squared peak-normalized envelope.
    pub fn squared_duty(&self) -> f64 {
        self.rep_rate * self.pulse_duration_fwhm * self.envelope.squared_width()
    }

    /// Time-averaged squared intensity, (W/cm^2)^2.
    pub fn mean_squared_intensity(&self) -> f64 {
        let i = peak_intensity(self);
        i * i * self.squared_duty()
    }

    /// Time-averaged intensity on axis, W/cm^2.
    pub fn mean_intensity(&self) -> f64 {
        2.0 * self.average_power() / (PI * self.waist * self.waist) * 1e-4
    }
}

/// On-axis peak intensity `2 P_peak / (pi w0^2)`, W/cm^2.
pub fn peak_intensity(beam: &PhotoionBeam) -> f64 {
    2.0 * beam.peak_power() / (PI * beam.waist * beam.waist) * 1e-4
}

/// Ionization rate, ions/s.
pub fn two_photon_rate(beam: &PhotoionBeam, atom_density: f64) -> f64 {
    beam.rate_coefficient * atom_density * beam.mean_squared_intensity()
}

/// Rate a continuous beam of the same average power would give, ions/s.
pub fn cw_rate(beam: &PhotoionBeam, atom_density: f64) -> f64 {
    let i = beam.mean_intensity();
    beam.rate_coefficient * atom_density * i * i
}

/// Ratio of pulsed to continuous two-photon rate at equal average power.
pub fn pulsed_enhancement(beam: &PhotoionBeam) -> f64 {
    let i = beam.mean_intensity();
    beam.mean_squared_intensity() / (i * i)
}

/// Oven heated by a current; temperature from a two-point linear map and
/// vapor pressure from `log10(P / mbar) = antoine_a - antoine_b / T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvenSource {
    /// A
    pub current: f64,
    /// Two calibration points (current A, temperature K).
    pub calibration: [(f64, f64); 2],
    pub antoine_a: f64,
    /// K
    pub antoine_b: f64,
    /// Currents outside this interval are rejected, A.
    pub current_range: (f64, f64),
}

impl OvenSource {
    pub fn reference(current: f64) -> Self {
        Self {
            current,
            calibration: [(0.8, ZERO_CELSIUS + 110.0), (1.2, ZERO_CELSIUS + 170.0)],
            antoine_a: 9.635,
            antoine_b: 8490.0,
            current_range: (0.5, 1.3),
        }
    }

    pub fn with_current(&self, current: f64) -> Self {
        Self {
            current,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [(i1, t1), (i2, t2)] = self.calibration;
        if !(i2 > i1 && t2 > t1 && t1 > 0.0) {
            return Err(Error::invalid(
                "oven calibration must be increasing in current and temperature",
            ));
        }
        if !(self.antoine_b > 0.0) {
            return Err(Error::invalid("antoine_b must be > 0"));
        }
        if !(self.current_range.0 < self.current_range.1) {
            return Err(Error::invalid("oven current range is empty"));
        }
        Ok(())
    }

    /// K
    pub fn temperature(&self) -> Result<f64> {
        let (lo, hi) = self.current_range;
        if !(self.current >= lo && self.current <= hi) {
            return Err(Error::OutOfCalibrationRange(format!(
                "oven current {} A outside [{lo}, {hi}] A",
                self.current
            )));
        }
        let [(i1, t1), (i2, t2)] = self.calibration;
        Ok(t1 + (t2 - t1) * (self.current - i1) / (i2 - i1))
    }

    /// Vapor pressure at a temperature, mbar.
    pub fn vapor_pressure(&self, temperature: f64) -> f64 {
        10f64.powf(self.antoine_a - self.antoine_b / temperature)
    }
}

/// Atom number density in the interaction region, 1/m^3.
pub fn oven_density(source: &OvenSource) -> Result<f64> {
    let t = source.temperature()?;
    Ok(source.vapor_pressure(t) * PA_PER_MBAR / (BOLTZMANN * t))
}

/// Electron-bombardment ionization: fast but unselective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EBSource {
    /// eV
    pub electron_energy: f64,
    /// ions/s
    pub effective_rate: f64,
    pub impurity_fraction: f64,
    /// Impurity species and their relative weights (normalized on use).
    pub impurity_species: Vec<(IonSpecies, f64)>,
}

impl EBSource {
    /// 300 eV electrons, 34 % impurities spread equally over 18, 28, 44
    /// and 104 u.
    pub fn reference() -> Self {
        Self {
            electron_energy: 300.0,
            effective_rate: 1e4,
            impurity_fraction: 0.34,
            impurity_species: [18.0, 28.0, 44.0, 104.0]
                .iter()
                .map(|&m| (IonSpecies::singly_charged(format!("{m:.0}u"), m), 0.25))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.impurity_fraction) {
            return Err(Error::invalid("impurity_fraction must be in [0, 1]"));
        }
        if self.impurity_fraction > 0.0 && self.impurity_species.is_empty() {
            return Err(Error::invalid(
                "impurity_fraction > 0 needs at least one impurity species",
            ));
        }
        let total: f64 = self.impurity_species.iter().map(|s| s.1).sum();
        if self.impurity_species.iter().any(|s| !(s.1 >= 0.0))
            || (!self.impurity_species.is_empty() && !(total > 0.0))
        {
            return Err(Error::invalid(
                "impurity weights must be >= 0 with a positive sum",
            ));
        }
        for (s, _) in &self.impurity_species {
            s.validate()?;
        }
        Ok(())
    }
}

/// Species mix produced by electron bombardment; weights sum to one.
pub fn eb_composition(source: &EBSource) -> Vec<(IonSpecies, f64)> {
    let mut out = vec![(IonSpecies::strontium88(), 1.0 - source.impurity_fraction)];
    let total: f64 = source.impurity_species.iter().map(|s| s.1).sum();
    if source.impurity_fraction > 0.0 && total > 0.0 {
        out.extend(
            source
                .impurity_species
                .iter()
                .map(|(s, w)| (s.clone(), source.impurity_fraction * w / total)),
        );
    }
    out
}

/// Space-charge-limited ion number `n0 * volume` with
/// `n0 = eps0 m (2 w_r^2 + w_z^2) / Q^2`.
pub fn capacity(
    drive: &DriveSettings,
    geometry: &TrapGeometry,
    species: &IonSpecies,
    volume: &VolumeEstimate,
) -> Result<f64> {
    let f = species_frequencies(geometry, drive, species)?;
    let wr = 2.0 * PI * f.nu_radial;
    let wz = 2.0 * PI * f.nu_axial;
    let n0 = VACUUM_PERMITTIVITY * species.mass * (2.0 * wr * wr + wz * wz)
        / (species.charge * species.charge);
    Ok(n0 * volume.volume)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingModel {
    /// ions/s
    pub rate: f64,
    /// Space-charge capacity.
    pub capacity: f64,
    /// 1/s
    pub background_loss: f64,
}

impl LoadingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0 && self.capacity >= 0.0 && self.background_loss >= 0.0) {
            return Err(Error::invalid(
                "loading rate, capacity and loss must be >= 0",
            ));
        }
        Ok(())
    }

    /// Relaxation rate `R / N_cap + gamma`, 1/s.
    fn relaxation(&self) -> f64 {
        if self.capacity > 0.0 {
            self.rate / self.capacity + self.background_loss
        } else {
            f64::INFINITY
        }
    }

    /// Steady-state ion number `R N_cap / (R + gamma N_cap)`.
    pub fn saturation(&self) -> f64 {
        if self.rate == 0.0 {
            return 0.0;
        }
        self.rate / self.relaxation()
    }

    pub fn ions_at(&self, t: f64) -> f64 {
        let k = self.relaxation();
        if k.is_infinite() || self.rate == 0.0 {
            0.0
        } else if k * t < 1e-300 {
            self.rate * t
        } else {
            // -expm1 keeps the early-time slope exact
            self.rate * -(-k * t).exp_m1() / k
        }
    }

    /// Time to reach `fraction` of saturation, s.
    pub fn time_to_fraction(&self, fraction: f64) -> f64 {
        -(1.0 - fraction).ln() / self.relaxation()
    }
}

/// Ion number at each time for N(0) = 0.
pub fn loading_curve(model: &LoadingModel, times: &[f64]) -> Result<Vec<f64>> {
    model.validate()?;
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::invalid(format!(
            "loading time must be >= 0, got {t}"
        )));
    }
    Ok(times.iter().map(|&t| model.ions_at(t)).collect())
}

/// Constants tying the loading model to absolute numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingCalibration {
    /// ions/s per (W/cm^2)^2 per (atoms/m^3).
    pub rate_coefficient: f64,
    /// Multiplies the space-charge capacity.
    pub capacity_scale: f64,
    /// 1/s
    pub background_loss: f64,
}

/// What the calibration should reproduce at the best RF voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingTargets {
    /// Steady-state ion number at the optimum.
    pub peak_saturation: f64,
    /// Time to 95 % of saturation at the optimum, s.
    pub saturation_time: f64,
    /// 1/s
    pub background_loss: f64,
}

impl Default for LoadingTargets {
    fn default() -> Self {
        Self {
            peak_saturation: 4e4,
            saturation_time: 30.0,
            background_loss: 0.01,
        }
    }
}

impl LoadingCalibration {
    /// Solves for the rate coefficient and capacity scale given the beam,
    /// the atom density and the largest unscaled capacity of a voltage scan.
    pub fn solve(
        beam: &PhotoionBeam,
        atom_density: f64,
        peak_capacity: f64,
        targets: &LoadingTargets,
    ) -> Result<Self> {
        let k = -(0.05f64).ln() / targets.saturation_time;
        let gamma = targets.background_loss;
        if !(k > gamma && targets.peak_saturation > 0.0) {
            return Err(Error::NoSolution(format!(
                "saturation in {} s is impossible with loss rate {gamma} /s",
                targets.saturation_time
            )));
        }
        if !(peak_capacity > 0.0 && atom_density > 0.0) {
            return Err(Error::NoSolution(
                "calibration needs a positive capacity and atom density".into(),
            ));
        }
        // N_sat = N_cap (k - gamma) / k and R = N_cap (k - gamma)
        let n_cap = targets.peak_saturation * k / (k - gamma);
        let rate = n_cap * (k - gamma);
        let unit = PhotoionBeam {
            rate_coefficient: 1.0,
            ..beam.clone()
        };
        Ok(Self {
            rate_coefficient: rate / two_photon_rate(&unit, atom_density),
            capacity_scale: n_cap / peak_capacity,
            background_loss: gamma,
        })
    }

    pub fn model(&self, rate: f64, unscaled_capacity: f64) -> LoadingModel {
        LoadingModel {
            rate,
            capacity: self.capacity_scale * unscaled_capacity,
            background_loss: self.background_loss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingNoise {
    /// Counts equal their expectation.
    None,
    /// Independent Poisson increments between count times.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateScanConfig {
    /// Average beam powers, W.
    pub powers: Vec<f64>,
    pub trials: usize,
    /// Loading time per trial, s.
    pub window: f64,
    /// Count readouts per trial, evenly spaced over the window.
    pub samples: usize,
    pub noise: CountingNoise,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    /// W
    pub power: f64,
    /// Mean fitted slope over trials, ions/s.
    pub rate: f64,
    /// Standard deviation of the fitted slope over trials, ions/s.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateScan {
    pub points: Vec<RatePoint>,
    /// Slope of log(rate) against log(power).
    pub exponent: f64,
    /// Standard error of the exponent.
    pub exponent_error: f64,
}

/// Least-squares line `y = a + b x`; returns (a, b, standard error of b).
fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return Err(Error::DegenerateFit(
            "a line needs at least two points".into(),
        ));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let err = if x.len() > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((intercept, slope, err))
}

/// Simulated loading-rate measurement against beam power.
///
/// Each trial records cumulative ion counts during a short loading window
/// and takes the slope of a straight-line fit; the exponent comes from a
/// straight-line fit in log-log space of the per-power mean slopes.
pub fn rate_scan(
    beam: &PhotoionBeam,
    atom_density: f64,
    capacity: f64,
    background_loss: f64,
    config: &RateScanConfig,
) -> Result<RateScan> {
    beam.validate()?;
    if config.powers.len() < 4 {
        return Err(Error::invalid(format!(
            "rate scan needs at least 4 power points, got {}",
            config.powers.len()
        )));
    }
    if config.powers.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::invalid("beam powers must be > 0"));
    }
    if config.trials == 0 || config.samples < 2 || !(config.window > 0.0) {
        return Err(Error::invalid(
            "rate scan needs trials >= 1, samples >= 2 and window > 0",
        ));
    }
    let times: Vec<f64> = (1..=config.samples)
        .map(|k| config.window * k as f64 / config.samples as f64)
        .collect();
    let trials = config.trials;
    let points: Vec<RatePoint> = config
        .powers
        .par_iter()
        .enumerate()
        .map(|(pi, &power)| {
            let model = LoadingModel {
                rate: two_photon_rate(&beam.with_average_power(power), atom_density),
                capacity,
                background_loss,
            };
            let expected: Vec<f64> = times.iter().map(|&t| model.ions_at(t)).collect();
            let mut slopes = Vec::with_capacity(trials);
            for trial in 0..trials {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream((pi * trials + trial) as u64);
                let mut counts = Vec::with_capacity(times.len());
                let mut total = 0.0;
                let mut prev = 0.0;
                for &mean in &expected {
                    let inc = mean - prev;
                    prev = mean;
                    total += match config.noise {
                        CountingNoise::None => inc,
                        CountingNoise::Poisson if inc > 0.0 => {
                            Poisson::new(inc).expect("positive mean").sample(&mut rng)
                        }
                        CountingNoise::Poisson => 0.0,
                    };
                    counts.push(total);
                }
                let mut t = vec![0.0];
                t.extend_from_slice(&times);
                let mut c = vec![0.0];
                c.extend_from_slice(&counts);
                slopes.push(fit_line(&t, &c)?.1);
            }
            let mean = slopes.iter().sum::<f64>() / trials as f64;
            let var = if trials > 1 {
                slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64
            } else {
                0.0
            };
            Ok(RatePoint {
                power,
                rate: mean,
                error: var.sqrt(),
            })
        })
        .collect::<Result<_>>()?;

    if points.iter().any(|p| !(p.rate > 0.0)) {
        return Err(Error::DegenerateFit(
            "a power point recorded no ions".into(),
        ));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.power.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.rate.ln()).collect();
    let (_, exponent, exponent_error) = fit_line(&lx, &ly)?;
    Ok(RateScan {
        points,
        exponent,
        exponent_error,
    })
}

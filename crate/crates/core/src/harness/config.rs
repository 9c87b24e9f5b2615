//! Scenario files: TOML with unit-bearing strings.
//!
//! Every key is read through a schema; anything left over afterwards is an
//! unknown key and rejected. Dimensional values must be strings such as
//! `"3.2 mm"`; bare numbers are only accepted for dimensionless keys.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use super::units::{format_quantity, parse_quantity, Dimension};
use crate::error::{Error, Result};
use crate::ion_dynamics::{CoolingBeam, CoulombMode, FieldMode, DEFAULT_SOFTENING};
use crate::loading::{
    CountingNoise, EBSource, LoadingTargets, OvenSource, PhotoionBeam, PulseEnvelope,
};
use crate::spectrometry::AmplitudeBand;
use crate::trap_model::{calibrate_kappa, DriveSettings, IonSpecies, TrapGeometry};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorSettings {
    pub field_mode: FieldMode,
    /// s; `None` picks the mode default.
    pub dt: Option<f64>,
    pub coulomb: CoulombMode,
    /// m
    pub softening: f64,
    pub deterministic: bool,
}

/// Inclusive voltage sweep, V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoltageSweep {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl VoltageSweep {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.min + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeScan {
    pub sweep: VoltageSweep,
    /// Grid spacing is `r0 / grid_divisions`.
    pub grid_divisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateScanSettings {
    /// W
    pub power_min: f64,
    /// W
    pub power_max: f64,
    pub points: usize,
    pub trials: usize,
    /// s
    pub window: f64,
    pub samples: usize,
    pub noise: CountingNoise,
}

impl RateScanSettings {
    pub fn powers(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.power_min];
        }
        let step = (self.power_max - self.power_min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|k| self.power_min + k as f64 * step)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadCurveSettings {
    /// s
    pub duration: f64,
    /// s
    pub step: f64,
    /// RF amplitudes traced by the multi-curve preset, V.
    pub v_rf_values: Vec<f64>,
}

impl LoadCurveSettings {
    pub fn times(&self) -> Vec<f64> {
        let n = (self.duration / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IonSource {
    /// Photoionization: the primary species only.
    Tppi,
    /// Electron bombardment: primary plus impurities.
    Eb,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSettings {
    pub ions: usize,
    /// Hz
    pub f_min: f64,
    /// Hz
    pub f_max: f64,
    /// Hz
    pub f_step: f64,
    /// V
    pub amplitude: f64,
    pub bands: Vec<AmplitudeBand>,
    /// s
    pub dwell: f64,
    /// s
    pub equilibration: f64,
    /// K
    pub initial_temperature: f64,
    pub realizations: usize,
    pub control_runs: usize,
    pub detection_efficiency: f64,
    pub source: IonSource,
    /// Survival drop that marks a peak.
    pub peak_threshold: f64,
    /// Hz
    pub satellite_range: f64,
    /// V
    pub fig4_v_rf: f64,
    /// V
    pub fig6b_v_rf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scans {
    pub stability: VoltageSweep,
    pub volume: VolumeScan,
    pub ratescan: RateScanSettings,
    pub loadcurve: LoadCurveSettings,
    pub spectrum: SpectrumSettings,
}

/// Fully resolved scenario in SI units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub master_seed: u64,
    pub output_directory: PathBuf,
    pub trap: TrapGeometry,
    pub drive: DriveSettings,
    pub species: IonSpecies,
    pub cooling: Vec<CoolingBeam>,
    pub photoionization: PhotoionBeam,
    pub oven: OvenSource,
    pub electron_beam: EBSource,
    pub calibration: LoadingTargets,
    pub integrator: IntegratorSettings,
    pub scan: Scans,
}

impl ScenarioConfig {
    /// SHA-256 of the resolved configuration without the seed and the
    /// output directory, hex encoded.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        let map = value.as_object_mut().expect("config is an object");
        map.remove("master_seed");
        map.remove("output_directory");
        let bytes = serde_json::to_vec(&value).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }
}

/// Maps a byte offset to 1-based line and column.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    resolve(table)
}

fn validation(key: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        key: key.to_string(),
        message: message.into(),
    }
}

/// A table being consumed key by key.
struct Section {
    path: String,
    table: Table,
}

impl Section {
    fn new(path: &str, table: Table) -> Self {
        Self {
            path: path.to_string(),
            table,
        }
    }

    fn key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn child(&mut self, key: &str) -> Result<Section> {
        let path = self.key(key);
        match self.table.remove(key) {
            None => Ok(Section::new(&path, Table::new())),
            Some(Value::Table(t)) => Ok(Section::new(&path, t)),
            Some(_) => Err(validation(&path, "expected a table")),
        }
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            None => Ok(()),
            Some(k) => Err(validation(&self.key(k), "unknown key")),
        }
    }

    fn quantity_value(&self, key: &str, value: Value, dim: Dimension) -> Result<f64> {
        match value {
            Value::String(s) => parse_quantity(&s, dim).map_err(|m| validation(&self.key(key), m)),
            _ => Err(validation(
                &self.key(key),
                format!(
                    "expected a quantity string with a unit ({})",
                    dim.accepted()
                ),
            )),
        }
    }

    fn opt_quantity(&mut self, key: &str, dim: Dimension) -> Result<Option<f64>> {
        self.table
            .remove(key)
            .map(|v| self.quantity_value(key, v, dim))
            .transpose()
    }

    fn quantity(&mut self, key: &str, dim: Dimension) -> Result<f64> {
        self.opt_quantity(key, dim)?
            .ok_or_else(|| validation(&self.key(key), "required key is missing"))
    }

    fn quantity_or(&mut self, key: &str, dim: Dimension, default: f64) -> Result<f64> {
        Ok(self.opt_quantity(key, dim)?.unwrap_or(default))
    }

    fn quantities_or(&mut self, key: &str, dim: Dimension, default: &[f64]) -> Result<Vec<f64>> {
        match self.table.remove(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|v| self.quantity_value(key, v, dim))
                .collect(),
            Some(_) => Err(validation(
                &self.key(key),
                "expected an array of quantities",
            )),
        }
    }

    fn opt_number(&mut self, key: &str) -> Result<Option<f64>> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(x)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(_) => Err(validation(&self.key(key), "expected a number")),
        }
    }

    fn number_or(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_number(key)?.unwrap_or(default))
    }

    fn numbers(&self, key: &str, value: Value) -> Result<Vec<f64>> {
        match value {
            Value::Array(items) => items
                .into_iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(x),
                    Value::Integer(i) => Ok(i as f64),
                    _ => Err(validation(&self.key(key), "expected numbers")),
                })
                .collect(),
            _ => Err(validation(&self.key(key), "expected an array of numbers")),
        }
    }

    fn count_or(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.table.remove(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if i >= 0 => Ok(i as u64),
            Some(_) => Err(validation(
                &self.key(key),
                "expected a non-negative integer",
            )),
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.table.remove(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(_) => Err(validation(&self.key(key), "expected true or false")),
        }
    }

    fn string_or(&mut self, key: &str, default: &str) -> Result<String> {
        match self.table.remove(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(validation(&self.key(key), "expected a string")),
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, default: &str, options: &[(&str, T)]) -> Result<T> {
        let s = self.string_or(key, default)?;
        options
            .iter()
            .find(|o| o.0 == s)
            .map(|o| o.1)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|o| o.0).collect();
                validation(
                    &self.key(key),
                    format!("`{s}` is not one of {}", names.join(", ")),
                )
            })
    }
}

fn check(ok: bool, key: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(validation(key, message))
    }
}

/// Wraps a module-level validation failure with the section it came from.
fn in_section<T>(section: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidInput(m) | Error::UnstableParameters(m) => validation(section, m),
        other => other,
    })
}

fn resolve(table: Table) -> Result<ScenarioConfig> {
    use Dimension::*;
    let mut root = Section::new("", table);
    let master_seed = root.count_or("master_seed", 1)?;
    let output_directory = PathBuf::from(root.string_or("output_directory", "out")?);

    let mut s = root.child("drive")?;
    let drive = DriveSettings {
        omega_rf: s.quantity("omega_rf", AngularFrequency)?,
        v_rf: s.quantity("v_rf", Voltage)?,
        v_ec: s.quantity("v_ec", Voltage)?,
    };
    s.finish()?;
    in_section("drive", drive.validate())?;

    let mut s = root.child("species")?;
    let reference = IonSpecies::strontium88();
    let species = IonSpecies {
        name: s.string_or("name", &reference.name)?,
        mass: s.quantity_or("mass", Mass, reference.mass)?,
        charge: s.count_or("charge", 1)? as f64 * crate::constants::ELEMENTARY_CHARGE,
        laser_cooled: s.bool_or("laser_cooled", true)?,
    };
    s.finish()?;
    in_section("species", species.validate())?;

    let mut s = root.child("trap")?;
    let defaults = TrapGeometry::reference();
    let mut trap = TrapGeometry {
        r0: s.quantity("r0", Length)?,
        z0: s.quantity("z0", Length)?,
        rod_diameter: s.quantity_or("rod_diameter", Length, defaults.rod_diameter)?,
        kappa_axial: defaults.kappa_axial,
        eta_rf: s.number_or("eta_rf", defaults.eta_rf)?,
    };
    let kappa = s.opt_number("kappa_axial")?;
    let nu_axial = s.opt_quantity("axial_frequency", Frequency)?;
    trap.kappa_axial = match (kappa, nu_axial) {
        (Some(_), Some(_)) => {
            return Err(validation(
                "trap.kappa_axial",
                "give either kappa_axial or axial_frequency, not both",
            ))
        }
        (Some(k), None) => k,
        (None, nu) => {
            let nu = nu.unwrap_or(20e3);
            check(nu > 0.0, "trap.axial_frequency", "must be > 0")?;
            calibrate_kappa(nu, &trap, &drive, &species)
        }
    };
    s.finish()?;
    in_section("trap", trap.validate())?;

    let mut s = root.child("cooling")?;
    let base = CoolingBeam::strontium([0.0, 0.0, 1.0]);
    let gamma = s.quantity_or("linewidth", AngularFrequency, base.gamma)?;
    let detuning = s.quantity_or("detuning", AngularFrequency, -0.5 * gamma)?;
    let wavelength = s.quantity_or("wavelength", Length, base.wavelength)?;
    let saturation_s = s.number_or("saturation", base.saturation_s)?;
    let on = s.bool_or("enabled", true)?;
    let directions: Vec<Vec3> = match s.table.remove("directions") {
        None => CoolingBeam::default_pair()
            .iter()
            .map(|b| b.direction)
            .collect(),
        Some(Value::Array(rows)) => rows
            .into_iter()
            .map(|row| {
                let v = s.numbers("directions", row)?;
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if v.len() != 3 || !(norm > 0.0) {
                    return Err(validation(
                        "cooling.directions",
                        "each direction needs three components, not all zero",
                    ));
                }
                Ok([v[0] / norm, v[1] / norm, v[2] / norm])
            })
            .collect::<Result<_>>()?,
        Some(_) => {
            return Err(validation(
                "cooling.directions",
                "expected an array of 3-vectors",
            ))
        }
    };
    s.finish()?;
    let cooling: Vec<CoolingBeam> = directions
        .into_iter()
        .map(|direction| CoolingBeam {
            wavelength,
            gamma,
            detuning,
            saturation_s,
            direction,
            on,
        })
        .collect();
    for b in &cooling {
        in_section("cooling", b.validate())?;
    }

    let mut s = root.child("photoionization")?;
    let pi = PhotoionBeam::reference();
    let photoionization = PhotoionBeam {
        pulse_energy: s.quantity_or("pulse_energy", Energy, pi.pulse_energy)?,
        pulse_duration_fwhm: s.quantity_or("pulse_duration", Time, pi.pulse_duration_fwhm)?,
        rep_rate: s.quantity_or("rep_rate", Frequency, pi.rep_rate)?,
        waist: s.quantity_or("waist", Length, pi.waist)?,
        wavelength: s.quantity_or("wavelength", Length, pi.wavelength)?,
        two_photon_linewidth_fwhm: s.quantity_or(
            "two_photon_linewidth",
            Length,
            pi.two_photon_linewidth_fwhm,
        )?,
        intermediate_cross_section: s.quantity_or(
            "intermediate_cross_section",
            Area,
            pi.intermediate_cross_section,
        )?,
        rate_coefficient: pi.rate_coefficient,
        envelope: s.choice(
            "envelope",
            "gaussian",
            &[
                ("gaussian", PulseEnvelope::Gaussian),
                ("sech2", PulseEnvelope::Sech2),
            ],
        )?,
    };
    s.finish()?;
    in_section("photoionization", photoionization.validate())?;

    let mut s = root.child("oven")?;
    let ov = OvenSource::reference(1.0);
    let [(i1, t1), (i2, t2)] = ov.calibration;
    let oven = OvenSource {
        current: s.quantity_or("current", Current, ov.current)?,
        calibration: [
            (
                s.quantity_or("low_current", Current, i1)?,
                s.quantity_or("low_temperature", Temperature, t1)?,
            ),
            (
                s.quantity_or("high_current", Current, i2)?,
                s.quantity_or("high_temperature", Temperature, t2)?,
            ),
        ],
        antoine_a: s.number_or("antoine_a", ov.antoine_a)?,
        antoine_b: s.quantity_or("antoine_b", Temperature, ov.antoine_b)?,
        current_range: (
            s.quantity_or("min_current", Current, ov.current_range.0)?,
            s.quantity_or("max_current", Current, ov.current_range.1)?,
        ),
    };
    s.finish()?;
    in_section("oven", oven.validate())?;
    in_section(
        "oven",
        oven.temperature()
            .map_err(|e| Error::invalid(e.to_string())),
    )?;

    let mut s = root.child("electron_beam")?;
    let eb = EBSource::reference();
    let default_masses: Vec<f64> = eb.impurity_species.iter().map(|i| i.0.mass).collect();
    let masses = s.quantities_or("impurity_masses", Mass, &default_masses)?;
    let weights = match s.table.remove("impurity_weights") {
        None => vec![1.0 / masses.len().max(1) as f64; masses.len()],
        Some(v) => s.numbers("impurity_weights", v)?,
    };
    check(
        weights.len() == masses.len(),
        "electron_beam.impurity_weights",
        "needs one weight per impurity mass",
    )?;
    let electron_beam = EBSource {
        electron_energy: s.quantity_or(
            "energy",
            Energy,
            eb.electron_energy * crate::constants::ELEMENTARY_CHARGE,
        )? / crate::constants::ELEMENTARY_CHARGE,
        effective_rate: s.quantity_or("rate", Rate, eb.effective_rate)?,
        impurity_fraction: s.number_or("impurity_fraction", eb.impurity_fraction)?,
        impurity_species: masses
            .iter()
            .zip(&weights)
            .map(|(&m, &w)| {
                let amu = m / crate::constants::ATOMIC_MASS_UNIT;
                (IonSpecies::singly_charged(format!("{amu:.0}u"), amu), w)
            })
            .collect(),
    };
    s.finish()?;
    in_section("electron_beam", electron_beam.validate())?;

    let mut s = root.child("calibration")?;
    let t = LoadingTargets::default();
    let calibration = LoadingTargets {
        peak_saturation: s.number_or("peak_saturation", t.peak_saturation)?,
        saturation_time: s.quantity_or("saturation_time", Time, t.saturation_time)?,
        background_loss: s.quantity_or("background_loss", Rate, t.background_loss)?,
    };
    s.finish()?;
    check(
        calibration.peak_saturation > 0.0,
        "calibration.peak_saturation",
        "must be > 0",
    )?;
    check(
        calibration.saturation_time > 0.0,
        "calibration.saturation_time",
        "must be > 0",
    )?;
    check(
        calibration.background_loss >= 0.0,
        "calibration.background_loss",
        "must be >= 0",
    )?;

    let mut s = root.child("integrator")?;
    let field_mode = s.choice(
        "field_mode",
        "secular",
        &[
            ("secular", FieldMode::Secular),
            ("full_rf", FieldMode::FullRf),
        ],
    )?;
    let dt = match s.table.remove("dt") {
        None => None,
        Some(Value::String(x)) if x == "auto" => None,
        Some(v) => Some(s.quantity_value("dt", v, Time)?),
    };
    let integrator = IntegratorSettings {
        field_mode,
        dt,
        coulomb: s.choice(
            "coulomb",
            "direct",
            &[
                ("off", CoulombMode::Off),
                ("direct", CoulombMode::Direct),
                ("cell_list", CoulombMode::CellList),
            ],
        )?,
        softening: s.quantity_or("softening", Length, DEFAULT_SOFTENING)?,
        deterministic: s.bool_or("deterministic", true)?,
    };
    s.finish()?;
    if let Some(dt) = integrator.dt {
        check(dt > 0.0, "integrator.dt", "must be > 0")?;
        if field_mode == FieldMode::FullRf {
            check(
                dt <= drive.rf_period() / 50.0 * (1.0 + 1e-12),
                "integrator.dt",
                "must not exceed T_rf/50 in full_rf mode",
            )?;
        }
    }
    check(
        integrator.softening >= 0.0,
        "integrator.softening",
        "must be >= 0",
    )?;

    let scan = resolve_scans(root.child("scan")?)?;
    root.finish()?;

    Ok(ScenarioConfig {
        master_seed,
        output_directory,
        trap,
        drive,
        species,
        cooling,
        photoionization,
        oven,
        electron_beam,
        calibration,
        integrator,
        scan,
    })
}

fn sweep(s: &mut Section, min: f64, max: f64, step: f64) -> Result<VoltageSweep> {
    let sw = VoltageSweep {
        min: s.quantity_or("v_rf_min", Dimension::Voltage, min)?,
        max: s.quantity_or("v_rf_max", Dimension::Voltage, max)?,
        step: s.quantity_or("v_rf_step", Dimension::Voltage, step)?,
    };
    check(
        sw.min > 0.0 && sw.max >= sw.min && sw.step > 0.0,
        &s.key("v_rf_min"),
        "sweep needs 0 < v_rf_min <= v_rf_max and v_rf_step > 0",
    )?;
    Ok(sw)
}

fn resolve_scans(mut scan: Section) -> Result<Scans> {
    use Dimension::*;

    let mut s = scan.child("stability")?;
    let stability = sweep(&mut s, 10.0, 1000.0, 10.0)?;
    s.finish()?;

    let mut s = scan.child("volume")?;
    let volume = VolumeScan {
        sweep: sweep(&mut s, 50.0, 500.0, 10.0)?,
        grid_divisions: s.count_or("grid_divisions", 20)? as usize,
    };
    check(
        volume.grid_divisions >= 4,
        "scan.volume.grid_divisions",
        "must be >= 4",
    )?;
    s.finish()?;

    let mut s = scan.child("ratescan")?;
    let ratescan = RateScanSettings {
        power_min: s.quantity_or("power_min", Power, 5e-3)?,
        power_max: s.quantity_or("power_max", Power, 20e-3)?,
        points: s.count_or("points", 8)? as usize,
        trials: s.count_or("trials", 20)? as usize,
        window: s.quantity_or("window", Time, 0.5)?,
        samples: s.count_or("samples", 11)? as usize,
        noise: s.choice(
            "noise",
            "poisson",
            &[
                ("poisson", CountingNoise::Poisson),
                ("none", CountingNoise::None),
            ],
        )?,
    };
    s.finish()?;
    check(
        ratescan.power_min > 0.0 && ratescan.power_max >= ratescan.power_min,
        "scan.ratescan.power_min",
        "needs 0 < power_min <= power_max",
    )?;
    check(ratescan.points >= 4, "scan.ratescan.points", "must be >= 4")?;
    check(ratescan.trials >= 1, "scan.ratescan.trials", "must be >= 1")?;
    check(ratescan.window > 0.0, "scan.ratescan.window", "must be > 0")?;
    check(
        ratescan.samples >= 2,
        "scan.ratescan.samples",
        "must be >= 2",
    )?;

    let mut s = scan.child("loadcurve")?;
    let loadcurve = LoadCurveSettings {
        duration: s.quantity_or("duration", Time, 60.0)?,
        step: s.quantity_or("step", Time, 1.0)?,
        v_rf_values: s.quantities_or("v_rf_values", Voltage, &[75.0, 125.0, 250.0, 500.0])?,
    };
    s.finish()?;
    check(
        loadcurve.duration > 0.0 && loadcurve.step > 0.0,
        "scan.loadcurve.step",
        "duration and step must be > 0",
    )?;
    check(
        !loadcurve.v_rf_values.is_empty() && loadcurve.v_rf_values.iter().all(|v| *v > 0.0),
        "scan.loadcurve.v_rf_values",
        "needs at least one positive voltage",
    )?;

    let mut s = scan.child("spectrum")?;
    let bands = match s.table.remove("bands") {
        None => vec![AmplitudeBand {
            lo: 250e3,
            hi: 500e3,
            amplitude: 15.0,
        }],
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|item| {
                let Value::Table(t) = item else {
                    return Err(validation("scan.spectrum.bands", "expected tables"));
                };
                let mut b = Section::new("scan.spectrum.bands", t);
                let band = AmplitudeBand {
                    lo: b.quantity("from", Frequency)?,
                    hi: b.quantity("to", Frequency)?,
                    amplitude: b.quantity("amplitude", Voltage)?,
                };
                b.finish()?;
                check(
                    band.hi >= band.lo && band.amplitude >= 0.0,
                    "scan.spectrum.bands",
                    "needs from <= to and amplitude >= 0",
                )?;
                Ok(band)
            })
            .collect::<Result<_>>()?,
        Some(_) => {
            return Err(validation(
                "scan.spectrum.bands",
                "expected an array of tables",
            ))
        }
    };
    let spectrum = SpectrumSettings {
        ions: s.count_or("ions", 200)? as usize,
        f_min: s.quantity_or("f_min", Frequency, 250e3)?,
        f_max: s.quantity_or("f_max", Frequency, 1000e3)?,
        f_step: s.quantity_or("f_step", Frequency, 5e3)?,
        amplitude: s.quantity_or("amplitude", Voltage, 5.0)?,
        bands,
        dwell: s.quantity_or("dwell", Time, 1e-3)?,
        equilibration: s.quantity_or("equilibration", Time, 0.3e-3)?,
        initial_temperature: s.quantity_or("initial_temperature", Temperature, 10e-3)?,
        realizations: s.count_or("realizations", 1)? as usize,
        control_runs: s.count_or("control_runs", 3)? as usize,
        detection_efficiency: s.number_or("detection_efficiency", 1.0)?,
        source: s.choice(
            "source",
            "tppi",
            &[("tppi", IonSource::Tppi), ("eb", IonSource::Eb)],
        )?,
        peak_threshold: s.number_or("peak_threshold", 0.2)?,
        satellite_range: s.quantity_or("satellite_range", Frequency, 100e3)?,
        fig4_v_rf: s.quantity_or("fig4_v_rf", Voltage, 500.0)?,
        fig6b_v_rf: s.quantity_or("fig6b_v_rf", Voltage, 350.0)?,
    };
    s.finish()?;
    check(spectrum.ions >= 1, "scan.spectrum.ions", "must be >= 1")?;
    check(
        spectrum.f_min > 0.0 && spectrum.f_max >= spectrum.f_min && spectrum.f_step > 0.0,
        "scan.spectrum.f_min",
        "needs 0 < f_min <= f_max and f_step > 0",
    )?;
    check(spectrum.dwell > 0.0, "scan.spectrum.dwell", "must be > 0")?;
    check(
        spectrum.equilibration >= 0.0,
        "scan.spectrum.equilibration",
        "must be >= 0",
    )?;
    check(
        spectrum.realizations >= 1 && spectrum.control_runs >= 1,
        "scan.spectrum.realizations",
        "realizations and control_runs must be >= 1",
    )?;
    check(
        (0.0..=1.0).contains(&spectrum.detection_efficiency),
        "scan.spectrum.detection_efficiency",
        "must be in [0, 1]",
    )?;
    check(
        spectrum.peak_threshold > 0.0 && spectrum.peak_threshold < 1.0,
        "scan.spectrum.peak_threshold",
        "must be in (0, 1)",
    )?;
    check(
        spectrum.fig4_v_rf > 0.0 && spectrum.fig6b_v_rf > 0.0,
        "scan.spectrum.fig4_v_rf",
        "preset voltages must be > 0",
    )?;
    scan.finish()?;

    Ok(Scans {
        stability,
        volume,
        ratescan,
        loadcurve,
        spectrum,
    })
}

/// Writes the resolved configuration back as TOML in SI units; parsing
/// the result yields an identical configuration.
pub fn to_toml(config: &ScenarioConfig) -> String {
    use Dimension::*;
    fn q(v: f64, d: Dimension) -> Value {
        Value::String(format_quantity(v, d))
    }
    fn table(entries: Vec<(&str, Value)>) -> Value {
        Value::Table(
            entries
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        )
    }
    fn qs(values: &[f64], d: Dimension) -> Value {
        Value::Array(values.iter().map(|&v| q(v, d)).collect())
    }
    let c = config;
    let beam = c
        .cooling
        .first()
        .copied()
        .unwrap_or(CoolingBeam::strontium([0.0, 0.0, 1.0]));
    let [(i1, t1), (i2, t2)] = c.oven.calibration;
    let sp = &c.scan.spectrum;
    let mut root = Table::new();
    root.insert("master_seed".into(), Value::Integer(c.master_seed as i64));
    root.insert(
        "output_directory".into(),
        Value::String(c.output_directory.to_string_lossy().into_owned()),
    );
    let entries = [
        (
            "trap",
            table(vec![
                ("r0", q(c.trap.r0, Length)),
                ("z0", q(c.trap.z0, Length)),
                ("rod_diameter", q(c.trap.rod_diameter, Length)),
                ("kappa_axial", Value::Float(c.trap.kappa_axial)),
                ("eta_rf", Value::Float(c.trap.eta_rf)),
            ]),
        ),
        (
            "drive",
            table(vec![
                ("omega_rf", q(c.drive.omega_rf, AngularFrequency)),
                ("v_rf", q(c.drive.v_rf, Voltage)),
                ("v_ec", q(c.drive.v_ec, Voltage)),
            ]),
        ),
        (
            "species",
            table(vec![
                ("name", Value::String(c.species.name.clone())),
                ("mass", q(c.species.mass, Mass)),
                (
                    "charge",
                    Value::Integer(
                        (c.species.charge / crate::constants::ELEMENTARY_CHARGE).round() as i64,
                    ),
                ),
                ("laser_cooled", Value::Boolean(c.species.laser_cooled)),
            ]),
        ),
        (
            "cooling",
            table(vec![
                ("wavelength", q(beam.wavelength, Length)),
                ("linewidth", q(beam.gamma, AngularFrequency)),
                ("detuning", q(beam.detuning, AngularFrequency)),
                ("saturation", Value::Float(beam.saturation_s)),
                ("enabled", Value::Boolean(beam.on)),
                (
                    "directions",
                    Value::Array(
                        c.cooling
                            .iter()
                            .map(|b| {
                                Value::Array(b.direction.iter().map(|&x| Value::Float(x)).collect())
                            })
                            .collect(),
                    ),
                ),
            ]),
        ),
        (
            "photoionization",
            table(vec![
                ("pulse_energy", q(c.photoionization.pulse_energy, Energy)),
                (
                    "pulse_duration",
                    q(c.photoionization.pulse_duration_fwhm, Time),
                ),
                ("rep_rate", q(c.photoionization.rep_rate, Frequency)),
                ("waist", q(c.photoionization.waist, Length)),
                ("wavelength", q(c.photoionization.wavelength, Length)),
                (
                    "two_photon_linewidth",
                    q(c.photoionization.two_photon_linewidth_fwhm, Length),
                ),
                (
                    "intermediate_cross_section",
                    q(c.photoionization.intermediate_cross_section, Area),
                ),
                (
                    "envelope",
                    Value::String(
                        match c.photoionization.envelope {
                            PulseEnvelope::Gaussian => "gaussian",
                            PulseEnvelope::Sech2 => "sech2",
                        }
                        .into(),
                    ),
                ),
            ]),
        ),
        (
            "oven",
            table(vec![
                ("current", q(c.oven.current, Current)),
                ("low_current", q(i1, Current)),
                ("low_temperature", q(t1, Temperature)),
                ("high_current", q(i2, Current)),
                ("high_temperature", q(t2, Temperature)),
                ("antoine_a", Value::Float(c.oven.antoine_a)),
                ("antoine_b", q(c.oven.antoine_b, Temperature)),
                ("min_current", q(c.oven.current_range.0, Current)),
                ("max_current", q(c.oven.current_range.1, Current)),
            ]),
        ),
        (
            "electron_beam",
            table(vec![
                (
                    "energy",
                    q(
                        c.electron_beam.electron_energy * crate::constants::ELEMENTARY_CHARGE,
                        Energy,
                    ),
                ),
                ("rate", q(c.electron_beam.effective_rate, Rate)),
                (
                    "impurity_fraction",
                    Value::Float(c.electron_beam.impurity_fraction),
                ),
                (
                    "impurity_masses",
                    qs(
                        &c.electron_beam
                            .impurity_species
                            .iter()
                            .map(|s| s.0.mass)
                            .collect::<Vec<_>>(),
                        Mass,
                    ),
                ),
                (
                    "impurity_weights",
                    Value::Array(
                        c.electron_beam
                            .impurity_species
                            .iter()
                            .map(|s| Value::Float(s.1))
                            .collect(),
                    ),
                ),
            ]),
        ),
        (
            "calibration",
            table(vec![
                (
                    "peak_saturation",
                    Value::Float(c.calibration.peak_saturation),
                ),
                ("saturation_time", q(c.calibration.saturation_time, Time)),
                ("background_loss", q(c.calibration.background_loss, Rate)),
            ]),
        ),
        (
            "integrator",
            table(vec![
                (
                    "field_mode",
                    Value::String(
                        match c.integrator.field_mode {
                            FieldMode::Secular => "secular",
                            FieldMode::FullRf => "full_rf",
                        }
                        .into(),
                    ),
                ),
                (
                    "dt",
                    c.integrator
                        .dt
                        .map_or(Value::String("auto".into()), |dt| q(dt, Time)),
                ),
                (
                    "coulomb",
                    Value::String(
                        match c.integrator.coulomb {
                            CoulombMode::Off => "off",
                            CoulombMode::Direct => "direct",
                            CoulombMode::CellList => "cell_list",
                        }
                        .into(),
                    ),
                ),
                ("softening", q(c.integrator.softening, Length)),
                ("deterministic", Value::Boolean(c.integrator.deterministic)),
            ]),
        ),
        (
            "scan",
            table(vec![
                (
                    "stability",
                    table(vec![
                        ("v_rf_min", q(c.scan.stability.min, Voltage)),
                        ("v_rf_max", q(c.scan.stability.max, Voltage)),
                        ("v_rf_step", q(c.scan.stability.step, Voltage)),
                    ]),
                ),
                (
                    "volume",
                    table(vec![
                        ("v_rf_min", q(c.scan.volume.sweep.min, Voltage)),
                        ("v_rf_max", q(c.scan.volume.sweep.max, Voltage)),
                        ("v_rf_step", q(c.scan.volume.sweep.step, Voltage)),
                        (
                            "grid_divisions",
                            Value::Integer(c.scan.volume.grid_divisions as i64),
                        ),
                    ]),
                ),
                (
                    "ratescan",
                    table(vec![
                        ("power_min", q(c.scan.ratescan.power_min, Power)),
                        ("power_max", q(c.scan.ratescan.power_max, Power)),
                        ("points", Value::Integer(c.scan.ratescan.points as i64)),
                        ("trials", Value::Integer(c.scan.ratescan.trials as i64)),
                        ("window", q(c.scan.ratescan.window, Time)),
                        ("samples", Value::Integer(c.scan.ratescan.samples as i64)),
                        (
                            "noise",
                            Value::String(
                                match c.scan.ratescan.noise {
                                    CountingNoise::Poisson => "poisson",
                                    CountingNoise::None => "none",
                                }
                                .into(),
                            ),
                        ),
                    ]),
                ),
                (
                    "loadcurve",
                    table(vec![
                        ("duration", q(c.scan.loadcurve.duration, Time)),
                        ("step", q(c.scan.loadcurve.step, Time)),
                        ("v_rf_values", qs(&c.scan.loadcurve.v_rf_values, Voltage)),
                    ]),
                ),
                (
                    "spectrum",
                    table(vec![
                        ("ions", Value::Integer(sp.ions as i64)),
                        ("f_min", q(sp.f_min, Frequency)),
                        ("f_max", q(sp.f_max, Frequency)),
                        ("f_step", q(sp.f_step, Frequency)),
                        ("amplitude", q(sp.amplitude, Voltage)),
                        (
                            "bands",
                            Value::Array(
                                sp.bands
                                    .iter()
                                    .map(|b| {
                                        table(vec![
                                            ("from", q(b.lo, Frequency)),
                                            ("to", q(b.hi, Frequency)),
                                            ("amplitude", q(b.amplitude, Voltage)),
                                        ])
                                    })
                                    .collect(),
                            ),
                        ),
                        ("dwell", q(sp.dwell, Time)),
                        ("equilibration", q(sp.equilibration, Time)),
                        (
                            "initial_temperature",
                            q(sp.initial_temperature, Temperature),
                        ),
                        ("realizations", Value::Integer(sp.realizations as i64)),
                        ("control_runs", Value::Integer(sp.control_runs as i64)),
                        (
                            "detection_efficiency",
                            Value::Float(sp.detection_efficiency),
                        ),
                        (
                            "source",
                            Value::String(
                                match sp.source {
                                    IonSource::Tppi => "tppi",
                                    IonSource::Eb => "eb",
                                }
                                .into(),
                            ),
                        ),
                        ("peak_threshold", Value::Float(sp.peak_threshold)),
                        ("satellite_range", q(sp.satellite_range, Frequency)),
                        ("fig4_v_rf", q(sp.fig4_v_rf, Voltage)),
                        ("fig6b_v_rf", q(sp.fig6b_v_rf, Voltage)),
                    ]),
                ),
            ]),
        ),
    ];
    for (k, v) in entries {
        root.insert(k.to_string(), v);
    }
    toml::to_string(&root).expect("a TOML table serializes")
}

//! Preset pipelines. Each returns its CSV tables; nothing here touches the
//! file system, so replay can recompute and compare in memory.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{IonSource, ScenarioConfig};
use super::csvio::{flag, int, num, CsvTable};
use crate::constants::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE};
use crate::error::{Error, Result};
use crate::ion_dynamics::{CloudRecipe, EjectionConfig, IntegratorConfig};
use crate::loading::{
    capacity, loading_curve, oven_density, rate_scan, two_photon_rate, LoadingCalibration,
    PhotoionBeam, RateScanConfig,
};
use crate::spectrometry::{
    analytic_resonances, contrast, find_peaks, mass_from_peak, run_mass_spectrum, MeasurementSetup,
    SpectrumResult, SpectrumScan,
};
use crate::trap_model::{
    exact_radial_frequency, mathieu_params, species_frequencies, stability_check, trap_volume,
    DriveSettings, IonSpecies,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Stability,
    Secular,
    Volume,
    Ratescan,
    Loadcurve,
    Massspec,
    Fig4,
    Fig5,
    Fig6a,
    Fig6b,
}

impl Preset {
    pub const ALL: [Preset; 10] = [
        Preset::Stability,
        Preset::Secular,
        Preset::Volume,
        Preset::Ratescan,
        Preset::Loadcurve,
        Preset::Massspec,
        Preset::Fig4,
        Preset::Fig5,
        Preset::Fig6a,
        Preset::Fig6b,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Stability => "stability",
            Preset::Secular => "secular",
            Preset::Volume => "volume",
            Preset::Ratescan => "ratescan",
            Preset::Loadcurve => "loadcurve",
            Preset::Massspec => "massspec",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6a => "fig6a",
            Preset::Fig6b => "fig6b",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::invalid(format!(
                    "unknown preset `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Independent seed for the k-th stochastic stage of a preset.
fn sub_seed(seed: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng.next_u64()
}

pub fn run_preset(config: &ScenarioConfig, preset: Preset, seed: u64) -> Result<Vec<CsvTable>> {
    match preset {
        Preset::Stability => Ok(vec![stability(config)]),
        Preset::Secular => Ok(vec![secular(config)?]),
        Preset::Volume => volume(config),
        Preset::Ratescan => ratescan(config, "ratescan", seed),
        Preset::Fig5 => ratescan(config, "fig5", seed),
        Preset::Loadcurve => loadcurves(config, "loadcurve", &[config.drive.v_rf]),
        Preset::Fig6a => loadcurves(config, "fig6a", &config.scan.loadcurve.v_rf_values),
        Preset::Massspec => {
            let src = config.scan.spectrum.source;
            let name = match src {
                IonSource::Tppi => "massspec_tppi",
                IonSource::Eb => "massspec_eb",
            };
            let (tables, _) = spectrum(config, name, config.drive.v_rf, src, sub_seed(seed, 0))?;
            Ok(tables)
        }
        Preset::Fig4 => figure_spectra(config, "fig4", config.scan.spectrum.fig4_v_rf, seed),
        Preset::Fig6b => figure_spectra(config, "fig6b", config.scan.spectrum.fig6b_v_rf, seed),
    }
}

fn stability(c: &ScenarioConfig) -> CsvTable {
    let mut t = CsvTable::new(
        "stability.csv",
        &[
            "v_rf_v",
            "q",
            "a_radial",
            "a_axial",
            "stable",
            "nu_radial_hz",
            "nu_radial_exact_hz",
            "nu_axial_hz",
        ],
    );
    for v in c.scan.stability.values() {
        let d = c.drive.with_v_rf(v);
        let p = mathieu_params(&c.trap, &d, &c.species);
        let stable = stability_check(&p).stable;
        let (nr, nz) = species_frequencies(&c.trap, &d, &c.species)
            .map_or((f64::NAN, f64::NAN), |f| (f.nu_radial, f.nu_axial));
        let exact = exact_radial_frequency(&p, &d).unwrap_or(f64::NAN);
        t.push(vec![
            num(v),
            num(p.q_radial),
            num(p.a_radial),
            num(p.a_axial),
            flag(stable),
            num(nr),
            num(exact),
            num(nz),
        ]);
    }
    t
}

fn secular(c: &ScenarioConfig) -> Result<CsvTable> {
    let p = mathieu_params(&c.trap, &c.drive, &c.species);
    let f = species_frequencies(&c.trap, &c.drive, &c.species)?;
    let exact = exact_radial_frequency(&p, &c.drive)?;
    let mut t = CsvTable::new(
        "secular.csv",
        &[
            "v_rf_v",
            "q",
            "a_radial",
            "a_axial",
            "nu_radial_hz",
            "nu_radial_exact_hz",
            "nu_axial_hz",
            "kappa_axial",
        ],
    );
    t.push(vec![
        num(c.drive.v_rf),
        num(p.q_radial),
        num(p.a_radial),
        num(p.a_axial),
        num(f.nu_radial),
        num(exact),
        num(f.nu_axial),
        num(c.trap.kappa_axial),
    ]);
    Ok(t)
}

/// Unscaled capacity of the trap at one RF amplitude; zero where the
/// species is not confined.
fn unscaled_capacity(c: &ScenarioConfig, v_rf: f64) -> Result<(f64, f64, f64)> {
    let d = c.drive.with_v_rf(v_rf);
    let resolution = c.trap.r0 / c.scan.volume.grid_divisions as f64;
    match trap_volume(&c.trap, &d, &c.species, resolution) {
        Ok(vol) => {
            let cap = if vol.volume > 0.0 {
                capacity(&d, &c.trap, &c.species, &vol)?
            } else {
                0.0
            };
            Ok((vol.volume, vol.depth, cap))
        }
        Err(Error::UnstableParameters(_)) => Ok((0.0, 0.0, 0.0)),
        Err(e) => Err(e),
    }
}

/// Calibrated loading constants together with the voltage sweep behind
/// them: (v_rf, volume, depth, unscaled capacity) per row.
pub struct Calibrated {
    pub calibration: LoadingCalibration,
    pub sweep: Vec<(f64, f64, f64, f64)>,
    pub beam: PhotoionBeam,
    pub atom_density: f64,
}

impl Calibrated {
    pub fn rate(&self) -> f64 {
        two_photon_rate(&self.beam, self.atom_density)
    }
}

pub fn calibrate(c: &ScenarioConfig) -> Result<Calibrated> {
    let sweep: Vec<(f64, f64, f64, f64)> = c
        .scan
        .volume
        .sweep
        .values()
        .into_iter()
        .map(|v| unscaled_capacity(c, v).map(|(vol, depth, cap)| (v, vol, depth, cap)))
        .collect::<Result<_>>()?;
    let peak = sweep.iter().map(|r| r.3).fold(0.0, f64::max);
    let atom_density = oven_density(&c.oven)?;
    let calibration =
        LoadingCalibration::solve(&c.photoionization, atom_density, peak, &c.calibration)?;
    let beam = PhotoionBeam {
        rate_coefficient: calibration.rate_coefficient,
        ..c.photoionization.clone()
    };
    Ok(Calibrated {
        calibration,
        sweep,
        beam,
        atom_density,
    })
}

fn volume(c: &ScenarioConfig) -> Result<Vec<CsvTable>> {
    let cal = calibrate(c)?;
    let rate = cal.rate();
    let mut t = CsvTable::new(
        "volume.csv",
        &[
            "v_rf_v",
            "volume_m3",
            "depth_ev",
            "capacity_unscaled",
            "capacity",
            "saturation",
        ],
    );
    for &(v, vol, depth, cap) in &cal.sweep {
        let model = cal.calibration.model(rate, cap);
        t.push(vec![
            num(v),
            num(vol),
            num(depth / ELEMENTARY_CHARGE),
            num(cap),
            num(model.capacity),
            num(model.saturation()),
        ]);
    }
    let best = cal
        .sweep
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, r)| (i, r.0))
        .unwrap_or((0, f64::NAN));
    let interior = best.0 > 0 && best.0 + 1 < cal.sweep.len();
    let mut s = CsvTable::new(
        "volume_summary.csv",
        &[
            "volume_optimum_v_rf_v",
            "volume_optimum_interior",
            "capacity_scale",
            "rate_coefficient",
            "loading_rate_per_s",
        ],
    );
    s.push(vec![
        num(best.1),
        flag(interior),
        num(cal.calibration.capacity_scale),
        num(cal.calibration.rate_coefficient),
        num(rate),
    ]);
    Ok(vec![t, s])
}

fn ratescan(c: &ScenarioConfig, name: &str, seed: u64) -> Result<Vec<CsvTable>> {
    let cal = calibrate(c)?;
    let (_, _, cap) = unscaled_capacity(c, c.drive.v_rf)?;
    let rs = &c.scan.ratescan;
    let scan = rate_scan(
        &cal.beam,
        cal.atom_density,
        cal.calibration.capacity_scale * cap,
        cal.calibration.background_loss,
        &RateScanConfig {
            powers: rs.powers(),
            trials: rs.trials,
            window: rs.window,
            samples: rs.samples,
            noise: rs.noise,
            seed: sub_seed(seed, 0),
        },
    )?;
    let mut t = CsvTable::new(
        format!("{name}.csv"),
        &["average_power_w", "rate_per_s", "error_per_s"],
    );
    for p in &scan.points {
        t.push(vec![num(p.power), num(p.rate), num(p.error)]);
    }
    let mut f = CsvTable::new(
        format!("{name}_fit.csv"),
        &["exponent", "exponent_error", "points", "trials"],
    );
    f.push(vec![
        num(scan.exponent),
        num(scan.exponent_error),
        int(scan.points.len() as u64),
        int(rs.trials as u64),
    ]);
    Ok(vec![t, f])
}

fn loadcurves(c: &ScenarioConfig, name: &str, voltages: &[f64]) -> Result<Vec<CsvTable>> {
    let cal = calibrate(c)?;
    let rate = cal.rate();
    let times = c.scan.loadcurve.times();
    let mut t = CsvTable::new(format!("{name}.csv"), &["v_rf_v", "time_s", "ions"]);
    let mut s = CsvTable::new(
        format!("{name}_summary.csv"),
        &["v_rf_v", "capacity", "saturation", "t95_s"],
    );
    for &v in voltages {
        let (_, _, cap) = unscaled_capacity(c, v)?;
        let model = cal.calibration.model(rate, cap);
        for (time, n) in times.iter().zip(loading_curve(&model, &times)?) {
            t.push(vec![num(v), num(*time), num(n)]);
        }
        s.push(vec![
            num(v),
            num(model.capacity),
            num(model.saturation()),
            num(if model.capacity > 0.0 {
                model.time_to_fraction(0.95)
            } else {
                f64::NAN
            }),
        ]);
    }
    Ok(vec![t, s])
}

/// Species mix for a spectrum recipe.
pub fn source_weights(c: &ScenarioConfig, source: IonSource) -> Vec<(IonSpecies, f64)> {
    match source {
        IonSource::Tppi => vec![(c.species.clone(), 1.0)],
        IonSource::Eb => {
            let eb = &c.electron_beam;
            let total: f64 = eb.impurity_species.iter().map(|s| s.1).sum();
            let mut w = vec![(c.species.clone(), 1.0 - eb.impurity_fraction)];
            if eb.impurity_fraction > 0.0 && total > 0.0 {
                w.extend(
                    eb.impurity_species
                        .iter()
                        .map(|(s, x)| (s.clone(), eb.impurity_fraction * x / total)),
                );
            }
            w
        }
    }
}

/// Trap, light and integrator for spectra at one RF amplitude. Without an
/// explicit step the default follows the fastest confined species.
pub fn measurement_setup(
    c: &ScenarioConfig,
    drive: DriveSettings,
    species: &[IonSpecies],
) -> Result<MeasurementSetup> {
    let nu_max = species
        .iter()
        .filter_map(|s| species_frequencies(&c.trap, &drive, s).ok())
        .map(|f| f.nu_radial)
        .fold(0.0, f64::max);
    if !(nu_max > 0.0) {
        return Err(Error::UnstableParameters(format!(
            "no species is confined at v_rf = {} V",
            drive.v_rf
        )));
    }
    let mut integrator =
        IntegratorConfig::default_for(c.integrator.field_mode, drive.omega_rf, nu_max);
    if let Some(dt) = c.integrator.dt {
        integrator.dt = dt;
    }
    integrator.coulomb = c.integrator.coulomb;
    integrator.softening_length = c.integrator.softening;
    integrator.deterministic_reduction = c.integrator.deterministic;
    Ok(MeasurementSetup {
        geometry: c.trap,
        drive,
        beams: c.cooling.clone(),
        integrator,
        ejection: EjectionConfig {
            detection_efficiency: c.scan.spectrum.detection_efficiency,
        },
    })
}

pub fn spectrum_scan(c: &ScenarioConfig, source: IonSource, seed: u64) -> SpectrumScan {
    let sp = &c.scan.spectrum;
    let mut recipe = CloudRecipe::from_weights(&source_weights(c, source), sp.ions);
    recipe.initial_temperature = sp.initial_temperature;
    recipe.equilibration = sp.equilibration;
    SpectrumScan {
        frequency_grid: SpectrumScan::grid(sp.f_min, sp.f_max, sp.f_step),
        tickle_amplitude: sp.amplitude,
        amplitude_bands: sp.bands.clone(),
        dwell: sp.dwell,
        recipe,
        realizations: sp.realizations,
        control_runs: sp.control_runs,
        seed,
    }
}

/// Runs one spectrum and returns its table, its peak table and the
/// contrast at the primary species' 2 nu_R.
fn spectrum(
    c: &ScenarioConfig,
    name: &str,
    v_rf: f64,
    source: IonSource,
    seed: u64,
) -> Result<(Vec<CsvTable>, f64)> {
    let drive = c.drive.with_v_rf(v_rf);
    let scan = spectrum_scan(c, source, seed);
    let species: Vec<IonSpecies> = scan
        .recipe
        .populations
        .iter()
        .map(|p| p.0.clone())
        .collect();
    let setup = measurement_setup(c, drive, &species)?;
    let result = run_mass_spectrum(&scan, &setup)?;
    let sp = &c.scan.spectrum;

    let mut t = CsvTable::new(
        format!("{name}.csv"),
        &["frequency_hz", "survival_fraction", "counted", "baseline"],
    );
    for p in &result.points {
        t.push(vec![
            num(p.frequency),
            num(p.survival_fraction),
            int(p.counted),
            int(p.baseline),
        ]);
    }

    let report = find_peaks(&result, sp.peak_threshold, sp.satellite_range);
    let mut peaks = CsvTable::new(
        format!("{name}_peaks.csv"),
        &[
            "center_hz",
            "minimum_hz",
            "contrast_percent",
            "width_hz",
            "offset_from_main_hz",
            "satellite",
            "mass_if_2nu_u",
            "mass_if_nu_u",
        ],
    );
    let main = report.peaks.first().map_or(f64::NAN, |p| p.center);
    for p in &report.peaks {
        let offset = p.center - main;
        let mass = |n| {
            mass_from_peak(p.center, &drive, &c.trap, n).map_or(f64::NAN, |m| m / ATOMIC_MASS_UNIT)
        };
        peaks.push(vec![
            num(p.center),
            num(p.minimum),
            num(p.contrast),
            num(p.width),
            num(offset),
            flag(offset != 0.0 && offset.abs() <= sp.satellite_range),
            num(mass(1)),
            num(mass(2)),
        ]);
    }
    let contrast = primary_contrast(c, &drive, &result);
    Ok((vec![t, peaks], contrast))
}

/// Contrast in an eight-step window around the primary species' 2 nu_R;
/// NaN when the grid does not cover it.
fn primary_contrast(c: &ScenarioConfig, drive: &DriveSettings, result: &SpectrumResult) -> f64 {
    analytic_resonances(&c.species, drive, &c.trap, 1)
        .and_then(|f| contrast(result, f[0], 8.0 * c.scan.spectrum.f_step))
        .unwrap_or(f64::NAN)
}

fn figure_spectra(c: &ScenarioConfig, name: &str, v_rf: f64, seed: u64) -> Result<Vec<CsvTable>> {
    let drive = c.drive.with_v_rf(v_rf);
    let nu = species_frequencies(&c.trap, &drive, &c.species)?.nu_radial;
    let mut tables = Vec::new();
    let mut summary = CsvTable::new(
        format!("{name}_contrast.csv"),
        &[
            "source",
            "v_rf_v",
            "nu_radial_hz",
            "two_nu_radial_hz",
            "contrast_percent",
        ],
    );
    for (k, (source, label)) in [(IonSource::Tppi, "tppi"), (IonSource::Eb, "eb")]
        .into_iter()
        .enumerate()
    {
        let (t, contrast) = spectrum(
            c,
            &format!("{name}_{label}"),
            v_rf,
            source,
            sub_seed(seed, k as u64),
        )?;
        tables.extend(t);
        summary.push(vec![
            label.to_string(),
            num(v_rf),
            num(nu),
            num(2.0 * nu),
            num(contrast),
        ]);
    }
    tables.push(summary);
    Ok(tables)
}

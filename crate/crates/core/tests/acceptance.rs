//! Acceptance runner. Prints one line per criterion and a summary.
//!
//! `cargo test --release --test acceptance -- 2 5` runs a subset.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use common::{line, record, single_ion, spectrum};
use paultrap::constants::{BOLTZMANN, HBAR};
use paultrap::harness::{
    calibrate, load_config, measurement_setup, parse_config, run_preset, run_scenario,
    spectrum_scan, IonSource, Preset, RunOptions, ScenarioConfig,
};
use paultrap::ion_dynamics::{
    coulomb_accelerations, kinetic_temperature, secular_temperature, synthesize_cloud, CloudRecipe,
    CloudState, CoulombMode, Engine, FieldMode, IntegratorConfig, TemperatureSampling,
};
use paultrap::loading::loading_curve;
use paultrap::spectrometry::{
    analytic_resonances, contrast, find_peaks, locate_dip, run_mass_spectrum, SpectrumResult,
    SpectrumScan,
};
use paultrap::trap_model::{
    exact_radial_frequency, mathieu_params, species_frequencies, IonSpecies,
};
use paultrap::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Criteria that fail for physical reasons recorded alongside the
/// project; any other failure makes the runner exit non-zero.
const KNOWN_RED: &[(&str, &str)] = &[
    (
        "2a",
        "at q = 0.43 the true secular line sits 4% above the lowest-order formula",
    ),
    (
        "6c",
        "a pure quadrupole tickle couples only to the decoupled centre-of-mass and breathing modes",
    ),
    (
        "8",
        "the idealized field puts the volume optimum below 120 V",
    ),
    (
        "10",
        "the cloud at 125 V is hotter than at 250 V (weaker confinement, larger cloud)",
    ),
];

struct Outcome {
    id: String,
    pass: bool,
    detail: String,
}

fn outcome(id: &str, pass: bool, detail: String) -> Outcome {
    Outcome {
        id: id.to_string(),
        pass,
        detail,
    }
}

fn reference() -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    load_config(&path).expect("reference config")
}

fn sr(c: &ScenarioConfig) -> IonSpecies {
    c.species.clone()
}

fn secular_frequencies(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    let f = species_frequencies(&c.trap, &c.drive, &sr(c))?;
    Ok(vec![outcome(
        "1",
        (380e3..=420e3).contains(&f.nu_radial) && (f.nu_axial / 20e3 - 1.0).abs() < 1e-12,
        format!(
            "nu_R = {:.2} kHz in [380, 420], nu_A = {:.6} kHz (target 20)",
            f.nu_radial / 1e3,
            f.nu_axial / 1e3
        ),
    )])
}

fn mathieu_cross_check(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    let species = sr(c);
    let d = c.drive;
    let p = mathieu_params(&c.trap, &d, &species);
    let lowest = species_frequencies(&c.trap, &d, &species)?.nu_radial;
    let exact = exact_radial_frequency(&p, &d)?;
    let rf = d.omega_rf / (2.0 * PI);
    let dt = d.rf_period() / 100.0;
    let (mut e, mut s) = single_ion(species.clone(), [2e-6, 0.0, 0.0], d, FieldMode::FullRf, dt);
    let spec = spectrum(&record(&mut e, &mut s, 0, 200_000));
    let (peak, _) = line(&spec, dt, 250e3, 600e3);
    let dev = (peak / lowest - 1.0).abs();
    let mut out = vec![outcome(
        "2a",
        dev <= 0.03,
        format!(
            "q = {:.3}: FFT secular line {:.2} kHz vs lowest-order {:.2} kHz ({:.2}%, limit 3%); exact Mathieu exponent gives {:.2} kHz ({:.2}%)",
            p.q_radial,
            peak / 1e3,
            lowest / 1e3,
            100.0 * dev,
            exact / 1e3,
            100.0 * (peak / exact - 1.0).abs()
        ),
    )];
    let (lower, _) = line(&spec, dt, rf - peak - 50e3, rf - peak + 50e3);
    let (upper, _) = line(&spec, dt, rf + peak - 50e3, rf + peak + 50e3);
    let side = ((lower - (rf - peak)).abs()).max((upper - (rf + peak)).abs());
    let df = 1.0 / (200_000.0 * dt);
    out.push(outcome(
        "2b",
        side <= 2.0 * df,
        format!(
            "sidebands at {:.2} and {:.2} kHz, Omega -+ line within {:.2} kHz (bin {:.2} kHz)",
            lower / 1e3,
            upper / 1e3,
            side / 1e3,
            df / 1e3
        ),
    ));

    let q500 = p.q_radial / d.v_rf;
    let d01 = d.with_v_rf(0.1 / q500);
    let nu = exact_radial_frequency(&mathieu_params(&c.trap, &d01, &species), &d01)?;
    let dt = d01.rf_period() / 100.0;
    let (mut e, mut s) = single_ion(species, [2e-6, 0.0, 0.0], d01, FieldMode::FullRf, dt);
    let spec = spectrum(&record(&mut e, &mut s, 0, 250_000));
    let (_, secular) = line(&spec, dt, 0.5 * nu, 1.5 * nu);
    let (_, lo) = line(&spec, dt, rf - nu - 20e3, rf - nu + 20e3);
    let (_, hi) = line(&spec, dt, rf + nu - 20e3, rf + nu + 20e3);
    let ratio = (lo + hi) / secular;
    out.push(outcome(
        "2c",
        (ratio / 0.05 - 1.0).abs() <= 0.05,
        format!("q = 0.1: micromotion/secular amplitude {ratio:.5} vs q/2 = 0.05 (limit 5%)"),
    ));
    Ok(out)
}

fn energy_conservation(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    let species = sr(c);
    let nu = species_frequencies(&c.trap, &c.drive, &species)?.nu_radial;
    let cfg = IntegratorConfig::default_for(FieldMode::Secular, c.drive.omega_rf, nu);
    let mut e = Engine::new(c.trap, c.drive, Vec::new(), None, cfg)?;
    let mut s = synthesize_cloud(
        &CloudRecipe::single(species, 100),
        &c.trap,
        &c.drive,
        ChaCha8Rng::seed_from_u64(c.master_seed),
    )?;
    let e0 = e.secular_energy(&s);
    let periods = 200;
    let per_period = e.steps_for(1.0 / nu);
    let mut worst: f64 = 0.0;
    for k in 1..=periods {
        e.run(&mut s, per_period)?;
        let rel = ((e.secular_energy(&s) - e0) / e0).abs() / k as f64;
        if k >= 10 {
            worst = worst.max(rel);
        }
    }
    Ok(vec![outcome(
        "3",
        worst < 1e-6,
        format!(
            "100 ions, dt = T_sec/200: max relative drift per period {worst:.2e} over {periods} periods (limit 1e-6)"
        ),
    )])
}

fn doppler_limit(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    let species = sr(c);
    let beam = c.cooling[0];
    let limit = HBAR * beam.gamma / (2.0 * BOLTZMANN);
    let nu = species_frequencies(&c.trap, &c.drive, &species)?.nu_radial;
    let cfg = IntegratorConfig::default_for(FieldMode::Secular, c.drive.omega_rf, nu);
    let seeds = 12;
    let mut total = 0.0;
    for seed in 0..seeds {
        let mut e = Engine::new(c.trap, c.drive, c.cooling.clone(), None, cfg)?;
        let mut s = CloudState::new(vec![species.clone()], seed);
        s.push([1e-6, -1e-6, 2e-6], [0.5, 0.3, -0.4], 0);
        let n = e.steps_for(0.5e-3);
        e.run(&mut s, n)?;
        let samples = 1000;
        let mut t = 0.0;
        for _ in 0..samples {
            e.run(&mut s, 40)?;
            t += kinetic_temperature(&s);
        }
        total += t / samples as f64;
    }
    let mean = total / seeds as f64;
    Ok(vec![outcome(
        "4",
        mean >= 0.5 * limit && mean <= 2.0 * limit,
        format!(
            "single ion, {seeds} seeds: T = {:.3} mK vs hbar gamma / 2 k_B = {:.3} mK (factor 2)",
            mean * 1e3,
            limit * 1e3
        ),
    )])
}

fn quadratic_law(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    let tables = run_preset(c, Preset::Fig5, c.master_seed)?;
    let fit = tables.iter().find(|t| t.name == "fig5_fit.csv").unwrap();
    let k = fit.column("exponent").unwrap()[0];
    let points = fit.column("points").unwrap()[0];
    Ok(vec![outcome(
        "5",
        (k - 2.0).abs() <= 0.05 && points >= 6.0,
        format!("{points} powers, Poisson counting: exponent {k:.4} (2.00 +- 0.05)"),
    )])
}

fn window_scan(
    c: &ScenarioConfig,
    recipe: CloudRecipe,
    center: f64,
    half_width: f64,
    amplitude: f64,
) -> Result<SpectrumResult> {
    let step = c.scan.spectrum.f_step;
    let mut scan: SpectrumScan = spectrum_scan(c, IonSource::Tppi, c.master_seed);
    scan.frequency_grid = SpectrumScan::grid(center - half_width, center + half_width, step);
    scan.tickle_amplitude = amplitude;
    scan.amplitude_bands.clear();
    scan.recipe = CloudRecipe {
        initial_temperature: scan.recipe.initial_temperature,
        equilibration: scan.recipe.equilibration,
        ..recipe
    };
    let species: Vec<IonSpecies> = scan
        .recipe
        .populations
        .iter()
        .map(|p| p.0.clone())
        .collect();
    let setup = measurement_setup(c, c.drive, &species)?;
    run_mass_spectrum(&scan, &setup)
}

/// Tickle amplitudes for the two resonances, taken from the reference
/// scan settings.
fn amplitudes(c: &ScenarioConfig, f2: f64, f1: f64) -> (f64, f64) {
    let s = spectrum_scan(c, IonSource::Tppi, 0);
    (s.amplitude_at(f2), s.amplitude_at(f1))
}

fn mass_spectrum(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    let species = sr(c);
    let n = c.scan.spectrum.ions;
    let step = c.scan.spectrum.f_step;
    let f = analytic_resonances(&species, &c.drive, &c.trap, 2)?;
    let (f2, f1) = (f[0], f[1]);
    let (a2, a1) = amplitudes(c, f2, f1);
    let pure = CloudRecipe::single(species.clone(), n);

    let wide = window_scan(c, pure.clone(), f2, 100e3, a2)?;
    let dip2 = locate_dip(&wide, f2, 8.0 * step)?;
    let control = wide.points[0].baseline as f64 / n as f64;
    let narrow = window_scan(c, pure, f1, 25e3, a1)?;
    let dip1 = locate_dip(&narrow, f1, 8.0 * step)?;
    let report = find_peaks(&wide, c.scan.spectrum.peak_threshold, 100e3);
    let pure_contrast = contrast(&wide, f2, 8.0 * step)?;

    let mut out = vec![
        outcome(
            "6a",
            (dip2.center - f2).abs() <= step && (dip1.center - f1).abs() <= step,
            format!(
                "N = {n}: dips at {:.2} kHz (2nu_R = {:.2}, {a2} V) and {:.2} kHz (nu_R = {:.2}, {a1} V), tolerance {:.0} kHz",
                dip2.center / 1e3,
                f2 / 1e3,
                dip1.center / 1e3,
                f1 / 1e3,
                step / 1e3
            ),
        ),
        outcome(
            "6b",
            control > 0.97,
            format!("no-tickle control survival {control:.3} (> 0.97)"),
        ),
        outcome(
            "6c",
            !report.satellites.is_empty(),
            format!(
                "secondary dips within 100 kHz of 2nu_R: {:?} kHz",
                report
                    .satellites
                    .iter()
                    .map(|s| (s / 100.0).round() / 10.0)
                    .collect::<Vec<_>>()
            ),
        ),
        outcome(
            "7a",
            pure_contrast >= 95.0,
            format!("pure cloud contrast {pure_contrast:.1}% (>= 95%)"),
        ),
    ];

    let mixture = CloudRecipe::from_weights(
        &[
            (species, 0.66),
            (IonSpecies::singly_charged("104u", 104.0), 0.17),
            (IonSpecies::singly_charged("136u", 136.0), 0.17),
        ],
        n,
    );
    let mixed = window_scan(c, mixture, f2, 40e3, a2)?;
    let mixed_contrast = contrast(&mixed, f2, 8.0 * step)?;
    out.push(outcome(
        "7b",
        (mixed_contrast - 66.0).abs() <= 8.0,
        format!("66/34 mixture (104 u, 136 u impurities) contrast {mixed_contrast:.1}% (66 +- 8)"),
    ));
    Ok(out)
}

fn volume_optimum(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    let tables = run_preset(c, Preset::Volume, c.master_seed)?;
    let t = &tables[0];
    let v = t.column("v_rf_v").unwrap();
    let vol = t.column("volume_m3").unwrap();
    let k = (0..vol.len())
        .max_by(|&a, &b| vol[a].total_cmp(&vol[b]))
        .unwrap();
    let strict = k > 0 && k + 1 < vol.len() && vol[k] > vol[k - 1] && vol[k] > vol[k + 1];
    Ok(vec![outcome(
        "8",
        strict && (120.0..=260.0).contains(&v[k]),
        format!(
            "volume maximum {:.3e} m^3 at {} V over {}-{} V (strict interior: {strict}; window 120-260 V)",
            vol[k],
            v[k],
            v[0],
            v[v.len() - 1]
        ),
    )])
}

fn loading_saturation(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    let cal = calibrate(c)?;
    let rate = cal.rate();
    let sat: Vec<(f64, f64, f64)> = cal
        .sweep
        .iter()
        .map(|&(v, _, _, cap)| {
            let m = cal.calibration.model(rate, cap);
            (v, m.saturation(), m.time_to_fraction(0.95))
        })
        .collect();
    let k = (0..sat.len())
        .max_by(|&a, &b| sat[a].1.total_cmp(&sat[b].1))
        .unwrap();
    let (v, peak, t95) = sat[k];
    let interior = k > 0 && k + 1 < sat.len();
    let (_, _, _, cap) = cal.sweep[k];
    let model = cal.calibration.model(rate, cap);
    let times: Vec<f64> = (0..=600).map(|i| i as f64 * 0.1).collect();
    let curve = loading_curve(&model, &times)?;
    let monotone = curve.windows(2).all(|w| w[1] >= w[0]) && curve.iter().all(|&n| n <= peak);
    Ok(vec![outcome(
        "9",
        monotone && interior && (20.0..=60.0).contains(&t95) && (peak / 4e4 - 1.0).abs() <= 0.02,
        format!(
            "N_sat peaks at {v} V (interior: {interior}) with {peak:.0} ions (4e4 +- 2%); 95% reached at {t95:.1} s (20-60 s); monotone: {monotone}"
        ),
    )])
}

/// Phase-sampled temperature after settling with the full RF field, or
/// infinity once the cloud has boiled out of the trap.
fn rf_temperature(c: &ScenarioConfig, v_rf: f64, seed: u64) -> Result<(f64, usize)> {
    let d = c.drive.with_v_rf(v_rf);
    let mut s = synthesize_cloud(
        &CloudRecipe::single(sr(c), 200),
        &c.trap,
        &d,
        ChaCha8Rng::seed_from_u64(seed),
    )?;
    let cfg = IntegratorConfig::default_for(FieldMode::FullRf, d.omega_rf, 1.0);
    let mut e = Engine::new(c.trap, d, c.cooling.clone(), None, cfg)?;
    let n = e.steps_for(2e-3);
    e.run(&mut s, n)?;
    let sampling = TemperatureSampling {
        samples: 50,
        stride_periods: 50,
    };
    match secular_temperature(&mut e, &mut s, sampling) {
        Ok(t) => Ok((t, s.len())),
        Err(Error::TooFewIons { .. }) => Ok((f64::INFINITY, 0)),
        Err(e) => Err(e),
    }
}

fn rf_heating(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    let voltages = [125.0, 250.0, 500.0];
    let seeds = [1u64, 2];
    let mut temps = Vec::new();
    let mut text = Vec::new();
    for v in voltages {
        let mut t = 0.0;
        let mut left = 0;
        for seed in seeds {
            let (ti, n) = rf_temperature(c, v, seed)?;
            t += ti / seeds.len() as f64;
            left += n;
        }
        temps.push(t);
        text.push(format!(
            "{v} V: {:.3} mK ({left}/{} ions)",
            t * 1e3,
            200 * seeds.len()
        ));
    }
    let monotone = temps.windows(2).all(|w| w[1] >= w[0]);
    Ok(vec![outcome(
        "10",
        monotone,
        format!("N = 200, full RF, seeds {seeds:?}: {}", text.join(", ")),
    )])
}

fn performance(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    let species = sr(c);
    let mut s = synthesize_cloud(
        &CloudRecipe::single(species.clone(), 2000),
        &c.trap,
        &c.drive,
        ChaCha8Rng::seed_from_u64(c.master_seed),
    )?;
    let cfg = IntegratorConfig::default_for(FieldMode::FullRf, c.drive.omega_rf, 1.0);
    let mut e = Engine::new(c.trap, c.drive, c.cooling.clone(), None, cfg)?;
    e.run(&mut s, 10)?;
    let steps = 400;
    let t0 = Instant::now();
    e.run(&mut s, steps)?;
    let rate = steps as f64 / t0.elapsed().as_secs_f64();

    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let cloud = synthesize_cloud(
            &CloudRecipe::single(species.clone(), 100),
            &c.trap,
            &c.drive,
            ChaCha8Rng::seed_from_u64(seed),
        )?;
        let mut cfg = cfg;
        cfg.coulomb = CoulombMode::Direct;
        let direct = coulomb_accelerations(&cloud, &cfg);
        cfg.coulomb = CoulombMode::CellList;
        let cells = coulomb_accelerations(&cloud, &cfg);
        for (a, b) in direct.iter().zip(&cells) {
            let norm = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            let diff =
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            worst = worst.max(diff / norm);
        }
    }
    Ok(vec![
        outcome(
            "11a",
            rate >= 200.0,
            format!(
                "N = 2000 full RF direct Coulomb: {rate:.0} steps/s on {} thread(s) (>= 200)",
                rayon::current_num_threads()
            ),
        ),
        outcome(
            "11b",
            worst < 1e-6,
            format!("cell list vs direct, 5 clouds of 100 ions: max relative error {worst:.2e} (< 1e-6)"),
        ),
    ])
}

fn determinism(c: &ScenarioConfig) -> Result<Vec<Outcome>> {
    // Spectral presets on a short grid with a small cloud.
    let mut small = c.clone();
    let sp = &mut small.scan.spectrum;
    sp.ions = 24;
    sp.f_min = 740e3;
    sp.f_max = 780e3;
    sp.f_step = 20e3;
    sp.dwell = 0.1e-3;
    sp.equilibration = 0.05e-3;
    sp.control_runs = 1;
    sp.bands.clear();
    sp.fig6b_v_rf = 500.0;

    let dir = tempfile::tempdir().map_err(Error::from)?;
    let config_path = dir.path().join("scenario.toml");
    std::fs::write(&config_path, paultrap::harness::to_toml(&small))?;
    let small = parse_config(&std::fs::read_to_string(&config_path)?)?;
    let mut differing = Vec::new();
    for preset in Preset::ALL {
        let mut files = Vec::new();
        for run in ["a", "b"] {
            let out = dir.path().join(format!("{}_{run}", preset.name()));
            let record = run_scenario(
                &small,
                preset,
                &RunOptions {
                    config_path: config_path.clone(),
                    output_directory: out.clone(),
                    seed: 17,
                },
            )?;
            let bytes: Vec<Vec<u8>> = record
                .outputs
                .iter()
                .map(|f| std::fs::read(out.join(f)))
                .collect::<std::io::Result<_>>()?;
            files.push((record.outputs, bytes));
        }
        if files[0] != files[1] {
            differing.push(preset.name());
        }
    }
    Ok(vec![outcome(
        "12",
        differing.is_empty(),
        format!(
            "{} presets run twice with seed 17; differing CSV: {differing:?}",
            Preset::ALL.len()
        ),
    )])
}

type Check = fn(&ScenarioConfig) -> Result<Vec<Outcome>>;

fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let checks: [(&str, &str, Check); 12] = [
        ("1", "secular frequencies", secular_frequencies),
        ("2", "Mathieu cross-check", mathieu_cross_check),
        ("3", "energy conservation", energy_conservation),
        ("4", "Doppler limit", doppler_limit),
        ("5", "quadratic loading law", quadratic_law),
        ("6", "mass-spectrum peaks and contrast", mass_spectrum),
        ("8", "trap-volume optimum", volume_optimum),
        ("9", "loading saturation", loading_saturation),
        ("10", "RF-heating trend", rf_heating),
        ("11", "performance and cell list", performance),
        ("12", "determinism", determinism),
        ("7", "(reported with 6)", |_| Ok(Vec::new())),
    ];
    let config = reference();
    let mut all = Vec::new();
    let mut errors = 0;
    for (id, name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| f == id || (id == "6" && f == "7")) {
            continue;
        }
        let t0 = Instant::now();
        match check(&config) {
            Ok(lines) => {
                for o in lines {
                    let known = KNOWN_RED.iter().find(|k| k.0 == o.id);
                    let verdict = match (o.pass, known) {
                        (true, _) => "PASS".to_string(),
                        (false, Some(_)) => "FAIL (known)".to_string(),
                        (false, None) => "FAIL".to_string(),
                    };
                    println!("criterion {:<4} {verdict:<13} {}", o.id, o.detail);
                    if let (false, Some(k)) = (o.pass, known) {
                        println!("               reason: {}", k.1);
                    }
                    all.push(o);
                }
                if id != "7" {
                    println!(
                        "               [{name}: {:.1} s]",
                        t0.elapsed().as_secs_f64()
                    );
                }
            }
            Err(e) => {
                errors += 1;
                println!("criterion {id:<4} ERROR         {name}: {e}");
            }
        }
    }
    let passed = all.iter().filter(|o| o.pass).count();
    let unexpected: Vec<&str> = all
        .iter()
        .filter(|o| !o.pass && !KNOWN_RED.iter().any(|k| k.0 == o.id))
        .map(|o| o.id.as_str())
        .collect();
    let known: Vec<&str> = all
        .iter()
        .filter(|o| !o.pass && KNOWN_RED.iter().any(|k| k.0 == o.id))
        .map(|o| o.id.as_str())
        .collect();
    println!(
        "acceptance: {passed}/{} checks pass; known failures {known:?}; unexpected failures {unexpected:?}; errors {errors}",
        all.len()
    );
    if !unexpected.is_empty() || errors > 0 {
        std::process::exit(1);
    }
}

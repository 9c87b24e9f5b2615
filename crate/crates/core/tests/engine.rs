mod common;

use std::f64::consts::PI;

use common::{floor, line, record, single_ion, spectrum, zero_crossing_frequency};
use paultrap::constants::{BOLTZMANN, ELEMENTARY_CHARGE, HBAR, VACUUM_PERMITTIVITY};
use paultrap::ion_dynamics::{
    eject_and_count, equilibrate, kinetic_temperature, radial_energy, read_checkpoint,
    secular_temperature, synthesize_cloud, write_checkpoint, CloudRecipe, CloudState, CoolingBeam,
    CoulombMode, EjectionConfig, Engine, FieldMode, IntegratorConfig, TemperatureSampling,
    TickleDrive,
};
use paultrap::trap_model::{
    exact_radial_frequency, mathieu_params, species_frequencies, DriveSettings, IonSpecies,
    TrapGeometry,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn sr() -> IonSpecies {
    IonSpecies::strontium88()
}

fn cloud(n: usize, v_rf: f64, seed: u64) -> CloudState {
    synthesize_cloud(
        &CloudRecipe::single(sr(), n),
        &TrapGeometry::reference(),
        &DriveSettings::reference(v_rf),
        ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

fn secular_engine(v_rf: f64, beams: Vec<CoolingBeam>) -> Engine {
    let g = TrapGeometry::reference();
    let d = DriveSettings::reference(v_rf);
    let nu = species_frequencies(&g, &d, &sr()).unwrap().nu_radial;
    let cfg = IntegratorConfig::default_for(FieldMode::Secular, d.omega_rf, nu);
    Engine::new(g, d, beams, None, cfg).unwrap()
}

#[test]
fn secular_motion_is_harmonic_at_both_frequencies() {
    let d = DriveSettings::reference(500.0);
    let f = species_frequencies(&TrapGeometry::reference(), &d, &sr()).unwrap();
    let dt = 1.0 / f.nu_radial / 200.0;
    let (mut e, mut s) = single_ion(sr(), [1e-6, 0.0, 1e-6], d, FieldMode::Secular, dt);
    let steps = (100.0 / f.nu_axial / dt) as usize;
    let mut x = Vec::with_capacity(steps);
    let mut z = Vec::with_capacity(steps);
    for _ in 0..steps {
        e.step(&mut s).unwrap();
        x.push(s.positions[0][0]);
        z.push(s.positions[0][2]);
    }
    let nx = zero_crossing_frequency(&x[..(100.0 / f.nu_radial / dt) as usize + 2], dt);
    let nz = zero_crossing_frequency(&z, dt);
    assert!(
        (nx / f.nu_radial - 1.0).abs() < 1e-3,
        "{nx} vs {}",
        f.nu_radial
    );
    assert!(
        (nz / f.nu_axial - 1.0).abs() < 1e-3,
        "{nz} vs {}",
        f.nu_axial
    );
}

#[test]
fn full_rf_spectrum_shows_secular_line_and_sidebands() {
    let d = DriveSettings::reference(500.0);
    let p = mathieu_params(&TrapGeometry::reference(), &d, &sr());
    let exact = exact_radial_frequency(&p, &d).unwrap();
    let rf = d.omega_rf / (2.0 * PI);
    let dt = d.rf_period() / 100.0;
    let (mut e, mut s) = single_ion(sr(), [2e-6, 0.0, 0.0], d, FieldMode::FullRf, dt);
    let x = record(&mut e, &mut s, 0, 200_000);
    let spec = spectrum(&x);
    let (nu, a0) = line(&spec, dt, 250e3, 600e3);
    assert!((nu / exact - 1.0).abs() < 0.01, "{nu} vs {exact}");
    let noise = floor(&spec, dt, 1.0e6, 1.8e6);
    for target in [rf - exact, rf + exact] {
        let (f, a) = line(&spec, dt, target - 50e3, target + 50e3);
        assert!((f - target).abs() < 0.01 * target, "{f} vs {target}");
        assert!(a > 100.0 * noise && a < a0, "{a} {noise} {a0}");
    }
}

#[test]
fn micromotion_ratio_is_half_q() {
    let g = TrapGeometry::reference();
    let q500 = mathieu_params(&g, &DriveSettings::reference(500.0), &sr()).q_radial;
    let d = DriveSettings::reference(500.0 * 0.1 / q500);
    let p = mathieu_params(&g, &d, &sr());
    assert!((p.q_radial - 0.1).abs() < 1e-12);
    let nu = exact_radial_frequency(&p, &d).unwrap();
    let rf = d.omega_rf / (2.0 * PI);
    let dt = d.rf_period() / 100.0;
    let (mut e, mut s) = single_ion(sr(), [2e-6, 0.0, 0.0], d, FieldMode::FullRf, dt);
    let x = record(&mut e, &mut s, 0, 250_000);
    let spec = spectrum(&x);
    let (_, secular) = line(&spec, dt, 0.5 * nu, 1.5 * nu);
    let (_, lower) = line(&spec, dt, rf - nu - 20e3, rf - nu + 20e3);
    let (_, upper) = line(&spec, dt, rf + nu - 20e3, rf + nu + 20e3);
    let ratio = (lower + upper) / secular;
    assert!((ratio / (0.5 * p.q_radial) - 1.0).abs() < 0.05, "{ratio}");
}

#[test]
fn lighter_species_oscillates_twice_as_fast() {
    let d = DriveSettings::reference(150.0);
    let dt = d.rf_period() / 100.0;
    let mut freq = Vec::new();
    for mass in [88.0, 44.0] {
        let species = IonSpecies::singly_charged("X", mass);
        let (mut e, mut s) = single_ion(species, [2e-6, 0.0, 0.0], d, FieldMode::FullRf, dt);
        let x = record(&mut e, &mut s, 0, 400_000);
        freq.push(line(&spectrum(&x), dt, 50e3, 600e3).0);
    }
    assert!((freq[1] / freq[0] / 2.0 - 1.0).abs() < 0.02, "{freq:?}");
}

#[test]
fn two_ions_settle_at_analytic_spacing() {
    let d = DriveSettings::reference(500.0);
    let g = TrapGeometry::reference();
    let nu_a = species_frequencies(&g, &d, &sr()).unwrap().nu_axial;
    let w = 2.0 * PI * nu_a;
    let expected =
        (ELEMENTARY_CHARGE.powi(2) / (2.0 * PI * VACUUM_PERMITTIVITY * sr().mass * w * w)).cbrt();
    assert!((expected - 58.48e-6).abs() < 0.05e-6);

    let mut e = secular_engine(500.0, CoolingBeam::default_pair());
    let mut s = CloudState::new(vec![sr()], 3);
    s.push([0.0, 0.0, 20e-6], [0.0; 3], 0);
    s.push([0.0, 0.0, -20e-6], [0.0; 3], 0);
    let n = e.steps_for(1e-3);
    e.run(&mut s, n).unwrap();
    let mut sum = 0.0;
    let samples = 2000;
    for _ in 0..samples {
        e.run(&mut s, 50).unwrap();
        let r: f64 = (0..3)
            .map(|k| (s.positions[0][k] - s.positions[1][k]).powi(2))
            .sum::<f64>()
            .sqrt();
        sum += r;
    }
    let spacing = sum / samples as f64;
    assert!(
        (spacing / expected - 1.0).abs() < 5e-3,
        "{spacing} vs {expected}"
    );
}

fn energy_drift_per_period(dt: Option<f64>) -> f64 {
    let mut e = secular_engine(500.0, Vec::new());
    if let Some(dt) = dt {
        e.config.dt = dt;
    }
    let nu = species_frequencies(&e.geometry, &e.drive, &sr())
        .unwrap()
        .nu_radial;
    let mut s = cloud(100, 500.0, 4);
    let e0 = e.secular_energy(&s);
    let periods = 100;
    let steps = e.steps_for(periods as f64 / nu);
    e.run(&mut s, steps).unwrap();
    assert_eq!(s.len(), 100);
    ((e.secular_energy(&s) - e0) / e0).abs() / periods as f64
}

#[test]
fn energy_is_conserved_at_default_step() {
    let drift = energy_drift_per_period(None);
    assert!(drift < 1e-6, "{drift:e}");
}

#[test]
fn energy_is_conserved_at_rf_step() {
    let d = DriveSettings::reference(500.0);
    let drift = energy_drift_per_period(Some(d.rf_period() / 100.0));
    assert!(drift < 1e-6, "{drift:e}");
}

#[test]
fn single_ion_cools_to_doppler_limit() {
    let limit = HBAR * 2.0 * PI * 20.2e6 / (2.0 * BOLTZMANN);
    assert!((limit - 0.485e-3).abs() < 0.005e-3);
    let mut total = 0.0;
    let seeds = 10;
    for seed in 0..seeds {
        let mut e = secular_engine(500.0, CoolingBeam::default_pair());
        let mut s = CloudState::new(vec![sr()], seed);
        s.push([1e-6, -1e-6, 2e-6], [0.5, 0.3, -0.4], 0);
        let n = e.steps_for(0.5e-3);
        e.run(&mut s, n).unwrap();
        let mut t = 0.0;
        let samples = 1000;
        for _ in 0..samples {
            e.run(&mut s, 40).unwrap();
            t += kinetic_temperature(&s);
        }
        total += t / samples as f64;
    }
    let mean = total / seeds as f64;
    assert!(
        mean > 0.5 * limit && mean < 2.0 * limit,
        "{mean:e} vs {limit:e}"
    );
}

fn tickled_radial_energy(factor: f64) -> f64 {
    let mut e = secular_engine(500.0, Vec::new());
    let nu = species_frequencies(&e.geometry, &e.drive, &sr())
        .unwrap()
        .nu_radial;
    e.tickle = Some(TickleDrive {
        frequency: factor * nu,
        amplitude: 0.06,
        duration: 10e-3,
        start: 0.0,
    });
    let mut s = cloud(50, 500.0, 6);
    let n = e.steps_for(10e-3);
    e.run(&mut s, n).unwrap();
    assert_eq!(s.len(), 50);
    radial_energy(&s, &e)
}

#[test]
fn parametric_resonance_heats_far_more_than_off_resonance() {
    let on = tickled_radial_energy(2.0);
    let off = tickled_radial_energy(1.5);
    assert!(on > 10.0 * off, "{on:e} vs {off:e}");
}

#[test]
fn zero_amplitude_tickle_changes_nothing() {
    let mut a = secular_engine(500.0, Vec::new());
    let mut b = a.clone();
    b.tickle = Some(TickleDrive {
        frequency: 700e3,
        amplitude: 0.0,
        duration: 1.0,
        start: 0.0,
    });
    let mut sa = cloud(20, 500.0, 2);
    let mut sb = sa.clone();
    a.run(&mut sa, 500).unwrap();
    b.run(&mut sb, 500).unwrap();
    assert_eq!(sa, sb);
}

#[test]
fn checkpoint_resume_is_bit_identical() {
    let d = DriveSettings::reference(500.0);
    let cfg = IntegratorConfig::default_for(FieldMode::FullRf, d.omega_rf, 1.0);
    let mk = || {
        Engine::new(
            TrapGeometry::reference(),
            d,
            CoolingBeam::default_pair(),
            None,
            cfg,
        )
        .unwrap()
    };
    let mut e = mk();
    let mut s = cloud(30, 500.0, 8);
    e.run(&mut s, 1000).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&s, &mut bytes).unwrap();
    e.run(&mut s, 1000).unwrap();

    let mut restored = read_checkpoint(bytes.as_slice()).unwrap();
    let mut fresh = mk();
    fresh.run(&mut restored, 1000).unwrap();
    assert_eq!(restored, s);
    for (a, b) in restored.positions.iter().zip(&s.positions) {
        for k in 0..3 {
            assert_eq!(a[k].to_bits(), b[k].to_bits());
        }
    }
}

#[test]
fn trajectories_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let d = DriveSettings::reference(500.0);
            let cfg = IntegratorConfig::default_for(FieldMode::FullRf, d.omega_rf, 1.0);
            let mut e = Engine::new(
                TrapGeometry::reference(),
                d,
                CoolingBeam::default_pair(),
                None,
                cfg,
            )
            .unwrap();
            let mut s = cloud(600, 500.0, 9);
            e.run(&mut s, 30).unwrap();
            s
        })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
}

#[test]
fn cell_list_matches_direct_inside_engine() {
    let mut a = secular_engine(500.0, Vec::new());
    let mut b = a.clone();
    b.config.coulomb = CoulombMode::CellList;
    let mut sa = cloud(100, 500.0, 10);
    let mut sb = sa.clone();
    a.run(&mut sa, 200).unwrap();
    b.run(&mut sb, 200).unwrap();
    let scale = sa
        .positions
        .iter()
        .map(|p| p[0].abs().max(p[1].abs()).max(p[2].abs()))
        .fold(0.0, f64::max);
    for (p, q) in sa.positions.iter().zip(&sb.positions) {
        for k in 0..3 {
            assert!((p[k] - q[k]).abs() < 1e-6 * scale);
        }
    }
}

#[test]
fn binomial_detection_statistics() {
    let geometry = TrapGeometry::reference();
    let config = EjectionConfig {
        detection_efficiency: 0.5,
    };
    let counts: Vec<f64> = (0..400)
        .map(|seed| {
            let mut s = CloudState::new(vec![sr()], seed);
            for _ in 0..1000 {
                s.push([0.0; 3], [0.0; 3], 0);
            }
            eject_and_count(&mut s, &config, &geometry).unwrap() as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
    assert!((mean - 500.0).abs() < 3.0, "{mean}");
    assert!(
        (var.sqrt() / 250f64.sqrt() - 1.0).abs() < 0.15,
        "{}",
        var.sqrt()
    );
}

#[test]
fn unbound_ions_are_not_counted() {
    let geometry = TrapGeometry::reference();
    let mut s = CloudState::new(vec![sr()], 1);
    s.push([0.0; 3], [0.0; 3], 0);
    s.push([2.0 * geometry.r0, 0.0, 0.0], [0.0; 3], 0);
    let all = EjectionConfig {
        detection_efficiency: 1.0,
    };
    assert_eq!(eject_and_count(&mut s.clone(), &all, &geometry).unwrap(), 1);
    let none = EjectionConfig {
        detection_efficiency: 0.0,
    };
    assert_eq!(eject_and_count(&mut s, &none, &geometry).unwrap(), 0);
    assert!(s.is_empty());
}

#[test]
fn secular_temperature_of_resting_ion_is_zero() {
    let mut e = secular_engine(500.0, Vec::new());
    let mut s = CloudState::new(vec![sr()], 1);
    s.push([0.0; 3], [0.0; 3], 0);
    let t = secular_temperature(&mut e, &mut s, TemperatureSampling::default()).unwrap();
    assert_eq!(t, 0.0);
}

#[test]
fn secular_temperature_recovers_injected_maxwellian() {
    let mut e = secular_engine(500.0, Vec::new());
    e.config.coulomb = CoulombMode::Off;
    let f = species_frequencies(&e.geometry, &e.drive, &sr()).unwrap();
    let temperature = 1e-3;
    let m = sr().mass;
    let sv = (BOLTZMANN * temperature / m).sqrt();
    let spread = |nu: f64| sv / (2.0 * PI * nu);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut s = CloudState::new(vec![sr()], 12);
    for _ in 0..1000 {
        let p = [
            spread(f.nu_radial) * g(),
            spread(f.nu_radial) * g(),
            spread(f.nu_axial) * g(),
        ];
        let v = [sv * g(), sv * g(), sv * g()];
        s.push(p, v, 0);
    }
    let t = secular_temperature(&mut e, &mut s, TemperatureSampling::default()).unwrap();
    assert!((t / temperature - 1.0).abs() < 0.1, "{t:e}");
}

#[test]
fn zero_duration_equilibration_leaves_state_alone() {
    let mut e = secular_engine(500.0, CoolingBeam::default_pair());
    let mut s = cloud(20, 500.0, 13);
    let before = s.clone();
    let report = equilibrate(&mut e, &mut s, 0.0).unwrap();
    assert_eq!(s, before);
    assert_eq!(report.bound, 20);
    assert_eq!(report.lost, 0);
}

#[test]
fn cooled_cloud_stays_bound_at_130_volts() {
    let mut e = secular_engine(130.0, CoolingBeam::default_pair());
    let mut s = cloud(100, 130.0, 14);
    let report = equilibrate(&mut e, &mut s, 50e-3).unwrap();
    assert_eq!(report.bound, 100);
    assert_eq!(report.lost, 0);
}

#[test]
fn invalid_integrator_settings_are_rejected() {
    let d = DriveSettings::reference(500.0);
    let mut cfg = IntegratorConfig::default_for(FieldMode::FullRf, d.omega_rf, 1.0);
    cfg.dt = d.rf_period() / 20.0;
    assert!(Engine::new(TrapGeometry::reference(), d, Vec::new(), None, cfg).is_err());
    cfg.dt = -1.0;
    assert!(Engine::new(TrapGeometry::reference(), d, Vec::new(), None, cfg).is_err());
}

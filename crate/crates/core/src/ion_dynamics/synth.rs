//! Synthesis of a fresh ion cloud close to its cold-fluid equilibrium:
//! a uniform spheroid at the space-charge-limited density whose aspect
//! ratio balances the trap curvatures, with Maxwellian velocities.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::CloudState;
use crate::constants::{BOLTZMANN, VACUUM_PERMITTIVITY};
use crate::error::{Error, Result};
use crate::trap_model::{
    mathieu_params, species_frequencies, stability_check, DriveSettings, IonSpecies, TrapGeometry,
};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CloudRecipe {
    /// Species and number of ions of each.
    pub populations: Vec<(IonSpecies, usize)>,
    /// Temperature of the initial velocity distribution, K.
    pub initial_temperature: f64,
    /// Cooling time before any measurement, s.
    pub equilibration: f64,
}

impl CloudRecipe {
    pub fn single(species: IonSpecies, n: usize) -> Self {
        Self {
            populations: vec![(species, n)],
            initial_temperature: 10e-3,
            equilibration: 0.3e-3,
        }
    }

    /// Splits `n` ions over a weighted species list by largest remainder.
    pub fn from_weights(weights: &[(IonSpecies, f64)], n: usize) -> Self {
        let total: f64 = weights.iter().map(|w| w.1).sum();
        let exact: Vec<f64> = weights.iter().map(|w| w.1 / total * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut rest = n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            counts[i] += 1;
            rest -= 1;
        }
        Self {
            populations: weights.iter().map(|w| w.0.clone()).zip(counts).collect(),
            ..Self::single(weights[0].0.clone(), 0)
        }
    }

    pub fn total(&self) -> usize {
        self.populations.iter().map(|p| p.1).sum()
    }
}

/// Space-charge-limited density `eps0 m (2 w_r^2 + w_z^2) / Q^2`, 1/m^3.
pub fn cold_fluid_density(nu_radial: f64, nu_axial: f64, species: &IonSpecies) -> f64 {
    let wr = 2.0 * PI * nu_radial;
    let wz = 2.0 * PI * nu_axial;
    VACUUM_PERMITTIVITY * species.mass * (2.0 * wr * wr + wz * wz)
        / (species.charge * species.charge)
}

/// Axial depolarization factor of a uniformly charged spheroid with
/// aspect ratio `alpha` = (axial semi-axis) / (radial semi-axis).
fn axial_depolarization(alpha: f64) -> f64 {
    let prolate = alpha >= 1.0;
    let e2 = if prolate {
        1.0 - 1.0 / (alpha * alpha)
    } else {
        1.0 / (alpha * alpha) - 1.0
    };
    let e = e2.sqrt();
    if e < 1e-2 {
        // series in e^2 avoids the cancellation near the sphere
        let s = if prolate { 1.0 } else { -1.0 };
        let sum = 1.0 / 3.0 + s * e2 / 5.0 + e2 * e2 / 7.0 + s * e2 * e2 * e2 / 9.0;
        return (1.0 - s * e2) * sum;
    }
    if prolate {
        (1.0 - e2) / (e2 * e) * (e.atanh() - e)
    } else {
        (1.0 + e2) / (e2 * e) * (e - e.atan())
    }
}

/// Aspect ratio of the cold plasma spheroid for the given secular
/// frequencies: the axial depolarization factor equals w_z^2 / w_p^2.
pub fn cold_fluid_aspect_ratio(nu_radial: f64, nu_axial: f64) -> f64 {
    let target = nu_axial * nu_axial / (2.0 * nu_radial * nu_radial + nu_axial * nu_axial);
    // N_z decreases monotonically with alpha.
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if axial_depolarization(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Builds a cloud from the recipe. Species outside the stability region
/// cannot be trapped and are not placed.
pub fn synthesize_cloud(
    recipe: &CloudRecipe,
    geometry: &TrapGeometry,
    drive: &DriveSettings,
    mut rng: ChaCha8Rng,
) -> Result<CloudState> {
    let species: Vec<IonSpecies> = recipe.populations.iter().map(|p| p.0.clone()).collect();
    let trappable: Vec<bool> = species
        .iter()
        .map(|s| stability_check(&mathieu_params(geometry, drive, s)).stable)
        .collect();
    let mut labels: Vec<u32> = Vec::new();
    for (k, (_, n)) in recipe.populations.iter().enumerate() {
        if trappable[k] {
            labels.extend(std::iter::repeat_n(k as u32, *n));
        }
    }
    let total = labels.len();
    if total == 0 {
        return Ok(CloudState::with_rng(species, rng));
    }
    let reference = (0..species.len())
        .filter(|&k| trappable[k])
        .max_by_key(|&k| (recipe.populations[k].1, std::cmp::Reverse(k)))
        .ok_or_else(|| Error::UnstableParameters("no trappable species".into()))?;
    let freqs = species_frequencies(geometry, drive, &species[reference])?;
    let n0 = cold_fluid_density(freqs.nu_radial, freqs.nu_axial, &species[reference]);
    let alpha = cold_fluid_aspect_ratio(freqs.nu_radial, freqs.nu_axial);
    let radius = (3.0 * total as f64 / (4.0 * PI * n0 * alpha)).cbrt();
    let semi = [radius, radius, alpha * radius];
    if semi[0] >= geometry.r0 || semi[2] >= geometry.z0 {
        return Err(Error::invalid(format!(
            "cloud of {total} ions ({:.2e} x {:.2e} m) does not fit in the trap",
            semi[0], semi[2]
        )));
    }
    let spacing = (3.0 / (4.0 * PI * n0)).cbrt();

    let mut state = CloudState::with_rng(species, rng.clone());
    let mut min_sep = 0.6 * spacing;
    let mut positions: Vec<[f64; 3]> = Vec::with_capacity(total);
    let mut attempts = 0usize;
    while positions.len() < total {
        let u: [f64; 3] = [0; 3].map(|_| 2.0 * rng.random::<f64>() - 1.0);
        if u.iter().map(|c| c * c).sum::<f64>() > 1.0 {
            continue;
        }
        let p = [u[0] * semi[0], u[1] * semi[1], u[2] * semi[2]];
        attempts += 1;
        let ok = positions.iter().all(|q| {
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            d2 >= min_sep * min_sep
        });
        if ok {
            positions.push(p);
        } else if attempts > 200 * total {
            min_sep *= 0.8;
            attempts = 0;
        }
    }
    for (p, &label) in positions.into_iter().zip(&labels) {
        let sigma =
            (BOLTZMANN * recipe.initial_temperature / state.species[label as usize].mass).sqrt();
        let v = [0; 3].map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        });
        state.push(p, v, label);
    }
    state.rng = rng;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn depolarization_limits() {
        assert!((axial_depolarization(1.0) - 1.0 / 3.0).abs() < 1e-9);
        assert!((axial_depolarization(1.001) - 1.0 / 3.0).abs() < 1e-3);
        assert!((axial_depolarization(0.999) - 1.0 / 3.0).abs() < 1e-3);
        assert!(axial_depolarization(50.0) < 2e-3);
        assert!(axial_depolarization(0.02) > 0.95);
    }

    #[test]
    fn isotropic_trap_gives_sphere() {
        // w_z^2 / w_p^2 = 1/3 when w_r = w_z
        assert!((cold_fluid_aspect_ratio(1e5, 1e5) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn density_at_400_and_20_khz() {
        let n0 = cold_fluid_density(400e3, 20e3, &IonSpecies::strontium88());
        assert!((n0 - 6.4e14).abs() / 6.4e14 < 0.01, "{n0:e}");
    }

    #[test]
    fn largest_remainder_split() {
        let w = vec![
            (IonSpecies::strontium88(), 0.66),
            (IonSpecies::singly_charged("a", 44.0), 0.17),
            (IonSpecies::singly_charged("b", 104.0), 0.17),
        ];
        let r = CloudRecipe::from_weights(&w, 200);
        assert_eq!(r.total(), 200);
        assert_eq!(r.populations[0].1, 132);
    }

    #[test]
    fn unstable_species_are_not_placed() {
        let g = TrapGeometry::reference();
        let d = DriveSettings::reference(500.0);
        let recipe = CloudRecipe {
            populations: vec![
                (IonSpecies::strontium88(), 50),
                (IonSpecies::singly_charged("18", 18.0), 20),
            ],
            ..CloudRecipe::single(IonSpecies::strontium88(), 0)
        };
        let s = synthesize_cloud(&recipe, &g, &d, ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.census(), vec![50, 0]);
        assert!(s.positions.iter().all(|p| g.contains(p)));
    }
}

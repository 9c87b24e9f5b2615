//! Two-level Doppler cooling: mean radiation-pressure force plus
//! isotropic spontaneous-emission recoil.

use rand::Rng;
use rand_distr::{Distribution, Poisson, UnitSphere};

use super::CoolingBeam;
use crate::Vec3;

/// Photon scattering rate for an ion moving with `velocity`, 1/s.
#[inline]
pub fn scattering_rate(velocity: &Vec3, beam: &CoolingBeam) -> f64 {
    if !beam.on {
        return 0.0;
    }
    let k = beam.wavenumber();
    let kv = k
        * (beam.direction[0] * velocity[0]
            + beam.direction[1] * velocity[1]
            + beam.direction[2] * velocity[2]);
    let x = 2.0 * (beam.detuning - kv) / beam.gamma;
    0.5 * beam.gamma * beam.saturation_s / (1.0 + beam.saturation_s + x * x)
}

/// Mean force (N) and scattering rate (1/s). A switched-off beam gives zeros.
pub fn cooling_force(velocity: &Vec3, beam: &CoolingBeam) -> (Vec3, f64) {
    let rate = scattering_rate(velocity, beam);
    let f = beam.recoil_momentum() * rate;
    (
        [
            f * beam.direction[0],
            f * beam.direction[1],
            f * beam.direction[2],
        ],
        rate,
    )
}

/// Poisson draw; inversion for small means, where building a sampler
/// costs more than the draw.
pub(crate) fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean >= 10.0 {
        return Poisson::new(mean)
            .map(|d| d.sample(rng) as u64)
            .unwrap_or(0);
    }
    let u: f64 = rng.random();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut n = 0u64;
    while u > cdf && p > 0.0 {
        n += 1;
        p *= mean / n as f64;
        cdf += p;
    }
    n
}

/// Velocity change from `n ~ Poisson(rate * dt)` emission kicks of `hbar k`
/// in random directions.
pub(crate) fn recoil_kick<R: Rng>(
    rng: &mut R,
    mean_events: f64,
    dv_per_photon: f64,
) -> Option<Vec3> {
    if !(mean_events > 0.0) {
        return None;
    }
    let n = poisson_count(rng, mean_events);
    if n == 0 {
        return None;
    }
    let mut dv = [0.0; 3];
    for _ in 0..n {
        let u: [f64; 3] = UnitSphere.sample(rng);
        for k in 0..3 {
            dv[k] += dv_per_photon * u[k];
        }
    }
    Some(dv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_at_rest_half_linewidth_detuning() {
        let beam = CoolingBeam::strontium([0.0, 0.0, 1.0]);
        let (_, rate) = cooling_force(&[0.0; 3], &beam);
        let expected = 0.5 * beam.gamma / 3.0;
        assert!((rate - expected).abs() / expected < 1e-14);
    }

    #[test]
    fn reversed_beam_reverses_force() {
        let beam = CoolingBeam::strontium([1.0, 2.0, -0.5]);
        let back = CoolingBeam {
            direction: beam.direction.map(|c| -c),
            ..beam
        };
        let v = [3.0, -1.0, 0.7];
        let (f1, _) = cooling_force(&v, &beam);
        // k -> -k with v -> -v is the exact mirror image
        let (f2, _) = cooling_force(&v.map(|c| -c), &back);
        for k in 0..3 {
            assert_eq!(f1[k], -f2[k]);
        }
        let (f_rest1, _) = cooling_force(&[0.0; 3], &beam);
        let (f_rest2, _) = cooling_force(&[0.0; 3], &back);
        for k in 0..3 {
            assert_eq!(f_rest1[k], -f_rest2[k]);
        }
    }

    #[test]
    fn red_detuning_opposes_motion_along_beam() {
        let beam = CoolingBeam::strontium([0.0, 0.0, 1.0]);
        let (toward, _) = cooling_force(&[0.0, 0.0, -2.0], &beam);
        let (away, _) = cooling_force(&[0.0, 0.0, 2.0], &beam);
        assert!(toward[2] > away[2]);
    }

    #[test]
    fn photon_counts_are_poissonian() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for mean in [0.05, 0.7, 4.0, 25.0] {
            let trials = 100_000;
            let draws: Vec<f64> = (0..trials)
                .map(|_| poisson_count(&mut rng, mean) as f64)
                .collect();
            let m = draws.iter().sum::<f64>() / trials as f64;
            let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / trials as f64;
            let se = (mean / trials as f64).sqrt();
            assert!((m - mean).abs() < 5.0 * se, "{mean}: {m}");
            assert!((v - mean).abs() / mean < 0.03, "{mean}: {v}");
        }
    }

    #[test]
    fn off_beam_is_inert() {
        let beam = CoolingBeam {
            on: false,
            ..CoolingBeam::strontium([1.0, 0.0, 0.0])
        };
        assert_eq!(cooling_force(&[1.0, 2.0, 3.0], &beam), ([0.0; 3], 0.0));
    }
}

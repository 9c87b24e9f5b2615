//! Destructive mass spectrometry by resonant excitation.
//!
//! Every frequency point is a separate realization: a fresh cloud is
//! synthesized, cooled, tickled for the dwell time and ejected onto the
//! counter. Survival is the count relative to untickled control runs.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::ELEMENTARY_CHARGE;
use crate::error::{Error, Result};
use crate::ion_dynamics::{
    eject_and_count, synthesize_cloud, CloudRecipe, CloudState, CoolingBeam, EjectionConfig,
    Engine, IntegratorConfig, TickleDrive,
};
use crate::trap_model::{
    mathieu_params, species_frequencies, stability_check, DriveSettings, IonSpecies, MathieuParams,
    TrapGeometry,
};

/// Trap, light and integrator shared by all realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetup {
    pub geometry: TrapGeometry,
    pub drive: DriveSettings,
    pub beams: Vec<CoolingBeam>,
    pub integrator: IntegratorConfig,
    pub ejection: EjectionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumScan {
    /// Tickle frequencies, Hz, strictly increasing.
    pub frequency_grid: Vec<f64>,
    /// V
    pub tickle_amplitude: f64,
    /// Frequency bands driven with a different amplitude, typically the
    /// weaker subharmonic resonances.
    pub amplitude_bands: Vec<AmplitudeBand>,
    /// Tickle duration per point, s.
    pub dwell: f64,
    pub recipe: CloudRecipe,
    /// Independent clouds per frequency point; counts are summed.
    pub realizations: usize,
    /// Untickled realizations that set the baseline count.
    pub control_runs: usize,
    pub seed: u64,
}

/// Tickle amplitude used for frequencies in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeBand {
    /// Hz
    pub lo: f64,
    /// Hz
    pub hi: f64,
    /// V
    pub amplitude: f64,
}

impl SpectrumScan {
    /// Amplitude at one tickle frequency; the first matching band wins.
    pub fn amplitude_at(&self, frequency: f64) -> f64 {
        self.amplitude_bands
            .iter()
            .find(|b| (b.lo..=b.hi).contains(&frequency))
            .map_or(self.tickle_amplitude, |b| b.amplitude)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequency_grid.is_empty() {
            return Err(Error::invalid("frequency grid is empty"));
        }
        if self.frequency_grid.windows(2).any(|w| !(w[1] > w[0])) || !(self.frequency_grid[0] > 0.0)
        {
            return Err(Error::invalid(
                "frequency grid must be positive and strictly increasing",
            ));
        }
        if !(self.dwell > 0.0) {
            return Err(Error::invalid("dwell must be > 0"));
        }
        if !(self.tickle_amplitude >= 0.0) {
            return Err(Error::invalid("tickle amplitude must be >= 0"));
        }
        if self
            .amplitude_bands
            .iter()
            .any(|b| !(b.hi >= b.lo && b.amplitude >= 0.0))
        {
            return Err(Error::invalid(
                "amplitude bands need lo <= hi and amplitude >= 0",
            ));
        }
        if self.realizations == 0 {
            return Err(Error::invalid(
                "at least one realization per point is needed",
            ));
        }
        if self.control_runs == 0 {
            return Err(Error::invalid("at least one control run is needed"));
        }
        if self.recipe.total() == 0 {
            return Err(Error::invalid("cloud recipe has no ions"));
        }
        Ok(())
    }

    /// Evenly spaced grid from `lo` to `hi` inclusive.
    pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| lo + k as f64 * step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    /// Hz
    pub frequency: f64,
    pub survival_fraction: f64,
    pub counted: u64,
    pub baseline: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub points: Vec<SpectrumPoint>,
}

impl SpectrumResult {
    pub const CSV_HEADER: [&'static str; 4] =
        ["frequency_hz", "survival_fraction", "counted", "baseline"];

    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.frequency).collect()
    }

    pub fn survival(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.survival_fraction).collect()
    }
}

fn realization_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Synthesizes, cools, optionally tickles and counts one cloud. Returns the
/// number of ions placed and the number counted.
fn realization(
    scan: &SpectrumScan,
    setup: &MeasurementSetup,
    tickle_frequency: Option<f64>,
    rng: ChaCha8Rng,
) -> Result<(usize, u64)> {
    let mut state: CloudState = synthesize_cloud(&scan.recipe, &setup.geometry, &setup.drive, rng)?;
    let placed = state.len();
    let start = scan.recipe.equilibration;
    let tickle = tickle_frequency.map(|frequency| TickleDrive {
        frequency,
        amplitude: scan.amplitude_at(frequency),
        duration: scan.dwell,
        start,
    });
    let mut engine = Engine::new(
        setup.geometry,
        setup.drive,
        setup.beams.clone(),
        tickle,
        setup.integrator,
    )?;
    let steps = engine.steps_for(start + scan.dwell);
    engine.run(&mut state, steps)?;
    let counted = eject_and_count(&mut state, &setup.ejection, &setup.geometry)?;
    Ok((placed, counted))
}

/// Survival fraction against tickle frequency.
pub fn run_mass_spectrum(scan: &SpectrumScan, setup: &MeasurementSetup) -> Result<SpectrumResult> {
    scan.validate()?;
    let controls: Vec<(usize, u64)> = (0..scan.control_runs)
        .into_par_iter()
        .map(|c| {
            realization(
                scan,
                setup,
                None,
                realization_rng(scan.seed, u64::MAX - c as u64),
            )
        })
        .collect::<Result<_>>()?;
    let placed: usize = controls.iter().map(|c| c.0).sum();
    let counted: u64 = controls.iter().map(|c| c.1).sum();
    if placed == 0 {
        return Err(Error::invalid("no trappable ions in the cloud recipe"));
    }
    let lost = 1.0 - counted as f64 / (placed as f64 * setup.ejection.detection_efficiency);
    if lost > 0.10 {
        return Err(Error::ControlRunFailure {
            lost_fraction: 100.0 * lost,
        });
    }
    let baseline = (counted as f64 / scan.control_runs as f64).round() as u64;
    if baseline == 0 {
        return Err(Error::ControlRunFailure {
            lost_fraction: 100.0,
        });
    }

    let reps = scan.realizations as u64;
    let points = scan
        .frequency_grid
        .par_iter()
        .enumerate()
        .map(|(i, &f)| {
            let mut counted = 0;
            for r in 0..reps {
                let rng = realization_rng(scan.seed, i as u64 * reps + r);
                counted += realization(scan, setup, Some(f), rng)?.1;
            }
            Ok(SpectrumPoint {
                frequency: f,
                survival_fraction: counted as f64 / (baseline * reps) as f64,
                counted,
                baseline: baseline * reps,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SpectrumResult { points })
}

/// Tickle frequencies `2 nu_R / n` for n = 1..=max_subharmonic, Hz.
pub fn analytic_resonances(
    species: &IonSpecies,
    drive: &DriveSettings,
    geometry: &TrapGeometry,
    max_subharmonic: usize,
) -> Result<Vec<f64>> {
    let f = species_frequencies(geometry, drive, species)?;
    Ok((1..=max_subharmonic)
        .map(|n| 2.0 * f.nu_radial / n as f64)
        .collect())
}

/// Mass of a singly charged ion whose resonance `2 nu_R / n` sits at
/// `peak_frequency`, end-cap term included, kg.
pub fn mass_from_peak(
    peak_frequency: f64,
    drive: &DriveSettings,
    geometry: &TrapGeometry,
    subharmonic_n: usize,
) -> Result<f64> {
    if !(peak_frequency > 0.0) || subharmonic_n == 0 {
        return Err(Error::invalid("peak frequency must be > 0 and n >= 1"));
    }
    // With u = 1/m: q = cq u, a_r = -ca u / 2 and
    // (4 pi nu / Omega)^2 = a_r + q^2 / 2.
    let unit = IonSpecies {
        name: String::new(),
        mass: 1.0,
        charge: ELEMENTARY_CHARGE,
        laser_cooled: false,
    };
    let p = mathieu_params(geometry, drive, &unit);
    let (cq, ca) = (p.q_radial, p.a_axial);
    let nu = 0.5 * peak_frequency * subharmonic_n as f64;
    let w = (4.0 * PI * nu / drive.omega_rf).powi(2);
    if cq == 0.0 {
        return Err(Error::NoSolution("no RF drive".into()));
    }
    let u = (0.5 * ca + (0.25 * ca * ca + 2.0 * cq * cq * w).sqrt()) / (cq * cq);
    let params = MathieuParams {
        q_radial: cq * u,
        a_radial: -0.5 * ca * u,
        a_axial: ca * u,
    };
    if !stability_check(&params).stable {
        return Err(Error::NoSolution(format!(
            "{peak_frequency:.0} Hz implies q = {:.3}, outside the stability region",
            params.q_radial
        )));
    }
    Ok(1.0 / u)
}

/// Grid points inside `[center - window/2, center + window/2]`.
fn window_indices(result: &SpectrumResult, center: f64, window: f64) -> Result<Vec<usize>> {
    let (lo, hi) = (center - 0.5 * window, center + 0.5 * window);
    let idx: Vec<usize> = (0..result.points.len())
        .filter(|&i| (lo..=hi).contains(&result.points[i].frequency))
        .collect();
    if idx.len() < 3 {
        return Err(Error::WindowOutsideGrid { lo, hi });
    }
    Ok(idx)
}

/// Mean survival on both flanks of a window (one window width each
/// side); 1 when the grid has no flank points.
fn local_baseline(result: &SpectrumResult, center: f64, window: f64) -> f64 {
    let flank: Vec<f64> = result
        .points
        .iter()
        .filter(|p| {
            let d = (p.frequency - center).abs();
            d > 0.5 * window && d <= 1.5 * window
        })
        .map(|p| p.survival_fraction)
        .collect();
    if flank.is_empty() {
        1.0
    } else {
        flank.iter().sum::<f64>() / flank.len() as f64
    }
}

/// Depth of the deepest point in the window relative to the local
/// baseline, percent in [0, 100].
pub fn contrast(result: &SpectrumResult, peak_center: f64, window: f64) -> Result<f64> {
    let idx = window_indices(result, peak_center, window)?;
    let min = idx
        .iter()
        .map(|&i| result.points[i].survival_fraction)
        .fold(f64::INFINITY, f64::min);
    let base = local_baseline(result, peak_center, window);
    if !(base > 0.0) {
        return Ok(0.0);
    }
    Ok((100.0 * (base - min) / base).clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Midpoint of the half-depth crossings, Hz.
    pub center: f64,
    /// Grid frequency of the lowest survival, Hz.
    pub minimum: f64,
    /// Percent.
    pub contrast: f64,
    /// Full width at half depth, Hz.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    /// Sorted by decreasing contrast.
    pub peaks: Vec<Peak>,
    /// Offsets of secondary peaks from the strongest one, Hz.
    pub satellites: Vec<f64>,
}

/// Dip inside a window: deepest point, and the half-depth crossings
/// found by walking outwards from it and interpolating linearly.
pub fn locate_dip(result: &SpectrumResult, center: f64, window: f64) -> Result<Peak> {
    let idx = window_indices(result, center, window)?;
    let base = local_baseline(result, center, window);
    Ok(dip_at(result, &idx, base))
}

fn dip_at(result: &SpectrumResult, idx: &[usize], base: f64) -> Peak {
    let s = |i: usize| result.points[i].survival_fraction;
    let f = |i: usize| result.points[i].frequency;
    let (lo, hi) = (idx[0], idx[idx.len() - 1]);
    // Deepest point; ties resolved towards the middle of the flat bottom.
    let min = idx.iter().map(|&i| s(i)).fold(f64::INFINITY, f64::min);
    let bottom: Vec<usize> = idx.iter().copied().filter(|&i| s(i) <= min).collect();
    let at = bottom[bottom.len() / 2];
    let half = 0.5 * (base + min);
    let mut left = f(lo);
    let mut i = at;
    while i > lo {
        if s(i - 1) >= half {
            let t = (half - s(i)) / (s(i - 1) - s(i));
            left = f(i) + t * (f(i - 1) - f(i));
            break;
        }
        i -= 1;
    }
    let mut right = f(hi);
    let mut i = at;
    while i < hi {
        if s(i + 1) >= half {
            let t = (half - s(i)) / (s(i + 1) - s(i));
            right = f(i) + t * (f(i + 1) - f(i));
            break;
        }
        i += 1;
    }
    Peak {
        center: 0.5 * (left + right),
        minimum: f(at),
        contrast: if base > 0.0 {
            (100.0 * (base - min) / base).clamp(0.0, 100.0)
        } else {
            0.0
        },
        width: right - left,
    }
}

/// Finds runs of points whose survival falls below `1 - threshold` and
/// reports each as a peak. Peaks within `satellite_range` of the deepest
/// one are listed as satellites.
pub fn find_peaks(result: &SpectrumResult, threshold: f64, satellite_range: f64) -> PeakReport {
    let n = result.points.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        if result.points[i].survival_fraction < 1.0 - threshold {
            let start = i;
            while i < n && result.points[i].survival_fraction < 1.0 - threshold {
                i += 1;
            }
            let run: Vec<usize> = (start.saturating_sub(1)..(i + 1).min(n)).collect();
            peaks.push(dip_at(result, &run, 1.0));
        } else {
            i += 1;
        }
    }
    peaks.sort_by(|a, b| {
        b.contrast
            .total_cmp(&a.contrast)
            .then(a.center.total_cmp(&b.center))
    });
    let satellites = match peaks.first() {
        Some(main) => peaks[1..]
            .iter()
            .map(|p| p.center - main.center)
            .filter(|d| d.abs() <= satellite_range)
            .collect(),
        None => Vec::new(),
    };
    PeakReport { peaks, satellites }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    /// Bin centres, m.
    pub centers: Vec<f64>,
    pub counts: Vec<u64>,
    /// m
    pub bin_width: f64,
    /// m
    pub fwhm: f64,
}

/// Position histogram along one axis and its full width at half maximum.
pub fn cloud_profile(state: &CloudState, axis: Axis, bins: usize) -> Result<Profile> {
    if state.len() < 10 {
        return Err(Error::TooFewIons {
            needed: 10,
            have: state.len(),
        });
    }
    if bins == 0 {
        return Err(Error::invalid("profile needs at least one bin"));
    }
    let k = axis.index();
    let values: Vec<f64> = state.positions.iter().map(|p| p[k]).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let width = span / bins as f64;
    let mut counts = vec![0u64; bins];
    for v in &values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let centers: Vec<f64> = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();

    let peak = *counts.iter().max().expect("bins > 0") as f64;
    let half = 0.5 * peak;
    let first = counts
        .iter()
        .position(|&c| c as f64 >= half)
        .expect("peak bin exists");
    let last = counts
        .iter()
        .rposition(|&c| c as f64 >= half)
        .expect("peak bin exists");
    let crossing = |inside: usize, outside: Option<usize>| match outside {
        Some(o) => {
            let (ci, co) = (counts[inside] as f64, counts[o] as f64);
            let t = (ci - half) / (ci - co);
            centers[inside] + t * (centers[o] - centers[inside])
        }
        // the half level is not reached inside the range: use the edge
        None => {
            centers[inside]
                + if o_is_left(inside, first) {
                    -0.5 * width
                } else {
                    0.5 * width
                }
        }
    };
    fn o_is_left(inside: usize, first: usize) -> bool {
        inside == first
    }
    let left = crossing(first, first.checked_sub(1));
    let right = crossing(last, (last + 1 < bins).then_some(last + 1));
    let fwhm = if span <= 1e-12 {
        0.0
    } else {
        (right - left).max(0.0)
    };
    Ok(Profile {
        centers,
        counts,
        bin_width: width,
        fwhm,
    })
}

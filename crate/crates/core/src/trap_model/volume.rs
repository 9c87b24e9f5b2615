//! Effective trap volume: the connected sub-level set of the
//! pseudopotential that contains the trap centre, cut at the lowest
//! energy found on the boundary of the electrode box.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{
    mathieu_params, stability_check, DriveSettings, FieldCoefficients, IonSpecies, TrapGeometry,
    Q_STABILITY_LIMIT,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    /// m^3
    pub volume: f64,
    /// Escape energy above the centre, J.
    pub depth: f64,
    /// Largest grid spacing actually used, m.
    pub grid_resolution: f64,
}

impl VolumeEstimate {
    fn empty(grid_resolution: f64) -> Self {
        Self {
            volume: 0.0,
            depth: 0.0,
            grid_resolution,
        }
    }
}

/// Grid over `|x|, |y| <= r0`, `|z| <= z0` with spacing at most
/// `resolution`; nodes land exactly on the box faces.
struct Grid {
    n_xy: usize,
    n_z: usize,
    h_xy: f64,
    h_z: f64,
}

impl Grid {
    fn new(geometry: &TrapGeometry, resolution: f64) -> Self {
        let n_xy = (geometry.r0 / resolution - 1e-9).ceil().max(1.0) as usize;
        let n_z = (geometry.z0 / resolution - 1e-9).ceil().max(1.0) as usize;
        Self {
            n_xy,
            n_z,
            h_xy: geometry.r0 / n_xy as f64,
            h_z: geometry.z0 / n_z as f64,
        }
    }

    fn dims(&self) -> [usize; 3] {
        [2 * self.n_xy + 1, 2 * self.n_xy + 1, 2 * self.n_z + 1]
    }

    fn coord(&self, idx: [usize; 3]) -> [f64; 3] {
        [
            (idx[0] as f64 - self.n_xy as f64) * self.h_xy,
            (idx[1] as f64 - self.n_xy as f64) * self.h_xy,
            (idx[2] as f64 - self.n_z as f64) * self.h_z,
        ]
    }
}

pub fn trap_volume(
    geometry: &TrapGeometry,
    drive: &DriveSettings,
    species: &IonSpecies,
    resolution: f64,
) -> Result<VolumeEstimate> {
    geometry.validate()?;
    drive.validate()?;
    if !(resolution > 0.0 && resolution <= geometry.r0 / 20.0 * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!(
            "grid resolution must be in (0, r0/20], got {resolution:e} m"
        )));
    }
    let params = mathieu_params(geometry, drive, species);
    if params.q_radial >= Q_STABILITY_LIMIT {
        return Err(Error::UnstableParameters(format!(
            "q = {:.4} outside the first stability region",
            params.q_radial
        )));
    }
    let grid = Grid::new(geometry, resolution);
    let resolution_used = grid.h_xy.max(grid.h_z);
    if !stability_check(&params).stable {
        return Ok(VolumeEstimate::empty(resolution_used));
    }

    let field = FieldCoefficients::new(geometry, drive, species);
    let energy = |idx: [usize; 3]| field.pseudo_energy(&grid.coord(idx));
    let [nx, ny, nz] = grid.dims();

    // Lowest energy on the box faces.
    let mut saddle = f64::INFINITY;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let on_face =
                    i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
                if on_face {
                    saddle = saddle.min(energy([i, j, k]));
                }
            }
        }
    }
    let centre = [grid.n_xy, grid.n_xy, grid.n_z];
    let depth = saddle - energy(centre);
    if !(depth > 0.0) {
        return Ok(VolumeEstimate::empty(resolution_used));
    }

    // Each node stands for the grid cell around it (halved on the box
    // faces). A cell cut by the level surface contributes the fraction
    // below the level of the plane that linearizes U, so the estimate is
    // smooth in the drive parameters instead of stepping as nodes cross
    // the level.
    let cell = [grid.h_xy, grid.h_xy, grid.h_z];
    let dims = [nx, ny, nz];
    // Cells that the level surface cuts are refined into SUB^3 pieces.
    const SUB: usize = 4;
    let fraction = |p: &[f64; 3], scale: f64| {
        let g = field.secular_force(p);
        let spread: f64 = (0..3).map(|k| g[k].abs() * cell[k] * scale).sum();
        let below = saddle - field.pseudo_energy(p);
        if spread > 0.0 {
            (0.5 + below / spread).clamp(0.0, 1.0)
        } else if below > 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let weight = |idx: [usize; 3]| {
        let p = grid.coord(idx);
        let mut w = fraction(&p, 1.0);
        if w > 0.0 && w < 1.0 {
            let scale = 1.0 / SUB as f64;
            let offset = |i: usize, k: usize| ((i as f64 + 0.5) * scale - 0.5) * cell[k];
            let mut sum = 0.0;
            for i in 0..SUB {
                for j in 0..SUB {
                    for l in 0..SUB {
                        let q = [
                            p[0] + offset(i, 0),
                            p[1] + offset(j, 1),
                            p[2] + offset(l, 2),
                        ];
                        sum += fraction(&q, scale);
                    }
                }
            }
            w = sum / (SUB * SUB * SUB) as f64;
        }
        for k in 0..3 {
            if idx[k] == 0 || idx[k] == dims[k] - 1 {
                w *= 0.5;
            }
        }
        w
    };

    // Flood fill (6-connected) from the centre over nodes below the saddle;
    // the first ring of nodes above it is weighted but not expanded.
    let flat = |idx: [usize; 3]| (idx[0] * ny + idx[1]) * nz + idx[2];
    let mut visited = vec![false; nx * ny * nz];
    let mut queue = VecDeque::new();
    visited[flat(centre)] = true;
    queue.push_back(centre);
    let mut cells = 0.0;
    while let Some(idx) = queue.pop_front() {
        cells += weight(idx);
        for axis in 0..3 {
            for step in [-1i64, 1] {
                let next = idx[axis] as i64 + step;
                if next < 0 || next as usize >= dims[axis] {
                    continue;
                }
                let mut n = idx;
                n[axis] = next as usize;
                let f = flat(n);
                if visited[f] {
                    continue;
                }
                visited[f] = true;
                if energy(n) < saddle {
                    queue.push_back(n);
                } else {
                    cells += weight(n);
                }
            }
        }
    }

    Ok(VolumeEstimate {
        volume: cells * cell[0] * cell[1] * cell[2],
        depth,
        grid_resolution: resolution_used,
    })
}

//! Softened pairwise Coulomb interaction.
//!
//! `Direct` sums all pairs exactly. Rows are split into a fixed set of
//! chunks, each accumulating into its own buffer (Newton's third law
//! inside the chunk); buffers are reduced in chunk order, so the result
//! does not depend on how rayon schedules the chunks.
//!
//! `CellList` bins ions into cubic cells. Ion-cell interactions are summed
//! exactly unless a cell is far enough away that its quadrupole expansion
//! about the centre of charge meets an error bound, which is set relative
//! to the mean-field scale `k Q_total / R_rms^2`.

use rayon::prelude::*;

use super::{CloudState, CoulombMode, IntegratorConfig};
use crate::constants::COULOMB_CONSTANT;
use crate::Vec3;

const LANES: usize = 8;
const DETERMINISTIC_CHUNKS: usize = 8;
const TARGET_PER_CELL: f64 = 8.0;

/// Relative error target of the multipole approximation in cell-list mode.
pub const DEFAULT_MULTIPOLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
#[repr(C, align(64))]
struct Block([f64; LANES]);

/// Zero-padded f64 storage starting on a cache-line boundary, so that
/// index multiples of `LANES` are full aligned vectors.
#[derive(Debug, Clone, Default)]
struct AlignedBuf {
    blocks: Vec<Block>,
    len: usize,
}

impl AlignedBuf {
    fn reset(&mut self, n: usize) {
        self.blocks.clear();
        self.blocks.resize(n.div_ceil(LANES), Block([0.0; LANES]));
        self.len = n;
    }

    fn fill(&mut self, values: impl ExactSizeIterator<Item = f64>) {
        self.reset(values.len());
        for (dst, v) in self.as_mut_slice().iter_mut().zip(values) {
            *dst = v;
        }
    }

    fn as_slice(&self) -> &[f64] {
        // SAFETY: Block is repr(C) over [f64; LANES]; the blocks are
        // contiguous and hold at least `len` initialized values.
        unsafe { std::slice::from_raw_parts(self.blocks.as_ptr().cast::<f64>(), self.len) }
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        // SAFETY: as above, with unique access through &mut self.
        unsafe { std::slice::from_raw_parts_mut(self.blocks.as_mut_ptr().cast::<f64>(), self.len) }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CoulombSolver {
    x: AlignedBuf,
    y: AlignedBuf,
    z: AlignedBuf,
    q: AlignedBuf,
    buffers: Vec<[AlignedBuf; 3]>,
    /// Error target used by the cell-list mode.
    pub multipole_tolerance: f64,
}

impl CoulombSolver {
    pub fn new() -> Self {
        Self {
            multipole_tolerance: DEFAULT_MULTIPOLE_TOLERANCE,
            ..Default::default()
        }
    }

    fn load(&mut self, positions: &[Vec3], charges: &[f64]) {
        let n = positions.len();
        self.x.fill(positions.iter().map(|p| p[0]));
        self.y.fill(positions.iter().map(|p| p[1]));
        self.z.fill(positions.iter().map(|p| p[2]));
        self.q.fill(charges[..n].iter().copied());
    }

    /// Electric field at each ion from all others, V/m.
    pub fn field(
        &mut self,
        positions: &[Vec3],
        charges: &[f64],
        softening: f64,
        mode: CoulombMode,
        deterministic: bool,
        out: &mut [Vec3],
    ) {
        let n = positions.len();
        out[..n].iter_mut().for_each(|e| *e = [0.0; 3]);
        if n < 2 || mode == CoulombMode::Off {
            return;
        }
        self.load(positions, charges);
        match mode {
            CoulombMode::Off => {}
            CoulombMode::Direct => {
                let chunks = if deterministic {
                    DETERMINISTIC_CHUNKS
                } else {
                    rayon::current_num_threads().max(1)
                };
                self.direct(softening * softening, chunks, out)
            }
            CoulombMode::CellList => {
                let tol = self.multipole_tolerance;
                cell_field(positions, charges, softening * softening, tol, out)
            }
        }
    }

    fn direct(&mut self, eps2: f64, chunks: usize, out: &mut [Vec3]) {
        let n = self.x.len;
        let chunks = chunks.min(n - 1).max(1);
        let bounds = balanced_row_bounds(n, chunks);
        if self.buffers.len() < chunks {
            self.buffers.resize_with(chunks, Default::default);
        }
        let (x, y, z, q) = (
            self.x.as_slice(),
            self.y.as_slice(),
            self.z.as_slice(),
            self.q.as_slice(),
        );
        let kernel = select_kernel();
        let work = |(c, buf): (usize, &mut [AlignedBuf; 3])| {
            for b in buf.iter_mut() {
                b.reset(n);
            }
            let [bx, by, bz] = buf;
            let (bx, by, bz) = (bx.as_mut_slice(), by.as_mut_slice(), bz.as_mut_slice());
            for i in bounds[c]..bounds[c + 1] {
                let e = kernel(i, x, y, z, q, bx, by, bz, eps2);
                bx[i] += e[0];
                by[i] += e[1];
                bz[i] += e[2];
            }
        };
        // The chunk layout is fixed, so both paths give identical sums.
        if n < PARALLEL_THRESHOLD || rayon::current_num_threads() == 1 {
            self.buffers[..chunks].iter_mut().enumerate().for_each(work);
        } else {
            self.buffers[..chunks]
                .par_iter_mut()
                .enumerate()
                .for_each(work);
        }
        for buf in &self.buffers[..chunks] {
            for (i, e) in out[..n].iter_mut().enumerate() {
                e[0] += buf[0].as_slice()[i];
                e[1] += buf[1].as_slice()[i];
                e[2] += buf[2].as_slice()[i];
            }
        }
        for e in out[..n].iter_mut() {
            for c in e.iter_mut() {
                *c *= COULOMB_CONSTANT;
            }
        }
    }
}

/// Row boundaries so that each chunk holds about the same number of pairs
/// `j > i`.
fn balanced_row_bounds(n: usize, chunks: usize) -> Vec<usize> {
    let total = (n * (n - 1) / 2) as f64;
    let mut bounds = vec![0usize];
    let mut acc = 0.0;
    let mut next = 1;
    for i in 0..n {
        acc += (n - 1 - i) as f64;
        if next < chunks && acc >= total * next as f64 / chunks as f64 {
            bounds.push(i + 1);
            next += 1;
        }
    }
    while bounds.len() < chunks + 1 {
        bounds.push(n);
    }
    *bounds.last_mut().unwrap() = n;
    bounds
}

/// Below this many ions the rayon dispatch costs more than the sum.
const PARALLEL_THRESHOLD: usize = 400;

type RowKernel =
    fn(usize, &[f64], &[f64], &[f64], &[f64], &mut [f64], &mut [f64], &mut [f64], f64) -> Vec3;

fn select_kernel() -> RowKernel {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            return avx512::row_newton;
        }
    }
    row_newton
}

/// Field on ion `i` from ions `j > i`; the reaction on each `j` is
/// accumulated into `bx, by, bz`. Unscaled by the Coulomb constant.
#[allow(clippy::too_many_arguments)]
#[inline]
fn row_newton(
    i: usize,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    q: &[f64],
    bx: &mut [f64],
    by: &mut [f64],
    bz: &mut [f64],
    eps2: f64,
) -> Vec3 {
    let (xi, yi, zi, qi) = (x[i], y[i], z[i], q[i]);
    let s = i + 1;
    let (xs, ys, zs, qs) = (&x[s..], &y[s..], &z[s..], &q[s..]);
    let (bx, by, bz) = (&mut bx[s..], &mut by[s..], &mut bz[s..]);
    let m = xs.len();
    let full = m / LANES * LANES;

    let mut ax = [0.0f64; LANES];
    let mut ay = [0.0f64; LANES];
    let mut az = [0.0f64; LANES];
    let mut base = 0;
    while base < full {
        let xs = &xs[base..base + LANES];
        let ys = &ys[base..base + LANES];
        let zs = &zs[base..base + LANES];
        let qs = &qs[base..base + LANES];
        let bx = &mut bx[base..base + LANES];
        let by = &mut by[base..base + LANES];
        let bz = &mut bz[base..base + LANES];
        for l in 0..LANES {
            let dx = xi - xs[l];
            let dy = yi - ys[l];
            let dz = zi - zs[l];
            let r2 = dx * dx + dy * dy + dz * dz + eps2;
            let inv = 1.0 / (r2 * r2.sqrt());
            let sj = qs[l] * inv;
            ax[l] += sj * dx;
            ay[l] += sj * dy;
            az[l] += sj * dz;
            let si = qi * inv;
            bx[l] -= si * dx;
            by[l] -= si * dy;
            bz[l] -= si * dz;
        }
        base += LANES;
    }
    let mut e = [0.0; 3];
    for j in full..m {
        let dx = xi - xs[j];
        let dy = yi - ys[j];
        let dz = zi - zs[j];
        let r2 = dx * dx + dy * dy + dz * dz + eps2;
        let inv = 1.0 / (r2 * r2.sqrt());
        let sj = qs[j] * inv;
        e[0] += sj * dx;
        e[1] += sj * dy;
        e[2] += sj * dz;
        let si = qi * inv;
        bx[j] -= si * dx;
        by[j] -= si * dy;
        bz[j] -= si * dz;
    }
    for l in 0..LANES {
        e[0] += ax[l];
        e[1] += ay[l];
        e[2] += az[l];
    }
    e
}

#[cfg(target_arch = "x86_64")]
mod avx512 {
    use std::arch::x86_64::*;

    use crate::Vec3;

    /// Same contract as the portable kernel. The inverse square root starts
    /// from the 14-bit hardware estimate and takes two Newton steps, which
    /// lands within a few ulp.
    #[allow(clippy::too_many_arguments)]
    pub(super) fn row_newton(
        i: usize,
        x: &[f64],
        y: &[f64],
        z: &[f64],
        q: &[f64],
        bx: &mut [f64],
        by: &mut [f64],
        bz: &mut [f64],
        eps2: f64,
    ) -> Vec3 {
        let n = x.len();
        assert!(y.len() == n && z.len() == n && q.len() == n);
        assert!(bx.len() >= n && by.len() >= n && bz.len() >= n);
        // SAFETY: the caller selected this kernel after detecting avx512f,
        // and all slices hold at least `n` elements.
        unsafe { row(i, x, y, z, q, bx, by, bz, eps2) }
    }

    #[allow(clippy::too_many_arguments)]
    #[target_feature(enable = "avx512f")]
    unsafe fn row(
        i: usize,
        x: &[f64],
        y: &[f64],
        z: &[f64],
        q: &[f64],
        bx: &mut [f64],
        by: &mut [f64],
        bz: &mut [f64],
        eps2: f64,
    ) -> Vec3 {
        let n = x.len();
        let (xi, yi, zi, qi) = (x[i], y[i], z[i], q[i]);
        macro_rules! pair {
            ($j:expr, $e:expr) => {{
                let j = $j;
                let e: &mut Vec3 = $e;
                let dx = xi - x[j];
                let dy = yi - y[j];
                let dz = zi - z[j];
                let r2 = dx * dx + dy * dy + dz * dz + eps2;
                let inv = 1.0 / (r2 * r2.sqrt());
                let sj = q[j] * inv;
                e[0] += sj * dx;
                e[1] += sj * dy;
                e[2] += sj * dz;
                let si = qi * inv;
                bx[j] -= si * dx;
                by[j] -= si * dy;
                bz[j] -= si * dz;
            }};
        }
        let vxi = _mm512_set1_pd(xi);
        let vyi = _mm512_set1_pd(yi);
        let vzi = _mm512_set1_pd(zi);
        let vqi = _mm512_set1_pd(qi);
        let veps = _mm512_set1_pd(eps2);
        let half = _mm512_set1_pd(0.5);
        let three_halves = _mm512_set1_pd(1.5);
        let mut ax = _mm512_setzero_pd();
        let mut ay = _mm512_setzero_pd();
        let mut az = _mm512_setzero_pd();
        let mut e = [0.0; 3];
        let head = (i + 1).next_multiple_of(8).min(n);
        for j in i + 1..head {
            pair!(j, &mut e);
        }
        let mut j = head;
        while j + 8 <= n {
            unsafe {
                let dx = _mm512_sub_pd(vxi, _mm512_loadu_pd(x.as_ptr().add(j)));
                let dy = _mm512_sub_pd(vyi, _mm512_loadu_pd(y.as_ptr().add(j)));
                let dz = _mm512_sub_pd(vzi, _mm512_loadu_pd(z.as_ptr().add(j)));
                let qj = _mm512_loadu_pd(q.as_ptr().add(j));
                let r2 = _mm512_fmadd_pd(
                    dx,
                    dx,
                    _mm512_fmadd_pd(dy, dy, _mm512_fmadd_pd(dz, dz, veps)),
                );
                let h = _mm512_mul_pd(half, r2);
                let mut s = _mm512_rsqrt14_pd(r2);
                for _ in 0..2 {
                    let ss = _mm512_mul_pd(s, s);
                    s = _mm512_mul_pd(s, _mm512_fnmadd_pd(h, ss, three_halves));
                }
                let inv = _mm512_mul_pd(_mm512_mul_pd(s, s), s);
                let sj = _mm512_mul_pd(qj, inv);
                ax = _mm512_fmadd_pd(sj, dx, ax);
                ay = _mm512_fmadd_pd(sj, dy, ay);
                az = _mm512_fmadd_pd(sj, dz, az);
                let si = _mm512_mul_pd(vqi, inv);
                let px = bx.as_mut_ptr().add(j);
                let py = by.as_mut_ptr().add(j);
                let pz = bz.as_mut_ptr().add(j);
                _mm512_storeu_pd(px, _mm512_fnmadd_pd(si, dx, _mm512_loadu_pd(px)));
                _mm512_storeu_pd(py, _mm512_fnmadd_pd(si, dy, _mm512_loadu_pd(py)));
                _mm512_storeu_pd(pz, _mm512_fnmadd_pd(si, dz, _mm512_loadu_pd(pz)));
            }
            j += 8;
        }
        e[0] += _mm512_reduce_add_pd(ax);
        e[1] += _mm512_reduce_add_pd(ay);
        e[2] += _mm512_reduce_add_pd(az);
        for j in j..n {
            pair!(j, &mut e);
        }
        e
    }
}

struct Cell {
    members: Vec<usize>,
    charge: f64,
    centre: Vec3,
    /// Traceless quadrupole sum q (3 d d^T - |d|^2 I) about `centre`.
    quad: [[f64; 3]; 3],
    radius: f64,
}

fn cell_field(positions: &[Vec3], charges: &[f64], eps2: f64, tol: f64, out: &mut [Vec3]) {
    let n = positions.len();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in positions {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent: Vec<f64> = (0..3).map(|k| (hi[k] - lo[k]).max(1e-12)).collect();
    let box_volume: f64 = extent.iter().product();
    let side = (box_volume * TARGET_PER_CELL / n as f64).cbrt().max(1e-12);
    let dims: Vec<usize> = extent
        .iter()
        .map(|e| ((e / side).ceil() as usize).clamp(1, 64))
        .collect();
    let cell_of = |p: &Vec3| {
        let mut c = 0;
        for k in 0..3 {
            let i = (((p[k] - lo[k]) / extent[k]) * dims[k] as f64) as usize;
            c = c * dims[k] + i.min(dims[k] - 1);
        }
        c
    };

    let mut cells: Vec<Cell> = (0..dims[0] * dims[1] * dims[2])
        .map(|_| Cell {
            members: Vec::new(),
            charge: 0.0,
            centre: [0.0; 3],
            quad: [[0.0; 3]; 3],
            radius: 0.0,
        })
        .collect();
    for (i, p) in positions.iter().enumerate() {
        cells[cell_of(p)].members.push(i);
    }
    cells.retain(|c| !c.members.is_empty());

    let mut total_charge = 0.0;
    let mut centroid = [0.0; 3];
    for cell in cells.iter_mut() {
        for &j in &cell.members {
            cell.charge += charges[j];
            for k in 0..3 {
                cell.centre[k] += charges[j] * positions[j][k];
            }
        }
        total_charge += cell.charge;
        for k in 0..3 {
            centroid[k] += cell.centre[k];
            cell.centre[k] /= cell.charge;
        }
        for &j in &cell.members {
            let d = sub(&positions[j], &cell.centre);
            let r2 = dot(&d, &d);
            cell.radius = cell.radius.max(r2.sqrt());
            for a in 0..3 {
                for b in 0..3 {
                    let delta = if a == b { r2 } else { 0.0 };
                    cell.quad[a][b] += charges[j] * (3.0 * d[a] * d[b] - delta);
                }
            }
        }
    }
    for c in centroid.iter_mut() {
        *c /= total_charge;
    }
    let r_rms = (positions
        .iter()
        .zip(charges)
        .map(|(p, q)| q * dot(&sub(p, &centroid), &sub(p, &centroid)))
        .sum::<f64>()
        / total_charge)
        .sqrt()
        .max(1e-9);
    let field_scale = total_charge / (r_rms * r_rms);

    out[..n].par_iter_mut().enumerate().for_each(|(i, e)| {
        let p = positions[i];
        let mut acc = [0.0; 3];
        for cell in &cells {
            let d = sub(&p, &cell.centre);
            let dist = dot(&d, &d).sqrt();
            // Octupole truncation bound for the field of a cell of radius rho.
            let far = dist > 2.0 * cell.radius
                && 4.0 * cell.charge * (cell.radius / dist).powi(3) / (dist - cell.radius).powi(2)
                    <= tol * field_scale;
            if far {
                // Plummer softening carried into the expansion
                let soft2 = dist * dist + eps2;
                let inv_r2 = 1.0 / soft2;
                let inv_r3 = inv_r2 / soft2.sqrt();
                let inv_r5 = inv_r3 * inv_r2;
                let inv_r7 = inv_r5 * inv_r2;
                let qd = [
                    dot(&cell.quad[0], &d),
                    dot(&cell.quad[1], &d),
                    dot(&cell.quad[2], &d),
                ];
                let dqd = dot(&d, &qd);
                for k in 0..3 {
                    acc[k] +=
                        cell.charge * d[k] * inv_r3 + 2.5 * dqd * d[k] * inv_r7 - qd[k] * inv_r5;
                }
            } else {
                for &j in &cell.members {
                    if j == i {
                        continue;
                    }
                    let d = sub(&p, &positions[j]);
                    let r2 = dot(&d, &d) + eps2;
                    let s = charges[j] / (r2 * r2.sqrt());
                    for k in 0..3 {
                        acc[k] += s * d[k];
                    }
                }
            }
        }
        *e = acc.map(|c| c * COULOMB_CONSTANT);
    });
}

#[inline]
fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Per-ion Coulomb accelerations of a cloud, m/s^2.
pub fn coulomb_accelerations(state: &CloudState, config: &IntegratorConfig) -> Vec<Vec3> {
    let n = state.len();
    let charges: Vec<f64> = (0..n).map(|i| state.species_of(i).charge).collect();
    let mut field = vec![[0.0; 3]; n];
    CoulombSolver::new().field(
        &state.positions,
        &charges,
        config.softening_length,
        config.coulomb,
        config.deterministic_reduction,
        &mut field,
    );
    field
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let s = state.species_of(i);
            let r = s.charge / s.mass;
            [e[0] * r, e[1] * r, e[2] * r]
        })
        .collect()
}

/// Softened pair energy `k q_i q_j / sqrt(r^2 + eps^2)` summed over pairs, J.
pub fn coulomb_potential_energy(positions: &[Vec3], charges: &[f64], softening: f64) -> f64 {
    let eps2 = softening * softening;
    let mut u = 0.0;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let d = sub(&positions[i], &positions[j]);
            u += charges[i] * charges[j] / (dot(&d, &d) + eps2).sqrt();
        }
    }
    COULOMB_CONSTANT * u
}

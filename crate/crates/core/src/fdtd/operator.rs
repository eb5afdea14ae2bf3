//! Discrete Neumann Laplacians on nodal Cartesian and polar grids.
//!
//! Both are written as `L = −W⁻¹ Gᵀ C G` with `W` the node weights of
//! [`Grid2D::weights`], `G` the edge differences and `C` positive edge
//! conductances, so `W L` is symmetric and the leapfrog scheme conserves a
//! discrete energy exactly. On Cartesian grids this reproduces the standard
//! five-point stencil with mirror ghost nodes at the walls.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::field::{Grid2D, GridKind};

#[derive(Debug, Clone)]
pub(crate) enum Operator {
    Cartesian {
        nx: usize,
        ny: usize,
        ihx2: f64,
        ihy2: f64,
        /// Edge conductances: `hy_j/hx` for x-edges in row `j`, `hx_i/hy` for
        /// y-edges in column `i`.
        gx: Vec<f64>,
        gy: Vec<f64>,
    },
    Polar {
        nr: usize,
        nt: usize,
        origin: f64,
        /// Per ring `i = 1..=nr` (index `i − 1`): outward, inward and angular
        /// coefficients of `L`.
        outward: Vec<f64>,
        inward: Vec<f64>,
        angular: Vec<f64>,
        /// Conductances of radial edges `i → i + 1`, `i = 0..nr`, and of
        /// angular edges on ring `i = 1..=nr`.
        g_radial: Vec<f64>,
        g_angular: Vec<f64>,
    },
}

/// Below this many nodes the stencil runs on the calling thread.
const PARALLEL_THRESHOLD: usize = 4096;

impl Operator {
    pub(crate) fn new(grid: &Grid2D) -> Self {
        match grid.kind() {
            GridKind::Cartesian { nx, ny, a, b } => {
                let (hx, hy) = (a / nx as f64, b / ny as f64);
                let half = |n: usize, h: f64, k: usize| if k == 0 || k == n { 0.5 * h } else { h };
                Operator::Cartesian {
                    nx,
                    ny,
                    ihx2: 1.0 / (hx * hx),
                    ihy2: 1.0 / (hy * hy),
                    gx: (0..=ny).map(|j| half(ny, hy, j) / hx).collect(),
                    gy: (0..=nx).map(|i| half(nx, hx, i) / hy).collect(),
                }
            }
            GridKind::Polar { nr, ntheta } => {
                let dr = 1.0 / nr as f64;
                let dt = 2.0 * PI / ntheta as f64;
                let rim = 1.0 - 0.25 * dr;
                let mut outward = Vec::with_capacity(nr);
                let mut inward = Vec::with_capacity(nr);
                let mut angular = Vec::with_capacity(nr);
                for i in 1..=nr {
                    let r = i as f64 * dr;
                    let r_in = (i as f64 - 0.5) * dr;
                    if i < nr {
                        let r_out = (i as f64 + 0.5) * dr;
                        outward.push(r_out / (r * dr * dr));
                        inward.push(r_in / (r * dr * dr));
                        angular.push(1.0 / (r * r * dt * dt));
                    } else {
                        outward.push(0.0);
                        inward.push(r_in / (0.5 * dr * dr * rim));
                        angular.push(1.0 / (rim * rim * dt * dt));
                    }
                }
                let g_radial = (0..nr).map(|i| (i as f64 + 0.5) * dt).collect();
                let g_angular = (1..=nr)
                    .map(|i| if i < nr { 1.0 / (i as f64 * dt) } else { 0.5 * dr / (rim * dt) })
                    .collect();
                Operator::Polar {
                    nr,
                    nt: ntheta,
                    origin: 4.0 / (ntheta as f64 * dr * dr),
                    outward,
                    inward,
                    angular,
                    g_radial,
                    g_angular,
                }
            }
        }
    }

    /// `next = 2u − prev + k ⊙ L u`.
    pub(crate) fn leapfrog(&self, u: &[f64], prev: &[f64], k: &[f64], next: &mut [f64]) {
        self.apply(u, next, |idx, lap| 2.0 * u[idx] - prev[idx] + k[idx] * lap);
    }

    /// `out = L u`.
    pub(crate) fn laplacian(&self, u: &[f64], out: &mut [f64]) {
        self.apply(u, out, |_, lap| lap);
    }

    /// Evaluates `L u` node by node and stores `combine(index, (L u)[index])`.
    fn apply(&self, u: &[f64], out: &mut [f64], combine: impl Fn(usize, f64) -> f64 + Sync) {
        match self {
            Operator::Cartesian { nx, ny, ihx2, ihy2, .. } => {
                let (nx, ny, ihx2, ihy2) = (*nx, *ny, *ihx2, *ihy2);
                let w = nx + 1;
                let row = |j: usize, out_row: &mut [f64]| {
                    let jm = if j == 0 { 1 } else { j - 1 };
                    let jp = if j == ny { ny - 1 } else { j + 1 };
                    let (c, s, n) = (&u[j * w..(j + 1) * w], &u[jm * w..(jm + 1) * w], &u[jp * w..(jp + 1) * w]);
                    let base = j * w;
                    let lap0 = 2.0 * (c[1] - c[0]) * ihx2 + (s[0] + n[0] - 2.0 * c[0]) * ihy2;
                    out_row[0] = combine(base, lap0);
                    for i in 1..nx {
                        let lap = (c[i - 1] + c[i + 1] - 2.0 * c[i]) * ihx2 + (s[i] + n[i] - 2.0 * c[i]) * ihy2;
                        out_row[i] = combine(base + i, lap);
                    }
                    let lapn = 2.0 * (c[nx - 1] - c[nx]) * ihx2 + (s[nx] + n[nx] - 2.0 * c[nx]) * ihy2;
                    out_row[nx] = combine(base + nx, lapn);
                };
                if u.len() >= PARALLEL_THRESHOLD && rayon::current_num_threads() > 1 {
                    out.par_chunks_mut(w).enumerate().for_each(|(j, r)| row(j, r));
                } else {
                    out.chunks_mut(w).enumerate().for_each(|(j, r)| row(j, r));
                }
            }
            Operator::Polar { nr, nt, origin, outward, inward, angular, .. } => {
                let (nr, nt) = (*nr, *nt);
                let ring_sum: f64 = u[1..=nt].iter().sum();
                let lap0 = origin * (ring_sum - nt as f64 * u[0]);
                let (first, rest) = out.split_at_mut(1);
                first[0] = combine(0, lap0);
                let ring = |i: usize, out_ring: &mut [f64]| {
                    let base = 1 + (i - 1) * nt;
                    let cur = &u[base..base + nt];
                    let (co, ci, ca) = (outward[i - 1], inward[i - 1], angular[i - 1]);
                    for j in 0..nt {
                        let jm = if j == 0 { nt - 1 } else { j - 1 };
                        let jp = if j + 1 == nt { 0 } else { j + 1 };
                        let inner = if i == 1 { u[0] } else { u[base - nt + j] };
                        let outer = if i == nr { 0.0 } else { u[base + nt + j] - cur[j] };
                        let lap = co * outer + ci * (inner - cur[j]) + ca * (cur[jm] + cur[jp] - 2.0 * cur[j]);
                        out_ring[j] = combine(base + j, lap);
                    }
                };
                if u.len() >= PARALLEL_THRESHOLD && rayon::current_num_threads() > 1 {
                    rest.par_chunks_mut(nt).enumerate().for_each(|(i, r)| ring(i + 1, r));
                } else {
                    rest.chunks_mut(nt).enumerate().for_each(|(i, r)| ring(i + 1, r));
                }
            }
        }
    }

    /// `Σ_edges c_e (Δu)_e (Δv)_e = ⟨u, −W L v⟩`.
    pub(crate) fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Operator::Cartesian { nx, ny, gx, gy, .. } => {
                let w = nx + 1;
                let mut s = 0.0;
                for j in 0..=*ny {
                    let base = j * w;
                    let mut row = 0.0;
                    for i in 0..*nx {
                        row += (u[base + i + 1] - u[base + i]) * (v[base + i + 1] - v[base + i]);
                    }
                    s += gx[j] * row;
                }
                for j in 0..*ny {
                    let base = j * w;
                    for i in 0..=*nx {
                        s += gy[i] * (u[base + w + i] - u[base + i]) * (v[base + w + i] - v[base + i]);
                    }
                }
                s
            }
            Operator::Polar { nr, nt, g_radial, g_angular, .. } => {
                let (nr, nt) = (*nr, *nt);
                let at = |i: usize, j: usize| if i == 0 { 0 } else { 1 + (i - 1) * nt + j };
                let mut s = 0.0;
                for i in 0..nr {
                    let mut ring = 0.0;
                    for j in 0..nt {
                        let (a, b) = (at(i, j), at(i + 1, j));
                        ring += (u[b] - u[a]) * (v[b] - v[a]);
                    }
                    s += g_radial[i] * ring;
                }
                for i in 1..=nr {
                    let mut ring = 0.0;
                    for j in 0..nt {
                        let (a, b) = (at(i, j), at(i, (j + 1) % nt));
                        ring += (u[b] - u[a]) * (v[b] - v[a]);
                    }
                    s += g_angular[i - 1] * ring;
                }
                s
            }
        }
    }
}

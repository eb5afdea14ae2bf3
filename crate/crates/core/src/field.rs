//! Structured grids and sampled scalar fields.
//!
//! Cartesian grids are nodal on `[0, A] × [0, B]` with `(nx + 1)(ny + 1)`
//! nodes, `x` varying fastest. Polar grids on the unit disk store the origin
//! once (index 0) followed by rings `r_i = i/nr`, `i = 1..=nr`, each with
//! `nθ` equispaced angles starting at `θ = 0`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridKind {
    Cartesian { nx: usize, ny: usize, a: f64, b: f64 },
    Polar { nr: usize, ntheta: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    geometry: Geometry,
    kind: GridKind,
    speed: Vec<f64>,
    c_min: f64,
    c_max: f64,
    weights: Vec<f64>,
}

/// A boundary node and its counterclockwise arclength coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub index: usize,
    pub arclength: f64,
}

impl Grid2D {
    /// Nodal grid on a rectangle with unit sound speed.
    pub fn rectangle(geometry: Geometry, nx: usize, ny: usize) -> Result<Self> {
        let (a, b) = geometry
            .sides()
            .ok_or_else(|| Error::Configuration("Cartesian grids need a rectangle".into()))?;
        if nx < 4 || ny < 4 {
            return Err(Error::Resolution(format!("Cartesian grid {nx}×{ny} is too coarse")));
        }
        let kind = GridKind::Cartesian { nx, ny, a, b };
        let n = (nx + 1) * (ny + 1);
        let (hx, hy) = (a / nx as f64, b / ny as f64);
        let mut weights = vec![0.0; n];
        for j in 0..=ny {
            let wy = if j == 0 || j == ny { 0.5 * hy } else { hy };
            for i in 0..=nx {
                let wx = if i == 0 || i == nx { 0.5 * hx } else { hx };
                weights[j * (nx + 1) + i] = wx * wy;
            }
        }
        Ok(Self { geometry, kind, speed: vec![1.0; n], c_min: 1.0, c_max: 1.0, weights })
    }

    /// Polar grid on the unit disk; needs `nr ≥ 8`, `nθ ≥ 16`.
    ///
    /// Node weights are the areas of the finite-volume cells around each node:
    /// a disk of radius `dr/2` at the origin, annular sectors of width `dr`
    /// around interior rings, and a half-width sector at the wall.
    pub fn disk(nr: usize, ntheta: usize) -> Result<Self> {
        if nr < 8 || ntheta < 16 {
            return Err(Error::Resolution(format!("polar grid {nr}×{ntheta} below 8×16")));
        }
        let kind = GridKind::Polar { nr, ntheta };
        let dr = 1.0 / nr as f64;
        let dtheta = 2.0 * PI / ntheta as f64;
        let n = 1 + nr * ntheta;
        let mut weights = vec![0.0; n];
        weights[0] = 0.25 * PI * dr * dr;
        for i in 1..=nr {
            let w = if i == nr { 0.5 * dr * (1.0 - 0.25 * dr) * dtheta } else { i as f64 * dr * dr * dtheta };
            weights[1 + (i - 1) * ntheta..1 + i * ntheta].fill(w);
        }
        Ok(Self { geometry: Geometry::Disk, kind, speed: vec![1.0; n], c_min: 1.0, c_max: 1.0, weights })
    }

    /// Default-resolution grid: `n × n` cells on rectangles, `n × 2n` on the disk.
    pub fn for_geometry(geometry: Geometry, n: usize) -> Result<Self> {
        match geometry {
            Geometry::Disk => Self::disk(n, 2 * n),
            _ => Self::rectangle(geometry, n, n),
        }
    }

    /// Replaces the sound speed with `c(x, y)` sampled at the nodes
    /// (Cartesian grids only).
    pub fn with_speed(self, c: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let speed = (0..self.len()).map(|k| {
            let (x, y) = self.position(k);
            c(x, y)
        }).collect();
        self.with_speed_values(speed)
    }

    /// Replaces the sound speed with per-node values (Cartesian grids only).
    pub fn with_speed_values(mut self, speed: Vec<f64>) -> Result<Self> {
        if matches!(self.kind, GridKind::Polar { .. }) {
            return Err(Error::Configuration("variable sound speed needs a Cartesian grid".into()));
        }
        if speed.len() != self.len() {
            return Err(Error::Mismatch(format!("{} speed values for {} nodes", speed.len(), self.len())));
        }
        let c_min = speed.iter().copied().fold(f64::INFINITY, f64::min);
        let c_max = speed.iter().copied().fold(0.0, f64::max);
        if !(c_min > 0.0 && c_max.is_finite()) {
            return Err(Error::Parameter(format!("sound speed range [{c_min}, {c_max}] is not positive and finite")));
        }
        self.speed = speed;
        self.c_min = c_min;
        self.c_max = c_max;
        Ok(self)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn has_unit_speed(&self) -> bool {
        self.c_min == 1.0 && self.c_max == 1.0
    }

    /// Quadrature weights (cell areas); they sum to the domain area.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Smallest node spacing, the length scale entering the CFL bound.
    pub fn h_min(&self) -> f64 {
        match self.kind {
            GridKind::Cartesian { nx, ny, a, b } => (a / nx as f64).min(b / ny as f64),
            GridKind::Polar { nr, ntheta } => {
                let dr = 1.0 / nr as f64;
                dr.min(dr * 2.0 * PI / ntheta as f64)
            }
        }
    }

    /// Largest stable time step with safety factor 0.9.
    pub fn max_stable_dt(&self) -> f64 {
        0.9 * self.h_min() / (self.c_max * 2f64.sqrt())
    }

    pub fn position(&self, k: usize) -> (f64, f64) {
        match self.kind {
            GridKind::Cartesian { nx, a, b, ny } => {
                let (i, j) = (k % (nx + 1), k / (nx + 1));
                (a * i as f64 / nx as f64, b * j as f64 / ny as f64)
            }
            GridKind::Polar { nr, ntheta } => {
                if k == 0 {
                    return (0.0, 0.0);
                }
                let (i, j) = ((k - 1) / ntheta + 1, (k - 1) % ntheta);
                let r = i as f64 / nr as f64;
                let t = 2.0 * PI * j as f64 / ntheta as f64;
                (r * t.cos(), r * t.sin())
            }
        }
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|k| self.position(k)).collect()
    }

    /// Distance from a node to the nearest wall.
    pub fn wall_distance(&self, k: usize) -> f64 {
        let (x, y) = self.position(k);
        match self.kind {
            GridKind::Cartesian { a, b, .. } => x.min(a - x).min(y).min(b - y).max(0.0),
            GridKind::Polar { .. } => (1.0 - x.hypot(y)).max(0.0),
        }
    }

    /// Boundary nodes sorted by arclength, using the parametrization of
    /// [`Geometry::boundary_point`].
    pub fn boundary_nodes(&self) -> Vec<BoundaryNode> {
        match self.kind {
            GridKind::Cartesian { nx, ny, a, b } => {
                let (hx, hy) = (a / nx as f64, b / ny as f64);
                let at = |i: usize, j: usize| j * (nx + 1) + i;
                let mut out = Vec::with_capacity(2 * (nx + ny));
                for i in 0..nx {
                    out.push(BoundaryNode { index: at(i, 0), arclength: hx * i as f64 });
                }
                for j in 0..ny {
                    out.push(BoundaryNode { index: at(nx, j), arclength: a + hy * j as f64 });
                }
                for i in (1..=nx).rev() {
                    out.push(BoundaryNode { index: at(i, ny), arclength: a + b + hx * (nx - i) as f64 });
                }
                for j in (1..=ny).rev() {
                    out.push(BoundaryNode { index: at(0, j), arclength: 2.0 * a + b + hy * (ny - j) as f64 });
                }
                out
            }
            GridKind::Polar { nr, ntheta } => (0..ntheta)
                .map(|j| BoundaryNode {
                    index: 1 + (nr - 1) * ntheta + j,
                    arclength: 2.0 * PI * j as f64 / ntheta as f64,
                })
                .collect(),
        }
    }
}

/// A field given in closed form together with its gradient.
pub trait AnalyticField: Sync {
    fn value(&self, x: f64, y: f64) -> f64;
    fn gradient(&self, x: f64, y: f64) -> (f64, f64);
}

/// A real field sampled at the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    grid: Arc<Grid2D>,
    values: Vec<f64>,
}

impl ScalarField2D {
    pub fn zeros(grid: Arc<Grid2D>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<Grid2D>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| {
            let (x, y) = grid.position(k);
            f(x, y)
        }).collect();
        Self { grid, values }
    }

    pub fn from_values(grid: Arc<Grid2D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `self − other`; both fields must share a grid.
    pub fn difference(&self, other: &ScalarField2D) -> Result<ScalarField2D> {
        if self.grid != other.grid {
            return Err(Error::Mismatch("fields live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

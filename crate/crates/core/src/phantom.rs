//! Initial-pressure phantoms: single eigenmodes, sums of compactly
//! supported bumps, and fields loaded from disk.
//!
//! A bump with centre `x₀`, radius `r`, amplitude `a` and smoothness `p` is
//! `a (1 − |x − x₀|²/r²)^p` inside its disk and zero outside; it is
//! `C^{p−1}` across the edge. Spec files are TOML:
//!
//! ```toml
//! geometry = "disk"
//! kind = "bump-sum"
//!
//! [[bumps]]
//! center = [0.0, 0.35]
//! radius = 0.25
//! amplitude = 1.0
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_modes, EigenMode};
use crate::field::{AnalyticField, Grid2D, GridKind, ScalarField2D};
use crate::geometry::{BoundaryCondition, Geometry};
use crate::io::read_field;
use crate::{Error, Result};

/// Grid cells kept free between bump supports and the wall.
pub const SUPPORT_MARGIN_CELLS: f64 = 2.0;

fn default_smoothness() -> u32 {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
    #[serde(default = "default_smoothness")]
    pub smoothness: u32,
}

impl Bump {
    fn ratio(&self, x: f64, y: f64) -> f64 {
        ((x - self.center[0]).powi(2) + (y - self.center[1]).powi(2)) / (self.radius * self.radius)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let s = self.ratio(x, y);
        if s >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - s).powi(self.smoothness as i32)
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.ratio(x, y);
        if s >= 1.0 {
            return (0.0, 0.0);
        }
        let p = self.smoothness as i32;
        let d = -2.0 * f64::from(p) * self.amplitude * (1.0 - s).powi(p - 1) / (self.radius * self.radius);
        (d * (x - self.center[0]), d * (y - self.center[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhantomKind {
    /// A Neumann eigenmode of the geometry.
    Eigenmode { index: (u32, i32) },
    BumpSum { bumps: Vec<Bump> },
    /// A field file; it must be on the grid it is rendered to.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub geometry: Geometry,
    #[serde(flatten)]
    pub kind: PhantomKind,
}

/// Centres and amplitudes of the default three-bump phantom on the unit
/// disk, with radius 0.25.
pub const THREE_BUMPS: [([f64; 2], f64); 3] = [([0.0, 0.35], 1.0), ([-0.3, -0.2], 0.8), ([0.3, -0.2], 0.6)];

impl PhantomSpec {
    pub fn eigenmode(geometry: Geometry, index: (u32, i32)) -> Self {
        Self { geometry, kind: PhantomKind::Eigenmode { index } }
    }

    /// The default three-bump phantom, mapped from the unit disk to a
    /// rectangle by `x ↦ (A/2)(1 + p₁)`, `y ↦ (B/2)(1 + p₂)` with radius
    /// `0.25·min(A, B)/2`.
    pub fn three_bumps(geometry: Geometry) -> Self {
        let (scale_x, scale_y, ox, oy, r) = match geometry.sides() {
            None => (1.0, 1.0, 0.0, 0.0, 0.25),
            Some((a, b)) => (0.5 * a, 0.5 * b, 0.5 * a, 0.5 * b, 0.125 * a.min(b)),
        };
        let bumps = THREE_BUMPS
            .iter()
            .map(|&(c, amplitude)| Bump {
                center: [ox + scale_x * c[0], oy + scale_y * c[1]],
                radius: r,
                amplitude,
                smoothness: 3,
            })
            .collect();
        Self { geometry, kind: PhantomKind::BumpSum { bumps } }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("phantom spec: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("phantom spec: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Caveats that do not prevent rendering.
    pub fn warnings(&self) -> Vec<String> {
        match self.kind {
            PhantomKind::Eigenmode { index } => vec![format!(
                "eigenmode phantom {index:?} is not compactly supported inside the domain"
            )],
            _ => Vec::new(),
        }
    }

    /// Checks parameters that do not depend on a grid.
    pub fn validate(&self) -> Result<()> {
        if let PhantomKind::BumpSum { bumps } = &self.kind {
            if bumps.is_empty() {
                return Err(Error::Validation("bump phantom without bumps".into()));
            }
            for b in bumps {
                if !(b.radius > 0.0 && b.radius.is_finite() && b.amplitude.is_finite()) {
                    return Err(Error::Validation(format!("bump {b:?} needs a positive radius and finite amplitude")));
                }
                if b.smoothness < 3 {
                    return Err(Error::Validation(format!("bump smoothness {} is below C² (need ≥ 3)", b.smoothness)));
                }
                let gap = wall_distance(self.geometry, b.center) - b.radius;
                if gap <= 0.0 {
                    return Err(Error::Validation(format!("bump at {:?} touches the wall", b.center)));
                }
            }
        }
        Ok(())
    }

    /// The phantom in closed form (not available for file phantoms).
    pub fn resolve(&self) -> Result<Phantom> {
        self.validate()?;
        match &self.kind {
            PhantomKind::Eigenmode { index } => Ok(Phantom::Mode(find_neumann_mode(self.geometry, *index)?)),
            PhantomKind::BumpSum { bumps } => Ok(Phantom::Bumps(bumps.clone())),
            PhantomKind::File { path } => Err(Error::Configuration(format!(
                "phantom file {} has no closed form",
                path.display()
            ))),
        }
    }
}

fn wall_distance(geometry: Geometry, c: [f64; 2]) -> f64 {
    match geometry.sides() {
        Some((a, b)) => c[0].min(a - c[0]).min(c[1]).min(b - c[1]),
        None => 1.0 - c[0].hypot(c[1]),
    }
}

fn find_neumann_mode(geometry: Geometry, index: (u32, i32)) -> Result<EigenMode> {
    let bad = || Error::Validation(format!("no Neumann mode {index:?} on {geometry}"));
    // On the unit disk j'_{l,n} < π(n + |l|/2 + 1).
    let cap = match geometry.sides() {
        Some((a, b)) => std::f64::consts::PI * ((index.0 as f64 / a).powi(2) + (index.1 as f64 / b).powi(2)).sqrt() + 1e-6,
        None => std::f64::consts::PI * (index.0 as f64 + 0.5 * index.1.unsigned_abs() as f64 + 1.0),
    };
    if geometry.sides().is_some() && index.1 < 0 {
        return Err(bad());
    }
    enumerate_modes(geometry, BoundaryCondition::Neumann, cap.max(1.0))?
        .into_iter()
        .find(|m| m.index == index)
        .ok_or_else(bad)
}

/// A phantom in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum Phantom {
    Mode(EigenMode),
    Bumps(Vec<Bump>),
}

impl AnalyticField for Phantom {
    fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            Phantom::Mode(m) => m.value(x, y),
            Phantom::Bumps(bumps) => bumps.iter().map(|b| b.value(x, y)).sum(),
        }
    }

    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Phantom::Mode(m) => m.gradient(x, y),
            Phantom::Bumps(bumps) => bumps.iter().fold((0.0, 0.0), |acc, b| {
                let g = b.gradient(x, y);
                (acc.0 + g.0, acc.1 + g.1)
            }),
        }
    }
}

/// Largest node spacing of a grid.
fn cell_size(grid: &Grid2D) -> f64 {
    match grid.kind() {
        GridKind::Cartesian { nx, ny, a, b } => (a / nx as f64).max(b / ny as f64),
        GridKind::Polar { nr, ntheta } => (1.0 / nr as f64).max(2.0 * std::f64::consts::PI / ntheta as f64),
    }
}

/// Samples the phantom at the nodes of `grid`. Bump supports must stay
/// [`SUPPORT_MARGIN_CELLS`] cells away from the wall.
pub fn render(spec: &PhantomSpec, grid: &Arc<Grid2D>) -> Result<ScalarField2D> {
    if grid.geometry() != spec.geometry {
        return Err(Error::Mismatch(format!("phantom on {} rendered on {}", spec.geometry, grid.geometry())));
    }
    if let PhantomKind::File { path } = &spec.kind {
        let field = read_field(path)?;
        if field.grid().kind() != grid.kind() || field.grid().geometry() != grid.geometry() {
            return Err(Error::Mismatch(format!("phantom file {} is on a different grid", path.display())));
        }
        return ScalarField2D::from_values(grid.clone(), field.into_values());
    }
    let phantom = spec.resolve()?;
    if let PhantomKind::BumpSum { bumps } = &spec.kind {
        let margin = SUPPORT_MARGIN_CELLS * cell_size(grid);
        for b in bumps {
            let gap = wall_distance(spec.geometry, b.center) - b.radius;
            if gap < margin {
                return Err(Error::Validation(format!(
                    "bump at {:?} is {gap:.3e} from the wall, less than {SUPPORT_MARGIN_CELLS} cells ({margin:.3e})",
                    b.center
                )));
            }
        }
    }
    Ok(ScalarField2D::from_fn(grid.clone(), |x, y| phantom.value(x, y)))
}

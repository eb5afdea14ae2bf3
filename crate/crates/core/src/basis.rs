//! Laplacian eigenpairs on the unit disk and on rectangles.
//!
//! Index conventions:
//!
//! * rectangle Neumann `(n, l)`, `n, l ≥ 0`: `cos(nπx₁/A) cos(lπx₂/B)`;
//! * rectangle Dirichlet `(k, m)`, `k, m ≥ 1`: `sin(kπx₁/A) sin(mπx₂/B)`;
//! * rectangle mixed `(k, m)`, `k, m ≥ 0`: `cos((k+½)πx₁/A) cos(mπx₂/B)`,
//!   Dirichlet on `x₁ = A` only;
//! * disk `(radial, angular)` with radial index `≥ 1` and a signed angular
//!   index: `l > 0` selects `cos(lθ)`, `l < 0` selects `sin(|l|θ)`. Neumann
//!   eigenvalues are derivative zeros `j'_{|l|,n}` (so `(1, 0)` is the constant
//!   mode), Dirichlet eigenvalues are zeros `j_{|m|,k}`.
//!
//! All modes are normalized in `L₂(Ω)` with unit sound speed.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::AnalyticField;
use crate::geometry::{BoundaryCondition, Geometry, Rational};
use crate::quadrature::composite_rule;
use crate::specfun::{jn, jn_prime, BesselZeroTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenMode {
    pub geometry: Geometry,
    pub bc: BoundaryCondition,
    pub index: (u32, i32),
    /// Square root of the Laplacian eigenvalue.
    pub eigenvalue: f64,
    pub normalization: f64,
}

/// Separable factor `cos(p·u/2)` or `sin(p·u/2)` with `u = πx/L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Factor {
    Cos(u32),
    Sin(u32),
}

impl Factor {
    pub(crate) fn eval(self, u: f64) -> f64 {
        match self {
            Factor::Cos(p) => (0.5 * f64::from(p) * u).cos(),
            Factor::Sin(p) => (0.5 * f64::from(p) * u).sin(),
        }
    }

    /// Derivative with respect to `u`.
    fn slope(self, u: f64) -> f64 {
        match self {
            Factor::Cos(p) => -0.5 * f64::from(p) * (0.5 * f64::from(p) * u).sin(),
            Factor::Sin(p) => 0.5 * f64::from(p) * (0.5 * f64::from(p) * u).cos(),
        }
    }

    fn doubled_frequency(self) -> u32 {
        match self {
            Factor::Cos(p) | Factor::Sin(p) => p,
        }
    }
}

/// `sin(gπ/2)` and `cos(gπ/2)` for integer `g`, exactly.
fn quarter_turn(g: i64) -> (f64, f64) {
    match g.rem_euclid(4) {
        0 => (0.0, 1.0),
        1 => (1.0, 0.0),
        2 => (0.0, -1.0),
        _ => (-1.0, 0.0),
    }
}

/// `∫₀^π cos(g u/2) du`.
fn int_cos(g: i64) -> f64 {
    if g == 0 {
        PI
    } else {
        quarter_turn(g).0 / (0.5 * g as f64)
    }
}

/// `∫₀^π sin(g u/2) du`.
fn int_sin(g: i64) -> f64 {
    if g == 0 {
        0.0
    } else {
        (1.0 - quarter_turn(g).1) / (0.5 * g as f64)
    }
}

/// `∫₀^π f(u) g(u) du` for two separable factors, in closed form.
fn factor_product(f: Factor, g: Factor) -> f64 {
    match (f, g) {
        (Factor::Cos(p), Factor::Cos(q)) => {
            let (p, q) = (i64::from(p), i64::from(q));
            0.5 * (int_cos(p - q) + int_cos(p + q))
        }
        (Factor::Sin(p), Factor::Sin(q)) => {
            let (p, q) = (i64::from(p), i64::from(q));
            0.5 * (int_cos(p - q) - int_cos(p + q))
        }
        (Factor::Sin(p), Factor::Cos(q)) => {
            let (p, q) = (i64::from(p), i64::from(q));
            0.5 * (int_sin(p + q) + int_sin(p - q))
        }
        (Factor::Cos(_), Factor::Sin(_)) => factor_product(g, f),
    }
}

fn weight(index: u32) -> f64 {
    if index == 0 {
        1.0
    } else {
        2.0
    }
}

/// Exact form of a squared rectangle eigenvalue: a sum of rational multiples
/// of powers of `π`, stored as `(power, coefficient)` sorted by power.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExactEigenvalue(Vec<(i8, Rational)>);

impl EigenMode {
    pub(crate) fn factors(&self) -> Option<(Factor, Factor)> {
        let (i, j) = (self.index.0, self.index.1.unsigned_abs());
        if self.geometry.is_disk() {
            return None;
        }
        Some(match self.bc {
            BoundaryCondition::Neumann => (Factor::Cos(2 * i), Factor::Cos(2 * j)),
            BoundaryCondition::Dirichlet => (Factor::Sin(2 * i), Factor::Sin(2 * j)),
            BoundaryCondition::MixedRightDirichlet => (Factor::Cos(2 * i + 1), Factor::Cos(2 * j)),
        })
    }

    /// Angular order `|l|`, disk only.
    pub fn angular_order(&self) -> u32 {
        self.index.1.unsigned_abs()
    }

    /// Squared eigenvalue in exact arithmetic (rectangles only).
    pub fn exact_eigenvalue(&self) -> Option<ExactEigenvalue> {
        let Geometry::Rectangle { a, b } = self.geometry else {
            return None;
        };
        let (fx, fy) = self.factors()?;
        let mut terms: Vec<(i8, Rational)> = Vec::with_capacity(2);
        for (p, side) in [(fx.doubled_frequency(), a), (fy.doubled_frequency(), b)] {
            if p == 0 {
                continue;
            }
            let coef = Rational::from_integer(i128::from(p) * i128::from(p)) / (Rational::from_integer(4) * side.square());
            let power = 2 - 2 * side.pi_power() as i8;
            match terms.iter_mut().find(|t| t.0 == power) {
                Some(t) => t.1 += coef,
                None => terms.push((power, coef)),
            }
        }
        terms.sort_by_key(|t| t.0);
        Some(ExactEigenvalue(terms))
    }

    /// Value at `(x, y)` without a domain check.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self.geometry.sides() {
            Some((a, b)) => {
                let (fx, fy) = self.factors().expect("rectangle");
                self.normalization * fx.eval(PI * x / a) * fy.eval(PI * y / b)
            }
            None => {
                let r = x.hypot(y);
                let theta = y.atan2(x);
                let m = self.angular_order();
                self.normalization * jn(m, self.eigenvalue * r) * self.angular(theta)
            }
        }
    }

    pub(crate) fn angular(&self, theta: f64) -> f64 {
        let l = self.index.1;
        if l >= 0 {
            (f64::from(l) * theta).cos()
        } else {
            (f64::from(-l) * theta).sin()
        }
    }

    fn angular_slope(&self, theta: f64) -> f64 {
        let l = self.index.1;
        if l >= 0 {
            -f64::from(l) * (f64::from(l) * theta).sin()
        } else {
            f64::from(-l) * (f64::from(-l) * theta).cos()
        }
    }

    /// Gradient at `(x, y)` without a domain check.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        match self.geometry.sides() {
            Some((a, b)) => {
                let (fx, fy) = self.factors().expect("rectangle");
                let (u, v) = (PI * x / a, PI * y / b);
                (
                    self.normalization * fx.slope(u) * fy.eval(v) * PI / a,
                    self.normalization * fx.eval(u) * fy.slope(v) * PI / b,
                )
            }
            None => {
                let r = x.hypot(y);
                let theta = y.atan2(x);
                let m = self.angular_order();
                let k = self.eigenvalue;
                let radial = k * jn_prime(m, k * r);
                // J_m(kr)/r = k (J_{m-1} + J_{m+1})(kr) / (2m), finite at the axis.
                let over_r = if m == 0 { 0.0 } else { k * (jn(m - 1, k * r) + jn(m + 1, k * r)) / (2.0 * f64::from(m)) };
                let dr = self.normalization * radial * self.angular(theta);
                let dt = self.normalization * over_r * self.angular_slope(theta);
                let (s, c) = theta.sin_cos();
                (dr * c - dt * s, dr * s + dt * c)
            }
        }
    }
}

impl AnalyticField for EigenMode {
    fn value(&self, x: f64, y: f64) -> f64 {
        EigenMode::value(self, x, y)
    }

    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        EigenMode::gradient(self, x, y)
    }
}

/// All modes with eigenvalue `≤ cap`, sorted by eigenvalue and then index.
pub fn enumerate_modes(geometry: Geometry, bc: BoundaryCondition, cap: f64) -> Result<Vec<EigenMode>> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::Parameter(format!("eigenvalue cap {cap} must be positive")));
    }
    let mut modes = match geometry.sides() {
        Some((a, b)) => rectangle_modes(geometry, bc, cap, a, b),
        None => disk_modes(bc, cap)?,
    };
    modes.sort_by(|p, q| p.eigenvalue.total_cmp(&q.eigenvalue).then(index_order(p.index).cmp(&index_order(q.index))));
    Ok(modes)
}

fn rectangle_modes(geometry: Geometry, bc: BoundaryCondition, cap: f64, a: f64, b: f64) -> Vec<EigenMode> {
    let area = a * b;
    let (start, shift) = match bc {
        BoundaryCondition::Neumann => (0u32, 0.0),
        BoundaryCondition::Dirichlet => (1, 0.0),
        BoundaryCondition::MixedRightDirichlet => (0, 0.5),
    };
    let y_start = if bc == BoundaryCondition::Dirichlet { 1 } else { 0 };
    let mut out = Vec::new();
    let max_i = (cap * a / PI).floor() as u32 + 1;
    let max_j = (cap * b / PI).floor() as u32 + 1;
    for i in start..=max_i {
        for j in y_start..=max_j {
            let kx = (f64::from(i) + shift) * PI / a;
            let ky = f64::from(j) * PI / b;
            let lambda = kx.hypot(ky);
            if lambda > cap * (1.0 + 1e-14) {
                continue;
            }
            let normalization = match bc {
                BoundaryCondition::Neumann => (weight(i) * weight(j) / area).sqrt(),
                BoundaryCondition::Dirichlet => 2.0 / area.sqrt(),
                BoundaryCondition::MixedRightDirichlet => (2.0 * weight(j) / area).sqrt(),
            };
            out.push(EigenMode { geometry, bc, index: (i, j as i32), eigenvalue: lambda, normalization });
        }
    }
    out
}

fn disk_modes(bc: BoundaryCondition, cap: f64) -> Result<Vec<EigenMode>> {
    if bc == BoundaryCondition::MixedRightDirichlet {
        return Err(Error::Configuration("the disk has no mixed eigenbasis".into()));
    }
    let mut out = Vec::new();
    for m in 0u32.. {
        // Both j_{m,1} and j'_{m,1} (m ≥ 1) exceed m.
        if f64::from(m) > cap || m > crate::specfun::MAX_ORDER {
            break;
        }
        let table = BesselZeroTable::up_to(m, cap)?;
        let roots = match bc {
            BoundaryCondition::Neumann => table.prime_zeros(),
            _ => table.zeros(),
        };
        for (idx, &root) in roots.iter().enumerate() {
            if root > cap {
                break;
            }
            let order = f64::from(m);
            let normalization = match bc {
                BoundaryCondition::Neumann if root == 0.0 => 1.0 / PI.sqrt(),
                BoundaryCondition::Neumann => {
                    let j = jn(m, root);
                    let base = 1.0 / (PI * (1.0 - order * order / (root * root)) * j * j).sqrt();
                    if m == 0 {
                        base
                    } else {
                        2f64.sqrt() * base
                    }
                }
                _ => {
                    let base = 1.0 / (PI.sqrt() * jn_prime(m, root).abs());
                    if m == 0 {
                        base
                    } else {
                        2f64.sqrt() * base
                    }
                }
            };
            let radial = idx as u32 + 1;
            let signs: &[i32] = if m == 0 { &[1] } else { &[1, -1] };
            for &s in signs {
                out.push(EigenMode {
                    geometry: Geometry::Disk,
                    bc,
                    index: (radial, s * m as i32),
                    eigenvalue: root,
                    normalization,
                });
            }
        }
    }
    Ok(out)
}

/// Cosine partner before sine partner.
fn index_order(index: (u32, i32)) -> (u32, u32, bool) {
    (index.0, index.1.unsigned_abs(), index.1 < 0)
}

/// Values of `mode` at `points`; every point must lie in the closed domain.
pub fn eval_mode(mode: &EigenMode, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|&(x, y)| {
            mode.geometry.check_point(x, y)?;
            Ok(mode.value(x, y))
        })
        .collect()
}

/// `⟨A, B⟩` in `L₂(Ω)`: closed form on rectangles, Gauss–Legendre radial
/// quadrature on the disk.
pub fn coupling(a: &EigenMode, b: &EigenMode) -> Result<f64> {
    if a.geometry != b.geometry {
        return Err(Error::Mismatch(format!("coupling between {} and {}", a.geometry, b.geometry)));
    }
    match a.geometry.sides() {
        Some((sa, sb)) => {
            let (ax, ay) = a.factors().expect("rectangle");
            let (bx, by) = b.factors().expect("rectangle");
            let x = factor_product(ax, bx) * sa / PI;
            let y = factor_product(ay, by) * sb / PI;
            Ok(a.normalization * b.normalization * x * y)
        }
        None => {
            if a.index.1 != b.index.1 {
                return Ok(0.0);
            }
            let m = a.angular_order();
            let angular = if m == 0 { 2.0 * PI } else { PI };
            Ok(a.normalization * b.normalization * angular * radial_overlap(m, a.eigenvalue, b.eigenvalue))
        }
    }
}

/// `∫₀¹ J_m(p r) J_m(q r) r dr` with at least 16 nodes per half-wavelength.
pub(crate) fn radial_overlap(m: u32, p: f64, q: f64) -> f64 {
    let panels = (((p + q) / PI).ceil() as usize).max(2);
    composite_rule(0.0, 1.0, panels, 16)
        .into_iter()
        .map(|(r, w)| w * r * jn(m, p * r) * jn(m, q * r))
        .sum()
}

/// A pair of modes from the forward (Neumann) and reversal bases sharing an
/// eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoincidenceRecord {
    pub neumann: EigenMode,
    pub reversal: EigenMode,
    pub eigenvalue: f64,
    pub coupling: f64,
}

/// Tolerance used for disk eigenvalue coincidences.
pub const DISK_COINCIDENCE_TOL: f64 = 1e-9;

/// All pairs with equal eigenvalues. Rectangle pairs are compared exactly and
/// `tol` is ignored; disk pairs match when `|λ − ν| ≤ tol`.
pub fn detect_coincidences(neumann: &[EigenMode], reversal: &[EigenMode], tol: f64) -> Result<Vec<CoincidenceRecord>> {
    let mut out = Vec::new();
    let exact: Option<HashMap<ExactEigenvalue, Vec<&EigenMode>>> = neumann
        .iter()
        .map(|n| n.exact_eigenvalue().map(|key| (key, n)))
        .collect::<Option<Vec<_>>>()
        .map(|pairs| {
            let mut map: HashMap<ExactEigenvalue, Vec<&EigenMode>> = HashMap::new();
            for (key, n) in pairs {
                map.entry(key).or_default().push(n);
            }
            map
        });
    for r in reversal {
        let partners: Vec<&EigenMode> = match (&exact, r.exact_eigenvalue()) {
            (Some(map), Some(key)) => map.get(&key).cloned().unwrap_or_default(),
            _ => {
                let lo = neumann.partition_point(|n| n.eigenvalue < r.eigenvalue - tol);
                neumann[lo..].iter().take_while(|n| n.eigenvalue <= r.eigenvalue + tol).collect()
            }
        };
        for n in partners {
            out.push(CoincidenceRecord {
                neumann: *n,
                reversal: *r,
                eigenvalue: n.eigenvalue,
                coupling: coupling(r, n)?,
            });
        }
    }
    out.sort_by(|p, q| {
        p.eigenvalue
            .total_cmp(&q.eigenvalue)
            .then(p.neumann.index.cmp(&q.neumann.index))
            .then(p.reversal.index.cmp(&q.reversal.index))
    });
    Ok(out)
}

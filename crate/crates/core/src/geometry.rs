//! Cavity shapes and boundary-condition tags.
//!
//! Rectangle sides are kept in the exact form `√q · π^p` with rational `q`
//! and `p ∈ {0, 1}`, which lets eigenvalue coincidences be decided in exact
//! arithmetic.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rational number used for exact eigenvalue bookkeeping.
pub type Rational = Ratio<i128>;

/// A side length `√(square) · π^pi_power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SideLength {
    square: Rational,
    pi_power: u8,
}

impl SideLength {
    pub fn pi() -> Self {
        Self { square: Rational::from_integer(1), pi_power: 1 }
    }

    pub fn new(square: Rational, pi_power: u8) -> Result<Self> {
        if square <= Rational::from_integer(0) {
            return Err(Error::Parameter(format!("side length square {square} must be positive")));
        }
        if pi_power > 1 {
            return Err(Error::Parameter("side lengths support at most one factor of pi".into()));
        }
        Ok(Self { square, pi_power })
    }

    /// Rational part of the squared length.
    pub fn square(&self) -> Rational {
        self.square
    }

    pub fn pi_power(&self) -> u8 {
        self.pi_power
    }

    pub fn value(&self) -> f64 {
        let q = *self.square.numer() as f64 / *self.square.denom() as f64;
        q.sqrt() * PI.powi(i32::from(self.pi_power))
    }
}

impl FromStr for SideLength {
    type Err = Error;

    /// Accepts products of `pi`, `sqrt(q)`, and rationals written as decimals
    /// or fractions, e.g. `pi`, `pi*sqrt(2)`, `1.5*pi`, `3/2`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("cannot parse side length {s:?}"));
        let mut square = Rational::from_integer(1);
        let mut pi_power = 0u8;
        for factor in s.split('*').map(str::trim) {
            if factor.is_empty() {
                return Err(bad());
            }
            if factor.eq_ignore_ascii_case("pi") {
                pi_power += 1;
            } else if let Some(inner) = factor.strip_prefix("sqrt(").and_then(|f| f.strip_suffix(')')) {
                square *= parse_rational(inner).ok_or_else(bad)?;
            } else {
                let r = parse_rational(factor).ok_or_else(bad)?;
                square *= r * r;
            }
        }
        Self::new(square, pi_power)
    }
}

fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let (n, d) = (parse_rational(n)?, parse_rational(d)?);
        return (d != Rational::from_integer(0)).then(|| n / d);
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 18 {
        return None;
    }
    let whole: i128 = if int.is_empty() { 0 } else { int.parse().ok()? };
    if int.starts_with('-') {
        return None;
    }
    let scale = 10i128.pow(frac.len() as u32);
    let f: i128 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some(Rational::new(whole * scale + f, scale))
}

impl fmt::Display for SideLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one = Rational::from_integer(1);
        let mut parts = Vec::new();
        if self.square != one {
            parts.push(format!("sqrt({})", self.square));
        }
        if self.pi_power == 1 {
            parts.push("pi".to_string());
        }
        if parts.is_empty() {
            parts.push("1".to_string());
        }
        f.write_str(&parts.join("*"))
    }
}

impl Serialize for SideLength {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SideLength {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The cavity `Ω`. Rectangles are `[0, A] × [0, B]`; the disk is the unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    Disk,
    Rectangle { a: SideLength, b: SideLength },
}

impl Geometry {
    pub fn square() -> Self {
        Geometry::Rectangle { a: SideLength::pi(), b: SideLength::pi() }
    }

    pub fn is_disk(&self) -> bool {
        matches!(self, Geometry::Disk)
    }

    /// `(A, B)` for rectangles.
    pub fn sides(&self) -> Option<(f64, f64)> {
        match self {
            Geometry::Disk => None,
            Geometry::Rectangle { a, b } => Some((a.value(), b.value())),
        }
    }

    pub fn area(&self) -> f64 {
        match self.sides() {
            None => PI,
            Some((a, b)) => a * b,
        }
    }

    /// Membership in the closed domain, allowing a relative slack of `1e-12`.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        const SLACK: f64 = 1e-12;
        match self.sides() {
            None => x * x + y * y <= 1.0 + SLACK,
            Some((a, b)) => {
                (-SLACK * a..=a * (1.0 + SLACK)).contains(&x) && (-SLACK * b..=b * (1.0 + SLACK)).contains(&y)
            }
        }
    }

    pub fn check_point(&self, x: f64, y: f64) -> Result<()> {
        if self.contains(x, y) {
            Ok(())
        } else {
            Err(Error::Domain(format!("point ({x}, {y}) lies outside {self}")))
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self.sides() {
            None => 2.0 * PI,
            Some((a, b)) => 2.0 * (a + b),
        }
    }

    /// Boundary point at arclength `s`, measured counterclockwise. Rectangles
    /// start at the origin and run along the bottom side first; the disk starts
    /// at `(1, 0)`.
    pub fn boundary_point(&self, s: f64) -> (f64, f64) {
        let s = s.rem_euclid(self.perimeter());
        match self.sides() {
            None => (s.cos(), s.sin()),
            Some((a, b)) => {
                if s <= a {
                    (s, 0.0)
                } else if s <= a + b {
                    (a, s - a)
                } else if s <= 2.0 * a + b {
                    (a - (s - a - b), b)
                } else {
                    (0.0, b - (s - 2.0 * a - b))
                }
            }
        }
    }

    /// Arclength coordinate of a boundary point, inverse of
    /// [`Geometry::boundary_point`]. Fails for points off the boundary.
    pub fn arclength(&self, x: f64, y: f64) -> Result<f64> {
        const TOL: f64 = 1e-9;
        let off = || Error::Domain(format!("({x}, {y}) is not on the boundary of {self}"));
        match self.sides() {
            None => {
                if (x.hypot(y) - 1.0).abs() > TOL {
                    return Err(off());
                }
                Ok(y.atan2(x).rem_euclid(2.0 * PI))
            }
            Some((a, b)) => {
                if !self.contains(x, y) {
                    return Err(off());
                }
                let tol = TOL * a.max(b);
                if y.abs() <= tol && x < a - tol {
                    Ok(x.max(0.0))
                } else if (x - a).abs() <= tol && y < b - tol {
                    Ok(a + y.max(0.0))
                } else if (y - b).abs() <= tol && x > tol {
                    Ok(a + b + (a - x).max(0.0))
                } else if x.abs() <= tol && y > tol {
                    Ok(2.0 * a + b + (b - y).max(0.0))
                } else {
                    Err(off())
                }
            }
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Disk => f.write_str("disk"),
            g if *g == Geometry::square() => f.write_str("square"),
            Geometry::Rectangle { a, b } => write!(f, "rect:{a},{b}"),
        }
    }
}

impl FromStr for Geometry {
    type Err = Error;

    /// `disk`, `square`, or `rect:A,B` with side lengths as in [`SideLength`].
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "disk" => Ok(Geometry::Disk),
            "square" => Ok(Geometry::square()),
            other => {
                let body = other
                    .strip_prefix("rect:")
                    .or_else(|| other.strip_prefix("rectangle:"))
                    .ok_or_else(|| Error::Configuration(format!("unknown geometry {other:?}")))?;
                let (a, b) = body
                    .split_once(',')
                    .ok_or_else(|| Error::Configuration(format!("rectangle needs two sides: {other:?}")))?;
                Ok(Geometry::Rectangle { a: a.parse()?, b: b.parse()? })
            }
        }
    }
}

impl Serialize for Geometry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Geometry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Boundary condition of an eigenproblem. `MixedRightDirichlet` is Dirichlet
/// on the side `x₁ = A` of a rectangle and Neumann on the other three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    Neumann,
    Dirichlet,
    MixedRightDirichlet,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryCondition::Neumann => "neumann",
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::MixedRightDirichlet => "mixed",
        })
    }
}

impl FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "neumann" => Ok(BoundaryCondition::Neumann),
            "dirichlet" => Ok(BoundaryCondition::Dirichlet),
            "mixed" | "mixed-right-dirichlet" => Ok(BoundaryCondition::MixedRightDirichlet),
            other => Err(Error::Configuration(format!("unknown boundary condition {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_side_lengths() {
        let s: SideLength = "pi*sqrt(2)".parse().unwrap();
        assert_eq!(s.square(), Rational::from_integer(2));
        assert_eq!(s.pi_power(), 1);
        assert!((s.value() - PI * 2f64.sqrt()).abs() < 1e-14);
        let t: SideLength = "1.5*pi".parse().unwrap();
        assert_eq!(t.square(), Rational::new(9, 4));
        assert_eq!("3/2".parse::<SideLength>().unwrap().value(), 1.5);
        assert!("pi*pi".parse::<SideLength>().is_err());
        assert!("0".parse::<SideLength>().is_err());
        assert!("abc".parse::<SideLength>().is_err());
        assert!("-2".parse::<SideLength>().is_err());
    }

    #[test]
    fn geometry_round_trips() {
        for text in ["disk", "square", "rect:pi,sqrt(2)*pi", "rect:2,3/2"] {
            let g: Geometry = text.parse().unwrap();
            let again: Geometry = g.to_string().parse().unwrap();
            assert_eq!(g, again);
        }
        assert_eq!("rect:pi,pi".parse::<Geometry>().unwrap(), Geometry::square());
        assert!(matches!("cube".parse::<Geometry>(), Err(Error::Configuration(_))));
    }

    #[test]
    fn boundary_walk() {
        let g = Geometry::square();
        let (x, y) = g.boundary_point(PI + 0.5);
        assert!((x - PI).abs() < 1e-15 && (y - 0.5).abs() < 1e-15);
        let (x, y) = g.boundary_point(3.5 * PI);
        assert!(x.abs() < 1e-15 && (y - 0.5 * PI).abs() < 1e-12);
        let (x, y) = Geometry::Disk.boundary_point(0.5 * PI);
        assert!(x.abs() < 1e-15 && (y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn arclength_inverts_boundary_point() {
        for g in [Geometry::square(), "rect:2,pi".parse().unwrap(), Geometry::Disk] {
            let p = g.perimeter();
            for i in 0..97 {
                let s = p * i as f64 / 97.0;
                let (x, y) = g.boundary_point(s);
                assert!((g.arclength(x, y).unwrap() - s).abs() < 1e-9, "{g} {s}");
            }
            assert!(g.arclength(0.5, 0.4).is_err());
        }
    }

    #[test]
    fn containment() {
        assert!(Geometry::Disk.contains(0.6, 0.8));
        assert!(!Geometry::Disk.contains(0.8, 0.8));
        assert!(Geometry::square().check_point(PI, 0.0).is_ok());
        assert!(matches!(Geometry::square().check_point(-0.1, 1.0), Err(Error::Domain(_))));
    }
}

//! The smooth taper `α(s)` on `[0, 1]` that gates measured boundary data.
//!
//! `α = 1` on `[0, t₀]`, falls to `0` at `s = 1`, and is non-increasing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffClass {
    /// `φ((1 − s)/(1 − t₀))` with `φ(x) = e^{−1/x} / (e^{−1/x} + e^{−1/(1−x)})`;
    /// every derivative vanishes at both ends of the transition.
    Bump,
    /// Quintic smoothstep on `[t₀, 1]`; first and second derivatives vanish
    /// at the ends of the transition.
    Poly5,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    class: CutoffClass,
    flat_end: f64,
}

impl Default for CutoffProfile {
    fn default() -> Self {
        Self { class: CutoffClass::Bump, flat_end: 0.5 }
    }
}

impl CutoffProfile {
    pub fn new(class: CutoffClass, flat_end: f64) -> Result<Self> {
        if !(flat_end > 0.0 && flat_end < 1.0) {
            return Err(Error::Parameter(format!("cutoff flat end {flat_end} must lie in (0, 1)")));
        }
        Ok(Self { class, flat_end })
    }

    pub fn class(&self) -> CutoffClass {
        self.class
    }

    pub fn flat_end(&self) -> f64 {
        self.flat_end
    }

    fn width(&self) -> f64 {
        1.0 - self.flat_end
    }

    pub fn value(&self, s: f64) -> f64 {
        if s <= self.flat_end {
            return 1.0;
        }
        if s >= 1.0 {
            return 0.0;
        }
        match self.class {
            CutoffClass::Bump => quotient(self.transition(s)).0,
            CutoffClass::Poly5 => {
                let y = self.ramp(s);
                1.0 - y * y * y * (10.0 + y * (-15.0 + 6.0 * y))
            }
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        if s <= self.flat_end || s >= 1.0 {
            return 0.0;
        }
        match self.class {
            CutoffClass::Bump => -quotient(self.transition(s)).1 / self.width(),
            CutoffClass::Poly5 => {
                let y = self.ramp(s);
                -30.0 * y * y * (1.0 - y) * (1.0 - y) / self.width()
            }
        }
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        if s <= self.flat_end || s >= 1.0 {
            return 0.0;
        }
        let w2 = self.width() * self.width();
        match self.class {
            CutoffClass::Bump => quotient(self.transition(s)).2 / w2,
            CutoffClass::Poly5 => {
                let y = self.ramp(s);
                -60.0 * y * (1.0 - y) * (1.0 - 2.0 * y) / w2
            }
        }
    }

    /// Argument of `φ` for the bump class: runs from 1 at `t₀` to 0 at `s = 1`.
    fn transition(&self, s: f64) -> f64 {
        (1.0 - s) / self.width()
    }

    fn ramp(&self, s: f64) -> f64 {
        (s - self.flat_end) / self.width()
    }

    /// `(max |α′|, max |α″|)` over `[0, 1]`.
    pub fn derivative_maxima(&self) -> (f64, f64) {
        (
            maximize(|s| self.derivative(s).abs(), self.flat_end, 1.0),
            maximize(|s| self.second_derivative(s).abs(), self.flat_end, 1.0),
        )
    }
}

/// Dense sampling on `[a, b]` followed by golden-section refinement around
/// the best sample.
fn maximize(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const SAMPLES: usize = 20_000;
    let h = (b - a) / SAMPLES as f64;
    let (best_i, best) = (0..=SAMPLES)
        .map(|i| (i, f(a + h * i as f64)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let mut lo = (a + h * (best_i as f64 - 1.0)).max(a);
    let mut hi = (a + h * (best_i as f64 + 1.0)).min(b);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    best.max(f1).max(f2)
}

/// `φ(x)`, `φ′(x)`, `φ″(x)` for the mollifier quotient on `(0, 1)`.
///
/// With `z = 1/(1−x) − 1/x`, `φ = σ(z)` where `σ` is the logistic function.
fn quotient(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let y = 1.0 - x;
    let z = 1.0 / y - 1.0 / x;
    let dz = 1.0 / (x * x) + 1.0 / (y * y);
    let d2z = -2.0 / (x * x * x) + 2.0 / (y * y * y);
    // σ and σ(1 − σ) without cancellation for large |z|.
    let e = (-z.abs()).exp();
    let sigma = if z >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    let s1 = e / ((1.0 + e) * (1.0 + e));
    let s2 = s1 * (1.0 - 2.0 * sigma);
    (sigma, s1 * dz, s2 * dz * dz + s1 * d2z)
}

impl fmt::Display for CutoffProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.class {
            CutoffClass::Bump => "bump",
            CutoffClass::Poly5 => "poly5",
        };
        write!(f, "{name}:{}", self.flat_end)
    }
}

impl FromStr for CutoffProfile {
    type Err = Error;

    /// Parses `bump:0.5` or `poly5:0.3`; a bare class name takes `t₀ = 0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, t0) = match s.split_once(':') {
            Some((n, t)) => (
                n.trim(),
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad cutoff flat end in {s:?}")))?,
            ),
            None => (s.trim(), 0.5),
        };
        let class = match name {
            "bump" => CutoffClass::Bump,
            "poly5" => CutoffClass::Poly5,
            other => return Err(Error::Parameter(format!("unknown cutoff class {other:?}"))),
        };
        Self::new(class, t0)
    }
}

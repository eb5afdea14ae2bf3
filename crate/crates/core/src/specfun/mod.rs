//! Bessel functions of the first kind for integer order, their derivatives,
//! their positive zeros, and numerical checks on root spacing.
//!
//! Evaluation strategy for `J_m(x)`:
//!
//! * `x² ≤ m + 1`: the defining power series, whose terms decrease
//!   monotonically in that regime.
//! * `x ≤ 25` or `m > x`: Miller's backward recurrence, normalized with
//!   `J_0 + 2 Σ J_{2k} = 1`.
//! * otherwise: Hankel's asymptotic expansion for `J_0`, `J_1` followed by
//!   forward recurrence, which is stable while the order stays below `x`.

mod gaps;
mod zeros;

pub use gaps::{verify_zero_gaps, verify_zero_gaps_with, GapCheck, GapQuantity, GapReport};
pub use zeros::{bessel_prime_zero, bessel_zero, BesselZeroTable};

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Largest supported order.
pub const MAX_ORDER: u32 = 200;
/// Largest supported argument.
pub const MAX_ARG: f64 = 1.0e4;

const MILLER_LIMIT: f64 = 25.0;

fn check_range(m: u32, x: f64) -> Result<()> {
    if m > MAX_ORDER {
        return Err(Error::Range(format!("order {m} exceeds {MAX_ORDER}")));
    }
    if !(0.0..=MAX_ARG).contains(&x) {
        return Err(Error::Range(format!("argument {x} outside [0, {MAX_ARG}]")));
    }
    Ok(())
}

/// `J_m(x)` for `0 ≤ m ≤ 200`, `0 ≤ x ≤ 10⁴`.
pub fn bessel_j(m: u32, x: f64) -> Result<f64> {
    check_range(m, x)?;
    Ok(jn(m, x))
}

/// `J_m'(x)`, same range as [`bessel_j`].
pub fn bessel_j_prime(m: u32, x: f64) -> Result<f64> {
    check_range(m, x)?;
    Ok(jn_prime(m, x))
}

/// Unchecked `J_m(x)` for `x ≥ 0`.
pub(crate) fn jn(m: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let order = f64::from(m);
    if x * x <= order + 1.0 {
        series(m, x)
    } else if x <= MILLER_LIMIT || order > x {
        miller(m, x)
    } else {
        forward(m, x)
    }
}

pub(crate) fn jn_prime(m: u32, x: f64) -> f64 {
    if m == 0 {
        -jn(1, x)
    } else {
        0.5 * (jn(m - 1, x) - jn(m + 1, x))
    }
}

/// `J_m''(x)` from Bessel's equation; `x > 0`.
pub(crate) fn jn_second(m: u32, x: f64) -> f64 {
    let order = f64::from(m);
    let j = jn(m, x);
    let jp = jn_prime(m, x);
    -jp / x - (1.0 - order * order / (x * x)) * j
}

fn series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for i in 1..=m {
        lead *= half / f64::from(i);
    }
    let q = -half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200u32 {
        term *= q / (f64::from(k) * f64::from(m + k));
        sum += term;
        if term.abs() <= f64::EPSILON * 0.25 * sum.abs() {
            break;
        }
    }
    lead * sum
}

fn miller(m: u32, x: f64) -> f64 {
    let top = f64::from(m).max(x);
    let start = 2 * (((top + 30.0 + 10.0 * top.cbrt()) / 2.0).ceil() as u32);
    let two_over_x = 2.0 / x;

    let mut above = 0.0_f64; // J_{k+1}
    let mut here = 1.0e-30_f64; // J_k
    let mut norm = 0.0_f64;
    let mut wanted = if m == start { here } else { 0.0 };

    for k in (1..=start).rev() {
        let below = f64::from(k) * two_over_x * here - above;
        above = here;
        here = below;
        let idx = k - 1;
        if idx == m {
            wanted = here;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * here;
        }
        if here.abs() > 1.0e250 {
            here *= 1.0e-250;
            above *= 1.0e-250;
            norm *= 1.0e-250;
            wanted *= 1.0e-250;
        }
    }
    norm += here;
    wanted / norm
}

fn forward(m: u32, x: f64) -> f64 {
    let j0 = hankel(0, x);
    if m == 0 {
        return j0;
    }
    let j1 = hankel(1, x);
    let mut prev = j0;
    let mut cur = j1;
    for k in 1..m {
        let next = 2.0 * f64::from(k) / x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Hankel's large-argument expansion, `nu ∈ {0, 1}`, `x > 25`.
fn hankel(nu: u32, x: f64) -> f64 {
    let mu = 4.0 * f64::from(nu * nu);
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0_f64;
    let mut last = f64::INFINITY;
    for k in 1..120u32 {
        let odd = f64::from(2 * k - 1);
        term *= (mu - odd * odd) / (f64::from(k) * 8.0 * x);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1.0e-17 {
            break;
        }
    }
    let phase = (0.5 * f64::from(nu) + 0.25) * PI;
    let (s, c) = x.sin_cos();
    let (sp, cp) = phase.sin_cos();
    let cos_chi = c * cp + s * sp;
    let sin_chi = s * cp - c * sp;
    (2.0 / (PI * x)).sqrt() * (p * cos_chi - q * sin_chi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300) || (a - b).abs() <= tol
    }

    #[test]
    fn values_at_origin() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j_prime(0, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j_prime(1, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn range_errors() {
        assert!(matches!(bessel_j(201, 1.0), Err(Error::Range(_))));
        assert!(matches!(bessel_j(0, -1.0), Err(Error::Range(_))));
        assert!(matches!(bessel_j(0, 1.0e5), Err(Error::Range(_))));
        assert!(matches!(bessel_j_prime(3, f64::NAN), Err(Error::Range(_))));
    }

    // Reference values from a 30-digit arbitrary-precision evaluation.
    #[test]
    fn matches_high_precision_values() {
        let cases: &[(u32, f64, f64)] = &[
            (0, 1.0, 0.765_197_686_557_966_55),
            (1, 2.5, 0.497_094_102_464_274_04),
            (5, 10.0, -0.234_061_528_186_793_64),
            (0, 30.0, -0.086_367_983_581_040_211),
            (1, 100.0, -0.077_145_352_014_112_158),
            (10, 1.0, 2.630_615_123_687_453_2e-10),
            (50, 30.0, 2.058_165_663_156_417_8e-8),
            (3, 1000.0, -0.004_827_420_825_203_947_9),
            (200, 150.0, 8.057_702_198_396_853_8e-14),
            (20, 12.0, 2.512_132_702_453_995_3e-4),
            (0, 9999.5, -0.004_478_727_403_128_425),
            (7, 25.5, -0.083_249_221_475_469_142),
            (40, 38.0, 0.066_862_255_678_219_314),
        ];
        for &(m, x, want) in cases {
            let got = jn(m, x);
            assert!(close(got, want, 1e-12), "J_{m}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn recurrence_consistency() {
        for m in 1..60u32 {
            for i in 1..400 {
                let x = 0.37 * f64::from(i);
                let lhs = jn(m - 1, x) + jn(m + 1, x);
                let rhs = 2.0 * f64::from(m) / x * jn(m, x);
                assert!((lhs - rhs).abs() <= 1e-10, "m={m} x={x}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn regime_boundaries_agree() {
        // Miller vs Hankel+forward across the x = 25 switch.
        for m in 0..20u32 {
            let a = miller(m, 25.0 + 1e-9);
            let b = forward(m, 25.0 + 1e-9);
            assert!((a - b).abs() < 1e-13, "m={m}: {a} vs {b}");
        }
        // Series vs Miller where both are valid.
        for m in 3..40u32 {
            let x = f64::from(m + 1).sqrt();
            assert!((series(m, x) - miller(m, x)).abs() <= 1e-15 * series(m, x).abs().max(1e-300) * 10.0);
        }
    }

    #[test]
    fn second_derivative_satisfies_bessel_equation() {
        let h = 1e-4;
        for &(m, x) in &[(0u32, 3.3), (2, 7.1), (7, 11.5), (15, 40.0)] {
            let fd = (jn(m, x + h) - 2.0 * jn(m, x) + jn(m, x - h)) / (h * h);
            assert!((fd - jn_second(m, x)).abs() < 1e-6);
        }
    }
}

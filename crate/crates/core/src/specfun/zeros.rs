use std::f64::consts::PI;

use super::{check_range, jn, jn_prime, jn_second, MAX_ARG};
use crate::error::{Error, Result};

/// Scan step used to bracket roots. Adjacent roots of `J_m` and `J_m'` are
/// never closer than about 1, so two sign changes cannot hide in one step.
const SCAN_STEP: f64 = 0.25;
const MAX_REFINE: usize = 100;
const RESIDUAL_LIMIT: f64 = 1.0e-10;

/// Positive zeros of `J_m` and of `J_m'` for one order, `k = 1..=k_max`.
///
/// For `m = 0` the value `0` is stored as the first zero of `J_0'`, so that
/// the constant Neumann mode of the disk has eigenvalue zero. For `m > 0`
/// the derivative zeros start strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselZeroTable {
    order: u32,
    zeros: Vec<f64>,
    prime_zeros: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Target {
    Value,
    Derivative,
}

impl Target {
    fn eval(self, m: u32, x: f64) -> (f64, f64) {
        match self {
            Target::Value => (jn(m, x), jn_prime(m, x)),
            Target::Derivative => (jn_prime(m, x), jn_second(m, x)),
        }
    }
}

impl BesselZeroTable {
    /// Tabulates the first `k_max` zeros of `J_m` and of `J_m'`.
    pub fn new(m: u32, k_max: usize) -> Result<Self> {
        Self::build(m, |zeros, primes| zeros.len() >= k_max && primes.len() >= k_max, None)
            .map(|mut t| {
                t.zeros.truncate(k_max);
                t.prime_zeros.truncate(k_max);
                t
            })
    }

    /// Tabulates every zero of `J_m` and `J_m'` not exceeding `cap`.
    pub fn up_to(m: u32, cap: f64) -> Result<Self> {
        if !(cap > 0.0 && cap < MAX_ARG) {
            return Err(Error::Range(format!("zero cap {cap} outside (0, {MAX_ARG})")));
        }
        Self::build(m, |_, _| false, Some(cap))
    }

    fn build(m: u32, mut done: impl FnMut(&[f64], &[f64]) -> bool, cap: Option<f64>) -> Result<Self> {
        check_range(m, 0.0)?;
        let mut zeros = Vec::new();
        let mut prime_zeros = Vec::new();
        if m == 0 {
            prime_zeros.push(0.0);
        }
        let order = f64::from(m);
        // J_m and J_m' keep one sign on (0, m] for m ≥ 1.
        let mut a = (0.5 * order).max(0.05);
        let mut fa = jn(m, a);
        let mut ga = jn_prime(m, a);
        let limit = cap.unwrap_or(MAX_ARG - SCAN_STEP);
        while !done(&zeros, &prime_zeros) {
            if a >= limit {
                break;
            }
            let b = (a + SCAN_STEP).min(limit);
            let fb = jn(m, b);
            let gb = jn_prime(m, b);
            // Within a step the J' root (if any) precedes or follows the
            // J root; order the pushes by position.
            let mut found: Vec<(f64, bool)> = Vec::with_capacity(2);
            if fa * fb < 0.0 || fb == 0.0 {
                let guess = mcmahon(m, zeros.len() + 1, false);
                found.push((refine(m, Target::Value, a, b, fa, fb, guess)?, false));
            }
            if ga * gb < 0.0 || gb == 0.0 {
                let guess = mcmahon(m, prime_zeros.len() + 1, true);
                found.push((refine(m, Target::Derivative, a, b, ga, gb, guess)?, true));
            }
            found.sort_by(|x, y| x.0.total_cmp(&y.0));
            for (root, is_prime) in found {
                if cap.is_some_and(|c| root > c) {
                    continue;
                }
                if is_prime {
                    prime_zeros.push(root);
                } else {
                    zeros.push(root);
                }
            }
            a = b;
            fa = fb;
            ga = gb;
        }
        Ok(Self { order: m, zeros, prime_zeros })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// `j_{m,k}`, `k ≥ 1`.
    pub fn zero(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.zeros.get(i).copied())
    }

    /// `j'_{m,k}`, `k ≥ 1`, with `j'_{0,1} = 0`.
    pub fn prime_zero(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.prime_zeros.get(i).copied())
    }

    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    pub fn prime_zeros(&self) -> &[f64] {
        &self.prime_zeros
    }

    /// Largest of `|J_m(j)|` and `|J_m'(j')|` over the table.
    pub fn max_residual(&self) -> f64 {
        let m = self.order;
        let a = self.zeros.iter().map(|&x| jn(m, x).abs());
        let b = self
            .prime_zeros
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| jn_prime(m, x).abs());
        a.chain(b).fold(0.0, f64::max)
    }
}

/// McMahon's leading terms. `prime` selects zeros of `J_m'` in the indexing
/// where `k = 1` is the first positive root.
fn mcmahon(m: u32, k: usize, prime: bool) -> f64 {
    let mu = 4.0 * f64::from(m).powi(2);
    let shift = if prime { 0.75 } else { 0.25 };
    let beta = (k as f64 + 0.5 * f64::from(m) - shift) * PI;
    if prime {
        beta - (mu + 3.0) / (8.0 * beta)
    } else {
        beta - (mu - 1.0) / (8.0 * beta)
    }
}

/// Safeguarded Newton on a sign-change bracket.
fn refine(m: u32, target: Target, mut a: f64, mut b: f64, fa: f64, fb: f64, guess: f64) -> Result<f64> {
    if fb == 0.0 {
        return Ok(b);
    }
    if fa == 0.0 {
        return Ok(a);
    }
    let rising = fb > fa;
    let mut x = if guess > a && guess < b { guess } else { 0.5 * (a + b) };
    for _ in 0..MAX_REFINE {
        let (f, df) = target.eval(m, x);
        if f == 0.0 {
            return Ok(x);
        }
        if (f > 0.0) == rising {
            b = x;
        } else {
            a = x;
        }
        let newton = x - f / df;
        let next = if df != 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        let step = (next - x).abs();
        x = next;
        if step <= 4.0 * f64::EPSILON * x.abs() || b - a <= 4.0 * f64::EPSILON * x.abs() {
            let (res, _) = target.eval(m, x);
            if res.abs() > RESIDUAL_LIMIT {
                return Err(Error::Numerical(format!(
                    "root of order {m} near {x} has residual {res:e}"
                )));
            }
            return Ok(x);
        }
    }
    Err(Error::Numerical(format!("root refinement for order {m} did not converge near {x}")))
}

/// `j_{m,k}`, the k-th positive zero of `J_m`.
pub fn bessel_zero(m: u32, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("zero index k must be ≥ 1".into()));
    }
    let table = BesselZeroTable::new(m, k)?;
    table
        .zero(k)
        .ok_or_else(|| Error::Range(format!("zero j_{{{m},{k}}} exceeds the supported argument range")))
}

/// `j'_{m,k}`, the k-th zero of `J_m'`; `j'_{0,1} = 0`.
pub fn bessel_prime_zero(m: u32, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("zero index k must be ≥ 1".into()));
    }
    let table = BesselZeroTable::new(m, k)?;
    table
        .prime_zero(k)
        .ok_or_else(|| Error::Range(format!("zero j'_{{{m},{k}}} exceeds the supported argument range")))
}

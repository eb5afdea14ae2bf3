//! Gauss–Legendre panel rules and an adaptive integrator built on them.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n).expect("rule needs at least one node");
    GaussLegendre::new(n).as_node_weight_pairs().to_vec()
}

/// Nodes and weights of `panels` equal panels on `[a, b]`, each carrying the
/// `order`-point rule.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let base = legendre_rule(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + h * p as f64;
        for &(x, w) in &base {
            out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    out
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    total: f64,
    compensation: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.total + x;
        self.compensation += if self.total.abs() >= x.abs() { (self.total - t) + x } else { (x - t) + self.total };
        self.total = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.total + self.compensation
    }
}

pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = Neumaier::default();
    values.into_iter().for_each(|x| s.add(x));
    s.sum()
}

/// Adaptive integration of `f` over `[a, b]`.
///
/// The interval is first split into `initial_panels` equal pieces; a panel is
/// accepted when its 10- and 20-point Gauss–Legendre values agree within its
/// share of `tol`, and bisected otherwise. Fails once more than `max_panels`
/// panels would be needed.
pub struct Adaptive {
    low: Vec<(f64, f64)>,
    high: Vec<(f64, f64)>,
}

impl Default for Adaptive {
    fn default() -> Self {
        Self { low: legendre_rule(10), high: legendre_rule(20) }
    }
}

impl Adaptive {
    pub fn integrate(
        &self,
        f: impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        initial_panels: usize,
        tol: f64,
        max_panels: usize,
    ) -> Result<f64> {
        let apply = |rule: &[(f64, f64)], lo: f64, hi: f64| {
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            half * rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>()
        };
        let n0 = initial_panels.max(1);
        let h = (b - a) / n0 as f64;
        let mut stack: Vec<(f64, f64)> = (0..n0).rev().map(|i| (a + h * i as f64, a + h * (i + 1) as f64)).collect();
        let width = (b - a).abs();
        let mut total = Neumaier::default();
        let mut panels = n0;
        while let Some((lo, hi)) = stack.pop() {
            let coarse = apply(&self.low, lo, hi);
            let fine = apply(&self.high, lo, hi);
            let share = tol * (hi - lo).abs() / width;
            if (fine - coarse).abs() <= share {
                total.add(fine);
                continue;
            }
            panels += 1;
            if panels > max_panels {
                return Err(Error::Quadrature(format!(
                    "tolerance {tol:e} not reached on [{a}, {b}] within {max_panels} panels"
                )));
            }
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi));
            stack.push((lo, mid));
        }
        Ok(total.sum())
    }
}

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use super::zeros::BesselZeroTable;
use crate::error::{Error, Result};

/// Largest permitted `|J_m(j)|` or `|J_m'(j')|` at a tabulated root.
pub const ROOT_RESIDUAL_BOUND: f64 = 1.0e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GapQuantity {
    /// `j_k < j'_{k+1} < j_{k+1}`.
    Interlace,
    /// `j'_1 > √(m(m+2))`, `m ≥ 1`.
    PrimeLowerBound,
    /// `j_k − j'_k ≥ √2`, `k ≥ 2`.
    ZeroAbovePrime,
    /// `j'_{k+1} − j_k ≥ 1`.
    PrimeAboveZero,
    /// `|j_k − j_l| > π|k − l|`.
    ZeroSpacing,
    /// `|j_k − j'_l| ≥ |2k − 2l + 1|`.
    MixedSpacing,
    /// `max |J_m|, |J_m'|` at the tabulated roots.
    RootResidual,
}

impl GapQuantity {
    pub fn name(self) -> &'static str {
        match self {
            GapQuantity::Interlace => "interlace",
            GapQuantity::PrimeLowerBound => "prime_lower_bound",
            GapQuantity::ZeroAbovePrime => "zero_minus_prime",
            GapQuantity::PrimeAboveZero => "prime_minus_zero",
            GapQuantity::ZeroSpacing => "zero_spacing",
            GapQuantity::MixedSpacing => "mixed_spacing",
            GapQuantity::RootResidual => "root_residual",
        }
    }
}

impl fmt::Display for GapQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One checked inequality. `l = 0` when the check involves a single index.
/// For [`GapQuantity::Interlace`] `value` is the smaller of the two margins
/// and `bound` is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCheck {
    pub m: u32,
    pub k: usize,
    pub l: usize,
    pub quantity: GapQuantity,
    pub bound: f64,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct GapReport {
    pub m_max: u32,
    pub k_max: usize,
    /// `(checked, failed)` per quantity.
    pub counts: BTreeMap<GapQuantity, (usize, usize)>,
    pub violations: Vec<GapCheck>,
    pub max_residual: f64,
    /// `min |j_{0,k} − j'_{0,l}| / |2k − 2l + 1|` over the tabulated range,
    /// the measured constant for order zero (no bound is asserted).
    pub order_zero_constant: f64,
}

impl GapReport {
    pub fn total_checks(&self) -> usize {
        self.counts.values().map(|c| c.0).sum()
    }

    pub fn total_violations(&self) -> usize {
        self.counts.values().map(|c| c.1).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.total_violations() == 0
    }

    fn record(&mut self, check: GapCheck) {
        let entry = self.counts.entry(check.quantity).or_default();
        entry.0 += 1;
        if !check.pass {
            entry.1 += 1;
            self.violations.push(check);
        }
    }
}

/// Checks the root-spacing inequalities for `1 ≤ m ≤ m_max` and indices up
/// to `k_max`, plus interlacing and the measured constant for `m = 0`.
pub fn verify_zero_gaps(m_max: u32, k_max: usize) -> Result<GapReport> {
    verify_zero_gaps_with(m_max, k_max, |_| {})
}

/// As [`verify_zero_gaps`], handing every individual check to `sink`.
pub fn verify_zero_gaps_with(m_max: u32, k_max: usize, mut sink: impl FnMut(&GapCheck)) -> Result<GapReport> {
    if m_max < 1 || k_max < 2 {
        return Err(Error::Parameter(format!(
            "gap verification needs m_max ≥ 1 and k_max ≥ 2 (got {m_max}, {k_max})"
        )));
    }
    let mut report = GapReport {
        m_max,
        k_max,
        order_zero_constant: f64::INFINITY,
        ..GapReport::default()
    };
    let mut emit = |report: &mut GapReport, check: GapCheck| {
        sink(&check);
        report.record(check);
    };

    for m in 0..=m_max {
        let table = BesselZeroTable::new(m, k_max + 1)?;
        let j = |k: usize| table.zero(k).expect("tabulated");
        let jp = |k: usize| table.prime_zero(k).expect("tabulated");

        let residual = table.max_residual();
        report.max_residual = report.max_residual.max(residual);
        emit(
            &mut report,
            GapCheck {
                m,
                k: 0,
                l: 0,
                quantity: GapQuantity::RootResidual,
                bound: ROOT_RESIDUAL_BOUND,
                value: residual,
                pass: residual <= ROOT_RESIDUAL_BOUND,
            },
        );

        for k in 1..=k_max {
            let lower = jp(k + 1) - j(k);
            let upper = j(k + 1) - jp(k + 1);
            emit(
                &mut report,
                GapCheck {
                    m,
                    k,
                    l: k + 1,
                    quantity: GapQuantity::Interlace,
                    bound: 0.0,
                    value: lower.min(upper),
                    pass: lower > 0.0 && upper > 0.0,
                },
            );
        }

        if m == 0 {
            for k in 1..=k_max {
                for l in 1..=k_max {
                    let span = (2.0 * k as f64 - 2.0 * l as f64 + 1.0).abs();
                    let ratio = (j(k) - jp(l)).abs() / span;
                    report.order_zero_constant = report.order_zero_constant.min(ratio);
                }
            }
            continue;
        }

        let order = f64::from(m);
        let floor = (order * (order + 2.0)).sqrt();
        emit(
            &mut report,
            GapCheck {
                m,
                k: 1,
                l: 0,
                quantity: GapQuantity::PrimeLowerBound,
                bound: floor,
                value: jp(1),
                pass: jp(1) > floor,
            },
        );

        for k in 2..=k_max {
            let value = j(k) - jp(k);
            emit(
                &mut report,
                GapCheck {
                    m,
                    k,
                    l: k,
                    quantity: GapQuantity::ZeroAbovePrime,
                    bound: SQRT_2,
                    value,
                    pass: value >= SQRT_2,
                },
            );
        }

        for k in 1..=k_max {
            let value = jp(k + 1) - j(k);
            emit(
                &mut report,
                GapCheck {
                    m,
                    k,
                    l: k + 1,
                    quantity: GapQuantity::PrimeAboveZero,
                    bound: 1.0,
                    value,
                    pass: value >= 1.0,
                },
            );
        }

        for k in 1..=k_max {
            for l in (k + 1)..=k_max {
                let value = (j(k) - j(l)).abs();
                let bound = PI * (l - k) as f64;
                emit(
                    &mut report,
                    GapCheck {
                        m,
                        k,
                        l,
                        quantity: GapQuantity::ZeroSpacing,
                        bound,
                        value,
                        pass: value > bound,
                    },
                );
            }
        }

        for k in 1..=k_max {
            for l in 1..=k_max {
                let value = (j(k) - jp(l)).abs();
                let bound = (2.0 * k as f64 - 2.0 * l as f64 + 1.0).abs();
                emit(
                    &mut report,
                    GapCheck {
                        m,
                        k,
                        l,
                        quantity: GapQuantity::MixedSpacing,
                        bound,
                        value,
                        pass: value >= bound,
                    },
                );
            }
        }
    }
    Ok(report)
}

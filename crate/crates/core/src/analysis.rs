//! Norms and energies of grid fields, the coupling integrals `I_{n,k}(ε)`
//! that drive the reconstruction error, and modal decomposition of residuals.
//!
//! The residual prediction needs the expansion of the true initial field, so
//! it is a verification tool and cannot replace the reconstruction.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{coupling, detect_coincidences, EigenMode, DISK_COINCIDENCE_TOL};
use crate::cutoff::CutoffProfile;
use crate::fdtd::Operator;
use crate::field::{Grid2D, GridKind, ScalarField2D};
use crate::quadrature::{compensated_sum, Adaptive};
use crate::spectral::{grid_coefficients, ModalState};
use crate::{Error, Result};

/// Absolute tolerance of the coupling integrals.
pub const COUPLING_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    /// `‖f‖_{c⁻²}`.
    pub l2_weighted: f64,
    /// `‖∇f‖`.
    pub h1_semi: f64,
    /// `(‖f‖²_{c⁻²} + ‖∇f‖²)^{1/2}`.
    pub h1: f64,
}

/// Nodal gradient `(∂₁f, ∂₂f)` by centered differences, second-order
/// one-sided at the walls.
pub fn gradient(field: &ScalarField2D) -> (Vec<f64>, Vec<f64>) {
    let grid = field.grid();
    let u = field.values();
    let n = grid.len();
    let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
    // Derivative of samples `at(0..=m)` with spacing `h` at position `k`.
    let diff = |at: &dyn Fn(usize) -> f64, k: usize, m: usize, h: f64| {
        if k == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else if k == m {
            (3.0 * at(m) - 4.0 * at(m - 1) + at(m - 2)) / (2.0 * h)
        } else {
            (at(k + 1) - at(k - 1)) / (2.0 * h)
        }
    };
    match grid.kind() {
        GridKind::Cartesian { nx, ny, a, b } => {
            let (hx, hy) = (a / nx as f64, b / ny as f64);
            let w = nx + 1;
            for j in 0..=ny {
                for i in 0..=nx {
                    gx[j * w + i] = diff(&|k| u[j * w + k], i, nx, hx);
                    gy[j * w + i] = diff(&|k| u[k * w + i], j, ny, hy);
                }
            }
        }
        GridKind::Polar { nr, ntheta } => {
            let dr = 1.0 / nr as f64;
            let dtheta = 2.0 * PI / ntheta as f64;
            let at = |i: usize, j: usize| if i == 0 { u[0] } else { u[1 + (i - 1) * ntheta + (j % ntheta)] };
            let (mut sx, mut sy) = (0.0, 0.0);
            for j in 0..ntheta {
                let (s, c) = (j as f64 * dtheta).sin_cos();
                sx += at(1, j) * c;
                sy += at(1, j) * s;
            }
            gx[0] = 2.0 * sx / (ntheta as f64 * dr);
            gy[0] = 2.0 * sy / (ntheta as f64 * dr);
            for i in 1..=nr {
                let r = i as f64 * dr;
                for j in 0..ntheta {
                    let ur = diff(&|k| at(k, j), i, nr, dr);
                    let ut = (at(i, j + 1) - at(i, j + ntheta - 1)) / (2.0 * dtheta * r);
                    let (s, c) = (j as f64 * dtheta).sin_cos();
                    let k = 1 + (i - 1) * ntheta + j;
                    gx[k] = ur * c - ut * s;
                    gy[k] = ur * s + ut * c;
                }
            }
        }
    }
    (gx, gy)
}

/// Weighted `L₂` norm with the grid quadrature; the `H¹` seminorm is the
/// edge form of the wave solver, `Σ_edges g (Δu)²`.
pub fn norms(field: &ScalarField2D) -> Norms {
    let grid = field.grid();
    let w = grid.weights();
    let c = grid.speed();
    let u = field.values();
    let l2 = compensated_sum((0..u.len()).map(|k| w[k] * u[k] * u[k] / (c[k] * c[k])));
    let semi = Operator::new(grid).dirichlet_form(u, u).max(0.0);
    Norms { l2_weighted: l2.sqrt(), h1_semi: semi.sqrt(), h1: (l2 + semi).sqrt() }
}

/// Discrete energy `Σ W (uⁿ − uⁿ⁻¹)²/(c² dt²) + a(uⁿ, uⁿ⁻¹)` of two
/// consecutive time levels, where `a` is the edge form. The leapfrog scheme
/// conserves it exactly.
pub fn energy(current: &ScalarField2D, previous: &ScalarField2D, dt: f64) -> Result<f64> {
    if !Arc::ptr_eq(current.grid(), previous.grid()) && current.grid() != previous.grid() {
        return Err(Error::Mismatch("time levels live on different grids".into()));
    }
    let grid = current.grid();
    let w = grid.weights();
    let c = grid.speed();
    let (u, p) = (current.values(), previous.values());
    let kinetic = compensated_sum((0..u.len()).map(|k| {
        let v = (u[k] - p[k]) / dt;
        w[k] * v * v / (c[k] * c[k])
    }));
    Ok(kinetic + Operator::new(grid).dirichlet_form(u, p))
}

fn check_integral_args(lambda: f64, nu: f64, epsilon: f64) -> Result<()> {
    if !(lambda >= 0.0 && nu > 0.0 && epsilon > 0.0 && lambda.is_finite() && nu.is_finite()) {
        return Err(Error::Parameter(format!(
            "coupling integral needs λ ≥ 0, ν > 0, ε > 0 (got {lambda}, {nu}, {epsilon})"
        )));
    }
    Ok(())
}

/// Integrates over the transition `[t₀, 1]` of the cutoff, where `α′` and
/// `α″` are supported, with about one panel per period of `fastest`.
fn integrate_transition(f: impl Fn(f64) -> f64, fastest: f64, cutoff: &CutoffProfile) -> Result<f64> {
    let t0 = cutoff.flat_end();
    let panels = ((fastest * (1.0 - t0) / (2.0 * PI)).ceil() as usize).max(4);
    Adaptive::default().integrate(f, t0, 1.0, panels, COUPLING_TOL, 64 * panels + 4096)
}

/// `I(λ, ν, ε) = λ∫₀¹ α′(τ)[cos((λ−ν)τ/ε) − cos((λ+ν)τ/ε)] dτ
///             + (ε/2)∫₀¹ α″(τ)[sin((λ−ν)τ/ε) − sin((λ+ν)τ/ε)] dτ`.
///
/// For `λ = ν` the first term tends to `−ν`, the value that makes coinciding
/// eigenvalues leave a persistent error.
pub fn coupling_integral(lambda: f64, nu: f64, epsilon: f64, cutoff: &CutoffProfile) -> Result<f64> {
    check_integral_args(lambda, nu, epsilon)?;
    let (d, s) = ((lambda - nu) / epsilon, (lambda + nu) / epsilon);
    integrate_transition(
        |t| {
            lambda * cutoff.derivative(t) * ((d * t).cos() - (s * t).cos())
                + 0.5 * epsilon * cutoff.second_derivative(t) * ((d * t).sin() - (s * t).sin())
        },
        s,
        cutoff,
    )
}

/// The same integral from its product form
/// `∫₀¹ [2α′λ sin(λτ/ε) − εα″ cos(λτ/ε)] sin(ντ/ε) dτ`.
pub fn coupling_integral_product_form(lambda: f64, nu: f64, epsilon: f64, cutoff: &CutoffProfile) -> Result<f64> {
    check_integral_args(lambda, nu, epsilon)?;
    integrate_transition(
        |t| forcing(lambda, epsilon, cutoff, t) * (nu * t / epsilon).sin(),
        (lambda + nu) / epsilon,
        cutoff,
    )
}

/// `∫₀¹ [2α′λ sin(λτ/ε) − εα″ cos(λτ/ε)] cos(ντ/ε) dτ`, the companion
/// integral giving initial velocities of the residual.
pub fn velocity_integral(lambda: f64, nu: f64, epsilon: f64, cutoff: &CutoffProfile) -> Result<f64> {
    check_integral_args(lambda, nu, epsilon)?;
    integrate_transition(
        |t| forcing(lambda, epsilon, cutoff, t) * (nu * t / epsilon).cos(),
        (lambda + nu) / epsilon,
        cutoff,
    )
}

fn forcing(lambda: f64, epsilon: f64, cutoff: &CutoffProfile, t: f64) -> f64 {
    let phase = lambda * t / epsilon;
    2.0 * cutoff.derivative(t) * lambda * phase.sin() - epsilon * cutoff.second_derivative(t) * phase.cos()
}

/// Predicted residual `w(0) = v_ε(0) − f` in the reversal basis.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorPrediction {
    pub epsilon: f64,
    #[serde(skip)]
    pub modes: Arc<[EigenMode]>,
    /// `ν_k w_k(0) = Σₙ uₙ I_{n,k}(ε) ⟨ψ_k, φₙ⟩`.
    pub scaled_displacement: Vec<f64>,
    /// `w_k(0)`.
    pub displacement: Vec<f64>,
    /// `w_k′(0) = −Σₙ uₙ K_{n,k}(ε) ⟨ψ_k, φₙ⟩` with `K` the
    /// [`velocity_integral`].
    pub velocity: Vec<f64>,
    /// Coefficients of the `ε`-independent part `−Σ uₙ ⟨ψ_k, φₙ⟩ ψ_k` over
    /// pairs with `λₙ = ν_k`.
    pub persistent: Vec<f64>,
    /// Largest eigenvalues of the forward and reversal bases used.
    pub neumann_cap: f64,
    pub reversal_cap: f64,
    /// Energy of the initial field beyond the forward basis; a large value
    /// means the prediction misses part of the residual.
    pub truncation_tail: f64,
}

impl ErrorPrediction {
    fn field(&self, grid: &Arc<Grid2D>, coefficients: &[f64]) -> Result<ScalarField2D> {
        ModalState::new(self.modes.clone(), coefficients.to_vec())?.synthesize(grid)
    }

    pub fn residual_field(&self, grid: &Arc<Grid2D>) -> Result<ScalarField2D> {
        self.field(grid, &self.displacement)
    }

    pub fn persistent_field(&self, grid: &Arc<Grid2D>) -> Result<ScalarField2D> {
        self.field(grid, &self.persistent)
    }
}

/// Forward coefficients below this fraction of the largest are quadrature
/// noise and are skipped.
const NEGLIGIBLE_COEFFICIENT: f64 = 1e-12;

/// Evaluates the residual expansion for the forward expansion `initial`
/// against the reversal basis `reversal`.
pub fn predict_residual(
    initial: &ModalState,
    reversal: Arc<[EigenMode]>,
    epsilon: f64,
    cutoff: &CutoffProfile,
) -> Result<ErrorPrediction> {
    let neumann = initial.modes();
    let largest = initial.coefficients().iter().fold(0.0f64, |m, u| m.max(u.abs()));
    let live: Vec<(EigenMode, f64)> = neumann
        .iter()
        .copied()
        .zip(initial.coefficients().iter().copied())
        .filter(|(_, u)| u.abs() > NEGLIGIBLE_COEFFICIENT * largest)
        .collect();
    let rows: Vec<(f64, f64)> = reversal
        .par_iter()
        .map(|psi| {
            let mut scaled = Vec::new();
            let mut velocity = Vec::new();
            for (phi, u) in &live {
                let c = coupling(psi, phi)?;
                if c == 0.0 {
                    continue;
                }
                scaled.push(u * c * coupling_integral(phi.eigenvalue, psi.eigenvalue, epsilon, cutoff)?);
                velocity.push(-u * c * velocity_integral(phi.eigenvalue, psi.eigenvalue, epsilon, cutoff)?);
            }
            Ok((compensated_sum(scaled), compensated_sum(velocity)))
        })
        .collect::<Result<_>>()?;
    let mut persistent = vec![0.0; reversal.len()];
    let live_modes: Vec<EigenMode> = live.iter().map(|l| l.0).collect();
    for rec in detect_coincidences(&live_modes, &reversal, DISK_COINCIDENCE_TOL)? {
        let k = reversal.iter().position(|m| *m == rec.reversal).expect("record from this basis");
        let u = live.iter().find(|l| l.0 == rec.neumann).expect("record from live modes").1;
        persistent[k] -= u * rec.coupling;
    }
    let scaled_displacement: Vec<f64> = rows.iter().map(|r| r.0).collect();
    Ok(ErrorPrediction {
        epsilon,
        displacement: scaled_displacement.iter().zip(reversal.iter()).map(|(s, m)| s / m.eigenvalue).collect(),
        scaled_displacement,
        velocity: rows.iter().map(|r| r.1).collect(),
        persistent,
        neumann_cap: neumann.iter().map(|m| m.eigenvalue).fold(0.0, f64::max),
        reversal_cap: reversal.iter().map(|m| m.eigenvalue).fold(0.0, f64::max),
        truncation_tail: initial.tail_energy(),
        modes: reversal,
    })
}

/// One row of a residual decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeEnergy {
    pub mode: EigenMode,
    /// `⟨w, ψ_k⟩_{c⁻²}`.
    pub coefficient: f64,
    /// `ν_k² ⟨w, ψ_k⟩²`.
    pub energy: f64,
    /// Fraction of the total energy of the table.
    pub share: f64,
}

/// Projects a residual onto the reversal basis and sorts modes by energy,
/// largest first. Modes with zero coefficient are left out.
pub fn decompose_residual(residual: &ScalarField2D, reversal: &[EigenMode]) -> Result<Vec<ModeEnergy>> {
    let coefficients = grid_coefficients(residual, reversal)?;
    let total = compensated_sum(reversal.iter().zip(&coefficients).map(|(m, c)| (m.eigenvalue * c).powi(2)));
    let mut rows: Vec<ModeEnergy> = reversal
        .iter()
        .zip(&coefficients)
        .filter(|(_, c)| **c != 0.0)
        .map(|(m, &c)| {
            let energy = (m.eigenvalue * c).powi(2);
            ModeEnergy { mode: *m, coefficient: c, energy, share: if total > 0.0 { energy / total } else { 0.0 } }
        })
        .collect();
    rows.sort_by(|a, b| b.energy.total_cmp(&a.energy).then(a.mode.index.cmp(&b.mode.index)));
    Ok(rows)
}

/// Combined share of the rows selected by `pred`.
pub fn energy_share(table: &[ModeEnergy], pred: impl Fn(&EigenMode) -> bool) -> f64 {
    compensated_sum(table.iter().filter(|r| pred(&r.mode)).map(|r| r.share))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_modes;
    use crate::cutoff::CutoffClass;
    use crate::geometry::{BoundaryCondition, Geometry};
    use proptest::prelude::*;

    fn square(n: usize) -> Arc<Grid2D> {
        Arc::new(Grid2D::rectangle(Geometry::square(), n, n).unwrap())
    }

    fn mode(bc: BoundaryCondition, index: (u32, i32)) -> EigenMode {
        *enumerate_modes(Geometry::square(), bc, 6.0).unwrap().iter().find(|m| m.index == index).unwrap()
    }

    #[test]
    fn norms_of_eigenmode_and_sine() {
        let grid = square(256);
        let phi = mode(BoundaryCondition::Neumann, (1, 2));
        let n = norms(&ScalarField2D::from_fn(grid.clone(), |x, y| phi.value(x, y)));
        assert!((n.l2_weighted - 1.0).abs() < 1e-3);
        assert!((n.h1_semi.powi(2) - 5.0).abs() < 1e-3);
        let s = norms(&ScalarField2D::from_fn(grid.clone(), |x, _| x.sin()));
        assert!((s.l2_weighted - PI / 2f64.sqrt()).abs() < 1e-4);
        let z = norms(&ScalarField2D::zeros(grid));
        assert_eq!((z.l2_weighted, z.h1_semi, z.h1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn polar_norms_of_disk_mode() {
        let grid = Arc::new(Grid2D::disk(128, 256).unwrap());
        let modes = enumerate_modes(Geometry::Disk, BoundaryCondition::Neumann, 8.0).unwrap();
        for m in modes.iter().filter(|m| m.eigenvalue > 0.0).take(4) {
            let n = norms(&ScalarField2D::from_fn(grid.clone(), |x, y| m.value(x, y)));
            assert!((n.l2_weighted - 1.0).abs() < 2e-3, "{:?}", m.index);
            assert!((n.h1_semi.powi(2) / m.eigenvalue.powi(2) - 1.0).abs() < 5e-3, "{:?} {}", m.index, n.h1_semi);
        }
    }

    #[test]
    fn energy_of_sampled_mode() {
        let grid = square(256);
        let phi = mode(BoundaryCondition::Neumann, (1, 2));
        let dt = 1e-3;
        let t = 0.7;
        let at = |s: f64| ScalarField2D::from_fn(grid.clone(), move |x, y| phi.value(x, y) * (5f64.sqrt() * s).cos());
        let e = energy(&at(t), &at(t - dt), dt).unwrap();
        assert!((e - 5.0).abs() < 5e-3);
        let zero = ScalarField2D::zeros(grid.clone());
        assert_eq!(energy(&zero, &zero, dt).unwrap(), 0.0);
        let constant = ScalarField2D::from_fn(grid, |_, _| 3.0);
        assert!(energy(&constant, &constant, dt).unwrap().abs() < 1e-20);
    }

    #[test]
    fn coinciding_eigenvalues_give_minus_nu() {
        let cutoff = CutoffProfile::default();
        let nu = 5f64.sqrt();
        let i = coupling_integral(nu, nu, 0.01, &cutoff).unwrap();
        assert!((i + nu).abs() < 1e-6, "{i}");
        let poly = CutoffProfile::new(CutoffClass::Poly5, 0.3).unwrap();
        assert!((coupling_integral(nu, nu, 0.01, &poly).unwrap() + nu).abs() < 1e-6);
    }

    #[test]
    fn constant_mode_matches_simpson_oracle() {
        let cutoff = CutoffProfile::default();
        let (nu, eps) = (2.3, 0.05);
        let got = coupling_integral(0.0, nu, eps, &cutoff).unwrap();
        // Composite Simpson with 10⁶ intervals on the product form.
        let n = 1_000_000;
        let h = 1.0 / n as f64;
        let f = |t: f64| -eps * cutoff.second_derivative(t) * (nu * t / eps).sin();
        let mut s = f(0.0) + f(1.0);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        let oracle = s * h / 3.0;
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
    }

    #[test]
    fn expanded_and_product_forms_agree() {
        let cutoff = CutoffProfile::new(CutoffClass::Bump, 0.4).unwrap();
        for &(l, n, e) in &[(1.0, 1.5, 0.02), (3.0, 2.0, 0.1), (7.3, 7.3, 0.05), (0.0, 4.0, 0.01)] {
            let a = coupling_integral(l, n, e, &cutoff).unwrap();
            let b = coupling_integral_product_form(l, n, e, &cutoff).unwrap();
            assert!((a - b).abs() < 1e-8, "{l} {n} {e}: {a} {b}");
        }
        assert!(coupling_integral(1.0, 0.0, 0.1, &cutoff).is_err());
    }

    #[test]
    fn square_persistent_error_is_closed_form() {
        let neumann: Arc<[EigenMode]> = enumerate_modes(Geometry::square(), BoundaryCondition::Neumann, 6.0).unwrap().into();
        let dirichlet: Arc<[EigenMode]> =
            enumerate_modes(Geometry::square(), BoundaryCondition::Dirichlet, 6.0).unwrap().into();
        let k = neumann.iter().position(|m| m.index == (1, 2)).unwrap();
        let mut coefs = vec![0.0; neumann.len()];
        coefs[k] = 1.0;
        let state = ModalState::new(neumann, coefs).unwrap();
        let pred = predict_residual(&state, dirichlet.clone(), 0.05, &CutoffProfile::default()).unwrap();
        let grid = square(32);
        let field = pred.persistent_field(&grid).unwrap();
        let amp = 64.0 / (9.0 * PI.powi(3));
        for (i, &(x, y)) in grid.positions().iter().enumerate() {
            assert!((field.values()[i] - amp * (2.0 * x).sin() * y.sin()).abs() < 1e-12);
        }
        // The (2,1) coefficient of the full prediction contains the persistent part.
        let j = dirichlet.iter().position(|m| m.index == (2, 1)).unwrap();
        assert!((pred.displacement[j] - pred.persistent[j]).abs() < 0.05 * pred.persistent[j].abs());
    }

    #[test]
    fn zero_field_predicts_nothing() {
        let neumann: Arc<[EigenMode]> = enumerate_modes(Geometry::square(), BoundaryCondition::Neumann, 4.0).unwrap().into();
        let mixed: Arc<[EigenMode]> =
            enumerate_modes(Geometry::square(), BoundaryCondition::MixedRightDirichlet, 4.0).unwrap().into();
        let state = ModalState::new(neumann.clone(), vec![0.0; neumann.len()]).unwrap();
        let pred = predict_residual(&state, mixed, 0.1, &CutoffProfile::default()).unwrap();
        assert!(pred.displacement.iter().chain(&pred.persistent).chain(&pred.velocity).all(|&v| v == 0.0));
    }

    #[test]
    fn incommensurable_rectangle_has_no_persistent_error() {
        let g: Geometry = "rect:pi,pi*sqrt(2)".parse().unwrap();
        let neumann: Arc<[EigenMode]> = enumerate_modes(g, BoundaryCondition::Neumann, 5.0).unwrap().into();
        let mixed: Arc<[EigenMode]> = enumerate_modes(g, BoundaryCondition::MixedRightDirichlet, 5.0).unwrap().into();
        let coefs: Vec<f64> = (0..neumann.len()).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let state = ModalState::new(neumann, coefs).unwrap();
        let pred = predict_residual(&state, mixed, 0.1, &CutoffProfile::default()).unwrap();
        assert!(pred.persistent.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decomposition_of_single_mode() {
        let grid = square(64);
        let psi = mode(BoundaryCondition::Dirichlet, (2, 1));
        let basis = enumerate_modes(Geometry::square(), BoundaryCondition::Dirichlet, 6.0).unwrap();
        let table = decompose_residual(&ScalarField2D::from_fn(grid.clone(), |x, y| psi.value(x, y)), &basis).unwrap();
        assert_eq!(table[0].mode.index, (2, 1));
        assert!((table[0].share - 1.0).abs() < 1e-12);
        assert!(decompose_residual(&ScalarField2D::zeros(grid), &basis).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn decomposition_obeys_bessel_inequality(seed in 0u64..500) {
            let grid = square(48);
            let a = 1.0 + (seed % 7) as f64;
            let b = 0.5 + (seed % 5) as f64 * 0.3;
            let f = ScalarField2D::from_fn(grid, move |x, y| (a * x).sin() * (b * y).sin() * x * (PI - x));
            let basis = enumerate_modes(Geometry::square(), BoundaryCondition::Dirichlet, 12.0).unwrap();
            let coefs = grid_coefficients(&f, &basis).unwrap();
            let sum: f64 = coefs.iter().map(|c| c * c).sum();
            prop_assert!(sum <= norms(&f).l2_weighted.powi(2) * (1.0 + 1e-9));
        }
    }
}

//! Series solution of the Neumann problem with zero initial velocity:
//! `u(t) = Σ uₙ cos(λₙ t) φₙ`.
//!
//! Mode sums on the disk are grouped by angular order so that Bessel
//! functions are evaluated once per radius and mode rather than once per
//! node. Every output entry is summed by a single thread in a fixed order,
//! so results do not depend on the thread count.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use realfft::RealFftPlanner;

use crate::analysis;
use crate::basis::{enumerate_modes, EigenMode, Factor};
use crate::field::{AnalyticField, Grid2D, GridKind, ScalarField2D};
use crate::geometry::{BoundaryCondition, Geometry};
use crate::quadrature::{compensated_sum, composite_rule, Neumaier};
use crate::recording::BoundaryRecording;
use crate::specfun::jn;
use crate::{Error, Result};

/// Largest admissible `λ_max · dt` for boundary sampling.
pub const MAX_PHASE_STEP: f64 = PI / 8.0;

/// Panel order of the projection rule.
const PANEL: usize = 16;

/// Expansion coefficients of the initial field together with the time at
/// which the state is observed.
#[derive(Debug, Clone)]
pub struct ModalState {
    modes: Arc<[EigenMode]>,
    coefficients: Vec<f64>,
    time: f64,
    tail: f64,
}

fn common_geometry(modes: &[EigenMode]) -> Result<Geometry> {
    let first = modes.first().ok_or_else(|| Error::Parameter("empty mode set".into()))?;
    if let Some(m) = modes.iter().find(|m| m.geometry != first.geometry) {
        return Err(Error::Mismatch(format!("modes on {} and {} mixed", first.geometry, m.geometry)));
    }
    Ok(first.geometry)
}

fn max_eigenvalue(modes: &[EigenMode]) -> f64 {
    modes.iter().map(|m| m.eigenvalue).fold(0.0, f64::max)
}

/// `4` samples per oscillation of the fastest mode.
fn check_spacing(spacing: f64, lambda_max: f64) -> Result<()> {
    if spacing * lambda_max > 0.5 * PI * (1.0 + 1e-12) {
        return Err(Error::Resolution(format!(
            "node spacing {spacing:.3e} gives fewer than 4 samples per oscillation at eigenvalue {lambda_max:.3}"
        )));
    }
    Ok(())
}

impl ModalState {
    pub fn new(modes: Arc<[EigenMode]>, coefficients: Vec<f64>) -> Result<Self> {
        common_geometry(&modes)?;
        if coefficients.len() != modes.len() {
            return Err(Error::Mismatch(format!("{} coefficients for {} modes", coefficients.len(), modes.len())));
        }
        Ok(Self { modes, coefficients, time: 0.0, tail: 0.0 })
    }

    pub fn modes(&self) -> &Arc<[EigenMode]> {
        &self.modes
    }

    pub fn geometry(&self) -> Geometry {
        self.modes[0].geometry
    }

    /// Coefficients `uₙ` of the initial field.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Largest retained eigenvalue.
    pub fn eigenvalue_cap(&self) -> f64 {
        max_eigenvalue(&self.modes)
    }

    /// Energy of the initial field not captured by the retained modes,
    /// `‖∇f‖² − Σ λₙ² uₙ²` (clamped at zero).
    pub fn tail_energy(&self) -> f64 {
        self.tail
    }

    /// The state at time `t`.
    pub fn evolve(&self, t: f64) -> ModalState {
        Self { time: t, ..self.clone() }
    }

    /// Coefficients of `u(t)`.
    pub fn displacement(&self) -> Vec<f64> {
        self.modes.iter().zip(&self.coefficients).map(|(m, u)| u * (m.eigenvalue * self.time).cos()).collect()
    }

    /// Coefficients of `u_t(t)`.
    pub fn velocity(&self) -> Vec<f64> {
        self.modes.iter().zip(&self.coefficients).map(|(m, u)| -m.eigenvalue * u * (m.eigenvalue * self.time).sin()).collect()
    }

    /// `‖u_t‖² + ‖∇u‖²`, which equals `Σ λₙ² uₙ²` at every time.
    pub fn energy(&self) -> f64 {
        let d = self.displacement();
        let v = self.velocity();
        compensated_sum(self.modes.iter().enumerate().map(|(i, m)| (m.eigenvalue * d[i]).powi(2) + v[i] * v[i]))
    }

    /// `Σ λₙ² uₙ²`.
    pub fn initial_energy(&self) -> f64 {
        compensated_sum(self.modes.iter().zip(&self.coefficients).map(|(m, u)| (m.eigenvalue * u).powi(2)))
    }

    /// `‖u(t)‖`.
    pub fn l2_norm(&self) -> f64 {
        compensated_sum(self.displacement().iter().map(|d| d * d)).sqrt()
    }

    /// `u(t)` sampled on the nodes of `grid`.
    pub fn synthesize(&self, grid: &Arc<Grid2D>) -> Result<ScalarField2D> {
        if grid.geometry() != self.geometry() {
            return Err(Error::Mismatch(format!("state on {} synthesized on {}", self.geometry(), grid.geometry())));
        }
        let d = self.displacement();
        let values = match grid.kind() {
            GridKind::Cartesian { nx, ny, a, b } => {
                let xs: Vec<f64> = (0..=nx).map(|i| a * i as f64 / nx as f64).collect();
                let ys: Vec<f64> = (0..=ny).map(|j| b * j as f64 / ny as f64).collect();
                rect_synthesis(&self.modes, &d, &xs, &ys)
            }
            GridKind::Polar { nr, ntheta } => {
                let radii: Vec<f64> = (1..=nr).map(|i| i as f64 / nr as f64).collect();
                let mut v = vec![self.origin_value(&d)];
                v.extend(disk_synthesis(&self.modes, &d, &radii, ntheta));
                v
            }
        };
        ScalarField2D::from_values(grid.clone(), values)
    }

    fn origin_value(&self, d: &[f64]) -> f64 {
        compensated_sum(self.modes.iter().zip(d).filter(|(m, _)| m.index.1 == 0).map(|(m, c)| c * m.normalization))
    }

    /// Boundary trace `U(tⱼ, zᵢ) = Σ uₙ φₙ(zᵢ) cos(λₙ tⱼ)` with
    /// `tⱼ = time + j·dt`, `j = 0..n_samples`.
    pub fn record_boundary(&self, detectors: &[(f64, f64)], dt: f64, n_samples: usize) -> Result<BoundaryRecording> {
        let g = self.geometry();
        let lambda_max = max_eigenvalue(&self.modes);
        if !(dt > 0.0) || lambda_max * dt > MAX_PHASE_STEP * (1.0 + 1e-9) {
            return Err(Error::Resolution(format!(
                "sampling interval {dt:.4e} undersamples eigenvalue {lambda_max:.3} (need λ·dt ≤ π/8)"
            )));
        }
        if n_samples == 0 || detectors.is_empty() {
            return Err(Error::Parameter("recording needs at least one detector and one sample".into()));
        }
        let arcs = detectors.iter().map(|&(x, y)| g.arclength(x, y)).collect::<Result<Vec<_>>>()?;
        let times: Vec<f64> = (0..n_samples).map(|j| self.time + j as f64 * dt).collect();
        let live: Vec<(EigenMode, f64)> =
            self.modes.iter().copied().zip(self.coefficients.iter().copied()).filter(|(_, c)| *c != 0.0).collect();
        let samples = if g.is_disk() {
            disk_traces(&live, &arcs, &times)
        } else {
            let amplitudes: Vec<Vec<f64>> =
                detectors.iter().map(|&(x, y)| live.iter().map(|(m, c)| c * m.value(x, y)).collect()).collect();
            let freqs: Vec<f64> = live.iter().map(|(m, _)| m.eigenvalue).collect();
            generic_traces(&amplitudes, &freqs, &times)
        };
        BoundaryRecording::new(g, detectors.to_vec(), dt, n_samples, samples)
    }
}

/// Default number of projection nodes along `length` for eigenvalues up to
/// `lambda_max`: eight per wavelength on a side of length `π`, and never
/// fewer than 256.
fn default_nodes(length: f64, lambda_max: f64) -> usize {
    let n = (4.0 * lambda_max * length / PI).ceil().max(256.0) as usize;
    n.div_ceil(PANEL) * PANEL
}

/// Projects a closed-form field onto `modes` with a product Gauss rule.
///
/// `nodes` is the number of radial nodes on the disk (twice as many angles
/// are used) or of nodes along the longer side of a rectangle; by default it
/// is chosen from the largest eigenvalue.
pub fn project_initial(f: &dyn AnalyticField, modes: Arc<[EigenMode]>, nodes: Option<usize>) -> Result<ModalState> {
    let g = common_geometry(&modes)?;
    let lambda_max = max_eigenvalue(&modes);
    let (coefficients, grad_energy) = match g {
        Geometry::Disk => {
            let n = nodes.unwrap_or_else(|| default_nodes(PI, lambda_max)).div_ceil(PANEL) * PANEL;
            let nt = 2 * n;
            check_spacing((1.0 / n as f64).max(2.0 * PI / nt as f64), lambda_max)?;
            let dtheta = 2.0 * PI / nt as f64;
            let rule: Vec<(f64, f64)> =
                composite_rule(0.0, 1.0, n / PANEL, PANEL).into_iter().map(|(r, w)| (r, w * r * dtheta)).collect();
            let trig = TrigTable::new(nt);
            let rows: Vec<(Vec<f64>, f64)> = rule
                .par_iter()
                .map(|&(r, w)| {
                    let mut grad = Neumaier::default();
                    let row = (0..nt)
                        .map(|b| {
                            let (x, y) = (r * trig.cos(b), r * trig.sin(b));
                            let (gx, gy) = f.gradient(x, y);
                            grad.add(w * (gx * gx + gy * gy));
                            f.value(x, y)
                        })
                        .collect();
                    (row, grad.sum())
                })
                .collect();
            let values: Vec<f64> = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
            let grad = compensated_sum(rows.iter().map(|r| r.1));
            (disk_coefficients(&modes, &rule, nt, &values, None), grad)
        }
        Geometry::Rectangle { .. } => {
            let (a, b) = g.sides().expect("rectangle");
            let longest = a.max(b);
            let n = nodes.unwrap_or_else(|| default_nodes(longest, lambda_max));
            let per_side = |s: f64| ((n as f64 * s / longest).ceil() as usize).div_ceil(PANEL).max(1) * PANEL;
            let (nx, ny) = (per_side(a), per_side(b));
            check_spacing((a / nx as f64).max(b / ny as f64), lambda_max)?;
            let xs = composite_rule(0.0, a, nx / PANEL, PANEL);
            let ys = composite_rule(0.0, b, ny / PANEL, PANEL);
            let rows: Vec<(Vec<f64>, f64)> = ys
                .par_iter()
                .map(|&(y, wy)| {
                    let mut grad = Neumaier::default();
                    let row = xs
                        .iter()
                        .map(|&(x, wx)| {
                            let (gx, gy) = f.gradient(x, y);
                            grad.add(wx * wy * (gx * gx + gy * gy));
                            f.value(x, y)
                        })
                        .collect();
                    (row, grad.sum())
                })
                .collect();
            let values: Vec<f64> = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
            let grad = compensated_sum(rows.iter().map(|r| r.1));
            (rect_coefficients(&modes, &xs, &ys, &values), grad)
        }
    };
    let mut state = ModalState::new(modes, coefficients)?;
    state.tail = (grad_energy - state.initial_energy()).max(0.0);
    Ok(state)
}

/// Default bound on the relative projected tail energy.
pub const TAIL_TOLERANCE: f64 = 1e-6;

/// Projects `f` onto the Neumann modes with the smallest eigenvalue cap whose
/// tail energy is at most `rel_tail` of `‖∇f‖²`.
pub fn project_to_tolerance(f: &dyn AnalyticField, geometry: Geometry, rel_tail: f64) -> Result<ModalState> {
    const FIRST_CAP: f64 = 64.0;
    const LAST_CAP: f64 = 512.0;
    if !(rel_tail > 0.0 && rel_tail < 1.0) {
        return Err(Error::Parameter(format!("relative tail {rel_tail} must lie in (0, 1)")));
    }
    let mut cap = FIRST_CAP;
    let state = loop {
        let modes: Arc<[EigenMode]> = enumerate_modes(geometry, BoundaryCondition::Neumann, cap)?.into();
        let state = project_initial(f, modes, None)?;
        let total = state.initial_energy() + state.tail;
        if state.tail <= rel_tail * total {
            break state;
        }
        if cap >= LAST_CAP {
            return Err(Error::Resolution(format!(
                "relative tail {:.2e} above {rel_tail:.0e} at eigenvalue cap {cap}",
                state.tail / total
            )));
        }
        // Extrapolate the tail as a power of the cap from its value at
        // two thirds of the current cap.
        let inner = 2.0 * cap / 3.0;
        let inner_tail = total
            - compensated_sum(
                state.modes.iter().zip(&state.coefficients).filter(|(m, _)| m.eigenvalue <= inner).map(|(m, u)| (m.eigenvalue * u).powi(2)),
            );
        let power = ((inner_tail / state.tail).ln() / 1.5f64.ln()).clamp(1.0, 12.0);
        let factor = 1.1 * (state.tail / (rel_tail * total)).powf(1.0 / power);
        cap = (cap * factor.clamp(1.2, 4.0)).min(LAST_CAP);
    };
    // Trim to the shortest prefix, ending between distinct eigenvalues, that
    // still meets the tolerance.
    let total = state.initial_energy() + state.tail;
    let modes = &state.modes;
    let mut captured = Neumaier::default();
    let mut keep = modes.len();
    for (i, (m, u)) in modes.iter().zip(&state.coefficients).enumerate() {
        captured.add((m.eigenvalue * u).powi(2));
        let boundary = modes.get(i + 1).is_none_or(|next| next.eigenvalue > m.eigenvalue);
        if boundary && total - captured.sum() <= rel_tail * total {
            keep = i + 1;
            break;
        }
    }
    let mut trimmed = ModalState::new(modes[..keep].into(), state.coefficients[..keep].to_vec())?;
    trimmed.tail = (total - trimmed.initial_energy()).max(0.0);
    Ok(trimmed)
}

/// Projects a grid field onto `modes` using the grid quadrature.
pub fn project_field(f: &ScalarField2D, modes: Arc<[EigenMode]>) -> Result<ModalState> {
    let coefficients = grid_coefficients(f, &modes)?;
    let mut state = ModalState::new(modes, coefficients)?;
    let grad = analysis::norms(f).h1_semi.powi(2);
    state.tail = (grad - state.initial_energy()).max(0.0);
    Ok(state)
}

/// `⟨f, φₙ⟩` in the `c⁻²`-weighted grid inner product.
pub(crate) fn grid_coefficients(f: &ScalarField2D, modes: &[EigenMode]) -> Result<Vec<f64>> {
    let g = common_geometry(modes)?;
    let grid = f.grid();
    if grid.geometry() != g {
        return Err(Error::Mismatch(format!("field on {} projected onto modes on {g}", grid.geometry())));
    }
    let lambda_max = max_eigenvalue(modes);
    let c = grid.speed();
    let weighted: Vec<f64> = f.values().iter().zip(c).map(|(v, c)| v / (c * c)).collect();
    match grid.kind() {
        GridKind::Cartesian { nx, ny, a, b } => {
            let (hx, hy) = (a / nx as f64, b / ny as f64);
            check_spacing(hx.max(hy), lambda_max)?;
            let trap = |n: usize, h: f64, len: f64| -> Vec<(f64, f64)> {
                (0..=n).map(|i| (len * i as f64 / n as f64, if i == 0 || i == n { 0.5 * h } else { h })).collect()
            };
            Ok(rect_coefficients(modes, &trap(nx, hx, a), &trap(ny, hy, b), &weighted))
        }
        GridKind::Polar { nr, ntheta } => {
            let dr = 1.0 / nr as f64;
            check_spacing(dr.max(2.0 * PI / ntheta as f64), lambda_max)?;
            let w = grid.weights();
            let rings: Vec<(f64, f64)> = (1..=nr).map(|i| (i as f64 * dr, w[1 + (i - 1) * ntheta])).collect();
            Ok(disk_coefficients(modes, &rings, ntheta, &weighted[1..], Some((w[0], weighted[0]))))
        }
    }
}

/// Distinct x-factors of rectangle modes, and the slot of each mode.
fn factor_groups(modes: &[EigenMode]) -> (Vec<Factor>, Vec<usize>) {
    let mut distinct = Vec::new();
    let mut slot: HashMap<Factor, usize> = HashMap::new();
    let slots = modes
        .iter()
        .map(|m| {
            let fx = m.factors().expect("rectangle mode").0;
            *slot.entry(fx).or_insert_with(|| {
                distinct.push(fx);
                distinct.len() - 1
            })
        })
        .collect();
    (distinct, slots)
}

/// `Σ_{a,b} w_a w_b f(x_a, y_b) φₙ(x_a, y_b)` for `values[b·|xs| + a]`.
fn rect_coefficients(modes: &[EigenMode], xs: &[(f64, f64)], ys: &[(f64, f64)], values: &[f64]) -> Vec<f64> {
    let (a, b) = modes[0].geometry.sides().expect("rectangle");
    let nx = xs.len();
    let (distinct, slots) = factor_groups(modes);
    let partial: Vec<Vec<f64>> = distinct
        .par_iter()
        .map(|fx| {
            let xf: Vec<f64> = xs.iter().map(|&(x, w)| w * fx.eval(PI * x / a)).collect();
            (0..ys.len()).map(|j| compensated_sum((0..nx).map(|i| xf[i] * values[j * nx + i]))).collect()
        })
        .collect();
    modes
        .par_iter()
        .zip(slots.par_iter())
        .map(|(m, &s)| {
            let fy = m.factors().expect("rectangle mode").1;
            let gx = &partial[s];
            m.normalization * compensated_sum(ys.iter().enumerate().map(|(j, &(y, w))| w * fy.eval(PI * y / b) * gx[j]))
        })
        .collect()
}

/// `cos(2πk/n)` and `sin(2πk/n)`, indexed modulo `n`.
struct TrigTable {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigTable {
    fn new(n: usize) -> Self {
        let (sin, cos) = (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).sin_cos()).unzip();
        Self { cos, sin }
    }

    fn len(&self) -> usize {
        self.cos.len()
    }

    fn cos(&self, k: usize) -> f64 {
        self.cos[k % self.len()]
    }

    fn sin(&self, k: usize) -> f64 {
        self.sin[k % self.len()]
    }
}

fn max_order(modes: &[EigenMode]) -> usize {
    modes.iter().map(|m| m.angular_order() as usize).max().unwrap_or(0)
}

/// `Σ_{a,b} w_a f(r_a, θ_b) φₙ(r_a, θ_b)` for `values[a·nt + b]` on
/// `θ_b = 2πb/nt`, plus an optional origin node `(weight, value)`.
fn disk_coefficients(
    modes: &[EigenMode],
    rings: &[(f64, f64)],
    nt: usize,
    values: &[f64],
    origin: Option<(f64, f64)>,
) -> Vec<f64> {
    let m_max = max_order(modes);
    // Angular moments per ring: (Σ_b f cos(mθ_b), Σ_b f sin(mθ_b)).
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(nt);
    let moments: Vec<Vec<(f64, f64)>> = (0..rings.len())
        .into_par_iter()
        .map_init(
            || (fft.make_input_vec(), fft.make_output_vec(), fft.make_scratch_vec()),
            |(input, output, scratch), a| {
                input.copy_from_slice(&values[a * nt..(a + 1) * nt]);
                fft.process_with_scratch(input, output, scratch).expect("buffers sized by the plan");
                (0..=m_max).map(|m| (output[m].re, -output[m].im)).collect()
            },
        )
        .collect();
    modes
        .par_iter()
        .map(|mode| {
            let m = mode.angular_order() as usize;
            let sine = mode.index.1 < 0;
            let mut sum = Neumaier::default();
            for (a, &(r, w)) in rings.iter().enumerate() {
                let mom = moments[a][m];
                sum.add(w * jn(m as u32, mode.eigenvalue * r) * if sine { mom.1 } else { mom.0 });
            }
            if let (Some((w0, f0)), 0) = (origin, mode.index.1) {
                sum.add(w0 * f0);
            }
            mode.normalization * sum.sum()
        })
        .collect()
}

fn rect_synthesis(modes: &[EigenMode], coefficients: &[f64], xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let (a, b) = modes[0].geometry.sides().expect("rectangle");
    let (distinct, slots) = factor_groups(modes);
    // profile[s][j] = Σ over modes with x-factor s of cₙ Nₙ Yₙ(y_j).
    let mut profiles = vec![vec![Neumaier::default(); ys.len()]; distinct.len()];
    for ((m, &c), &s) in modes.iter().zip(coefficients).zip(&slots) {
        if c == 0.0 {
            continue;
        }
        let fy = m.factors().expect("rectangle mode").1;
        for (j, &y) in ys.iter().enumerate() {
            profiles[s][j].add(c * m.normalization * fy.eval(PI * y / b));
        }
    }
    let profiles: Vec<Vec<f64>> = profiles.iter().map(|p| p.iter().map(Neumaier::sum).collect()).collect();
    let xf: Vec<Vec<f64>> = distinct.iter().map(|fx| xs.iter().map(|&x| fx.eval(PI * x / a)).collect()).collect();
    let nx = xs.len();
    let mut out = vec![0.0; nx * ys.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            *v = compensated_sum((0..distinct.len()).map(|s| xf[s][i] * profiles[s][j]));
        }
    });
    out
}

/// Values on rings `radii`, `nt` equispaced angles each, ring-major.
fn disk_synthesis(modes: &[EigenMode], coefficients: &[f64], radii: &[f64], nt: usize) -> Vec<f64> {
    let trig = TrigTable::new(nt);
    let m_max = max_order(modes);
    let mut out = vec![0.0; radii.len() * nt];
    out.par_chunks_mut(nt).zip(radii.par_iter()).for_each(|(row, &r)| {
        let mut cos_amp = vec![Neumaier::default(); m_max + 1];
        let mut sin_amp = vec![Neumaier::default(); m_max + 1];
        for (mode, &c) in modes.iter().zip(coefficients) {
            if c == 0.0 {
                continue;
            }
            let m = mode.angular_order() as usize;
            let v = c * mode.normalization * jn(m as u32, mode.eigenvalue * r);
            if mode.index.1 < 0 { sin_amp[m].add(v) } else { cos_amp[m].add(v) }
        }
        let (ca, sa): (Vec<f64>, Vec<f64>) = (0..=m_max).map(|m| (cos_amp[m].sum(), sin_amp[m].sum())).unzip();
        for (b, v) in row.iter_mut().enumerate() {
            *v = compensated_sum((0..=m_max).map(|m| ca[m] * trig.cos(m * b) + sa[m] * trig.sin(m * b)));
        }
    });
    out
}

/// Disk traces at angles `arcs`, detector-major.
fn disk_traces(live: &[(EigenMode, f64)], arcs: &[f64], times: &[f64]) -> Vec<f64> {
    let modes: Vec<EigenMode> = live.iter().map(|l| l.0).collect();
    let m_max = max_order(&modes);
    let amp: Vec<f64> = live.iter().map(|(m, c)| c * m.normalization * jn(m.angular_order(), m.eigenvalue)).collect();
    // Per sample: angular amplitudes (cos part, sin part) for each order.
    let per_time: Vec<Vec<(f64, f64)>> = times
        .par_iter()
        .map(|&t| {
            let mut cos_amp = vec![Neumaier::default(); m_max + 1];
            let mut sin_amp = vec![Neumaier::default(); m_max + 1];
            for ((mode, _), &a) in live.iter().zip(&amp) {
                let v = a * (mode.eigenvalue * t).cos();
                let m = mode.angular_order() as usize;
                if mode.index.1 < 0 { sin_amp[m].add(v) } else { cos_amp[m].add(v) }
            }
            (0..=m_max).map(|m| (cos_amp[m].sum(), sin_amp[m].sum())).collect()
        })
        .collect();
    let ns = times.len();
    let mut out = vec![0.0; arcs.len() * ns];
    out.par_chunks_mut(ns).zip(arcs.par_iter()).for_each(|(trace, &theta)| {
        let (cm, sm): (Vec<f64>, Vec<f64>) = (0..=m_max).map(|m| ((m as f64 * theta).cos(), (m as f64 * theta).sin())).unzip();
        for (j, v) in trace.iter_mut().enumerate() {
            let row = &per_time[j];
            *v = compensated_sum((0..=m_max).map(|m| cm[m] * row[m].0 + sm[m] * row[m].1));
        }
    });
    out
}

/// `Σₙ amplitudes[i][n] cos(freqs[n] t_j)`, detector-major.
fn generic_traces(amplitudes: &[Vec<f64>], freqs: &[f64], times: &[f64]) -> Vec<f64> {
    const CHUNK: usize = 256;
    let ns = times.len();
    let chunks: Vec<Vec<f64>> = times
        .par_chunks(CHUNK)
        .map(|ts| {
            let table: Vec<Vec<f64>> = freqs.iter().map(|&f| ts.iter().map(|&t| (f * t).cos()).collect()).collect();
            let mut block = vec![0.0; amplitudes.len() * ts.len()];
            for (i, amp) in amplitudes.iter().enumerate() {
                for j in 0..ts.len() {
                    block[i * ts.len() + j] = compensated_sum(amp.iter().zip(&table).map(|(a, row)| a * row[j]));
                }
            }
            block
        })
        .collect();
    let mut out = vec![0.0; amplitudes.len() * ns];
    for (k, block) in chunks.iter().enumerate() {
        let start = k * CHUNK;
        let len = block.len() / amplitudes.len().max(1);
        for i in 0..amplitudes.len() {
            out[i * ns + start..i * ns + start + len].copy_from_slice(&block[i * len..(i + 1) * len]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_modes;
    use crate::geometry::BoundaryCondition;
    use proptest::prelude::*;

    fn square_modes(cap: f64) -> Arc<[EigenMode]> {
        enumerate_modes(Geometry::square(), BoundaryCondition::Neumann, cap).unwrap().into()
    }

    fn disk_modes(cap: f64) -> Arc<[EigenMode]> {
        enumerate_modes(Geometry::Disk, BoundaryCondition::Neumann, cap).unwrap().into()
    }

    fn find(modes: &[EigenMode], index: (u32, i32)) -> usize {
        modes.iter().position(|m| m.index == index).unwrap()
    }

    struct Bumps(Vec<(f64, f64, f64, f64)>);

    impl AnalyticField for Bumps {
        fn value(&self, x: f64, y: f64) -> f64 {
            self.0
                .iter()
                .map(|&(cx, cy, r, amp)| {
                    let s = ((x - cx).powi(2) + (y - cy).powi(2)) / (r * r);
                    if s < 1.0 { amp * (1.0 - s).powi(3) } else { 0.0 }
                })
                .sum()
        }

        fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
            self.0.iter().fold((0.0, 0.0), |acc, &(cx, cy, r, amp)| {
                let s = ((x - cx).powi(2) + (y - cy).powi(2)) / (r * r);
                if s >= 1.0 {
                    return acc;
                }
                let d = -6.0 * amp * (1.0 - s).powi(2) / (r * r);
                (acc.0 + d * (x - cx), acc.1 + d * (y - cy))
            })
        }
    }

    #[test]
    fn eigenmode_projects_to_unit_vector() {
        let modes = square_modes(6.0);
        let k = find(&modes, (1, 2));
        let state = project_initial(&modes[k], modes.clone(), None).unwrap();
        for (i, c) in state.coefficients().iter().enumerate() {
            let expect = if i == k { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-12, "{:?}: {c}", modes[i].index);
        }
        assert!(state.tail_energy() < 1e-10);
        assert!((state.initial_energy() - 5.0).abs() < 1e-10);
    }

    #[test]
    fn constant_projects_onto_constant_mode() {
        struct Constant;
        impl AnalyticField for Constant {
            fn value(&self, _: f64, _: f64) -> f64 {
                1.0 / PI
            }
            fn gradient(&self, _: f64, _: f64) -> (f64, f64) {
                (0.0, 0.0)
            }
        }
        let modes = square_modes(4.0);
        let state = project_initial(&Constant, modes.clone(), None).unwrap();
        assert!((state.coefficients()[0] - 1.0).abs() < 1e-12);
        assert!(state.coefficients()[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn disk_bump_projection_is_resolution_independent() {
        let f = Bumps(vec![(0.0, 0.35, 0.25, 1.0), (-0.3, -0.2, 0.25, 0.8), (0.3, -0.2, 0.25, 0.6)]);
        let modes = disk_modes(40.0);
        let a = project_initial(&f, modes.clone(), None).unwrap();
        let b = project_initial(&f, modes.clone(), Some(2 * default_nodes(PI, 40.0))).unwrap();
        let diff = a.coefficients().iter().zip(b.coefficients()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
        // The bumps are smooth, so the energy beyond λ = 40 is small but positive.
        assert!(a.tail_energy() < 1e-2 * a.initial_energy());
    }

    #[test]
    fn coarse_projection_is_rejected() {
        let modes = square_modes(20.0);
        assert!(matches!(project_initial(&modes[3], modes.clone(), Some(16)), Err(Error::Resolution(_))));
        let grid = Arc::new(Grid2D::rectangle(Geometry::square(), 16, 16).unwrap());
        let f = ScalarField2D::zeros(grid);
        assert!(matches!(project_field(&f, modes), Err(Error::Resolution(_))));
    }

    #[test]
    fn grid_projection_of_sampled_mode() {
        let modes = square_modes(8.0);
        let k = find(&modes, (1, 2));
        let grid = Arc::new(Grid2D::rectangle(Geometry::square(), 128, 128).unwrap());
        let f = ScalarField2D::from_fn(grid, |x, y| modes[k].value(x, y));
        let state = project_field(&f, modes.clone()).unwrap();
        // Trapezoid rule is exact for trigonometric products below the Nyquist limit.
        for (i, c) in state.coefficients().iter().enumerate() {
            let expect = if i == k { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-12, "{:?}: {c}", modes[i].index);
        }
        let disk = Arc::new(Grid2D::disk(64, 128).unwrap());
        let dm = disk_modes(10.0);
        let j = find(&dm, (1, 2));
        let f = ScalarField2D::from_fn(disk, |x, y| dm[j].value(x, y));
        let state = project_field(&f, dm.clone()).unwrap();
        assert!((state.coefficients()[j] - 1.0).abs() < 2e-3);
    }

    #[test]
    fn evolution_is_periodic_and_even() {
        let modes = square_modes(6.0);
        let k = find(&modes, (1, 2));
        let state = project_initial(&modes[k], modes.clone(), None).unwrap();
        let back = state.evolve(2.0 * PI / 5f64.sqrt()).displacement();
        assert!((back[k] - 1.0).abs() < 1e-12);
        let mut coefs = vec![0.0; modes.len()];
        coefs[0] = 0.7;
        let constant = ModalState::new(modes.clone(), coefs).unwrap();
        assert_eq!(constant.evolve(12.3).displacement()[0], 0.7);
    }

    #[test]
    fn synthesis_matches_pointwise_series() {
        let modes = square_modes(5.0);
        let coefs: Vec<f64> = (0..modes.len()).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let state = ModalState::new(modes.clone(), coefs.clone()).unwrap().evolve(0.8);
        let grid = Arc::new(Grid2D::rectangle(Geometry::square(), 10, 12).unwrap());
        let field = state.synthesize(&grid).unwrap();
        let d = state.displacement();
        for (k, &(x, y)) in grid.positions().iter().enumerate() {
            let direct: f64 = modes.iter().zip(&d).map(|(m, c)| c * m.value(x, y)).sum();
            assert!((field.values()[k] - direct).abs() < 1e-12);
        }
        let dm = disk_modes(12.0);
        let coefs: Vec<f64> = (0..dm.len()).map(|i| (i as f64).sin()).collect();
        let state = ModalState::new(dm.clone(), coefs).unwrap().evolve(0.3);
        let grid = Arc::new(Grid2D::disk(8, 16).unwrap());
        let field = state.synthesize(&grid).unwrap();
        let d = state.displacement();
        for (k, &(x, y)) in grid.positions().iter().enumerate() {
            let direct: f64 = dm.iter().zip(&d).map(|(m, c)| c * m.value(x, y)).sum();
            assert!((field.values()[k] - direct).abs() < 1e-11, "{k}");
        }
    }

    #[test]
    fn single_mode_trace() {
        let modes = square_modes(6.0);
        let k = find(&modes, (1, 2));
        let state = project_initial(&modes[k], modes.clone(), None).unwrap();
        let dt = MAX_PHASE_STEP / 6.0;
        let rec = state.record_boundary(&[(PI, 0.5 * PI)], dt, 200).unwrap();
        let amp = modes[k].value(PI, 0.5 * PI);
        assert!((amp - 2.0 / PI).abs() < 1e-12);
        for (j, v) in rec.trace(0).iter().enumerate() {
            assert!((v - amp * (5f64.sqrt() * j as f64 * dt).cos()).abs() < 1e-12);
        }
        let zero = ModalState::new(modes.clone(), vec![0.0; modes.len()]).unwrap();
        assert!(zero.record_boundary(&[(0.0, 1.0)], dt, 10).unwrap().samples().iter().all(|&v| v == 0.0));
        assert!(matches!(state.record_boundary(&[(0.0, 1.0)], 1.0, 10), Err(Error::Resolution(_))));
    }

    #[test]
    fn disk_trace_matches_pointwise_series() {
        let dm = disk_modes(15.0);
        let coefs: Vec<f64> = (0..dm.len()).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let state = ModalState::new(dm.clone(), coefs.clone()).unwrap();
        let det: Vec<(f64, f64)> = [0.0, 1.0, 2.5, 4.0].iter().map(|&t: &f64| (t.cos(), t.sin())).collect();
        let dt = MAX_PHASE_STEP / 15.0;
        let rec = state.record_boundary(&det, dt, 40).unwrap();
        for (i, &(x, y)) in det.iter().enumerate() {
            for j in 0..40 {
                let t = j as f64 * dt;
                let direct: f64 = dm.iter().zip(&coefs).map(|(m, c)| c * m.value(x, y) * (m.eigenvalue * t).cos()).sum();
                assert!((rec.trace(i)[j] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let dm = disk_modes(20.0);
        let coefs: Vec<f64> = (0..dm.len()).map(|i| (0.3 * i as f64).cos()).collect();
        let state = ModalState::new(dm, coefs).unwrap();
        let det: Vec<(f64, f64)> = (0..64).map(|i| Geometry::Disk.boundary_point(i as f64 * 0.1)).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| state.record_boundary(&det, 0.01, 300).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    proptest! {
        #[test]
        fn energy_is_time_independent(seed in 0u64..1000, t in -50.0f64..50.0) {
            let modes = square_modes(7.0);
            let coefs: Vec<f64> = (0..modes.len()).map(|i| ((seed as f64 + 1.0) * (i as f64 + 0.5)).sin()).collect();
            let state = ModalState::new(modes, coefs).unwrap();
            let e0 = state.initial_energy();
            let moved = state.evolve(t);
            prop_assert!((moved.energy() - e0).abs() <= 1e-12 * e0);
            let bound = compensated_sum(state.coefficients().iter().map(|c| c * c)).sqrt();
            prop_assert!(moved.l2_norm() <= bound * (1.0 + 1e-15));
            prop_assert_eq!(state.evolve(t).displacement(), state.evolve(-t).displacement());
        }
    }
}

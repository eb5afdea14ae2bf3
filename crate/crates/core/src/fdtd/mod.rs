//! Second-order leapfrog time stepping of `u_tt = c² Δu` on a [`Grid2D`],
//! forward with Neumann walls and backward with boundary data imposed on the
//! measured part of the wall.

mod boundary;
mod operator;

use std::sync::Arc;

use crate::field::{Grid2D, ScalarField2D};
use crate::recording::BoundaryRecording;
use crate::{Error, Result};

use boundary::{measured_nodes, ArcInterp};
pub(crate) use operator::Operator;

/// How often the solution is scanned for non-finite values.
const FINITE_CHECK_INTERVAL: usize = 64;

/// A uniform time grid `t_n = n·dt`, `n = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// The coarsest grid ending exactly at `duration` with `dt ≤ dt_max`.
    pub fn covering(duration: f64, dt_max: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite() && dt_max > 0.0) {
            return Err(Error::Parameter(format!("cannot cover duration {duration} with steps of {dt_max}")));
        }
        let steps = (duration / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(Self { dt: duration / steps as f64, steps })
    }

    /// The grid over `intervals` recording intervals of length `dt_rec`,
    /// each split into the fewest steps of length `≤ dt_max`; returns the
    /// grid and the number of steps per interval.
    pub fn subdividing(dt_rec: f64, intervals: usize, dt_max: f64) -> Result<(Self, usize)> {
        if !(dt_rec > 0.0 && dt_rec.is_finite() && dt_max > 0.0 && intervals > 0) {
            return Err(Error::Parameter(format!("cannot split {intervals} intervals of {dt_rec} into steps of {dt_max}")));
        }
        let stride = (dt_rec / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok((Self { dt: dt_rec / stride as f64, steps: stride * intervals }, stride))
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.steps as f64
    }
}

fn check_dt(grid: &Grid2D, dt: f64) -> Result<()> {
    let limit = grid.max_stable_dt();
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-9) {
        return Err(Error::Configuration(format!(
            "time step {dt:.3e} violates the stability limit {limit:.3e} of this grid"
        )));
    }
    Ok(())
}

fn check_finite(values: &[f64], step: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Instability { step })
    }
}

/// Leapfrog state holding the current and previous time levels.
#[derive(Debug, Clone)]
pub struct WaveState {
    grid: Arc<Grid2D>,
    op: Operator,
    /// `dt² c²` per node.
    k: Vec<f64>,
    u: Vec<f64>,
    prev: Vec<f64>,
    next: Vec<f64>,
    step: usize,
    dt: f64,
}

impl WaveState {
    /// Initial displacement `f` at rest. The previous level is set to
    /// `f + (dt² c²/2) Δf`, which makes the first leapfrog step the
    /// second-order Taylor start.
    pub fn start(initial: &ScalarField2D, dt: f64) -> Result<Self> {
        let grid = initial.grid().clone();
        check_dt(&grid, dt)?;
        check_finite(initial.values(), 0)?;
        let op = Operator::new(&grid);
        let k: Vec<f64> = grid.speed().iter().map(|c| dt * dt * c * c).collect();
        let u = initial.values().to_vec();
        let mut lap = vec![0.0; u.len()];
        op.laplacian(&u, &mut lap);
        let prev = (0..u.len()).map(|i| u[i] + 0.5 * k[i] * lap[i]).collect();
        Ok(Self { next: vec![0.0; u.len()], grid, op, k, u, prev, step: 0, dt })
    }

    pub fn advance(&mut self) -> Result<()> {
        self.op.leapfrog(&self.u, &self.prev, &self.k, &mut self.next);
        std::mem::swap(&mut self.prev, &mut self.u);
        std::mem::swap(&mut self.u, &mut self.next);
        self.step += 1;
        if self.step.is_multiple_of(FINITE_CHECK_INTERVAL) {
            check_finite(&self.u, self.step)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    pub fn current(&self) -> &[f64] {
        &self.u
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    /// Discrete energy `Σ (W/c²) |(uⁿ − uⁿ⁻¹)/dt|² + a(uⁿ, uⁿ⁻¹)` with `a` the
    /// edge form of the Laplacian. The leapfrog scheme conserves it exactly;
    /// it approximates `∫ u_t²/c² + |∇u|²`.
    pub fn energy(&self) -> f64 {
        let w = self.grid.weights();
        let c = self.grid.speed();
        let kinetic: f64 = (0..self.u.len())
            .map(|i| {
                let v = (self.u[i] - self.prev[i]) / self.dt;
                w[i] * v * v / (c[i] * c[i])
            })
            .sum();
        kinetic + self.op.dirichlet_form(&self.u, &self.prev)
    }

    pub fn into_field(self) -> ScalarField2D {
        ScalarField2D::from_values(self.grid, self.u).expect("state matches its grid")
    }
}

/// Samples boundary node values at detector positions by linear
/// interpolation along the wall.
#[derive(Debug, Clone)]
pub struct BoundaryMap {
    nodes: Vec<usize>,
    interp: ArcInterp,
}

impl BoundaryMap {
    pub fn new(grid: &Grid2D, detectors: &[(f64, f64)]) -> Result<Self> {
        let g = grid.geometry();
        let targets = detectors.iter().map(|&(x, y)| g.arclength(x, y)).collect::<Result<Vec<_>>>()?;
        let nodes = grid.boundary_nodes();
        let sources: Vec<f64> = nodes.iter().map(|b| b.arclength).collect();
        Ok(Self {
            nodes: nodes.iter().map(|b| b.index).collect(),
            interp: ArcInterp::new(&sources, &targets, g.perimeter(), true),
        })
    }

    pub fn sample(&self, values: &[f64]) -> Vec<f64> {
        self.interp.apply(|i| values[self.nodes[i]]).collect()
    }
}

/// Runs the forward Neumann problem from `initial` at rest and records the
/// boundary trace every `record_every` steps, including `t = 0`.
pub fn forward_run(
    initial: &ScalarField2D,
    time: TimeGrid,
    record_every: usize,
    detectors: &[(f64, f64)],
) -> Result<BoundaryRecording> {
    if record_every == 0 || !time.steps.is_multiple_of(record_every) {
        return Err(Error::Parameter(format!(
            "recording stride {record_every} must divide the {} time steps",
            time.steps
        )));
    }
    let map = BoundaryMap::new(initial.grid(), detectors)?;
    let n_samples = time.steps / record_every + 1;
    let mut samples = vec![0.0; detectors.len() * n_samples];
    let mut store = |state: &WaveState, j: usize| {
        for (d, v) in map.sample(state.current()).into_iter().enumerate() {
            samples[d * n_samples + j] = v;
        }
    };
    let mut state = WaveState::start(initial, time.dt)?;
    store(&state, 0);
    for n in 1..=time.steps {
        state.advance()?;
        if n.is_multiple_of(record_every) {
            store(&state, n / record_every);
        }
    }
    check_finite(state.current(), time.steps)?;
    BoundaryRecording::new(
        initial.grid().geometry(),
        detectors.to_vec(),
        time.dt * record_every as f64,
        n_samples,
        samples,
    )
}

/// Value of a sampled trace at time `t` by four-point Lagrange
/// interpolation, with zero beyond the last sample. Times on the sampling
/// grid return the sample itself.
pub(crate) fn interpolate_trace(trace: &[f64], dt: f64, t: f64) -> f64 {
    let n = trace.len();
    let x = t / dt;
    let j = (x + 1e-9).floor();
    let at = |i: isize| if i >= 0 && (i as usize) < n { trace[i as usize] } else { 0.0 };
    if (x - j).abs() <= 1e-9 {
        return at(j as isize);
    }
    let j = j as isize;
    if j >= n as isize {
        return 0.0;
    }
    let first = (j - 1).max(0);
    let s = x - first as f64;
    let l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
    let l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
    let l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
    let l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
    l0 * at(first) + l1 * at(first + 1) + l2 * at(first + 2) + l3 * at(first + 3)
}

/// Time grid for the backward solve over `[0, horizon]` given recorded
/// samples every `dt_rec`: a whole subdivision of `dt_rec` when `horizon`
/// lies on the sampling grid, otherwise the covering grid of `horizon`.
pub fn reversal_time_grid(horizon: f64, dt_rec: f64, dt_max: f64) -> Result<TimeGrid> {
    let per_sample = (dt_rec / dt_max * (1.0 - 1e-12)).ceil().max(1.0);
    let dt = dt_rec / per_sample;
    let steps = horizon / dt;
    if (steps - steps.round()).abs() <= 1e-6 * steps.max(1.0) && steps.round() >= 1.0 {
        return Ok(TimeGrid { dt, steps: steps.round() as usize });
    }
    TimeGrid::covering(horizon, dt_max)
}

/// Solves the wave equation backward from zero data at `t = horizon`, with
/// the recorded values imposed at boundary nodes covered by the detectors
/// and Neumann walls elsewhere, and returns the field at `t = 0`.
///
/// `dt` defaults to the stability limit of `grid`, adjusted so that recorded
/// sample times fall on the time grid where possible.
pub fn reversal_run(
    grid: Arc<Grid2D>,
    data: &BoundaryRecording,
    horizon: f64,
    dt: Option<f64>,
) -> Result<ScalarField2D> {
    let g = grid.geometry();
    if data.geometry() != g {
        return Err(Error::Mismatch(format!("recording on {} used with a grid on {g}", data.geometry())));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Parameter(format!("reversal horizon {horizon} must be positive")));
    }
    let time = match dt {
        Some(dt) => {
            check_dt(&grid, dt)?;
            let steps = horizon / dt;
            if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) || steps.round() < 1.0 {
                return Err(Error::Parameter(format!("time step {dt} does not divide the horizon {horizon}")));
            }
            TimeGrid { dt, steps: steps.round() as usize }
        }
        None => reversal_time_grid(horizon, data.dt(), grid.max_stable_dt())?,
    };
    check_dt(&grid, time.dt)?;

    let mut order: Vec<usize> = (0..data.n_detectors()).collect();
    let arcs = data.arclengths();
    order.sort_by(|&a, &b| arcs[a].total_cmp(&arcs[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| arcs[i]).collect();
    let perimeter = g.perimeter();
    let (measured, cyclic) = measured_nodes(&grid.boundary_nodes(), &sorted, perimeter);
    let targets: Vec<f64> = measured.iter().map(|b| b.arclength).collect();
    let interp = ArcInterp::new(&sorted, &targets, perimeter, cyclic);

    let op = Operator::new(&grid);
    let k: Vec<f64> = grid.speed().iter().map(|c| time.dt * time.dt * c * c).collect();
    let n = grid.len();
    let mut detector_values = vec![0.0; order.len()];
    let mut impose = |level: &mut [f64], t: f64| {
        for (slot, &d) in detector_values.iter_mut().zip(&order) {
            *slot = interpolate_trace(data.trace(d), data.dt(), t);
        }
        for (b, v) in measured.iter().zip(interp.apply(|i| detector_values[i])) {
            level[b.index] = v;
        }
    };

    // Zero terminal data: v(T) = v_t(T) = 0 in the interior.
    let mut later = vec![0.0; n];
    let mut cur = vec![0.0; n];
    let mut earlier = vec![0.0; n];
    impose(&mut cur, time.duration());
    let mut lap = vec![0.0; n];
    op.laplacian(&cur, &mut lap);
    for i in 0..n {
        later[i] = cur[i] + 0.5 * k[i] * lap[i];
    }
    for step in (0..time.steps).rev() {
        op.leapfrog(&cur, &later, &k, &mut earlier);
        impose(&mut earlier, step as f64 * time.dt);
        std::mem::swap(&mut later, &mut cur);
        std::mem::swap(&mut cur, &mut earlier);
        let taken = time.steps - step;
        if taken.is_multiple_of(FINITE_CHECK_INTERVAL) {
            check_finite(&cur, taken)?;
        }
    }
    check_finite(&cur, time.steps)?;
    ScalarField2D::from_values(grid, cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Geometry;
    use std::f64::consts::PI;

    fn square(n: usize) -> Arc<Grid2D> {
        Arc::new(Grid2D::rectangle(Geometry::square(), n, n).unwrap())
    }

    fn run_to(initial: &ScalarField2D, t: f64) -> WaveState {
        let time = TimeGrid::covering(t, initial.grid().max_stable_dt()).unwrap();
        let mut s = WaveState::start(initial, time.dt).unwrap();
        for _ in 0..time.steps {
            s.advance().unwrap();
        }
        s
    }

    fn max_err(a: &[f64], b: impl Fn(usize) -> f64) -> f64 {
        a.iter().enumerate().map(|(i, v)| (v - b(i)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn covering_grid_ends_on_the_duration() {
        let t = TimeGrid::covering(10.0, 0.3).unwrap();
        assert_eq!(t.steps, 34);
        assert!((t.duration() - 10.0).abs() < 1e-12 && t.dt <= 0.3);
        assert_eq!(TimeGrid::covering(1.0, 0.25).unwrap().steps, 4);
        assert!(TimeGrid::covering(-1.0, 0.1).is_err());
    }

    #[test]
    fn constants_stay_constant() {
        let f = ScalarField2D::from_fn(square(16), |_, _| 0.7);
        let s = run_to(&f, 5.0);
        assert!(max_err(s.current(), |_| 0.7) < 1e-12);
        let d = Arc::new(Grid2D::disk(8, 16).unwrap());
        let s = run_to(&ScalarField2D::from_fn(d, |_, _| -1.5), 3.0);
        assert!(max_err(s.current(), |_| -1.5) < 1e-12);
    }

    #[test]
    fn separable_cosine_mode() {
        let grid = square(64);
        let f = ScalarField2D::from_fn(grid.clone(), |x, y| x.cos() * (2.0 * y).cos());
        let t = 2.0;
        let s = run_to(&f, t);
        let pos = grid.positions();
        let exact = |i: usize| pos[i].0.cos() * (2.0 * pos[i].1).cos() * (5f64.sqrt() * t).cos();
        assert!(max_err(s.current(), exact) < 5e-3);
    }

    #[test]
    fn second_order_convergence() {
        let t = 1.5;
        let errs: Vec<f64> = [32usize, 64]
            .iter()
            .map(|&n| {
                let grid = square(n);
                let f = ScalarField2D::from_fn(grid.clone(), |x, y| (2.0 * x).cos() * y.cos());
                let s = run_to(&f, t);
                let pos = grid.positions();
                max_err(s.current(), |i| (2.0 * pos[i].0).cos() * pos[i].1.cos() * (5f64.sqrt() * t).cos())
            })
            .collect();
        assert!(errs[0] / errs[1] >= 3.0, "{errs:?}");
    }

    #[test]
    fn energy_is_conserved() {
        for grid in [square(40), Arc::new(Grid2D::disk(16, 32).unwrap())] {
            let f = ScalarField2D::from_fn(grid, |x, y| (-8.0 * ((x - 1.0).powi(2) + (y - 0.4).powi(2))).exp());
            let time = TimeGrid::covering(6.0, f.grid().max_stable_dt()).unwrap();
            let mut s = WaveState::start(&f, time.dt).unwrap();
            let e0 = s.energy();
            let mut drift: f64 = 0.0;
            for _ in 0..time.steps {
                s.advance().unwrap();
                drift = drift.max((s.energy() - e0).abs() / e0);
            }
            assert!(drift < 1e-10, "{drift}");
        }
    }

    #[test]
    fn variable_speed_energy_is_conserved() {
        let grid = Arc::new(
            Grid2D::rectangle(Geometry::square(), 32, 32).unwrap().with_speed(|x, y| 1.0 + 0.3 * (x * y).sin()).unwrap(),
        );
        let f = ScalarField2D::from_fn(grid, |x, y| (-6.0 * ((x - 1.5).powi(2) + (y - 1.5).powi(2))).exp());
        let time = TimeGrid::covering(4.0, f.grid().max_stable_dt()).unwrap();
        let mut s = WaveState::start(&f, time.dt).unwrap();
        let e0 = s.energy();
        for _ in 0..time.steps {
            s.advance().unwrap();
        }
        assert!((s.energy() - e0).abs() < 1e-10 * e0);
    }

    #[test]
    fn disk_radial_mode_frequency() {
        // J₀(j′₀,₁ r) oscillates at frequency j′₀,₁ = j₁,₁.
        let k = crate::specfun::bessel_zero(1, 1).unwrap();
        let grid = Arc::new(Grid2D::disk(64, 128).unwrap());
        let f = ScalarField2D::from_fn(grid.clone(), |x, y| crate::specfun::bessel_j(0, k * x.hypot(y)).unwrap());
        let time = TimeGrid::covering(4.0 * PI / k, grid.max_stable_dt()).unwrap();
        let mut s = WaveState::start(&f, time.dt).unwrap();
        let mut centre = Vec::with_capacity(time.steps + 1);
        centre.push(s.current()[0]);
        for _ in 0..time.steps {
            s.advance().unwrap();
            centre.push(s.current()[0]);
        }
        // Zero crossings of cos(kt) at t = (2m + 1)π/(2k).
        let crossings: Vec<f64> = centre
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] * w[1] < 0.0)
            .map(|(i, w)| (i as f64 + w[0] / (w[0] - w[1])) * time.dt)
            .collect();
        assert_eq!(crossings.len(), 4);
        let period = 2.0 * (crossings[3] - crossings[0]) / 3.0;
        let measured = 2.0 * PI / period;
        assert!((measured - k).abs() / k < 0.01, "{measured} vs {k}");
    }

    #[test]
    fn runs_are_deterministic() {
        let grid = square(24);
        let f = ScalarField2D::from_fn(grid.clone(), |x, y| (x * y).sin());
        let det: Vec<(f64, f64)> = (0..10).map(|i| Geometry::square().boundary_point(i as f64)).collect();
        let time = TimeGrid::covering(3.0, grid.max_stable_dt()).unwrap();
        let a = forward_run(&f, time, 1, &det).unwrap();
        let b = forward_run(&f, time, 1, &det).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_recording_has_expected_layout() {
        let grid = square(16);
        let f = ScalarField2D::from_fn(grid.clone(), |x, _| x.cos());
        let time = TimeGrid::covering(2.0, grid.max_stable_dt()).unwrap();
        let steps = time.steps + time.steps % 2;
        let time = TimeGrid { dt: 2.0 / steps as f64, steps };
        let det = vec![(0.0, 1.0), (PI, 2.0)];
        let rec = forward_run(&f, time, 2, &det).unwrap();
        assert_eq!(rec.n_samples(), steps / 2 + 1);
        assert!((rec.duration() - 2.0).abs() < 1e-12);
        // u = cos(x) cos(t) approximately; the wall x = 0 sees cos(t).
        for (j, v) in rec.trace(0).iter().enumerate() {
            assert!((v - (j as f64 * rec.dt()).cos()).abs() < 1e-2);
        }
        assert!(forward_run(&f, time, 3, &det).is_err() || steps.is_multiple_of(3));
        assert!(matches!(
            WaveState::start(&f, 2.0 * grid.max_stable_dt()),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn trace_interpolation_is_exact_for_cubics() {
        let dt = 0.1;
        let p = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t * t;
        let trace: Vec<f64> = (0..20).map(|j| p(j as f64 * dt)).collect();
        for t in [0.0, 0.03, 0.5, 0.55, 1.234, 1.8] {
            assert!((interpolate_trace(&trace, dt, t) - p(t)).abs() < 1e-12, "{t}");
        }
        assert_eq!(interpolate_trace(&trace, dt, 3.0), 0.0);
    }

    #[test]
    fn reversal_grid_subdivides_sampling_interval() {
        let t = reversal_time_grid(10.0, 0.1, 0.03).unwrap();
        assert_eq!(t.steps, 400);
        assert!((t.dt - 0.025).abs() < 1e-15);
        let t = reversal_time_grid(1.05, 0.1, 0.03).unwrap();
        assert!((t.duration() - 1.05).abs() < 1e-12 && t.dt <= 0.03);
    }

    #[test]
    fn zero_data_give_zero_field() {
        let grid = square(16);
        let det: Vec<(f64, f64)> = (0..8).map(|i| Geometry::square().boundary_point(i as f64 * PI / 2.0)).collect();
        let rec = BoundaryRecording::zeros(Geometry::square(), det, 0.1, 31).unwrap();
        let v = reversal_run(grid, &rec, 3.0, None).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reversal_imposes_data_on_measured_side_only() {
        let grid = square(16);
        let g = Geometry::square();
        let det: Vec<(f64, f64)> = (0..=8).map(|i| (PI, i as f64 * PI / 8.0)).collect();
        let mut rec = BoundaryRecording::zeros(g, det, 0.1, 11).unwrap();
        for d in 0..rec.n_detectors() {
            rec.trace_mut(d)[0] = 1.0;
        }
        let v = reversal_run(grid.clone(), &rec, 1.0, None).unwrap();
        for b in grid.boundary_nodes() {
            let (x, _) = grid.position(b.index);
            if (x - PI).abs() < 1e-12 {
                assert_eq!(v.values()[b.index], 1.0);
            } else if x < 1.0 {
                assert!(v.values()[b.index].abs() < 1e-12);
            }
        }
        let wrong = BoundaryRecording::zeros(Geometry::Disk, vec![(1.0, 0.0)], 0.1, 3).unwrap();
        assert!(matches!(reversal_run(grid, &wrong, 0.2, None), Err(Error::Mismatch(_))));
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance -- 3 5` runs a subset. Checks
//! listed in `KNOWN_FAILURES` are reported as FAIL but do not change the exit
//! status; any other failing check does.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use cavitor::analysis::{coupling_integral, decompose_residual, energy_share, norms, predict_residual};
use cavitor::basis::{detect_coincidences, enumerate_modes, EigenMode, DISK_COINCIDENCE_TOL};
use cavitor::cutoff::CutoffProfile;
use cavitor::fdtd::{forward_run, TimeGrid, WaveState};
use cavitor::field::{Grid2D, ScalarField2D};
use cavitor::geometry::{BoundaryCondition, Geometry};
use cavitor::phantom::{render, PhantomSpec};
use cavitor::reconstruct::{gradual_time_reversal, sweep_t, Solver};
use cavitor::recording::{BoundaryRecording, DetectorLayout};
use cavitor::specfun::verify_zero_gaps;
use cavitor::spectral::{project_to_tolerance, ModalState, TAIL_TOLERANCE};

/// `(criterion, check)` pairs that are known to fail.
const KNOWN_FAILURES: &[(&str, &str)] = &[("4", "halving")];

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

type Criterion = fn() -> cavitor::Result<Vec<Check>>;

fn main() {
    let criteria: [(&str, &str, Criterion); 7] = [
        ("1", "square full-data residual", square_persistent_error),
        ("2", "disk convergence trend", disk_convergence),
        ("3", "Bessel root bound suite", bessel_bounds),
        ("4", "coupling integral oracle", coupling_oracle),
        ("5", "coincidence detection", coincidences),
        ("6", "energy and cross-validation", energy_and_cross_validation),
        ("7", "partial-data slow modes", partial_data_slow_modes),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = 0;
    for (id, title, run) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let start = Instant::now();
        let checks = run().unwrap_or_else(|e| vec![check("run", false, format!("error: {e}"))]);
        let secs = start.elapsed().as_secs_f64();
        let pass = checks.iter().all(|c| c.pass);
        let details: Vec<String> = checks
            .iter()
            .map(|c| format!("{}{} {}", if c.pass { "" } else { "!" }, c.name, c.detail))
            .collect();
        println!("{} criterion {id} ({title}): {} [{secs:.1} s]", if pass { "PASS" } else { "FAIL" }, details.join("; "));
        unexpected += checks.iter().filter(|c| !c.pass && !KNOWN_FAILURES.contains(&(id, c.name))).count();
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failing check(s)");
        std::process::exit(1);
    }
}

fn square_grid(n: usize) -> Arc<Grid2D> {
    Arc::new(Grid2D::for_geometry(Geometry::square(), n).unwrap())
}

fn detectors(layout: &str, geometry: Geometry) -> cavitor::Result<Vec<(f64, f64)>> {
    layout.parse::<DetectorLayout>()?.positions(geometry)
}

/// Forward FDTD data sampled every `dt_rec` over `intervals` intervals.
fn fdtd_data(f: &ScalarField2D, layout: &str, dt_rec: f64, intervals: usize) -> cavitor::Result<BoundaryRecording> {
    let grid = f.grid();
    let (time, stride) = TimeGrid::subdividing(dt_rec, intervals, grid.max_stable_dt())?;
    forward_run(f, time, stride, &detectors(layout, grid.geometry())?)
}

fn bump() -> CutoffProfile {
    "bump:0.5".parse().unwrap()
}

fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn find(modes: &[EigenMode], index: (u32, i32)) -> EigenMode {
    *modes.iter().find(|m| m.index == index).expect("mode below cap")
}

fn square_persistent_error() -> cavitor::Result<Vec<Check>> {
    let grid = square_grid(256);
    let g = Geometry::square();
    let f = render(&PhantomSpec::eigenmode(g, (1, 2)), &grid)?;
    let horizon = 100.0 * PI;
    let data = fdtd_data(&f, "sides:bottom+right+top+left:256", horizon / 8192.0, 8192)?;
    let report = gradual_time_reversal(&data, &bump(), horizon, &Solver::for_grid(grid.clone()), Some(&f))?;
    let residual = report.residual.expect("reference given");

    let err = ScalarField2D::from_fn(grid.clone(), |x, y| 64.0 / (9.0 * PI.powi(3)) * (2.0 * x).sin() * y.sin());
    let distance = norms(&residual.difference(&err)?).h1;
    let scale = norms(&err).h1;

    let neumann = enumerate_modes(g, BoundaryCondition::Neumann, 3.0)?;
    let state = ModalState::new(Arc::from(vec![find(&neumann, (1, 2))]), vec![1.0])?;
    let reversal: Arc<[EigenMode]> = enumerate_modes(g, BoundaryCondition::Dirichlet, 3.0)?.into();
    let predicted = predict_residual(&state, reversal, 1.0 / horizon, &bump())?.persistent_field(&grid)?;
    let oracle_gap = norms(&predicted.difference(&err)?).h1 / scale;
    Ok(vec![
        check("distance", distance < 0.1 * scale, format!("|w - Err|_H1 / |Err|_H1 = {:.4}", distance / scale)),
        check("oracle", oracle_gap < 1e-3, format!("predicted persistent term vs Err = {oracle_gap:.2e}")),
    ])
}

fn disk_convergence() -> cavitor::Result<Vec<Check>> {
    let start = Instant::now();
    let grid = Arc::new(Grid2D::disk(128, 256)?);
    let f = render(&PhantomSpec::three_bumps(Geometry::Disk), &grid)?;
    let data = fdtd_data(&f, "full:1024", 10.6 / 2048.0, 8192)?;
    let horizons = [5.3, 10.6, 21.2, 42.4];
    let reports = sweep_t(&data, &bump(), &horizons, &Solver::for_grid(grid), Some(&f))?;
    let metrics: Vec<_> = reports.iter().map(|r| r.metrics.expect("reference given")).collect();
    let l2: Vec<f64> = metrics.iter().map(|m| m.l2w_rel).collect();
    let h1: Vec<f64> = metrics.iter().map(|m| m.h1_rel).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let secs = start.elapsed().as_secs_f64();
    Ok(vec![
        check("first-doubling", l2[1] < l2[0], format!("l2w {:.4} -> {:.4}", l2[0], l2[1])),
        check("monotone", decreasing(&l2) && decreasing(&h1), format!("l2w {l2:.4?}, h1 {h1:.4?}")),
        check("final-h1", h1[3] < 0.05, format!("{:.4}", h1[3])),
        check("last/first", h1[3] / h1[0] < 0.1, format!("{:.4}", h1[3] / h1[0])),
        check("runtime", secs < 600.0, format!("{secs:.0} s")),
    ])
}

fn bessel_bounds() -> cavitor::Result<Vec<Check>> {
    let start = Instant::now();
    let report = verify_zero_gaps(50, 100)?;
    let secs = start.elapsed().as_secs_f64();
    Ok(vec![
        check(
            "violations",
            report.is_clean(),
            format!("{} of {} checks", report.total_violations(), report.total_checks()),
        ),
        check("residual", report.max_residual <= 1e-10, format!("max {:.2e}", report.max_residual)),
        check("runtime", secs < 60.0, format!("{secs:.2} s")),
    ])
}

fn coupling_oracle() -> cavitor::Result<Vec<Check>> {
    let s5 = 5f64.sqrt();
    let coinciding = coupling_integral(s5, s5, 0.01, &bump())?;
    let coarse = coupling_integral(1.0, 1.5, 0.02, &bump())?;
    let fine = coupling_integral(1.0, 1.5, 0.01, &bump())?;
    let ratio = coarse.abs() / fine.abs();
    Ok(vec![
        check("coinciding", (coinciding + s5).abs() < 1e-6, format!("I + sqrt5 = {:.2e}", coinciding + s5)),
        check("halving", ratio >= 8.0, format!("|I(0.02)| / |I(0.01)| = {coarse:.4e} / {fine:.4e} = {ratio:.3}")),
    ])
}

fn coincidences() -> cavitor::Result<Vec<Check>> {
    let square = Geometry::square();
    let neumann = enumerate_modes(square, BoundaryCondition::Neumann, 10.0)?;
    let dirichlet = enumerate_modes(square, BoundaryCondition::Dirichlet, 10.0)?;
    let records = detect_coincidences(&neumann, &dirichlet, DISK_COINCIDENCE_TOL)?;
    let pair = |n: (u32, i32), r: (u32, i32)| records.iter().find(|c| c.neumann.index == n && c.reversal.index == r);
    let expected = -32.0 / (9.0 * PI * PI);
    let c12 = pair((1, 2), (2, 1)).map(|c| c.coupling);
    let flagged = pair((8, 1), (7, 4)).is_some() || pair((7, 4), (8, 1)).is_some();

    let mixed = enumerate_modes(square, BoundaryCondition::MixedRightDirichlet, 10.0)?;
    let mixed_records = detect_coincidences(&neumann, &mixed, DISK_COINCIDENCE_TOL)?;

    let rect: Geometry = "rect:pi,pi*sqrt(2)".parse()?;
    let rect_records = detect_coincidences(
        &enumerate_modes(rect, BoundaryCondition::Neumann, 10.0)?,
        &enumerate_modes(rect, BoundaryCondition::Dirichlet, 10.0)?,
        DISK_COINCIDENCE_TOL,
    )?;
    let nonzero = rect_records.iter().filter(|c| c.coupling != 0.0).count();
    Ok(vec![
        check(
            "square-(1,2)",
            c12.is_some_and(|c| (c - expected).abs() <= 1e-8),
            format!("coupling {c12:?}, expected {expected:.10}"),
        ),
        check("square-(8,1)", flagged, format!("flagged = {flagged}")),
        check("mixed", mixed_records.is_empty(), format!("{} pairs", mixed_records.len())),
        check("rectangle", nonzero == 0, format!("{nonzero} nonzero of {} coincidences", rect_records.len())),
    ])
}

/// Relative L₂ mismatch between FDTD and exact traces of `φ₁,₂` on an
/// `n × n` square.
fn trace_error(n: usize, mode: EigenMode) -> cavitor::Result<f64> {
    let grid = square_grid(n);
    let f = ScalarField2D::from_fn(grid, |x, y| mode.value(x, y));
    let (duration, intervals) = (2.0 * PI, 256);
    let layout = "sides:bottom+right+top+left:64";
    let fdtd = fdtd_data(&f, layout, duration / intervals as f64, intervals)?;
    let exact = ModalState::new(Arc::from(vec![mode]), vec![1.0])?.record_boundary(
        &detectors(layout, Geometry::square())?,
        duration / intervals as f64,
        intervals + 1,
    )?;
    Ok(relative_l2(fdtd.samples(), exact.samples()))
}

fn energy_and_cross_validation() -> cavitor::Result<Vec<Check>> {
    let square = Geometry::square();
    let spec = PhantomSpec::three_bumps(square);
    let bumps = spec.resolve()?;
    let state = project_to_tolerance(&bumps, square, TAIL_TOLERANCE)?;
    let e0 = state.initial_energy();
    let spectral_drift = [0.37, 3.0, 31.4, 490.0, 1e4]
        .iter()
        .map(|&t| (state.evolve(t).energy() - e0).abs() / e0)
        .fold(0.0, f64::max);

    let grid = square_grid(256);
    let f = render(&spec, &grid)?;
    let time = TimeGrid::covering(10.0 * PI, grid.max_stable_dt())?;
    let mut wave = WaveState::start(&f, time.dt)?;
    let w0 = wave.energy();
    let mut fdtd_drift: f64 = 0.0;
    for _ in 0..time.steps {
        wave.advance()?;
        fdtd_drift = fdtd_drift.max((wave.energy() - w0).abs() / w0);
    }

    let mode = find(&enumerate_modes(square, BoundaryCondition::Neumann, 3.0)?, (1, 2));
    let coarse = trace_error(128, mode)?;
    let fine = trace_error(256, mode)?;
    Ok(vec![
        check("spectral-energy", spectral_drift < 1e-12, format!("{spectral_drift:.1e}")),
        check("fdtd-energy", fdtd_drift < 1e-3, format!("{fdtd_drift:.1e} over {} steps", time.steps)),
        check("traces", fine < 0.01, format!("{fine:.2e} at 256^2")),
        check("refinement", coarse / fine >= 3.0, format!("{coarse:.2e} -> {fine:.2e}, x{:.2}", coarse / fine)),
    ])
}

fn partial_data_slow_modes() -> cavitor::Result<Vec<Check>> {
    let g = Geometry::square();
    let grid = square_grid(256);
    let f = render(&PhantomSpec::three_bumps(g), &grid)?;
    let horizon = 490.0;
    let intervals = 16384;
    let solver = Solver::for_grid(grid.clone());
    let slow = |m: &EigenMode| i64::from(m.index.1) >= 2 * i64::from(m.index.0);
    let mut shares = Vec::new();
    for (layout, bc) in [
        ("sides:right:256", BoundaryCondition::MixedRightDirichlet),
        ("sides:bottom+right+top+left:256", BoundaryCondition::Dirichlet),
    ] {
        let data = fdtd_data(&f, layout, horizon / intervals as f64, intervals)?;
        let report = gradual_time_reversal(&data, &bump(), horizon, &solver, Some(&f))?;
        let residual = report.residual.expect("reference given");
        let table = decompose_residual(&residual, &enumerate_modes(g, bc, 40.0)?)?;
        shares.push((energy_share(&table, slow), report.metrics.expect("reference given").h1_rel));
    }
    let [(right, right_h1), (full, full_h1)] = shares[..] else { unreachable!() };
    Ok(vec![
        check("right-side", right > 0.5, format!("share m >= 2k = {right:.3} (h1_rel {right_h1:.3})")),
        check("full", full <= 0.5, format!("share m >= 2k = {full:.3} (h1_rel {full_h1:.3})")),
    ])
}

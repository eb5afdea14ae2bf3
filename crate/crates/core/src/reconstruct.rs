//! Gradual time reversal: the recording is tapered by `α(t/T)` and imposed
//! on the measured boundary of a backward wave solve from zero data at `T`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{decompose_residual, norms, ModeEnergy, Norms};
use crate::basis::EigenMode;
use crate::cutoff::CutoffProfile;
use crate::fdtd::reversal_run;
use crate::field::{Grid2D, GridKind, ScalarField2D};
use crate::io::{write_field, write_pgm};
use crate::recording::BoundaryRecording;
use crate::{Error, Result};

/// Relative slack when comparing `T` with the recorded duration.
const DURATION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    CartesianFdtd,
    PolarFdtd,
}

impl Backend {
    fn matches(self, kind: GridKind) -> bool {
        matches!(
            (self, kind),
            (Backend::CartesianFdtd, GridKind::Cartesian { .. }) | (Backend::PolarFdtd, GridKind::Polar { .. })
        )
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::CartesianFdtd => "cartesian-fdtd",
            Backend::PolarFdtd => "polar-fdtd",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartesian-fdtd" => Ok(Backend::CartesianFdtd),
            "polar-fdtd" => Ok(Backend::PolarFdtd),
            _ => Err(Error::Configuration(format!("unknown backend {s:?} (cartesian-fdtd | polar-fdtd)"))),
        }
    }
}

/// The backward solver: a backend on a grid, with an optional fixed step.
#[derive(Debug, Clone)]
pub struct Solver {
    pub backend: Backend,
    pub grid: Arc<Grid2D>,
    pub dt: Option<f64>,
}

impl Solver {
    pub fn new(backend: Backend, grid: Arc<Grid2D>, dt: Option<f64>) -> Result<Self> {
        if !backend.matches(grid.kind()) {
            return Err(Error::Configuration(format!("backend {backend} cannot run on a {:?} grid", grid.kind())));
        }
        Ok(Self { backend, grid, dt })
    }

    /// The backend matching the grid.
    pub fn for_grid(grid: Arc<Grid2D>) -> Self {
        let backend = match grid.kind() {
            GridKind::Cartesian { .. } => Backend::CartesianFdtd,
            GridKind::Polar { .. } => Backend::PolarFdtd,
        };
        Self { backend, grid, dt: None }
    }
}

/// Multiplies the samples by `α(j·dt/T)` and drops those after `T`.
pub fn gate_recording(recording: &BoundaryRecording, cutoff: &CutoffProfile, horizon: f64) -> Result<BoundaryRecording> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Parameter(format!("horizon T = {horizon} must be positive")));
    }
    let duration = recording.duration();
    if horizon > duration * (1.0 + DURATION_SLACK) {
        return Err(Error::Parameter(format!("horizon T = {horizon} exceeds the recorded {duration}")));
    }
    let dt = recording.dt();
    let kept = ((horizon / dt + DURATION_SLACK).floor() as usize + 1).min(recording.n_samples());
    let mut gated = recording.truncated(kept)?;
    let taper: Vec<f64> = (0..kept).map(|j| cutoff.value(j as f64 * dt / horizon)).collect();
    for d in 0..gated.n_detectors() {
        for (v, a) in gated.trace_mut(d).iter_mut().zip(&taper) {
            *v *= a;
        }
    }
    Ok(gated)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `‖w‖_{c⁻²} / ‖f‖_{c⁻²}`.
    pub l2w_rel: f64,
    /// `‖w‖_{H¹} / ‖f‖_{H¹}`.
    pub h1_rel: f64,
    /// `‖∇w‖² / ‖∇f‖²`, the residual energy at rest relative to `E₀`.
    pub energy_res: f64,
    pub residual: Norms,
    pub reference: Norms,
}

impl Metrics {
    fn new(residual: &ScalarField2D, reference: &ScalarField2D) -> Self {
        let (w, f) = (norms(residual), norms(reference));
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
        Self {
            l2w_rel: ratio(w.l2_weighted, f.l2_weighted),
            h1_rel: ratio(w.h1, f.h1),
            energy_res: ratio(w.h1_semi.powi(2), f.h1_semi.powi(2)),
            residual: w,
            reference: f,
        }
    }
}

/// Settings that reproduce a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub epsilon: f64,
    pub cutoff: String,
    pub backend: Backend,
    pub grid: GridKind,
    pub dt: Option<f64>,
    pub n_detectors: usize,
    pub recording_dt: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    /// `v_ε(0, ·)`.
    pub reconstruction: ScalarField2D,
    pub reference: Option<ScalarField2D>,
    /// `w_ε(0, ·) = v_ε(0, ·) − f`.
    pub residual: Option<ScalarField2D>,
    pub metrics: Option<Metrics>,
    pub modal: Option<Vec<ModeEnergy>>,
    pub info: RunInfo,
}

impl ReconstructionReport {
    /// Adds the residual energy per mode of `modes`.
    pub fn decompose(&mut self, modes: &[EigenMode]) -> Result<()> {
        let residual = self.residual.as_ref().ok_or_else(|| Error::Configuration("no reference field".into()))?;
        self.modal = Some(decompose_residual(residual, modes)?);
        Ok(())
    }

    /// Writes fields, PGM images, `metrics.csv`, `modal.csv` and
    /// `run.toml` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_field(&self.reconstruction, &dir.join("reconstruction.field"))?;
        write_pgm(&self.reconstruction, &dir.join("reconstruction.pgm"))?;
        if let (Some(f), Some(w)) = (&self.reference, &self.residual) {
            write_field(f, &dir.join("reference.field"))?;
            write_pgm(f, &dir.join("reference.pgm"))?;
            write_field(w, &dir.join("residual.field"))?;
            write_pgm(w, &dir.join("residual.pgm"))?;
        }
        if self.metrics.is_some() {
            write_metrics_csv(std::slice::from_ref(self), &dir.join("metrics.csv"))?;
        }
        if let Some(modal) = &self.modal {
            write_modal_csv(modal, &dir.join("modal.csv"))?;
        }
        let info = toml::to_string(&self.info).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join("run.toml"), info)?;
        Ok(())
    }
}

/// Reconstructs from `recording` with horizon `T` and `ε = 1/T`; metrics
/// are computed against `reference` when given, which must live on the
/// solver grid.
pub fn gradual_time_reversal(
    recording: &BoundaryRecording,
    cutoff: &CutoffProfile,
    horizon: f64,
    solver: &Solver,
    reference: Option<&ScalarField2D>,
) -> Result<ReconstructionReport> {
    if let Some(f) = reference {
        if f.grid() != &solver.grid {
            return Err(Error::Mismatch("reference field is not on the solver grid".into()));
        }
    }
    let gated = gate_recording(recording, cutoff, horizon)?;
    let reconstruction = reversal_run(solver.grid.clone(), &gated, horizon, solver.dt)?;
    let residual = reference.map(|f| reconstruction.difference(f)).transpose()?;
    let metrics = reference.zip(residual.as_ref()).map(|(f, w)| Metrics::new(w, f));
    if let Some(m) = &metrics {
        if ![m.l2w_rel, m.h1_rel, m.energy_res].iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite metrics at T = {horizon}")));
        }
    }
    Ok(ReconstructionReport {
        reconstruction,
        reference: reference.cloned(),
        residual,
        metrics,
        modal: None,
        info: RunInfo {
            horizon,
            epsilon: 1.0 / horizon,
            cutoff: cutoff.to_string(),
            backend: solver.backend,
            grid: solver.grid.kind(),
            dt: solver.dt,
            n_detectors: recording.n_detectors(),
            recording_dt: recording.dt(),
        },
    })
}

/// Independent reconstructions for each horizon, in the order given.
pub fn sweep_t(
    recording: &BoundaryRecording,
    cutoff: &CutoffProfile,
    horizons: &[f64],
    solver: &Solver,
    reference: Option<&ScalarField2D>,
) -> Result<Vec<ReconstructionReport>> {
    if horizons.is_empty() {
        return Err(Error::Parameter("empty list of horizons".into()));
    }
    let longest = horizons.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if longest > recording.duration() * (1.0 + DURATION_SLACK) {
        return Err(Error::Parameter(format!("horizon {longest} exceeds the recorded {}", recording.duration())));
    }
    horizons.par_iter().map(|&t| gradual_time_reversal(recording, cutoff, t, solver, reference)).collect()
}

/// `T,l2w_rel,h1_rel,energy_res`, one row per report with metrics.
pub fn write_metrics_csv(reports: &[ReconstructionReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["T", "l2w_rel", "h1_rel", "energy_res"]).map_err(csv_error)?;
    for r in reports {
        if let Some(m) = &r.metrics {
            w.write_record([r.info.horizon, m.l2w_rel, m.h1_rel, m.energy_res].map(|v| format!("{v:?}")))
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_modal_csv(table: &[ModeEnergy], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["k", "m", "eigenvalue", "coefficient", "energy", "share"]).map_err(csv_error)?;
    for e in table {
        w.write_record([
            e.mode.index.0.to_string(),
            e.mode.index.1.to_string(),
            format!("{:?}", e.mode.eigenvalue),
            format!("{:?}", e.coefficient),
            format!("{:?}", e.energy),
            format!("{:?}", e.share),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

//! Command-line pipelines. Every subcommand is a [`RunConfig`]; running one
//! writes its artifacts and a `provenance.toml` holding the config, the
//! crate version and timings, from which `cavitor run` repeats the run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::predict_residual;
use crate::basis::{detect_coincidences, enumerate_modes, EigenMode, DISK_COINCIDENCE_TOL};
use crate::cutoff::CutoffProfile;
use crate::fdtd::{forward_run, TimeGrid};
use crate::field::Grid2D;
use crate::geometry::{BoundaryCondition, Geometry};
use crate::io::{write_field, write_pgm};
use crate::phantom::{render, PhantomKind, PhantomSpec};
use crate::reconstruct::{gradual_time_reversal, sweep_t, write_metrics_csv, Backend, ReconstructionReport, Solver};
use crate::recording::{BoundaryRecording, DetectorLayout, Side};
use crate::spectral::{project_initial, project_to_tolerance, MAX_PHASE_STEP, TAIL_TOLERANCE};
use crate::specfun::verify_zero_gaps_with;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "cavitor", version, about = "Gradual time reversal in reflecting cavities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    #[command(flatten)]
    Pipeline(RunConfig),
    /// Repeat a run from a config or provenance file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write to this location instead of the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    /// Simulate boundary measurements of a phantom.
    Forward(ForwardConfig),
    /// Reconstruct from a recording with one horizon T.
    Reconstruct(ReconstructConfig),
    /// Reconstruct for several horizons and tabulate the errors.
    Sweep(SweepConfig),
    /// List eigenmodes and, optionally, eigenvalue coincidences.
    Modes(ModesConfig),
    /// Check the Bessel root-spacing inequalities.
    BesselVerify(BesselConfig),
    /// Predict the reconstruction residual from the modal expansion.
    Predict(PredictConfig),
    /// Sample a phantom on a grid.
    RenderPhantom(RenderConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardSolver {
    Spectral,
    Fdtd,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ForwardConfig {
    #[arg(long, default_value = "disk")]
    pub geometry: Geometry,
    /// `three-bumps`, `eigen:K,M`, or a phantom spec file.
    #[arg(long, default_value = "three-bumps")]
    pub phantom: String,
    #[arg(long, value_enum, default_value = "spectral")]
    pub solver: ForwardSolver,
    /// Cells per side (rectangle) or radial cells (disk) for `fdtd`.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Detector layout, e.g. `full:1024` or `sides:right:256`.
    #[arg(long)]
    pub detectors: Option<String>,
    #[arg(long)]
    pub duration: f64,
    /// Sampling interval; by default `(π/8)/λ_cap`.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Eigenvalue cap of the spectral solver; by default the smallest cap
    /// with relative tail energy below 1e-6.
    #[arg(long)]
    pub cap: Option<f64>,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    #[serde(default)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// Also write the samples as CSV next to the recording.
    #[arg(long)]
    #[serde(default)]
    pub csv: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    #[arg(long)]
    pub backend: Option<Backend>,
    /// Cells per side (rectangle) or radial cells (disk).
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Time step of the backward solve; by default the stability limit.
    #[arg(long)]
    pub solver_dt: Option<f64>,
    #[arg(long, default_value = "bump:0.5")]
    pub cutoff: CutoffProfile,
    /// Reference phantom for error metrics.
    #[arg(long)]
    pub phantom: Option<String>,
    /// Decompose the residual over reversal-basis modes up to this eigenvalue.
    #[arg(long)]
    pub decompose: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReconstructConfig {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepConfig {
    #[arg(long)]
    pub data: PathBuf,
    /// Ascending horizons, comma separated.
    #[arg(long = "T", value_delimiter = ',', required = true)]
    #[serde(rename = "T")]
    pub horizons: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModesConfig {
    #[arg(long, default_value = "square")]
    pub geometry: Geometry,
    #[arg(long, default_value = "neumann")]
    pub bc: BoundaryCondition,
    #[arg(long)]
    pub cap: f64,
    /// Report coincidences of the Neumann basis with this basis.
    #[arg(long)]
    pub against: Option<BoundaryCondition>,
    /// Coincidence report path; defaults to `coincidences.csv` beside `out`.
    #[arg(long)]
    pub coincidences: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BesselConfig {
    #[arg(long, default_value_t = 50)]
    pub m_max: u32,
    #[arg(long, default_value_t = 100)]
    pub k_max: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PredictConfig {
    #[arg(long, default_value = "square")]
    pub geometry: Geometry,
    #[arg(long, default_value = "eigen:1,2")]
    pub phantom: String,
    #[arg(long)]
    pub eps: f64,
    /// Eigenvalue caps of the forward and reversal bases (`40` or `40,60`).
    #[arg(long, value_delimiter = ',', required = true)]
    pub caps: Vec<f64>,
    /// Boundary condition of the reversal problem.
    #[arg(long, default_value = "dirichlet")]
    pub reversal: BoundaryCondition,
    #[arg(long, default_value = "bump:0.5")]
    pub cutoff: CutoffProfile,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RenderConfig {
    #[arg(long, default_value = "disk")]
    pub geometry: Geometry,
    #[arg(long, default_value = "three-bumps")]
    pub phantom: String,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Field file; a PGM image is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Config echo, version and timings of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config: RunConfig,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
}

impl Provenance {
    pub fn read(path: &Path) -> Result<Self> {
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(format!("provenance: {e}")))
    }
}

/// Reads a bare config or the config inside a provenance file.
pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let value = match table.get("config") {
        Some(inner) => inner.clone(),
        None => toml::Value::Table(table),
    };
    value.try_into().map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Default grid resolution: 256 cells per rectangle side, 128×256 on the disk.
fn default_resolution(geometry: Geometry) -> usize {
    if geometry.is_disk() { 128 } else { 256 }
}

fn default_detectors(geometry: Geometry) -> DetectorLayout {
    if geometry.is_disk() {
        DetectorLayout::Full { count: 1024 }
    } else {
        DetectorLayout::Sides { sides: vec![Side::Bottom, Side::Right, Side::Top, Side::Left], per_side: 256 }
    }
}

/// `three-bumps`, `eigen:K,M`, or a phantom spec file.
pub fn parse_phantom(arg: &str, geometry: Geometry) -> Result<PhantomSpec> {
    let spec = if arg == "three-bumps" {
        PhantomSpec::three_bumps(geometry)
    } else if let Some(rest) = arg.strip_prefix("eigen:") {
        let bad = || Error::Configuration(format!("cannot parse eigenmode phantom {arg:?}"));
        let (k, m) = rest.split_once(',').ok_or_else(bad)?;
        let index = (k.trim().parse().map_err(|_| bad())?, m.trim().parse().map_err(|_| bad())?);
        PhantomSpec::eigenmode(geometry, index)
    } else {
        PhantomSpec::read(Path::new(arg))?
    };
    if spec.geometry != geometry {
        return Err(Error::Mismatch(format!("phantom {arg:?} is on {}, not {geometry}", spec.geometry)));
    }
    spec.validate()?;
    Ok(spec)
}

fn phantom_notes(spec: &PhantomSpec, notes: &mut BTreeMap<String, String>) -> Result<()> {
    let text = spec.to_toml()?;
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    notes.insert("phantom".into(), lines.join("; "));
    if matches!(spec.kind, PhantomKind::BumpSum { .. }) && *spec == PhantomSpec::three_bumps(spec.geometry) {
        notes.insert("phantom_origin".into(), "built-in three-bump phantom".into());
    }
    for w in spec.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn absolute(path: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(path)?)
}

impl RunConfig {
    /// Output location (file or directory).
    pub fn out(&self) -> &Path {
        match self {
            RunConfig::Forward(c) => &c.out,
            RunConfig::Reconstruct(c) => &c.out,
            RunConfig::Sweep(c) => &c.out,
            RunConfig::Modes(c) => &c.out,
            RunConfig::BesselVerify(c) => &c.out,
            RunConfig::Predict(c) => &c.out,
            RunConfig::RenderPhantom(c) => &c.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            RunConfig::Forward(c) => c.out = out,
            RunConfig::Reconstruct(c) => c.out = out,
            RunConfig::Sweep(c) => c.out = out,
            RunConfig::Modes(c) => c.out = out,
            RunConfig::BesselVerify(c) => c.out = out,
            RunConfig::Predict(c) => c.out = out,
            RunConfig::RenderPhantom(c) => c.out = out,
        }
    }

    fn writes_directory(&self) -> bool {
        matches!(self, RunConfig::Reconstruct(_) | RunConfig::Sweep(_))
    }

    /// Where the provenance file of this run goes.
    pub fn provenance_path(&self) -> PathBuf {
        let out = self.out();
        if self.writes_directory() {
            out.join("provenance.toml")
        } else {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".provenance.toml");
            out.with_file_name(name)
        }
    }

    /// Makes paths absolute, fills defaults and checks cross-field rules.
    pub fn normalized(mut self) -> Result<Self> {
        match &mut self {
            RunConfig::Forward(c) => {
                c.out = absolute(&c.out)?;
                if !(c.duration > 0.0 && c.duration.is_finite()) {
                    return Err(Error::Configuration(format!("duration {} must be positive", c.duration)));
                }
                let layout: DetectorLayout = match &c.detectors {
                    Some(s) => s.parse()?,
                    None => default_detectors(c.geometry),
                };
                layout.positions(c.geometry)?;
                c.detectors = Some(layout.to_string());
                if !c.phantom.starts_with("eigen:") && c.phantom != "three-bumps" {
                    c.phantom = absolute(Path::new(&c.phantom))?.display().to_string();
                }
                if c.solver == ForwardSolver::Fdtd {
                    c.resolution.get_or_insert(default_resolution(c.geometry));
                }
            }
            RunConfig::Reconstruct(c) => {
                c.out = absolute(&c.out)?;
                c.data = absolute(&c.data)?;
                normalize_solver(&mut c.solver)?;
            }
            RunConfig::Sweep(c) => {
                c.out = absolute(&c.out)?;
                c.data = absolute(&c.data)?;
                normalize_solver(&mut c.solver)?;
                if c.horizons.is_empty() || c.horizons.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Configuration(format!("horizons {:?} must ascend", c.horizons)));
                }
            }
            RunConfig::Modes(c) => {
                c.out = absolute(&c.out)?;
                if let Some(p) = &mut c.coincidences {
                    *p = absolute(p)?;
                }
            }
            RunConfig::BesselVerify(c) => c.out = absolute(&c.out)?,
            RunConfig::Predict(c) => {
                c.out = absolute(&c.out)?;
                if c.caps.len() == 1 {
                    c.caps.push(c.caps[0]);
                }
                if c.caps.len() != 2 {
                    return Err(Error::Configuration("--caps takes one or two values".into()));
                }
            }
            RunConfig::RenderPhantom(c) => {
                c.out = absolute(&c.out)?;
                c.resolution.get_or_insert(default_resolution(c.geometry));
            }
        }
        Ok(self)
    }
}

fn normalize_solver(s: &mut SolverArgs) -> Result<()> {
    if let Some(p) = &mut s.phantom {
        if !p.starts_with("eigen:") && p != "three-bumps" {
            *p = absolute(Path::new(p.as_str()))?.display().to_string();
        }
    }
    Ok(())
}

/// Executes a config and writes its provenance file.
pub fn run(config: RunConfig) -> Result<Provenance> {
    let config = config.normalized()?;
    let started = Instant::now();
    let mut prov = Provenance {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        notes: BTreeMap::new(),
        timings: BTreeMap::new(),
    };
    match &config {
        RunConfig::Forward(c) => run_forward(c, &mut prov)?,
        RunConfig::Reconstruct(c) => run_reconstruct(c, &mut prov)?,
        RunConfig::Sweep(c) => run_sweep(c, &mut prov)?,
        RunConfig::Modes(c) => run_modes(c, &mut prov)?,
        RunConfig::BesselVerify(c) => run_bessel(c, &mut prov)?,
        RunConfig::Predict(c) => run_predict(c, &mut prov)?,
        RunConfig::RenderPhantom(c) => run_render(c, &mut prov)?,
    }
    prov.timings.insert("total_seconds".into(), started.elapsed().as_secs_f64());
    let path = config.provenance_path();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&path, toml::to_string(&prov).map_err(|e| Error::Format(e.to_string()))?)?;
    // A failed bessel verification still leaves its report behind.
    if let Some(v) = prov.notes.get("violations") {
        if v != "0" {
            return Err(Error::Validation(format!("{v} root-spacing violations")));
        }
    }
    Ok(prov)
}

fn parent_dir(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn run_forward(c: &ForwardConfig, prov: &mut Provenance) -> Result<()> {
    let spec = parse_phantom(&c.phantom, c.geometry)?;
    phantom_notes(&spec, &mut prov.notes)?;
    let layout: DetectorLayout = c.detectors.as_deref().expect("normalized").parse()?;
    let detectors = layout.positions(c.geometry)?;
    let timer = Instant::now();

    // The modal expansion fixes the default sampling interval.
    let state = match (&spec.kind, c.cap) {
        (PhantomKind::File { .. }, _) => None,
        (_, Some(cap)) => {
            let phantom = spec.resolve()?;
            let modes: Arc<[EigenMode]> = enumerate_modes(c.geometry, BoundaryCondition::Neumann, cap)?.into();
            Some(project_initial(&phantom, modes, None)?)
        }
        (_, None) => Some(project_to_tolerance(&spec.resolve()?, c.geometry, TAIL_TOLERANCE)?),
    };
    if let Some(s) = &state {
        prov.notes.insert("lambda_cap".into(), format!("{:?}", s.eigenvalue_cap()));
        prov.notes.insert("modes".into(), s.modes().len().to_string());
        let rel = s.tail_energy() / (s.initial_energy() + s.tail_energy()).max(f64::MIN_POSITIVE);
        prov.notes.insert("relative_tail".into(), format!("{rel:e}"));
    }
    let dt_max = match (c.dt, &state) {
        (Some(dt), _) => dt,
        (None, Some(s)) => MAX_PHASE_STEP / s.eigenvalue_cap().max(1.0),
        (None, None) => {
            return Err(Error::Configuration("file phantoms need an explicit --dt".into()));
        }
    };
    let time = TimeGrid::covering(c.duration, dt_max)?;
    if c.dt.is_some() && (time.dt - dt_max).abs() > 1e-9 * dt_max {
        return Err(Error::Configuration(format!("dt {dt_max} does not divide the duration {}", c.duration)));
    }
    prov.notes.insert("recording_dt".into(), format!("{:?}", time.dt));
    let mut recording = match c.solver {
        ForwardSolver::Spectral => {
            let s = state.ok_or_else(|| Error::Configuration("the spectral solver needs a closed-form phantom".into()))?;
            s.record_boundary(&detectors, time.dt, time.steps + 1)?
        }
        ForwardSolver::Fdtd => {
            let grid = Arc::new(Grid2D::for_geometry(c.geometry, c.resolution.expect("normalized"))?);
            let f = render(&spec, &grid)?;
            let (steps, stride) = TimeGrid::subdividing(time.dt, time.steps, grid.max_stable_dt())?;
            prov.notes.insert("fdtd_dt".into(), format!("{:?}", steps.dt));
            forward_run(&f, steps, stride, &detectors)?
        }
    };
    if c.noise > 0.0 {
        recording.add_gaussian_noise(c.noise, c.seed)?;
    }
    prov.timings.insert("forward_seconds".into(), timer.elapsed().as_secs_f64());
    parent_dir(&c.out)?;
    recording.write(&c.out)?;
    if c.csv {
        recording.write_csv(&c.out.with_extension("csv"))?;
    }
    Ok(())
}

fn read_recording(path: &Path) -> Result<BoundaryRecording> {
    BoundaryRecording::read(path).map_err(|e| match e {
        Error::Io(io) => Error::Configuration(format!("cannot read recording {}: {io}", path.display())),
        other => other,
    })
}

fn solver_for(args: &SolverArgs, recording: &BoundaryRecording) -> Result<Solver> {
    let g = recording.geometry();
    let n = args.resolution.unwrap_or(default_resolution(g));
    let grid = Arc::new(Grid2D::for_geometry(g, n)?);
    match args.backend {
        Some(b) => Solver::new(b, grid, args.solver_dt),
        None => Ok(Solver { dt: args.solver_dt, ..Solver::for_grid(grid) }),
    }
}

fn reference_for(args: &SolverArgs, solver: &Solver, prov: &mut Provenance) -> Result<Option<crate::field::ScalarField2D>> {
    let Some(arg) = &args.phantom else { return Ok(None) };
    let spec = parse_phantom(arg, solver.grid.geometry())?;
    phantom_notes(&spec, &mut prov.notes)?;
    Ok(Some(render(&spec, &solver.grid)?))
}

/// The reversal basis matching the measured part of the boundary: Dirichlet
/// for full coverage, mixed for the right side of a rectangle.
fn reversal_modes(recording: &BoundaryRecording, cap: f64) -> Result<Vec<EigenMode>> {
    let g = recording.geometry();
    let arcs = recording.arclengths();
    let bc = match g.sides() {
        None => BoundaryCondition::Dirichlet,
        Some((a, b)) => {
            let on_right = |s: f64| s >= a - 1e-9 && s <= a + b + 1e-9;
            if arcs.iter().all(|&s| on_right(s)) {
                BoundaryCondition::MixedRightDirichlet
            } else {
                BoundaryCondition::Dirichlet
            }
        }
    };
    enumerate_modes(g, bc, cap)
}

fn finish_report(report: &mut ReconstructionReport, args: &SolverArgs, recording: &BoundaryRecording) -> Result<()> {
    if let (Some(cap), Some(_)) = (args.decompose, &report.residual) {
        report.decompose(&reversal_modes(recording, cap)?)?;
    }
    Ok(())
}

fn run_reconstruct(c: &ReconstructConfig, prov: &mut Provenance) -> Result<()> {
    let recording = read_recording(&c.data)?;
    let solver = solver_for(&c.solver, &recording)?;
    let reference = reference_for(&c.solver, &solver, prov)?;
    let timer = Instant::now();
    let mut report = gradual_time_reversal(&recording, &c.solver.cutoff, c.horizon, &solver, reference.as_ref())?;
    prov.timings.insert("reversal_seconds".into(), timer.elapsed().as_secs_f64());
    finish_report(&mut report, &c.solver, &recording)?;
    if let Some(m) = &report.metrics {
        prov.notes.insert("h1_rel".into(), format!("{:?}", m.h1_rel));
        prov.notes.insert("l2w_rel".into(), format!("{:?}", m.l2w_rel));
    }
    report.write_dir(&c.out)
}

fn run_sweep(c: &SweepConfig, prov: &mut Provenance) -> Result<()> {
    let recording = read_recording(&c.data)?;
    let solver = solver_for(&c.solver, &recording)?;
    let reference = reference_for(&c.solver, &solver, prov)?;
    let timer = Instant::now();
    let mut reports = sweep_t(&recording, &c.solver.cutoff, &c.horizons, &solver, reference.as_ref())?;
    prov.timings.insert("sweep_seconds".into(), timer.elapsed().as_secs_f64());
    fs::create_dir_all(&c.out)?;
    for r in &mut reports {
        finish_report(r, &c.solver, &recording)?;
        r.write_dir(&c.out.join(format!("T_{}", r.info.horizon)))?;
    }
    if reference.is_some() {
        write_metrics_csv(&reports, &c.out.join("metrics.csv"))?;
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn run_modes(c: &ModesConfig, prov: &mut Provenance) -> Result<()> {
    let modes = enumerate_modes(c.geometry, c.bc, c.cap)?;
    parent_dir(&c.out)?;
    let mut w = csv::Writer::from_path(&c.out).map_err(csv_error)?;
    w.write_record(["k", "m", "eigenvalue", "normalization"]).map_err(csv_error)?;
    for m in &modes {
        w.write_record([
            m.index.0.to_string(),
            m.index.1.to_string(),
            format!("{:?}", m.eigenvalue),
            format!("{:?}", m.normalization),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    prov.notes.insert("modes".into(), modes.len().to_string());
    let Some(other) = c.against else { return Ok(()) };
    let neumann = enumerate_modes(c.geometry, BoundaryCondition::Neumann, c.cap)?;
    let reversal = enumerate_modes(c.geometry, other, c.cap)?;
    let records = detect_coincidences(&neumann, &reversal, DISK_COINCIDENCE_TOL)?;
    let path = c.coincidences.clone().unwrap_or_else(|| c.out.with_file_name("coincidences.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
    w.write_record(["nIdx", "lIdx", "kIdx", "mIdx", "eigenvalue", "coupling"]).map_err(csv_error)?;
    for r in &records {
        w.write_record([
            r.neumann.index.0.to_string(),
            r.neumann.index.1.to_string(),
            r.reversal.index.0.to_string(),
            r.reversal.index.1.to_string(),
            format!("{:?}", r.eigenvalue),
            format!("{:?}", r.coupling),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    prov.notes.insert("coincidences".into(), records.len().to_string());
    prov.notes.insert(
        "coupled_coincidences".into(),
        records.iter().filter(|r| r.coupling != 0.0).count().to_string(),
    );
    Ok(())
}

fn run_bessel(c: &BesselConfig, prov: &mut Provenance) -> Result<()> {
    let mut failures = Vec::new();
    let report = verify_zero_gaps_with(c.m_max, c.k_max, |check| {
        if !check.pass {
            failures.push(*check);
        }
    })?;
    parent_dir(&c.out)?;
    let mut w = csv::Writer::from_path(&c.out).map_err(csv_error)?;
    w.write_record(["quantity", "checked", "violations"]).map_err(csv_error)?;
    for (q, (checked, failed)) in &report.counts {
        w.write_record([q.name().to_string(), checked.to_string(), failed.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    if !failures.is_empty() {
        let path = c.out.with_file_name("violations.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
        w.write_record(["quantity", "m", "k", "l", "bound", "value"]).map_err(csv_error)?;
        for f in &failures {
            w.write_record([
                f.quantity.name().to_string(),
                f.m.to_string(),
                f.k.to_string(),
                f.l.to_string(),
                format!("{:?}", f.bound),
                format!("{:?}", f.value),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
    }
    prov.notes.insert("checks".into(), report.total_checks().to_string());
    prov.notes.insert("violations".into(), report.total_violations().to_string());
    prov.notes.insert("max_root_residual".into(), format!("{:e}", report.max_residual));
    prov.notes.insert("order_zero_constant".into(), format!("{:?}", report.order_zero_constant));
    Ok(())
}

fn run_predict(c: &PredictConfig, prov: &mut Provenance) -> Result<()> {
    let spec = parse_phantom(&c.phantom, c.geometry)?;
    phantom_notes(&spec, &mut prov.notes)?;
    let (forward_cap, reversal_cap) = (c.caps[0], c.caps[1]);
    let neumann: Arc<[EigenMode]> = enumerate_modes(c.geometry, BoundaryCondition::Neumann, forward_cap)?.into();
    let state = project_initial(&spec.resolve()?, neumann, None)?;
    let reversal: Arc<[EigenMode]> = enumerate_modes(c.geometry, c.reversal, reversal_cap)?.into();
    let pred = predict_residual(&state, reversal, c.eps, &c.cutoff)?;
    parent_dir(&c.out)?;
    let mut w = csv::Writer::from_path(&c.out).map_err(csv_error)?;
    w.write_record(["kIdx", "mIdx", "eigenvalue", "scaled_displacement", "displacement", "velocity", "persistent"])
        .map_err(csv_error)?;
    for (i, m) in pred.modes.iter().enumerate() {
        w.write_record([
            m.index.0.to_string(),
            m.index.1.to_string(),
            format!("{:?}", m.eigenvalue),
            format!("{:?}", pred.scaled_displacement[i]),
            format!("{:?}", pred.displacement[i]),
            format!("{:?}", pred.velocity[i]),
            format!("{:?}", pred.persistent[i]),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    prov.notes.insert("truncation_tail".into(), format!("{:e}", pred.truncation_tail));
    Ok(())
}

fn run_render(c: &RenderConfig, prov: &mut Provenance) -> Result<()> {
    let spec = parse_phantom(&c.phantom, c.geometry)?;
    phantom_notes(&spec, &mut prov.notes)?;
    let grid = Arc::new(Grid2D::for_geometry(c.geometry, c.resolution.expect("normalized"))?);
    let f = render(&spec, &grid)?;
    parent_dir(&c.out)?;
    write_field(&f, &c.out)?;
    write_pgm(&f, &c.out.with_extension("pgm"))
}

pub fn execute(command: CliCommand) -> Result<Provenance> {
    match command {
        CliCommand::Pipeline(config) => run(config),
        CliCommand::Run { config, out } => {
            let mut config = read_config(&config)?;
            if let Some(out) = out {
                config.set_out(out);
            }
            run(config)
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> Result<Provenance>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    execute(Cli::try_parse_from(args).map_err(|e| Error::Configuration(e.to_string()))?.command)
}

/// Caps the worker pool at `CAVITOR_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("CAVITOR_THREADS") else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Configuration(format!("CAVITOR_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Configuration(format!("thread pool: {e}")))
}

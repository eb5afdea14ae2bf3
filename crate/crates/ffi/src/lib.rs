//! C interface to `cavitor`.
//!
//! Objects are opaque handles created by `*_new`/`*_read`/producer calls and
//! released with the matching `*_free`. Every fallible call returns a
//! [`CavitorStatus`] and writes results through out-pointers; the message of
//! the last failure on the calling thread is available from
//! [`cavitor_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use cavitor::cli::{main_with_args, parse_phantom};
use cavitor::cutoff::CutoffProfile;
use cavitor::fdtd::{forward_run, TimeGrid};
use cavitor::field::{Grid2D, ScalarField2D};
use cavitor::geometry::Geometry;
use cavitor::io::{read_field, write_field};
use cavitor::phantom::render;
use cavitor::reconstruct::{gradual_time_reversal, Solver};
use cavitor::recording::{BoundaryRecording, DetectorLayout};
use cavitor::{analysis, specfun, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CavitorStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Range = 3,
    Numerical = 4,
    Configuration = 5,
    Domain = 6,
    Resolution = 7,
    Instability = 8,
    Mismatch = 9,
    Quadrature = 10,
    Validation = 11,
    Format = 12,
    Io = 13,
    Panic = 14,
}

/// Sampled grid on a cavity.
pub struct CavitorGrid(Arc<Grid2D>);

/// Scalar field on a grid.
pub struct CavitorField(ScalarField2D);

/// Boundary measurements.
pub struct CavitorRecording(BoundaryRecording);

/// Relative errors of a reconstruction against a reference field.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CavitorMetrics {
    pub l2w_rel: f64,
    pub h1_rel: f64,
    pub energy_res: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

enum Failure {
    Null(&'static str),
    Argument(String),
    Library(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Library(e)
    }
}

fn status_of(e: &Error) -> CavitorStatus {
    match e {
        Error::Range(_) => CavitorStatus::Range,
        Error::Parameter(_) => CavitorStatus::InvalidArgument,
        Error::Numerical(_) => CavitorStatus::Numerical,
        Error::Configuration(_) => CavitorStatus::Configuration,
        Error::Domain(_) => CavitorStatus::Domain,
        Error::Resolution(_) => CavitorStatus::Resolution,
        Error::Instability { .. } => CavitorStatus::Instability,
        Error::Mismatch(_) => CavitorStatus::Mismatch,
        Error::Quadrature(_) => CavitorStatus::Quadrature,
        Error::Validation(_) => CavitorStatus::Validation,
        Error::Format(_) => CavitorStatus::Format,
        Error::Io(_) => CavitorStatus::Io,
    }
}

fn set_error(message: String) {
    LAST_ERROR.with(|slot| {
        let mut bytes = message.into_bytes();
        bytes.retain(|&b| b != 0);
        *slot.borrow_mut() = bytes;
    });
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CavitorStatus {
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return CavitorStatus::Ok,
        Ok(Err(Failure::Null(name))) => (CavitorStatus::NullPointer, format!("{name} is null")),
        Ok(Err(Failure::Argument(m))) => (CavitorStatus::InvalidArgument, m),
        Ok(Err(Failure::Library(e))) => (status_of(&e), e.to_string()),
        Err(_) => (CavitorStatus::Panic, "internal panic".to_string()),
    };
    set_error(message);
    status
}

/// # Safety
/// `p` is null or points to a live `T`.
unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: forwarded from the caller.
    unsafe { p.as_ref() }.ok_or(Failure::Null(name))
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    // SAFETY: non-null and NUL-terminated per the caller.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| Failure::Argument(format!("{name} is not UTF-8")))
}

/// # Safety
/// `out` is null or writable.
unsafe fn put<T>(out: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    // SAFETY: non-null and writable per the caller.
    unsafe { out.write(value) };
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// # Safety
/// `p` is null or came from `Box::into_raw` and is not used afterwards.
unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: forwarded from the caller.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cavitor_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// NUL-terminated) and returns the length it needs including the NUL.
///
/// # Safety
/// `buf` is null or holds `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cavitor_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: `buf` holds `len > n` bytes per the caller.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                buf.add(n).write(0);
            }
        }
        msg.len() + 1
    })
}

/// `J_m(x)` for `m ≤ 200`, `0 ≤ x ≤ 10⁴`.
///
/// # Safety
/// `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_bessel_j(m: u32, x: f64, out: *mut f64) -> CavitorStatus {
    // SAFETY: forwarded from the caller.
    guard(|| unsafe { put(out, specfun::bessel_j(m, x)?, "out") })
}

/// The `k`-th positive zero of `J_m`, or of `J_m′` when `prime` is set.
///
/// # Safety
/// `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_bessel_zero(m: u32, k: usize, prime: bool, out: *mut f64) -> CavitorStatus {
    guard(|| {
        let z = if prime { specfun::bessel_prime_zero(m, k)? } else { specfun::bessel_zero(m, k)? };
        // SAFETY: forwarded from the caller.
        unsafe { put(out, z, "out") }
    })
}

/// `I(λ, ν, ε)` for a cutoff given as `bump:0.5` or `poly5:0.3`.
///
/// # Safety
/// `cutoff` is a NUL-terminated string; `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_coupling_integral(
    lambda: f64,
    nu: f64,
    epsilon: f64,
    cutoff: *const c_char,
    out: *mut f64,
) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let profile: CutoffProfile = unsafe { text(cutoff, "cutoff") }?.parse()?;
        let value = analysis::coupling_integral(lambda, nu, epsilon, &profile)?;
        // SAFETY: forwarded from the caller.
        unsafe { put(out, value, "out") }
    })
}

/// Default grid on `geometry` (`disk`, `square`, `rect:pi,pi*sqrt(2)`):
/// `resolution` cells per side, or `resolution × 2·resolution` on the disk.
///
/// # Safety
/// `geometry` is a NUL-terminated string; `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_grid_new(
    geometry: *const c_char,
    resolution: usize,
    out: *mut *mut CavitorGrid,
) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let g: Geometry = unsafe { text(geometry, "geometry") }?.parse()?;
        let grid = Grid2D::for_geometry(g, resolution)?;
        // SAFETY: forwarded from the caller.
        unsafe { put(out, boxed(CavitorGrid(Arc::new(grid))), "out") }
    })
}

/// Number of nodes, or 0 for a null grid.
///
/// # Safety
/// `grid` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cavitor_grid_len(grid: *const CavitorGrid) -> usize {
    // SAFETY: forwarded from the caller.
    unsafe { grid.as_ref() }.map_or(0, |g| g.0.len())
}

/// # Safety
/// `grid` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cavitor_grid_free(grid: *mut CavitorGrid) {
    // SAFETY: forwarded from the caller.
    unsafe { release(grid) }
}

/// Samples a phantom (`three-bumps`, `eigen:K,M`, or a spec file path) on
/// the nodes of `grid`.
///
/// # Safety
/// `grid` is a live handle, `phantom` a NUL-terminated string, `out` null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_phantom_render(
    grid: *const CavitorGrid,
    phantom: *const c_char,
    out: *mut *mut CavitorField,
) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let (grid, phantom) = unsafe { (deref(grid, "grid")?, text(phantom, "phantom")?) };
        let spec = parse_phantom(phantom, grid.0.geometry())?;
        let field = render(&spec, &grid.0)?;
        // SAFETY: forwarded from the caller.
        unsafe { put(out, boxed(CavitorField(field)), "out") }
    })
}

/// Number of node values, or 0 for a null field.
///
/// # Safety
/// `field` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cavitor_field_len(field: *const CavitorField) -> usize {
    // SAFETY: forwarded from the caller.
    unsafe { field.as_ref() }.map_or(0, |f| f.0.values().len())
}

/// Node values in grid order, valid until the field is freed; null for a
/// null field.
///
/// # Safety
/// `field` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cavitor_field_values(field: *const CavitorField) -> *const f64 {
    // SAFETY: forwarded from the caller.
    unsafe { field.as_ref() }.map_or(ptr::null(), |f| f.0.values().as_ptr())
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_field_read(path: *const c_char, out: *mut *mut CavitorField) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let field = read_field(&PathBuf::from(unsafe { text(path, "path") }?))?;
        // SAFETY: forwarded from the caller.
        unsafe { put(out, boxed(CavitorField(field)), "out") }
    })
}

/// # Safety
/// `field` is a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cavitor_field_write(field: *const CavitorField, path: *const c_char) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let (field, path) = unsafe { (deref(field, "field")?, text(path, "path")?) };
        Ok(write_field(&field.0, &PathBuf::from(path))?)
    })
}

/// # Safety
/// `field` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cavitor_field_free(field: *mut CavitorField) {
    // SAFETY: forwarded from the caller.
    unsafe { release(field) }
}

/// Runs the finite-difference forward problem from `initial` at rest for
/// `duration`, sampling every `dt_record` at detectors given as a layout
/// string (`full:1024`, `sides:right+top:256`, …).
///
/// # Safety
/// `initial` is a live handle, `detectors` a NUL-terminated string, `out`
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_forward_fdtd(
    initial: *const CavitorField,
    duration: f64,
    dt_record: f64,
    detectors: *const c_char,
    out: *mut *mut CavitorRecording,
) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let (initial, layout) = unsafe { (deref(initial, "initial")?, text(detectors, "detectors")?) };
        let grid = initial.0.grid();
        let positions = layout.parse::<DetectorLayout>()?.positions(grid.geometry())?;
        let intervals = (duration / dt_record).round();
        if !(intervals >= 1.0) || (intervals * dt_record - duration).abs() > 1e-9 * duration {
            return Err(Failure::Argument(format!("dt_record {dt_record} does not divide duration {duration}")));
        }
        let (time, stride) = TimeGrid::subdividing(dt_record, intervals as usize, grid.max_stable_dt())?;
        let rec = forward_run(&initial.0, time, stride, &positions)?;
        // SAFETY: forwarded from the caller.
        unsafe { put(out, boxed(CavitorRecording(rec)), "out") }
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_recording_read(path: *const c_char, out: *mut *mut CavitorRecording) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let rec = BoundaryRecording::read(&PathBuf::from(unsafe { text(path, "path") }?))?;
        // SAFETY: forwarded from the caller.
        unsafe { put(out, boxed(CavitorRecording(rec)), "out") }
    })
}

/// # Safety
/// `recording` is a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cavitor_recording_write(
    recording: *const CavitorRecording,
    path: *const c_char,
) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let (rec, path) = unsafe { (deref(recording, "recording")?, text(path, "path")?) };
        Ok(rec.0.write(&PathBuf::from(path))?)
    })
}

/// Detector count, samples per detector and sampling interval.
///
/// # Safety
/// `recording` is a live handle; each out-pointer is null or writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_recording_shape(
    recording: *const CavitorRecording,
    n_detectors: *mut usize,
    n_samples: *mut usize,
    dt: *mut f64,
) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let rec = &unsafe { deref(recording, "recording") }?.0;
        // SAFETY: forwarded from the caller.
        unsafe {
            put(n_detectors, rec.n_detectors(), "n_detectors")?;
            put(n_samples, rec.n_samples(), "n_samples")?;
            put(dt, rec.dt(), "dt")
        }
    })
}

/// Samples of one detector, valid until the recording is freed.
///
/// # Safety
/// `recording` is a live handle; `out` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_recording_trace(
    recording: *const CavitorRecording,
    detector: usize,
    out: *mut *const f64,
) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let rec = &unsafe { deref(recording, "recording") }?.0;
        if detector >= rec.n_detectors() {
            return Err(Failure::Argument(format!("detector {detector} of {}", rec.n_detectors())));
        }
        // SAFETY: forwarded from the caller.
        unsafe { put(out, rec.trace(detector).as_ptr(), "out") }
    })
}

/// # Safety
/// `recording` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cavitor_recording_free(recording: *mut CavitorRecording) {
    // SAFETY: forwarded from the caller.
    unsafe { release(recording) }
}

/// Gradual time reversal with horizon `horizon` on `grid`. When `reference`
/// is non-null and `metrics` non-null, the errors against it are stored.
///
/// # Safety
/// `recording` and `grid` are live handles, `cutoff` a NUL-terminated
/// string, `reference` null or a live handle on `grid`, `out` null or
/// writable, `metrics` null or writable.
#[no_mangle]
pub unsafe extern "C" fn cavitor_reconstruct(
    recording: *const CavitorRecording,
    grid: *const CavitorGrid,
    horizon: f64,
    cutoff: *const c_char,
    reference: *const CavitorField,
    out: *mut *mut CavitorField,
    metrics: *mut CavitorMetrics,
) -> CavitorStatus {
    guard(|| {
        // SAFETY: forwarded from the caller.
        let (rec, grid, cutoff) = unsafe { (deref(recording, "recording")?, deref(grid, "grid")?, text(cutoff, "cutoff")?) };
        let profile: CutoffProfile = cutoff.parse()?;
        // SAFETY: forwarded from the caller.
        let reference = unsafe { reference.as_ref() }.map(|f| &f.0);
        let solver = Solver::for_grid(grid.0.clone());
        let report = gradual_time_reversal(&rec.0, &profile, horizon, &solver, reference)?;
        if let (Some(m), false) = (report.metrics, metrics.is_null()) {
            let value = CavitorMetrics { l2w_rel: m.l2w_rel, h1_rel: m.h1_rel, energy_res: m.energy_res };
            // SAFETY: non-null and writable per the caller.
            unsafe { metrics.write(value) };
        }
        // SAFETY: forwarded from the caller.
        unsafe { put(out, boxed(CavitorField(report.reconstruction)), "out") }
    })
}

/// Runs a command line as the `cavitor` executable would; `argv[0]` is the
/// program name.
///
/// # Safety
/// `argv` holds `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cavitor_run(argc: c_int, argv: *const *const c_char) -> CavitorStatus {
    guard(|| {
        if argv.is_null() {
            return Err(Failure::Null("argv"));
        }
        let n = usize::try_from(argc).map_err(|_| Failure::Argument(format!("argc = {argc}")))?;
        let args = (0..n)
            // SAFETY: `argv` holds `argc` strings per the caller.
            .map(|i| unsafe { text(*argv.add(i), "argv entry") }.map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        main_with_args(args)?;
        Ok(())
    })
}

//! C ABI over `chnl-core`.
//!
//! Every fallible call returns a [`ChnlStatus`]; on failure the message is
//! available from [`chnl_last_error_message`] on the same thread. Handles are
//! opaque and must be released with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use chnl_core::config::RunConfig;
use chnl_core::nonlocal_ops::{apply_b, bbm_seminorm};
use chnl_core::solvers::{Solver, SolverState};
use chnl_core::{build_kernel, Error, KernelSpec, MollifierProfile, ProfileKind, TorusField, TorusGrid};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChnlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    /// theta, adhesion or step-size constraint violated.
    Constraint = 4,
    NonFinite = 5,
    Io = 6,
    /// Caller buffer length does not match the grid.
    BufferSize = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChnlProfile {
    CompactBump = 0,
    TruncatedGaussian = 1,
}

/// Nonlocal interaction kernel on a fixed grid.
pub struct ChnlKernel {
    kernel: KernelSpec,
}

/// A solver together with its current state.
pub struct ChnlSolver {
    solver: Solver,
    state: SolverState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ChnlStatus {
    match e {
        Error::Config(_) | Error::Format(_) => ChnlStatus::Config,
        Error::ThetaConstraint { .. } | Error::AdhesionConstraint { .. } | Error::StepTooLarge { .. } => {
            ChnlStatus::Constraint
        }
        Error::NonFinite { .. } => ChnlStatus::NonFinite,
        Error::Io(_) => ChnlStatus::Io,
        _ => ChnlStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and panics.
fn guard(f: impl FnOnce() -> Result<(), (ChnlStatus, String)>) -> ChnlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ChnlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ChnlStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (ChnlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ChnlStatus, String) {
    (ChnlStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` is null or valid for `len` reads.
unsafe fn input<'a>(p: *const f64, len: usize, want: usize) -> Result<&'a [f64], (ChnlStatus, String)> {
    if p.is_null() {
        return Err(null("input buffer"));
    }
    if len != want {
        return Err((ChnlStatus::BufferSize, format!("buffer has {len} values, grid has {want}")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` is null or valid for `len` writes.
unsafe fn output<'a>(p: *mut f64, len: usize, want: usize) -> Result<&'a mut [f64], (ChnlStatus, String)> {
    if p.is_null() {
        return Err(null("output buffer"));
    }
    if len != want {
        return Err((ChnlStatus::BufferSize, format!("buffer has {len} values, grid has {want}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chnl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn chnl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Builds `J_eps` on a `dim`-dimensional grid of `n` points per side.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn chnl_kernel_new(
    dim: usize,
    n: usize,
    length: f64,
    profile: ChnlProfile,
    eps: f64,
    alpha: f64,
    out: *mut *mut ChnlKernel,
) -> ChnlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = match profile {
            ChnlProfile::CompactBump => ProfileKind::CompactBump,
            ChnlProfile::TruncatedGaussian => ProfileKind::TruncatedGaussian,
        };
        let grid = TorusGrid::new(dim, n, length).map_err(core_err)?;
        let p = MollifierProfile::new(kind, dim).map_err(core_err)?;
        let kernel = build_kernel(&p, eps, alpha, &grid).map_err(core_err)?;
        *out = Box::into_raw(Box::new(ChnlKernel { kernel }));
        Ok(())
    })
}

/// Number of grid values (`n^dim`); 0 for a null handle.
///
/// # Safety
/// `k` is null or a live kernel handle.
#[no_mangle]
pub unsafe extern "C" fn chnl_kernel_len(k: *const ChnlKernel) -> usize {
    k.as_ref().map_or(0, |k| k.kernel.grid().len())
}

/// `out = B_eps u`.
///
/// # Safety
/// `u` and `out` must hold `len` values; `k` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn chnl_kernel_apply_b(
    k: *const ChnlKernel,
    u: *const f64,
    out: *mut f64,
    len: usize,
) -> ChnlStatus {
    guard(|| {
        let k = k.as_ref().ok_or_else(|| null("kernel"))?;
        let grid = *k.kernel.grid();
        let u = TorusField::new(grid, input(u, len, grid.len())?.to_vec()).map_err(core_err)?;
        let bu = apply_b(&u, &k.kernel).map_err(core_err)?;
        output(out, len, grid.len())?.copy_from_slice(bu.values());
        Ok(())
    })
}

/// `∬ J_eps (u(x) - u(y))^2`.
///
/// # Safety
/// `u` must hold `len` values, `value` one write; `k` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn chnl_kernel_bbm_seminorm(
    k: *const ChnlKernel,
    u: *const f64,
    len: usize,
    value: *mut f64,
) -> ChnlStatus {
    guard(|| {
        let k = k.as_ref().ok_or_else(|| null("kernel"))?;
        if value.is_null() {
            return Err(null("value"));
        }
        let grid = *k.kernel.grid();
        let u = TorusField::new(grid, input(u, len, grid.len())?.to_vec()).map_err(core_err)?;
        *value = bbm_seminorm(&u, &k.kernel).map_err(core_err)?;
        Ok(())
    })
}

/// # Safety
/// `k` is null or a handle from [`chnl_kernel_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chnl_kernel_free(k: *mut ChnlKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Creates a solver from a TOML run configuration (the `chnl run` format),
/// with the configured initial condition as state. Relative `initial.path`
/// entries resolve against the working directory.
///
/// # Safety
/// `toml` is a NUL-terminated string; `out` is valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn chnl_solver_from_toml(toml: *const c_char, out: *mut *mut ChnlSolver) -> ChnlStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| (ChnlStatus::InvalidArgument, format!("config is not UTF-8: {e}")))?;
        let cfg = RunConfig::from_toml_str(text, Path::new(".")).map_err(core_err)?;
        let grid = cfg.grid().map_err(core_err)?;
        let solver = Solver::new(cfg.model().map_err(core_err)?, cfg.solver_config(), grid).map_err(core_err)?;
        let state = SolverState::new(cfg.initial_field().map_err(core_err)?);
        *out = Box::into_raw(Box::new(ChnlSolver { solver, state }));
        Ok(())
    })
}

/// Advances by `steps` time steps. On a non-finite result the state is left
/// at the last finite step and `CHNL_STATUS_NON_FINITE` is returned.
///
/// # Safety
/// `s` is a live solver handle.
#[no_mangle]
pub unsafe extern "C" fn chnl_solver_step(s: *mut ChnlSolver, steps: u64) -> ChnlStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| null("solver"))?;
        for _ in 0..steps {
            s.solver.step(&mut s.state).map_err(core_err)?;
        }
        Ok(())
    })
}

/// Number of grid values; 0 for a null handle.
///
/// # Safety
/// `s` is null or a live solver handle.
#[no_mangle]
pub unsafe extern "C" fn chnl_solver_len(s: *const ChnlSolver) -> usize {
    s.as_ref().map_or(0, |s| s.solver.grid().len())
}

/// Current time; NaN for a null handle.
///
/// # Safety
/// `s` is null or a live solver handle.
#[no_mangle]
pub unsafe extern "C" fn chnl_solver_time(s: *const ChnlSolver) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.state.t)
}

/// Steps taken so far.
///
/// # Safety
/// `s` is null or a live solver handle.
#[no_mangle]
pub unsafe extern "C" fn chnl_solver_step_count(s: *const ChnlSolver) -> u64 {
    s.as_ref().map_or(0, |s| s.state.step)
}

/// Copies the current field into `out` (row-major, axis 0 fastest as in snapshots).
///
/// # Safety
/// `out` must hold `len` values; `s` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn chnl_solver_get_field(s: *const ChnlSolver, out: *mut f64, len: usize) -> ChnlStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solver"))?;
        output(out, len, s.solver.grid().len())?.copy_from_slice(s.state.u.values());
        Ok(())
    })
}

/// Replaces the current field; time and step count are kept.
///
/// # Safety
/// `u` must hold `len` values; `s` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn chnl_solver_set_field(s: *mut ChnlSolver, u: *const f64, len: usize) -> ChnlStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| null("solver"))?;
        let grid = *s.solver.grid();
        s.state.u = TorusField::new(grid, input(u, len, grid.len())?.to_vec()).map_err(core_err)?;
        s.state.mu = None;
        Ok(())
    })
}

/// Total mass `∫ u`.
///
/// # Safety
/// `s` is a live handle, `value` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn chnl_solver_mass(s: *const ChnlSolver, value: *mut f64) -> ChnlStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solver"))?;
        if value.is_null() {
            return Err(null("value"));
        }
        *value = s.state.u.integral();
        Ok(())
    })
}

/// Energy of the current state (`1/2 ‖u‖^2` for adhesion systems).
///
/// # Safety
/// `s` is a live handle, `value` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn chnl_solver_energy(s: *const ChnlSolver, value: *mut f64) -> ChnlStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solver"))?;
        if value.is_null() {
            return Err(null("value"));
        }
        *value = s.solver.energy(&s.state.u).map_err(core_err)?;
        Ok(())
    })
}

/// # Safety
/// `s` is null or a handle from [`chnl_solver_from_toml`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chnl_solver_free(s: *mut ChnlSolver) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

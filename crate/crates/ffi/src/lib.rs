//! C ABI for `roadfield`.
//!
//! Objects cross the boundary as opaque handles created by `rf_*_new` /
//! `rf_*_assemble` style constructors and released with the matching
//! `rf_*_free`. Every fallible entry point returns an [`RfStatus`]; on
//! failure the message is available from [`rf_last_error_message`] on the
//! same thread. Panics are caught and reported as `RF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use roadfield::analysis::critical_speeds;
use roadfield::discretization::{assemble, Grid, OperatorKind, SparseOperator};
use roadfield::dynamics::{evolve_classify, Verdict};
use roadfield::eigen::{dense_oracle, exhaust_lambda, principal_eigenpair, EigenResult, ExhaustConfig, SpacingRule};
use roadfield::model::{NicheProfile, Parameters, ReactionTerm, Table};
use roadfield::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    NotConverged = 4,
    Structural = 5,
    Singular = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfOperatorKind {
    /// Road and field with the exchange condition.
    Coupled = 0,
    /// Field alone, reflecting at `y = 0`.
    Neumann = 1,
    /// Field alone, absorbing road.
    Robin = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfVerdict {
    Persistence = 0,
    Extinction = 1,
    Undetermined = 2,
}

/// Model coefficients; `c` is the niche speed.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfParameters {
    pub road_diffusion: f64,
    pub field_diffusion: f64,
    pub mu: f64,
    pub nu: f64,
    pub c: f64,
}

/// Domain exhaustion ladder with a fixed spacing `h`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfExhaustConfig {
    pub x0: f64,
    pub growth: f64,
    pub h: f64,
    pub stop_tol: f64,
    pub max_steps: usize,
    pub min_steps: usize,
    pub aspect: f64,
    pub eig_tol: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfExhaustion {
    pub lambda_inf: f64,
    pub rungs: usize,
    pub converged: bool,
    /// Half-width of the last truncation.
    pub half_width: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfSpeeds {
    pub c_star: f64,
    pub c_star_upper: f64,
    pub bound: f64,
    pub bracket_width: f64,
    pub provisional: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfClassification {
    pub verdict: RfVerdict,
    pub lambda: f64,
    pub t_end: f64,
}

/// Growth-rate profile.
pub struct RfNiche(NicheProfile);

/// Truncated rectangle `[-X, X] x [0, Y]` with spacing `h`.
pub struct RfGrid(Grid);

/// Assembled discrete operator.
pub struct RfOperator(SparseOperator);

/// Principal eigenpair.
pub struct RfEigen(EigenResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RfStatus {
    match e {
        Error::Config(_) => RfStatus::Config,
        Error::InvalidArgument(_) | Error::OutOfDomain { .. } | Error::TimeStep { .. } => RfStatus::InvalidArgument,
        Error::NotConverged { .. } => RfStatus::NotConverged,
        Error::Structural(_) => RfStatus::Structural,
        Error::Singular(_) => RfStatus::Singular,
        Error::Exhaustion { source, .. } => status_of(source),
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => RfStatus::Io,
    }
}

/// Internal failure: a status and its message.
struct Failure(RfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RfStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            RfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            RfStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn new_handle<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    out.write(Box::into_raw(Box::new(value)));
    Ok(())
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn params(p: &RfParameters) -> Result<Parameters, Failure> {
    Ok(Parameters::new(p.road_diffusion, p.field_diffusion, p.mu, p.nu, p.c)?)
}

fn kind(k: RfOperatorKind) -> OperatorKind {
    match k {
        RfOperatorKind::Coupled => OperatorKind::Coupled,
        RfOperatorKind::Neumann => OperatorKind::Neumann,
        RfOperatorKind::Robin => OperatorKind::Robin,
    }
}

fn exhaust_config(c: &RfExhaustConfig) -> ExhaustConfig {
    ExhaustConfig {
        x0: c.x0,
        growth: c.growth,
        spacing: SpacingRule::Fixed(c.h),
        stop_tol: c.stop_tol,
        max_steps: c.max_steps,
        min_steps: c.min_steps,
        aspect: c.aspect,
        eig_tol: c.eig_tol,
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next `rf_*` call on this thread.
#[no_mangle]
pub extern "C" fn rf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rf_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Radial niche `m = -tanh(|(x, y)| - scale)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_niche_radial(scale: f64, out: *mut *mut RfNiche) -> RfStatus {
    guard(|| new_handle(out, RfNiche(NicheProfile::radial(scale)?)))
}

/// Constant growth rate; `m0 >= 0` requires `homogeneous`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_niche_constant(m0: f64, homogeneous: bool, out: *mut *mut RfNiche) -> RfStatus {
    guard(|| new_handle(out, RfNiche(NicheProfile::constant(m0, homogeneous)?)))
}

/// Bilinear table on the axes `xs` (length `nx`) and `ys` (length `ny`),
/// `values[j * nx + i]` at `(xs[i], ys[j])`.
///
/// # Safety
/// The arrays must hold the stated number of elements; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_niche_tabulated(
    xs: *const f64,
    nx: usize,
    ys: *const f64,
    ny: usize,
    values: *const f64,
    clamp: bool,
    out: *mut *mut RfNiche,
) -> RfStatus {
    guard(|| {
        let xs = slice(xs, nx, "xs")?.to_vec();
        let ys = slice(ys, ny, "ys")?.to_vec();
        let values = slice(values, nx.saturating_mul(ny), "values")?.to_vec();
        new_handle(out, RfNiche(NicheProfile::tabulated(Table::new(xs, ys, values, clamp)?)))
    })
}

/// Growth rate at `(x, y)`.
///
/// # Safety
/// `niche` must come from an `rf_niche_*` constructor; `m` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_niche_eval(niche: *const RfNiche, x: f64, y: f64, m: *mut f64) -> RfStatus {
    guard(|| {
        let n = deref(niche, "niche")?;
        write_out(m, n.0.try_m(x, y)?, "m")
    })
}

/// # Safety
/// `niche` must be null or come from an `rf_niche_*` constructor, and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rf_niche_free(niche: *mut RfNiche) {
    free_handle(niche)
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_grid_new(half_width: f64, height: f64, h: f64, out: *mut *mut RfGrid) -> RfStatus {
    guard(|| new_handle(out, RfGrid(Grid::new(half_width, height, h)?)))
}

/// Cell counts along `x` and `y`.
///
/// # Safety
/// `grid` must come from [`rf_grid_new`]; `nx` and `ny` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn rf_grid_dims(grid: *const RfGrid, nx: *mut usize, ny: *mut usize) -> RfStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        write_out(nx, g.0.nx, "nx")?;
        write_out(ny, g.0.ny, "ny")
    })
}

/// # Safety
/// `grid` must be null or come from [`rf_grid_new`], and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn rf_grid_free(grid: *mut RfGrid) {
    free_handle(grid)
}

/// # Safety
/// Pointers must be valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_operator_assemble(
    kind_: RfOperatorKind,
    grid: *const RfGrid,
    parameters: *const RfParameters,
    niche: *const RfNiche,
    out: *mut *mut RfOperator,
) -> RfStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let p = params(deref(parameters, "parameters")?)?;
        let n = deref(niche, "niche")?;
        new_handle(out, RfOperator(assemble(kind(kind_), &g.0, &p, &n.0)?))
    })
}

/// Number of unknowns (road slots first when present).
///
/// # Safety
/// `op` must come from [`rf_operator_assemble`]; `dim` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn rf_operator_dim(op: *const RfOperator, dim: *mut usize) -> RfStatus {
    guard(|| write_out(dim, deref(op, "operator")?.0.dim(), "dim"))
}

/// # Safety
/// `op` must be null or come from [`rf_operator_assemble`], and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rf_operator_free(op: *mut RfOperator) {
    free_handle(op)
}

/// Principal eigenpair by the iterative solver, residual at most `tol`.
///
/// # Safety
/// `op` must come from [`rf_operator_assemble`]; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn rf_eigen_principal(op: *const RfOperator, tol: f64, out: *mut *mut RfEigen) -> RfStatus {
    guard(|| new_handle(out, RfEigen(principal_eigenpair(&deref(op, "operator")?.0, tol)?)))
}

/// Principal eigenpair by dense factorization (small operators only).
///
/// # Safety
/// As [`rf_eigen_principal`].
#[no_mangle]
pub unsafe extern "C" fn rf_eigen_dense(op: *const RfOperator, out: *mut *mut RfEigen) -> RfStatus {
    guard(|| new_handle(out, RfEigen(dense_oracle(&deref(op, "operator")?.0)?)))
}

/// # Safety
/// `eigen` must come from an `rf_eigen_*` constructor; `lambda` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_eigen_lambda(eigen: *const RfEigen, lambda: *mut f64) -> RfStatus {
    guard(|| write_out(lambda, deref(eigen, "eigen")?.0.lambda, "lambda"))
}

/// # Safety
/// As [`rf_eigen_lambda`].
#[no_mangle]
pub unsafe extern "C" fn rf_eigen_residual(eigen: *const RfEigen, residual: *mut f64) -> RfStatus {
    guard(|| write_out(residual, deref(eigen, "eigen")?.0.residual, "residual"))
}

/// Copies the stacked eigenvector (max-norm 1) into `buf`. `len` is the
/// buffer capacity; the required length is always written to `needed`,
/// and `RF_STATUS_BUFFER_TOO_SMALL` is returned when it exceeds `len`.
///
/// # Safety
/// `buf` must be valid for `len` writes (may be null when `len` is 0);
/// `needed` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_eigen_copy_vector(eigen: *const RfEigen, buf: *mut f64, len: usize, needed: *mut usize) -> RfStatus {
    guard(|| {
        let w = deref(eigen, "eigen")?.0.vector();
        write_out(needed, w.len(), "needed")?;
        if w.len() > len {
            return Err(Failure(
                RfStatus::BufferTooSmall,
                format!("eigenvector has {} entries, buffer holds {len}", w.len()),
            ));
        }
        if !w.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            std::ptr::copy_nonoverlapping(w.as_ptr(), buf, w.len());
        }
        Ok(())
    })
}

/// # Safety
/// `eigen` must be null or come from an `rf_eigen_*` constructor, and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rf_eigen_free(eigen: *mut RfEigen) {
    free_handle(eigen)
}

/// Defaults for the exhaustion ladder.
///
/// # Safety
/// `cfg` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_exhaust_config_default(cfg: *mut RfExhaustConfig) -> RfStatus {
    guard(|| {
        let d = ExhaustConfig::default();
        let h = match d.spacing {
            SpacingRule::Fixed(h) => h,
            SpacingRule::CellsPerHalfWidth(_) => unreachable!("default spacing is fixed"),
        };
        let c = RfExhaustConfig {
            x0: d.x0,
            growth: d.growth,
            h,
            stop_tol: d.stop_tol,
            max_steps: d.max_steps,
            min_steps: d.min_steps,
            aspect: d.aspect,
            eig_tol: d.eig_tol,
        };
        write_out(cfg, c, "cfg")
    })
}

/// Principal eigenvalue on growing truncations.
///
/// # Safety
/// Pointers must be valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_exhaust_lambda(
    parameters: *const RfParameters,
    niche: *const RfNiche,
    kind_: RfOperatorKind,
    cfg: *const RfExhaustConfig,
    out: *mut RfExhaustion,
) -> RfStatus {
    guard(|| {
        let p = params(deref(parameters, "parameters")?)?;
        let n = deref(niche, "niche")?;
        let c = exhaust_config(deref(cfg, "cfg")?);
        let r = exhaust_lambda(&p, &n.0, kind(kind_), &c)?;
        let summary = RfExhaustion {
            lambda_inf: r.lambda_inf,
            rungs: r.ladder.len(),
            converged: r.converged,
            half_width: r.last_grid.half_width,
        };
        write_out(out, summary, "out")
    })
}

/// Lower and upper critical speeds of the coupled system, bisected to
/// `tol`. The speed in `parameters` is ignored.
///
/// # Safety
/// Pointers must be valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_critical_speeds(
    parameters: *const RfParameters,
    niche: *const RfNiche,
    cfg: *const RfExhaustConfig,
    tol: f64,
    out: *mut RfSpeeds,
) -> RfStatus {
    guard(|| {
        let p = params(deref(parameters, "parameters")?)?;
        let n = deref(niche, "niche")?;
        let c = exhaust_config(deref(cfg, "cfg")?);
        let s = critical_speeds(&p, &n.0, &c, tol)?;
        let summary = RfSpeeds {
            c_star: s.c_star,
            c_star_upper: s.c_star_upper,
            bound: s.bound,
            bracket_width: s.bracket_width,
            provisional: s.provisional,
        };
        write_out(out, summary, "out")
    })
}

/// Persistence/extinction verdict by bracketing simulation on `grid`.
///
/// # Safety
/// Pointers must be valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_classify(
    parameters: *const RfParameters,
    niche: *const RfNiche,
    grid: *const RfGrid,
    horizon: f64,
    dt: f64,
    steady_tol: f64,
    out: *mut RfClassification,
) -> RfStatus {
    guard(|| {
        let p = params(deref(parameters, "parameters")?)?;
        let term = ReactionTerm::new(deref(niche, "niche")?.0.clone());
        let g = deref(grid, "grid")?;
        let c = evolve_classify(&p, &term, &g.0, horizon, dt, steady_tol)?;
        let verdict = match c.verdict {
            Verdict::Persistence => RfVerdict::Persistence,
            Verdict::Extinction => RfVerdict::Extinction,
            Verdict::Undetermined => RfVerdict::Undetermined,
        };
        write_out(
            out,
            RfClassification {
                verdict,
                lambda: c.lambda,
                t_end: c.t_end,
            },
            "out",
        )
    })
}

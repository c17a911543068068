//! C ABI for the kofuks engine.
//!
//! Every function returns a [`KfStatus`]; results are written through out
//! pointers. Handles are opaque and must be released with their `_free`
//! function. The message of the last failure on the calling thread is
//! available through [`kf_last_error`].

use kofuks::config::Config;
use kofuks::domain::PlanarDomain;
use kofuks::geodesic::{integrate, Trajectory};
use kofuks::kernel::Provider;
use kofuks::metric::{metric_sample, ConformalMetric};
use kofuks::spiral::{construct_spiral, find_loop, Geometry};
use kofuks::Error;
use num_complex::Complex64;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Configuration text or a string argument was malformed.
    Parse = 2,
    /// A point lies outside the domain.
    Domain = 3,
    /// A precondition on the arguments failed.
    Precondition = 4,
    /// A numerical-quality failure (truncation, no convergence, no loop).
    Numerical = 5,
    Io = 6,
    /// The caller's buffer is too small.
    BufferTooSmall = 7,
    /// An internal panic was caught.
    Panic = 8,
    /// Index out of range.
    OutOfRange = 9,
}

/// Domain, kernel provider and metric built from a configuration.
pub struct KfEngine {
    config: Config,
    domain: PlanarDomain,
    provider: Provider,
    metric: Box<dyn ConformalMetric<f64>>,
}

/// A sampled geodesic.
pub struct KfTrajectory {
    inner: Trajectory,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct KfMetricSample {
    pub g: f64,
    pub a_pot: f64,
    pub g_tilde: f64,
    pub g_tilde_z_re: f64,
    pub g_tilde_z_im: f64,
    pub ric: f64,
    pub err: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct KfState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct KfLoop {
    pub theta: f64,
    pub t: f64,
    pub residual: f64,
    pub tangent_gap: f64,
    pub min_depth: f64,
    pub converged: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct KfSpiralCertificate {
    pub theta: f64,
    pub t0: f64,
    pub eps1: f64,
    pub horizon: f64,
    pub recurrence_gap: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub tail_length: f64,
    pub confinement_ok: bool,
    pub angles_converging: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> KfStatus {
    match e {
        Error::Parse(_) => KfStatus::Parse,
        Error::Domain { .. } => KfStatus::Domain,
        Error::Precondition(_) => KfStatus::Precondition,
        Error::Io(_) => KfStatus::Io,
        e if e.is_numerical() => KfStatus::Numerical,
        _ => KfStatus::Precondition,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), KfStatus>) -> KfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            KfStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            KfStatus::Panic
        }
    }
}

fn fail(e: Error) -> KfStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> KfStatus {
    set_error(format!("{what} is null"));
    KfStatus::NullPointer
}

unsafe fn engine<'a>(p: *const KfEngine) -> Result<&'a KfEngine, KfStatus> {
    p.as_ref().ok_or_else(|| null("engine"))
}

/// Builds an engine from configuration text (`key = value` lines); null or
/// empty text selects the defaults.
///
/// # Safety
/// `config` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kf_engine_new(config: *const c_char, out: *mut *mut KfEngine) -> KfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = if config.is_null() {
            ""
        } else {
            CStr::from_ptr(config).to_str().map_err(|_| fail(Error::Parse("config is not UTF-8".into())))?
        };
        let config = Config::parse(text).map_err(fail)?;
        let domain = config.build_domain().map_err(fail)?;
        let provider = config.build_provider(&domain).map_err(fail)?;
        let metric = config.build_metric(&provider);
        *out = Box::into_raw(Box::new(KfEngine { config, domain, provider, metric }));
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a handle from [`kf_engine_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kf_engine_free(e: *mut KfEngine) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Defining function value at `(x, y)`.
///
/// # Safety
/// `e` must be a live engine and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kf_rho(e: *const KfEngine, x: f64, y: f64, out: *mut f64) -> KfStatus {
    guard(|| {
        let e = engine(e)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = e.domain.rho(Complex64::new(x, y));
        Ok(())
    })
}

/// Bergman and Kobayashi–Fuks densities at `(x, y)`.
///
/// # Safety
/// `e` must be a live engine and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kf_metric_sample(e: *const KfEngine, x: f64, y: f64, out: *mut KfMetricSample) -> KfStatus {
    guard(|| {
        let e = engine(e)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let z = Complex64::new(x, y);
        if !e.domain.contains(z) {
            return Err(fail(Error::Domain { z, what: "the domain".into() }));
        }
        let m = metric_sample(&e.provider, z).map_err(fail)?;
        *out = KfMetricSample {
            g: m.g,
            a_pot: m.a_pot,
            g_tilde: m.g_tilde,
            g_tilde_z_re: m.g_tilde_z.re,
            g_tilde_z_im: m.g_tilde_z.im,
            ric: m.ric,
            err: m.err,
        };
        Ok(())
    })
}

/// Integrates the geodesic from `(x, y)` with velocity `(vx, vy)` for time `t`
/// using the engine's step control.
///
/// # Safety
/// `e` must be a live engine and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kf_geodesic(
    e: *const KfEngine,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    t: f64,
    out: *mut *mut KfTrajectory,
) -> KfStatus {
    guard(|| {
        let e = engine(e)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let tr = integrate(
            e.metric.as_ref(),
            &e.domain,
            Complex64::new(x, y),
            Complex64::new(vx, vy),
            t,
            &e.config.integrate_options(),
        )
        .map_err(fail)?;
        *out = Box::into_raw(Box::new(KfTrajectory { inner: tr }));
        Ok(())
    })
}

/// Number of stored states.
///
/// # Safety
/// `tr` must be null or a live trajectory.
#[no_mangle]
pub unsafe extern "C" fn kf_trajectory_len(tr: *const KfTrajectory) -> usize {
    tr.as_ref().map_or(0, |t| t.inner.states.len())
}

/// # Safety
/// `tr` must be a live trajectory and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kf_trajectory_state(tr: *const KfTrajectory, i: usize, out: *mut KfState) -> KfStatus {
    guard(|| {
        let tr = tr.as_ref().ok_or_else(|| null("trajectory"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = tr.inner.states.get(i).ok_or_else(|| {
            set_error(format!("index {i} out of range"));
            KfStatus::OutOfRange
        })?;
        *out = KfState { t: s.t, x: s.z.re, y: s.z.im, vx: s.v.re, vy: s.v.im };
        Ok(())
    })
}

/// Writes the termination reason (NUL-terminated) into `buf`.
///
/// # Safety
/// `tr` must be a live trajectory and `buf` valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn kf_trajectory_termination(tr: *const KfTrajectory, buf: *mut c_char, cap: usize) -> KfStatus {
    guard(|| {
        let tr = tr.as_ref().ok_or_else(|| null("trajectory"))?;
        copy_str(tr.inner.termination.as_str(), buf, cap)
    })
}

/// # Safety
/// `tr` must be null or a trajectory not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kf_trajectory_free(tr: *mut KfTrajectory) {
    if !tr.is_null() {
        drop(Box::from_raw(tr));
    }
}

/// Geodesic loop through `(x, y)` with winding vector `winding[0..n]`.
///
/// # Safety
/// `e` must be a live engine, `winding` valid for `n` reads, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kf_find_loop(
    e: *const KfEngine,
    x: f64,
    y: f64,
    winding: *const i64,
    n: usize,
    out: *mut KfLoop,
) -> KfStatus {
    guard(|| {
        let e = engine(e)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if winding.is_null() && n > 0 {
            return Err(null("winding"));
        }
        let w = if n == 0 { &[][..] } else { std::slice::from_raw_parts(winding, n) };
        let geo = Geometry { domain: &e.domain, provider: &e.provider, metric: e.metric.as_ref() };
        let lp = find_loop(&geo, Complex64::new(x, y), w, &e.config.loop_options()).map_err(fail)?;
        let s = &lp.spec;
        *out = KfLoop {
            theta: s.theta,
            t: s.t,
            residual: s.residual,
            tangent_gap: s.tangent_gap,
            min_depth: s.min_depth,
            converged: s.converged,
        };
        Ok(())
    })
}

/// Spiral witness through `(x, y)` with the engine's spiral options.
///
/// # Safety
/// `e` must be a live engine and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kf_spiral(e: *const KfEngine, x: f64, y: f64, out: *mut KfSpiralCertificate) -> KfStatus {
    guard(|| {
        let e = engine(e)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let geo = Geometry { domain: &e.domain, provider: &e.provider, metric: e.metric.as_ref() };
        let sp = construct_spiral(&geo, Complex64::new(x, y), &e.config.spiral_options()).map_err(fail)?;
        let c = &sp.certificate;
        *out = KfSpiralCertificate {
            theta: sp.theta,
            t0: c.t0,
            eps1: c.eps1,
            horizon: c.horizon,
            recurrence_gap: c.recurrence_gap,
            omega_min: c.omega_radius_band[0],
            omega_max: c.omega_radius_band[1],
            tail_length: c.tail_length,
            confinement_ok: c.confinement_ok,
            angles_converging: sp.angles_converging,
        };
        Ok(())
    })
}

unsafe fn copy_str(s: &str, buf: *mut c_char, cap: usize) -> Result<(), KfStatus> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    let bytes = s.as_bytes();
    if bytes.len() + 1 > cap {
        set_error(format!("buffer of {cap} bytes cannot hold {} bytes", bytes.len() + 1));
        return Err(KfStatus::BufferTooSmall);
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
    *buf.add(bytes.len()) = 0;
    Ok(())
}

/// Copies the last error message of this thread into `buf` and returns the
/// number of bytes required including the terminator; nothing is written when
/// `buf` is null or too small.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn kf_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && e.len() < cap {
            let _ = copy_str(&e, buf, cap);
        }
        e.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

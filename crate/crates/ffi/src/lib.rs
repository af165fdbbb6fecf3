//! C ABI over the `cogd2d` engines.
//!
//! Objects are opaque handles returned by constructors and computing calls,
//! released with the matching `*_free`. Fallible calls return a
//! [`Cogd2dStatus`]; on failure `cogd2d_last_error` describes the problem
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cogd2d::geometry::{d2d_assoc_prob, subset_split};
use cogd2d::mqueue::{bs_delay_pmf, bs_queue_length_pmf, MixturePmf};
use cogd2d::priority::{d2d_delay_pmf, d2d_queue_length_pmf};
use cogd2d::sim::{run_replications, MetricsReport, NodeClass, SimOptions};
use cogd2d::{DiscretePmf, Error, ScenarioConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cogd2dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Parse = 4,
    Unstable = 5,
    Numerical = 6,
    Empty = 7,
    Io = 8,
    Domain = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cogd2dClass {
    Bs = 0,
    D2d = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cogd2dMetric {
    QueueLength = 0,
    Delay = 1,
}

/// Scenario parameters.
pub struct Cogd2dConfig {
    inner: ScenarioConfig,
}

/// A probability mass function on `0..len`.
pub struct Cogd2dPmf {
    pmf: DiscretePmf,
    stable_mass: f64,
    degenerate: bool,
}

/// Pooled result of a simulation run.
pub struct Cogd2dReport {
    inner: MetricsReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> Cogd2dStatus {
    match err {
        Error::InvalidConfig(_) => Cogd2dStatus::InvalidConfig,
        Error::Parse { .. } => Cogd2dStatus::Parse,
        Error::Unstable { .. } => Cogd2dStatus::Unstable,
        Error::RootSolver { .. }
        | Error::Aliasing { .. }
        | Error::NegativeMass { .. }
        | Error::InvalidPmf(_) => Cogd2dStatus::Numerical,
        Error::NoSteadyMass(_) | Error::Empty(_) | Error::ShortTrace { .. } => Cogd2dStatus::Empty,
        Error::Io(_) | Error::Json(_) => Cogd2dStatus::Io,
        _ => Cogd2dStatus::Domain,
    }
}

struct Failure(Cogd2dStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(Cogd2dStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> Cogd2dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            Cogd2dStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            Cogd2dStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(Cogd2dStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = value;
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next fallible call on the same thread.
#[no_mangle]
pub extern "C" fn cogd2d_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// The reference scenario.
#[no_mangle]
pub extern "C" fn cogd2d_config_default() -> *mut Cogd2dConfig {
    Box::into_raw(Box::new(Cogd2dConfig {
        inner: ScenarioConfig::reference_defaults(),
    }))
}

/// Parses a `key = value` config file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_config_from_file(
    path: *const c_char,
    out: *mut *mut Cogd2dConfig,
) -> Cogd2dStatus {
    guard(|| {
        let path = text(path, "path")?;
        let inner = ScenarioConfig::from_file(Path::new(path))?;
        store(out, Cogd2dConfig { inner })
    })
}

/// Parses config text in the `key = value` format.
///
/// # Safety
/// `src` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_config_from_str(
    src: *const c_char,
    out: *mut *mut Cogd2dConfig,
) -> Cogd2dStatus {
    guard(|| {
        let src = text(src, "config text")?;
        let inner = ScenarioConfig::from_kv_str(src)?;
        store(out, Cogd2dConfig { inner })
    })
}

/// Sets one field by name, e.g. `("request_rate", "0.1")`.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_config_set(
    cfg: *mut Cogd2dConfig,
    key: *const c_char,
    value: *const c_char,
) -> Cogd2dStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        let (key, value) = (text(key, "key")?, text(value, "value")?);
        cfg.inner.set_param(key, value)?;
        Ok(())
    })
}

/// Reads one numeric field by name.
///
/// # Safety
/// `cfg` must come from this library, `key` must be nul-terminated and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_config_get(
    cfg: *const Cogd2dConfig,
    key: *const c_char,
    out: *mut f64,
) -> Cogd2dStatus {
    guard(|| {
        let cfg = borrow(cfg, "config")?;
        let key = text(key, "key")?;
        let kv = cfg.inner.to_kv_string();
        let value = kv
            .lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim().to_string())
            .ok_or_else(|| Failure(Cogd2dStatus::Parse, format!("unknown key `{key}`")))?;
        let v: f64 = value
            .parse()
            .map_err(|e| Failure(Cogd2dStatus::Parse, format!("`{key}`: {e}")))?;
        put(out, v)
    })
}

/// Checks every config invariant.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_config_validate(cfg: *const Cogd2dConfig) -> Cogd2dStatus {
    guard(|| {
        cogd2d::model::validated(&borrow(cfg, "config")?.inner)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library or be null; it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_config_free(cfg: *mut Cogd2dConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Fractions of requests served locally, by D2D and by BSs.
///
/// # Safety
/// `cfg` must come from this library; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_subset_split(
    cfg: *const Cogd2dConfig,
    local: *mut f64,
    d2d: *mut f64,
    bs: *mut f64,
) -> Cogd2dStatus {
    guard(|| {
        let cfg = cogd2d::model::validated(&borrow(cfg, "config")?.inner)?;
        let s = subset_split(&cfg)?;
        put(local, s.p_local)?;
        put(d2d, s.p_d2d)?;
        put(bs, s.p_bs)
    })
}

/// Probability that a non-caching user associates with the D2D tier.
///
/// # Safety
/// `cfg` must come from this library and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_d2d_assoc_prob(
    cfg: *const Cogd2dConfig,
    out: *mut f64,
) -> Cogd2dStatus {
    guard(|| {
        let cfg = cogd2d::model::validated(&borrow(cfg, "config")?.inner)?;
        put(out, d2d_assoc_prob(&cfg))
    })
}

/// Analytic PMF of `metric` at steady nodes of `class`. Delay PMFs are
/// seen by a random request, queue-length PMFs by a random node.
///
/// # Safety
/// `cfg` must come from this library and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_analytic_pmf(
    cfg: *const Cogd2dConfig,
    class: Cogd2dClass,
    metric: Cogd2dMetric,
    out: *mut *mut Cogd2dPmf,
) -> Cogd2dStatus {
    guard(|| {
        let cfg = &borrow(cfg, "config")?.inner;
        let m: MixturePmf = match (class, metric) {
            (Cogd2dClass::Bs, Cogd2dMetric::QueueLength) => bs_queue_length_pmf(cfg)?,
            (Cogd2dClass::Bs, Cogd2dMetric::Delay) => bs_delay_pmf(cfg)?,
            (Cogd2dClass::D2d, Cogd2dMetric::QueueLength) => d2d_queue_length_pmf(cfg)?,
            (Cogd2dClass::D2d, Cogd2dMetric::Delay) => d2d_delay_pmf(cfg)?,
        };
        store(
            out,
            Cogd2dPmf {
                pmf: m.pmf,
                stable_mass: m.stable_mass,
                degenerate: m.degenerate,
            },
        )
    })
}

/// Support size; 0 for a null handle.
///
/// # Safety
/// `pmf` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_pmf_len(pmf: *const Cogd2dPmf) -> usize {
    pmf.as_ref().map_or(0, |p| p.pmf.len())
}

/// `P(X = n)`; 0 outside the support or for a null handle.
///
/// # Safety
/// `pmf` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_pmf_get(pmf: *const Cogd2dPmf, n: usize) -> f64 {
    pmf.as_ref().map_or(0.0, |p| p.pmf.get(n))
}

/// Copies up to `len` masses into `buf` and returns how many were copied.
///
/// # Safety
/// `pmf` must come from this library; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_pmf_copy(
    pmf: *const Cogd2dPmf,
    buf: *mut f64,
    len: usize,
) -> usize {
    let (Some(p), false) = (pmf.as_ref(), buf.is_null()) else {
        return 0;
    };
    let n = len.min(p.pmf.len());
    ptr::copy_nonoverlapping(p.pmf.mass().as_ptr(), buf, n);
    n
}

/// # Safety
/// `pmf` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_pmf_mean(pmf: *const Cogd2dPmf) -> f64 {
    pmf.as_ref().map_or(f64::NAN, |p| p.pmf.mean())
}

/// Probability of a stable node state behind an analytic PMF; 1 for
/// simulated PMFs.
///
/// # Safety
/// `pmf` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_pmf_stable_mass(pmf: *const Cogd2dPmf) -> f64 {
    pmf.as_ref().map_or(f64::NAN, |p| p.stable_mass)
}

/// Whether the node class carries no traffic.
///
/// # Safety
/// `pmf` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_pmf_is_degenerate(pmf: *const Cogd2dPmf) -> bool {
    pmf.as_ref().is_some_and(|p| p.degenerate)
}

/// # Safety
/// `pmf` must come from this library or be null; it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_pmf_free(pmf: *mut Cogd2dPmf) {
    if !pmf.is_null() {
        drop(Box::from_raw(pmf));
    }
}

/// Runs `replications` replications of `slots` slots each with a 20%
/// warmup.
///
/// # Safety
/// `cfg` must come from this library and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_simulate(
    cfg: *const Cogd2dConfig,
    slots: u64,
    replications: usize,
    out: *mut *mut Cogd2dReport,
) -> Cogd2dStatus {
    guard(|| {
        let cfg = &borrow(cfg, "config")?.inner;
        let options = SimOptions {
            slots,
            replications,
            ..SimOptions::default()
        };
        let inner = run_replications(cfg, &options)?;
        store(out, Cogd2dReport { inner })
    })
}

fn node_class(c: Cogd2dClass) -> NodeClass {
    match c {
        Cogd2dClass::Bs => NodeClass::Bs,
        Cogd2dClass::D2d => NodeClass::D2d,
    }
}

/// Steady fraction of `class` nodes and its 95% half-width.
///
/// # Safety
/// `report` must come from this library; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_report_steady_fraction(
    report: *const Cogd2dReport,
    class: Cogd2dClass,
    fraction: *mut f64,
    half_width: *mut f64,
) -> Cogd2dStatus {
    guard(|| {
        let m = borrow(report, "report")?.inner.class(node_class(class));
        put(fraction, m.steady_fraction)?;
        put(half_width, m.half_width)
    })
}

/// Empirical PMF of `metric` over steady `class` nodes.
///
/// # Safety
/// `report` must come from this library and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_report_pmf(
    report: *const Cogd2dReport,
    class: Cogd2dClass,
    metric: Cogd2dMetric,
    out: *mut *mut Cogd2dPmf,
) -> Cogd2dStatus {
    guard(|| {
        let m = borrow(report, "report")?.inner.class(node_class(class));
        let pmf = match metric {
            Cogd2dMetric::QueueLength => m.queue_pmf()?,
            Cogd2dMetric::Delay => m.delay_pmf()?,
        };
        store(
            out,
            Cogd2dPmf {
                pmf,
                stable_mass: 1.0,
                degenerate: false,
            },
        )
    })
}

/// # Safety
/// `report` must come from this library or be null; it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cogd2d_report_free(report: *mut Cogd2dReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

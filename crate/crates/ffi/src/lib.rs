//! C interface to the ivspectral estimators, diagnostics and Monte Carlo
//! harness.
//!
//! Every fallible function returns an [`IvsStatus`]. On failure the message
//! is available from [`ivs_last_error_message`] on the same thread until the
//! next failing call. Datasets are opaque handles created by
//! [`ivs_dataset_new`] or [`ivs_dataset_simulate`] and released with
//! [`ivs_dataset_free`]. Matrices cross the boundary in row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ivspectral::dgp::{simulate_dataset, Dataset, DgpConfig};
use ivspectral::diagnostics::{covariance_spectrum, effective_count};
use ivspectral::estimators::{
    ols, select_alpha, tsls, tsls_regularized, EstimatorResult, RegularizationScheme, SchemeKind,
};
use ivspectral::montecarlo::{run_scenario, ScenarioConfig};
use ivspectral::Error;
use nalgebra::{DMatrix, DVector};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvsStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Rank = 4,
    Parameter = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Regularization family.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvsSchemeKind {
    Tikhonov = 0,
    SpectralCutoff = 1,
    PrincipalComponents = 2,
    Landweber = 3,
}

/// A regularization scheme. `parameter` is the Tikhonov alpha, the
/// spectral cut-off threshold or the Landweber step; `count` is the number
/// of principal components or Landweber iterations.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvsScheme {
    pub kind: IvsSchemeKind,
    pub parameter: f64,
    pub count: u32,
}

/// Opaque dataset handle.
pub struct IvsDataset {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IvsStatus {
    match e {
        Error::Config { .. } => IvsStatus::Config,
        Error::Parameter(_) => IvsStatus::Parameter,
        Error::Data(_) | Error::Io(_) => IvsStatus::Data,
        Error::Rank(_) => IvsStatus::Rank,
    }
}

/// Internal failure carrying its status code.
struct Failure(IvsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(IvsStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> IvsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => IvsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {message}"));
            IvsStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to `len` readable doubles.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(IvsStatus::Config, format!("`{what}` is not valid UTF-8")))
}

/// # Safety
/// `p` must be null or a handle from this library that has not been freed.
unsafe fn handle<'a>(p: *const IvsDataset) -> Result<&'a Dataset, Failure> {
    p.as_ref().map(|d| &d.inner).ok_or_else(|| null("dataset"))
}

/// # Safety
/// `out` must be null or point to `len` writable doubles.
unsafe fn write_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < values.len() {
        return Err(Failure(
            IvsStatus::BufferTooSmall,
            format!("output buffer holds {len} values but {} are needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

fn to_scheme(s: &IvsScheme) -> RegularizationScheme {
    match s.kind {
        IvsSchemeKind::Tikhonov => RegularizationScheme::Tikhonov { alpha: s.parameter },
        IvsSchemeKind::SpectralCutoff => RegularizationScheme::SpectralCutoff {
            threshold: s.parameter,
        },
        IvsSchemeKind::PrincipalComponents => RegularizationScheme::PrincipalComponents {
            m: s.count as usize,
        },
        IvsSchemeKind::Landweber => RegularizationScheme::Landweber {
            iterations: s.count,
            step: s.parameter,
        },
    }
}

fn from_scheme(s: &RegularizationScheme) -> IvsScheme {
    match *s {
        RegularizationScheme::Tikhonov { alpha } => IvsScheme {
            kind: IvsSchemeKind::Tikhonov,
            parameter: alpha,
            count: 0,
        },
        RegularizationScheme::SpectralCutoff { threshold } => IvsScheme {
            kind: IvsSchemeKind::SpectralCutoff,
            parameter: threshold,
            count: 0,
        },
        RegularizationScheme::PrincipalComponents { m } => IvsScheme {
            kind: IvsSchemeKind::PrincipalComponents,
            parameter: 0.0,
            count: u32::try_from(m).unwrap_or(u32::MAX),
        },
        RegularizationScheme::Landweber { iterations, step } => IvsScheme {
            kind: IvsSchemeKind::Landweber,
            parameter: step,
            count: iterations,
        },
    }
}

fn to_kind(k: IvsSchemeKind) -> SchemeKind {
    match k {
        IvsSchemeKind::Tikhonov => SchemeKind::Tikhonov,
        IvsSchemeKind::SpectralCutoff => SchemeKind::SpectralCutoff,
        IvsSchemeKind::PrincipalComponents => SchemeKind::PrincipalComponents,
        IvsSchemeKind::Landweber => SchemeKind::Landweber,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ivs_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ivs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a dataset from `y` (n), `x` (n×g) and `z` (n×k), copying the data.
///
/// # Safety
/// The arrays must hold the stated number of doubles and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ivs_dataset_new(
    y: *const f64,
    x: *const f64,
    z: *const f64,
    n: usize,
    g: usize,
    k: usize,
    out: *mut *mut IvsDataset,
) -> IvsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let size = |a: usize, b: usize| {
            a.checked_mul(b)
                .ok_or_else(|| Failure(IvsStatus::Data, "dimensions overflow".into()))
        };
        let y = slice(y, n, "y")?;
        let x = slice(x, size(n, g)?, "x")?;
        let z = slice(z, size(n, k)?, "z")?;
        let data = Dataset::new(
            DVector::from_column_slice(y),
            DMatrix::from_row_slice(n, g, x),
            DMatrix::from_row_slice(n, k, z),
            None,
        )?;
        *out = Box::into_raw(Box::new(IvsDataset { inner: data }));
        Ok(())
    })
}

/// Simulates a dataset from a TOML document with the DGP fields (`n`, `k`,
/// `pi`, `design`, ...).
///
/// # Safety
/// `dgp_toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivs_dataset_simulate(
    dgp_toml: *const c_char,
    seed: u64,
    out: *mut *mut IvsDataset,
) -> IvsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = DgpConfig::from_toml(text(dgp_toml, "dgp_toml")?)?;
        let data = simulate_dataset(&config, seed)?;
        *out = Box::into_raw(Box::new(IvsDataset { inner: data }));
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ivs_dataset_free(dataset: *mut IvsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Writes n, g and k of a dataset. Any output pointer may be null.
///
/// # Safety
/// `dataset` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivs_dataset_shape(
    dataset: *const IvsDataset,
    n: *mut usize,
    g: *mut usize,
    k: *mut usize,
) -> IvsStatus {
    guard(|| {
        let d = handle(dataset)?;
        for (p, v) in [(n, d.n()), (g, d.g()), (k, d.k())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

unsafe fn estimate(
    d: *const IvsDataset,
    out: *mut f64,
    len: usize,
    f: impl FnOnce(&Dataset) -> ivspectral::Result<EstimatorResult>,
) -> IvsStatus {
    guard(|| {
        let result = f(handle(d)?)?;
        write_out(&result.delta_hat, out, len)
    })
}

/// OLS coefficients into `delta_out` (at least g values).
///
/// # Safety
/// `dataset` must be a live handle and `delta_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ivs_ols(dataset: *const IvsDataset, delta_out: *mut f64, len: usize) -> IvsStatus {
    estimate(dataset, delta_out, len, ols)
}

/// 2SLS coefficients into `delta_out` (at least g values).
///
/// # Safety
/// `dataset` must be a live handle and `delta_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ivs_tsls(dataset: *const IvsDataset, delta_out: *mut f64, len: usize) -> IvsStatus {
    estimate(dataset, delta_out, len, tsls)
}

/// Regularized 2SLS coefficients into `delta_out` (at least g values).
///
/// # Safety
/// `dataset` must be a live handle and `delta_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ivs_tsls_regularized(
    dataset: *const IvsDataset,
    scheme: IvsScheme,
    delta_out: *mut f64,
    len: usize,
) -> IvsStatus {
    estimate(dataset, delta_out, len, |d| tsls_regularized(d, &to_scheme(&scheme)))
}

/// Chooses the regularization parameter from an ascending `grid` by
/// five-fold cross-validation of the first stage.
///
/// # Safety
/// `dataset` must be a live handle, `grid` must hold `grid_len` doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivs_select_alpha(
    dataset: *const IvsDataset,
    kind: IvsSchemeKind,
    grid: *const f64,
    grid_len: usize,
    out: *mut IvsScheme,
) -> IvsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = handle(dataset)?;
        let scheme = select_alpha(d, to_kind(kind), slice(grid, grid_len, "grid")?)?;
        *out = from_scheme(&scheme);
        Ok(())
    })
}

/// Number of coefficients with `|π_k| > c/√n`.
///
/// # Safety
/// `pi` must hold `k` doubles and `count_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivs_effective_count(
    pi: *const f64,
    k: usize,
    n: usize,
    c: f64,
    count_out: *mut usize,
) -> IvsStatus {
    guard(|| {
        if count_out.is_null() {
            return Err(null("count_out"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Failure(IvsStatus::Parameter, format!("c must be positive, got {c}")));
        }
        *count_out = effective_count(slice(pi, k, "pi")?, n, c).count_effective;
        Ok(())
    })
}

/// Eigenvalues of `Z'Z/n` in descending order (k values) and the ratio of
/// the smallest to the largest.
///
/// # Safety
/// `dataset` must be a live handle, `eigenvalues_out` must hold `len`
/// doubles and `flatness_out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ivs_covariance_spectrum(
    dataset: *const IvsDataset,
    eigenvalues_out: *mut f64,
    len: usize,
    flatness_out: *mut f64,
) -> IvsStatus {
    guard(|| {
        let report = covariance_spectrum(handle(dataset)?.z(), None)?;
        write_out(&report.eigenvalues, eigenvalues_out, len)?;
        if !flatness_out.is_null() {
            *flatness_out = report.flatness;
        }
        Ok(())
    })
}

/// Runs a Monte Carlo scenario given as TOML and returns its statistics as a
/// JSON string, to be released with [`ivs_string_free`].
///
/// # Safety
/// `scenario_toml` must be a NUL-terminated string and `json_out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivs_run_scenario(scenario_toml: *const c_char, json_out: *mut *mut c_char) -> IvsStatus {
    guard(|| {
        if json_out.is_null() {
            return Err(null("json_out"));
        }
        let config = ScenarioConfig::from_toml(text(scenario_toml, "scenario_toml")?)?;
        let stats = run_scenario(&config)?;
        let json = serde_json::to_string(&stats)
            .map_err(|e| Failure(IvsStatus::Data, format!("cannot serialize statistics: {e}")))?;
        *json_out = CString::new(json)
            .map_err(|_| Failure(IvsStatus::Data, "statistics contain a NUL byte".into()))?
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn ivs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

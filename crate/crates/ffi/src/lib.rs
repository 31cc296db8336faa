//! C interface to `stdinfo`.
//!
//! Objects cross the boundary as opaque pointers created by a constructor
//! and released by the matching `_free` function. Every fallible function
//! returns a [`StdinfoStatus`] and writes its result through an out pointer.
//! After a non-`Ok` status, [`stdinfo_last_error`] returns a message for
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use stdinfo::additive_spectrum::{explosion_coefficient, AdditiveModel};
use stdinfo::prob_setting::{self, CalibratedRate, ProbRequirement};
use stdinfo::spectra::{BasisFamily, SpectrumConfig, UnivariateSpectrum};
use stdinfo::tensor_spectrum::{self, CardinalityBackend, RankedSpectrum};
use stdinfo::Error;

/// Result codes. `Ok` is zero; everything else is a failure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StdinfoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    OutOfDomain = 3,
    Divergent = 4,
    Unsupported = 5,
    Degenerate = 6,
    BudgetExceeded = 7,
    NoConvergence = 8,
    Parse = 9,
    DimensionMismatch = 10,
    /// A result does not fit the C output type.
    Overflow = 11,
    /// A Rust panic was caught at the boundary.
    Internal = 255,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StdinfoBasis {
    Sine = 0,
    Cosine = 1,
    Legendre = 2,
}

impl From<StdinfoBasis> for BasisFamily {
    fn from(b: StdinfoBasis) -> Self {
        match b {
            StdinfoBasis::Sine => BasisFamily::Sine,
            StdinfoBasis::Cosine => BasisFamily::Cosine,
            StdinfoBasis::Legendre => BasisFamily::Legendre,
        }
    }
}

/// Spectral moments of a univariate spectrum.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StdinfoMoments {
    pub lambda: f64,
    pub m: f64,
    pub m2: f64,
    pub sigma_sq: f64,
    pub lambda_tilde: f64,
}

/// Opaque univariate spectrum.
pub struct StdinfoSpectrum(UnivariateSpectrum);

/// Opaque prefix of the decreasing rearrangement of a tensor spectrum.
pub struct StdinfoRanked(RankedSpectrum);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(StdinfoStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter { .. } => StdinfoStatus::InvalidParameter,
            Error::OutOfDomain { .. } => StdinfoStatus::OutOfDomain,
            Error::Divergent(_) => StdinfoStatus::Divergent,
            Error::Unsupported(_) => StdinfoStatus::Unsupported,
            Error::Degenerate(_) => StdinfoStatus::Degenerate,
            Error::BudgetExceeded { .. } => StdinfoStatus::BudgetExceeded,
            Error::NoConvergence(_) => StdinfoStatus::NoConvergence,
            Error::Parse(_) => StdinfoStatus::Parse,
            Error::DimensionMismatch { .. } => StdinfoStatus::DimensionMismatch,
        };
        Fail(code, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(StdinfoStatus::NullPointer, format!("null pointer: {what}"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StdinfoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StdinfoStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            StdinfoStatus::Internal
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn spec_ref<'a>(p: *const StdinfoSpectrum) -> Result<&'a UnivariateSpectrum, Fail> {
    p.as_ref().map(|s| &s.0).ok_or_else(|| null("spectrum"))
}

unsafe fn ranked_ref<'a>(p: *const StdinfoRanked) -> Result<&'a RankedSpectrum, Fail> {
    p.as_ref().map(|s| &s.0).ok_or_else(|| null("ranked"))
}

fn to_u64(x: u128) -> Result<u64, Fail> {
    u64::try_from(x).map_err(|_| Fail(StdinfoStatus::Overflow, format!("{x} does not fit in 64 bits")))
}

unsafe fn emit_spectrum(out: *mut *mut StdinfoSpectrum, s: UnivariateSpectrum) -> Result<(), Fail> {
    *out_ref(out, "out")? = Box::into_raw(Box::new(StdinfoSpectrum(s)));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stdinfo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn stdinfo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// `lambda(i)^2 = mu^2 i^{-2r} (ln(i+1))^{2q}` for `i >= 1`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_spectrum_power_log(
    mu: f64,
    r: f64,
    q: f64,
    lambda0_sq: f64,
    basis: StdinfoBasis,
    out: *mut *mut StdinfoSpectrum,
) -> StdinfoStatus {
    guard(|| {
        let s = UnivariateSpectrum::power_log(mu, r, q)?
            .with_lambda0_sq(lambda0_sq)?
            .with_basis(basis.into());
        emit_spectrum(out, s)
    })
}

/// The Brownian motion spectrum with the sine basis.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_spectrum_brownian(out: *mut *mut StdinfoSpectrum) -> StdinfoStatus {
    guard(|| emit_spectrum(out, UnivariateSpectrum::brownian_motion()))
}

/// A finite spectrum given by `len` squared eigenvalues.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_spectrum_explicit(
    values: *const f64,
    len: usize,
    lambda0_sq: f64,
    basis: StdinfoBasis,
    out: *mut *mut StdinfoSpectrum,
) -> StdinfoStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let s = UnivariateSpectrum::explicit(v)?
            .with_lambda0_sq(lambda0_sq)?
            .with_basis(basis.into());
        emit_spectrum(out, s)
    })
}

/// Builds a spectrum from the JSON object accepted by the command line
/// `--spectrum` flag. The basis defaults to sine when not given.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable storage.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_spectrum_from_json(
    json: *const c_char,
    out: *mut *mut StdinfoSpectrum,
) -> StdinfoStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(StdinfoStatus::Parse, format!("invalid UTF-8: {e}")))?;
        let cfg: SpectrumConfig = text.parse()?;
        emit_spectrum(out, cfg.build(BasisFamily::Sine)?)
    })
}

/// # Safety
/// `s` must be null or a pointer returned by a spectrum constructor that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_spectrum_free(s: *mut StdinfoSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// `lambda(i)^2` for `i >= 1`. The constant mode is not indexed.
///
/// # Safety
/// `s` must be a live spectrum and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_spectrum_eigenvalue_sq(
    s: *const StdinfoSpectrum,
    i: usize,
    out: *mut f64,
) -> StdinfoStatus {
    guard(|| {
        *out_ref(out, "out")? = spec_ref(s)?.eigenvalue_sq(i)?;
        Ok(())
    })
}

/// Spectral moments over `i >= 1`, or over `i >= 0` when
/// `include_constant` is true.
///
/// # Safety
/// `s` must be a live spectrum and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_spectrum_moments(
    s: *const StdinfoSpectrum,
    include_constant: bool,
    out: *mut StdinfoMoments,
) -> StdinfoStatus {
    guard(|| {
        let spec = spec_ref(s)?;
        let m = if include_constant {
            spec.spectral_moments_with_constant()?
        } else {
            spec.spectral_moments()?
        };
        *out_ref(out, "out")? = StdinfoMoments {
            lambda: m.lambda,
            m: m.m,
            m2: m.m2,
            sigma_sq: m.sigma_sq,
            lambda_tilde: m.lambda_tilde,
        };
        Ok(())
    })
}

/// The `n` largest eigenvalues of the `d`-fold tensor product.
///
/// # Safety
/// `s` must be a live spectrum and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_top_k(
    s: *const StdinfoSpectrum,
    d: usize,
    n: usize,
    out: *mut *mut StdinfoRanked,
) -> StdinfoStatus {
    guard(|| {
        let ranked = tensor_spectrum::top_k(spec_ref(s)?, d, n)?;
        *out_ref(out, "out")? = Box::into_raw(Box::new(StdinfoRanked(ranked)));
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a live pointer returned by [`stdinfo_top_k`].
#[no_mangle]
pub unsafe extern "C" fn stdinfo_ranked_free(r: *mut StdinfoRanked) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Number of entries held, which is below the requested count only when
/// the spectrum has fewer nonzero eigenvalues.
///
/// # Safety
/// `r` must be null or live. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_ranked_len(r: *const StdinfoRanked) -> usize {
    r.as_ref().map_or(0, |r| r.0.len())
}

/// # Safety
/// `r` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_ranked_value(
    r: *const StdinfoRanked,
    j: usize,
    out: *mut f64,
) -> StdinfoStatus {
    guard(|| {
        let ranked = ranked_ref(r)?;
        if j >= ranked.len() {
            return Err(Error::DimensionMismatch { expected: ranked.len(), got: j }.into());
        }
        *out_ref(out, "out")? = ranked.value(j);
        Ok(())
    })
}

/// Copies the multi-index of entry `j` into `buf`, which must hold the
/// tensor dimension.
///
/// # Safety
/// `r` must be live and `buf` must point to `buf_len` writable `u32`.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_ranked_index(
    r: *const StdinfoRanked,
    j: usize,
    buf: *mut u32,
    buf_len: usize,
) -> StdinfoStatus {
    guard(|| {
        let ranked = ranked_ref(r)?;
        if j >= ranked.len() {
            return Err(Error::DimensionMismatch { expected: ranked.len(), got: j }.into());
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let idx = ranked.index(j);
        if buf_len < idx.len() {
            return Err(Error::DimensionMismatch { expected: idx.len(), got: buf_len }.into());
        }
        std::slice::from_raw_parts_mut(buf, idx.len()).copy_from_slice(idx);
        Ok(())
    })
}

/// Sum of the omitted eigenvalues after the first `m` of the `d`-fold
/// tensor product.
///
/// # Safety
/// `s` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_tail_sum(
    s: *const StdinfoSpectrum,
    d: usize,
    m: usize,
    out: *mut f64,
) -> StdinfoStatus {
    guard(|| {
        *out_ref(out, "out")? = tensor_spectrum::tail_sum(spec_ref(s)?, d, m)?;
        Ok(())
    })
}

/// Smallest number of tensor terms leaving a relative error of at most `eps`.
///
/// # Safety
/// `s` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_cardinality(
    s: *const StdinfoSpectrum,
    d: usize,
    eps: f64,
    out: *mut u64,
) -> StdinfoStatus {
    guard(|| {
        let m = tensor_spectrum::cardinality_relative(spec_ref(s)?, d, eps, CardinalityBackend::Auto)?;
        *out_ref(out, "out")? = to_u64(m)?;
        Ok(())
    })
}

/// Same count for the additive field of order `b` in `d` variables.
///
/// # Safety
/// `s` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_additive_cardinality(
    s: *const StdinfoSpectrum,
    d: usize,
    b: usize,
    eps: f64,
    out: *mut u64,
) -> StdinfoStatus {
    guard(|| {
        let model = AdditiveModel::new(d, b, spec_ref(s)?.clone())?;
        *out_ref(out, "out")? = to_u64(model.cardinality_relative(eps)?)?;
        Ok(())
    })
}

/// The limit constant `q*` of the cardinality as the dimension grows.
///
/// # Safety
/// `s` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_q_star(
    s: *const StdinfoSpectrum,
    eps: f64,
    out: *mut f64,
) -> StdinfoStatus {
    guard(|| {
        *out_ref(out, "out")? = tensor_spectrum::limit_prediction(spec_ref(s)?, eps)?.q_star;
        Ok(())
    })
}

/// Explosion coefficient `V(f)` for `f` in `[0, 1]`, using the spectrum
/// including its constant mode.
///
/// # Safety
/// `s` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_explosion(
    s: *const StdinfoSpectrum,
    f: f64,
    out: *mut f64,
) -> StdinfoStatus {
    guard(|| {
        let model = AdditiveModel::new(1, 1, spec_ref(s)?.clone())?;
        let lt = model.spec().spectral_moments_with_constant()?.lambda_tilde;
        *out_ref(out, "out")? = explosion_coefficient(f, model.p(), lt)?;
        Ok(())
    })
}

/// Deviation radius exceeded with probability at most `gamma` by an error
/// of mean square `mean_sq`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_concentration_radius(
    mean_sq: f64,
    gamma: f64,
    out: *mut f64,
) -> StdinfoStatus {
    guard(|| {
        *out_ref(out, "out")? = prob_setting::concentration_radius(mean_sq, gamma)?;
        Ok(())
    })
}

/// Minimal total point count meeting error `eps` with failure probability
/// `gamma` under the rate `c0 N^{1-2r} (ln N)^{2r(beta+1)-1}`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stdinfo_point_budget(
    eps: f64,
    gamma: f64,
    c0: f64,
    r: f64,
    beta: f64,
    out: *mut u64,
) -> StdinfoStatus {
    guard(|| {
        let req = ProbRequirement::new(eps, gamma)?;
        let rate = CalibratedRate { c0, r, beta, grid: vec![], errors: vec![], safety: 1.0 };
        *out_ref(out, "out")? = prob_setting::point_budget(&req, &rate)?.budget;
        Ok(())
    })
}

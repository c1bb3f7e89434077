//! C ABI over the `ruijsenaars` crate.
//!
//! Every entry point returns an [`RjStatus`]. On failure the message is kept
//! per thread and read back with [`rj_last_error`]. Handles are opaque and
//! released with their `*_free` function; strings returned through `out`
//! pointers are released with [`rj_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ruijsenaars::config::Config;
use ruijsenaars::kernels::{KernelKind, KernelSpec};
use ruijsenaars::koornwinder::{eigenvalue_d, interpolation_checks, koornwinder_poly_generic, InterpKind};
use ruijsenaars::laurent::{ExactParams, LaurentPoly, Partition};
use ruijsenaars::sigma::{Kind, SigmaFamily, Truncation, C};
use ruijsenaars::verify::{run_suite, IdentityId, SuiteSpec};
use ruijsenaars::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Pole = 4,
    Divergent = 5,
    Dimension = 6,
    InexactDivision = 7,
    Degenerate = 8,
    Collision = 9,
    Param = 10,
    Unsatisfiable = 11,
    Config = 12,
    Serialization = 13,
    Panic = 14,
}

impl From<&Error> for RjStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => RjStatus::Domain,
            Error::Pole(_) => RjStatus::Pole,
            Error::Divergent(_) => RjStatus::Divergent,
            Error::Dimension(_) => RjStatus::Dimension,
            Error::InexactDivision(_) => RjStatus::InexactDivision,
            Error::Degenerate(_) => RjStatus::Degenerate,
            Error::Collision(_) => RjStatus::Collision,
            Error::Param(_) => RjStatus::Param,
            Error::Unsatisfiable(_) => RjStatus::Unsatisfiable,
            Error::Config(_) => RjStatus::Config,
        }
    }
}

/// A complex number.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RjComplex {
    pub re: f64,
    pub im: f64,
}

impl From<RjComplex> for C {
    fn from(z: RjComplex) -> C {
        C::new(z.re, z.im)
    }
}

impl From<C> for RjComplex {
    fn from(z: C) -> RjComplex {
        RjComplex { re: z.re, im: z.im }
    }
}

/// Class of the function `[u]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RjFamilyKind {
    Rational = 0,
    Trig = 1,
    Elliptic = 2,
}

impl From<RjFamilyKind> for Kind {
    fn from(k: RjFamilyKind) -> Kind {
        match k {
            RjFamilyKind::Rational => Kind::Rational,
            RjFamilyKind::Trig => Kind::Trigonometric,
            RjFamilyKind::Elliptic => Kind::Elliptic,
        }
    }
}

/// Kernel functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RjKernel {
    PhiA = 0,
    PsiA = 1,
    PhiBcRatio = 2,
    PhiBcProduct = 3,
    PsiBc = 4,
    Phi0 = 5,
    PhiInf = 6,
    PhiPlus = 7,
    PhiMinus = 8,
}

impl From<RjKernel> for KernelKind {
    fn from(k: RjKernel) -> KernelKind {
        match k {
            RjKernel::PhiA => KernelKind::PhiA,
            RjKernel::PsiA => KernelKind::PsiA,
            RjKernel::PhiBcRatio => KernelKind::PhiBcRatio,
            RjKernel::PhiBcProduct => KernelKind::PhiBcProduct,
            RjKernel::PsiBc => KernelKind::PsiBc,
            RjKernel::Phi0 => KernelKind::Phi0,
            RjKernel::PhiInf => KernelKind::PhiInf,
            RjKernel::PhiPlus => KernelKind::PhiPlus,
            RjKernel::PhiMinus => KernelKind::PhiMinus,
        }
    }
}

/// Interpolation families.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RjInterp {
    ColumnE = 0,
    RowH = 1,
}

/// Opaque handle to a configured `[u]`.
pub struct RjFamily(SigmaFamily);

/// Opaque handle to an exact Koornwinder polynomial.
pub struct RjPoly {
    poly: LaurentPoly,
    lambda: Vec<u32>,
    m: usize,
    params: ExactParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(RjStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(RjStatus::from(&e), e.to_string())
    }
}

type Out<T> = std::result::Result<T, Fail>;

fn guard(f: impl FnOnce() -> Out<()>) -> RjStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RjStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside the library".into());
            RjStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(RjStatus::NullPointer, format!("{what} is null"))
}

unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Out<Option<&'a str>> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p).to_str().map(Some).map_err(|_| Fail(RjStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Out<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Out<()> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

fn to_cstring(s: String) -> Out<*mut c_char> {
    CString::new(s).map(CString::into_raw).map_err(|_| Fail(RjStatus::Serialization, "string contains NUL".into()))
}

fn json<T: serde::Serialize>(v: &T) -> Out<String> {
    serde_json::to_string(v).map_err(|e| Fail(RjStatus::Serialization, e.to_string()))
}

fn overlay_config(toml: Option<&str>) -> Out<Config> {
    Ok(match toml {
        Some(t) => Config::with_overlay(t)?,
        None => Config::default(),
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn rj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rj_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Build a family from explicit periods. `omega2` is ignored unless the
/// kind is elliptic; `omega1` is ignored for the rational kind.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rj_family_new(
    kind: RjFamilyKind,
    omega1: RjComplex,
    omega2: RjComplex,
    max_terms: usize,
    term_tol: f64,
    out: *mut *mut RjFamily,
) -> RjStatus {
    guard(|| {
        let tr = Truncation::new(max_terms, term_tol)?;
        let fam = SigmaFamily::of_kind(kind.into(), omega1.into(), omega2.into(), tr)?;
        write_out(out, Box::into_raw(Box::new(RjFamily(fam))))
    })
}

/// The family of the given kind with the built-in default periods.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rj_family_default(kind: RjFamilyKind, out: *mut *mut RjFamily) -> RjStatus {
    guard(|| {
        let fam = Config::default().family(kind.into())?;
        write_out(out, Box::into_raw(Box::new(RjFamily(fam))))
    })
}

/// Release a family. Null is ignored.
///
/// # Safety
/// `fam` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rj_family_free(fam: *mut RjFamily) {
    if !fam.is_null() {
        drop(Box::from_raw(fam));
    }
}

/// Nome `p` of an elliptic family; zero otherwise.
///
/// # Safety
/// `fam` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rj_family_nome(fam: *const RjFamily, out: *mut RjComplex) -> RjStatus {
    guard(|| {
        let fam = fam.as_ref().ok_or_else(|| null("family"))?;
        write_out(out, fam.0.nome().into())
    })
}

/// Evaluate `[u]`.
///
/// # Safety
/// `fam` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rj_sigma(fam: *const RjFamily, u: RjComplex, out: *mut RjComplex) -> RjStatus {
    guard(|| {
        let fam = fam.as_ref().ok_or_else(|| null("family"))?;
        write_out(out, fam.0.eval(u.into())?.into())
    })
}

/// Evaluate a kernel at `x` (length `m`) and `y` (length `n`). `v` is used
/// by the type-A kernels only.
///
/// # Safety
/// `fam` and `out` must be valid; `x` and `y` must point to `m` and `n`
/// values (or be null when the length is zero).
#[no_mangle]
pub unsafe extern "C" fn rj_kernel(
    fam: *const RjFamily,
    kernel: RjKernel,
    delta: RjComplex,
    kappa: RjComplex,
    v: RjComplex,
    x: *const RjComplex,
    m: usize,
    y: *const RjComplex,
    n: usize,
    out: *mut RjComplex,
) -> RjStatus {
    guard(|| {
        let fam = fam.as_ref().ok_or_else(|| null("family"))?;
        let x: Vec<C> = slice(x, m, "x")?.iter().map(|&z| z.into()).collect();
        let y: Vec<C> = slice(y, n, "y")?.iter().map(|&z| z.into()).collect();
        let spec = KernelSpec::new(kernel.into(), fam.0.clone(), delta.into(), kappa.into()).with_v(v.into());
        write_out(out, spec.eval(&x, &y)?.into())
    })
}

/// Run identity checks and return the reports as a JSON array.
///
/// `ids` is a comma-separated list of identity names, or null for every
/// identity valid for the family. A negative `m` selects each identity's
/// default sizes; otherwise `(m, n)` is used. `config_toml` is an optional
/// overlay on the defaults.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rj_verify(
    kind: RjFamilyKind,
    ids: *const c_char,
    m: i64,
    n: i64,
    config_toml: *const c_char,
    out_json: *mut *mut c_char,
) -> RjStatus {
    guard(|| {
        let cfg = overlay_config(opt_str(config_toml, "config")?)?;
        let kind: Kind = kind.into();
        let ids: Vec<IdentityId> = match opt_str(ids, "ids")? {
            Some(s) => s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_, Error>>()?,
            None => IdentityId::ALL.to_vec(),
        };
        let sizes = if m < 0 {
            None
        } else {
            let n = usize::try_from(n).map_err(|_| Fail(RjStatus::Param, "n must be non-negative".into()))?;
            Some(vec![(m as usize, n)])
        };
        let spec = SuiteSpec {
            ids,
            fam: cfg.family(kind)?,
            params: cfg.params.for_kind(kind)?,
            sizes,
            samples: cfg.samples,
            seed: cfg.seed,
            tol: cfg.tolerance.of(kind),
        };
        let reports = run_suite(&spec)?;
        write_out(out_json, to_cstring(json(&reports)?)?)
    })
}

/// Compute the Koornwinder polynomial of the partition `parts` (length
/// `len`, weakly decreasing) in `m` variables. `config_toml` may override
/// the exact parameters; on an eigenvalue collision the parameters are
/// perturbed and retried.
///
/// # Safety
/// `parts` must point to `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rj_koornwinder(
    parts: *const u32,
    len: usize,
    m: usize,
    config_toml: *const c_char,
    out: *mut *mut RjPoly,
) -> RjStatus {
    guard(|| {
        let cfg = overlay_config(opt_str(config_toml, "config")?)?;
        let lambda = Partition::try_from(slice(parts, len, "parts")?.to_vec())?;
        let (poly, params) = koornwinder_poly_generic(&lambda, &cfg.exact.params, m)?;
        let h = RjPoly { poly, lambda: lambda.parts().to_vec(), m, params };
        write_out(out, Box::into_raw(Box::new(h)))
    })
}

/// Release a polynomial. Null is ignored.
///
/// # Safety
/// `poly` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rj_poly_free(poly: *mut RjPoly) {
    if !poly.is_null() {
        drop(Box::from_raw(poly));
    }
}

/// Number of monomials.
///
/// # Safety
/// `poly` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rj_poly_len(poly: *const RjPoly, out: *mut usize) -> RjStatus {
    guard(|| {
        let p = poly.as_ref().ok_or_else(|| null("poly"))?;
        write_out(out, p.poly.len())
    })
}

/// Evaluate at `x_1..x_m`.
///
/// # Safety
/// `poly` and `out` must be valid; `x` must point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn rj_poly_eval(poly: *const RjPoly, x: *const RjComplex, len: usize, out: *mut RjComplex) -> RjStatus {
    guard(|| {
        let p = poly.as_ref().ok_or_else(|| null("poly"))?;
        let x: Vec<C> = slice(x, len, "x")?.iter().map(|&z| z.into()).collect();
        write_out(out, p.poly.eval_numeric(&x)?.into())
    })
}

#[derive(serde::Serialize)]
struct PolyDoc<'a> {
    lambda: &'a [u32],
    m: usize,
    params: &'a ExactParams,
    eigenvalue: String,
    poly: ruijsenaars::laurent::PolyJson,
}

/// The polynomial, its eigenvalue and the parameters used, as JSON.
///
/// # Safety
/// `poly` and `out_json` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rj_poly_json(poly: *const RjPoly, out_json: *mut *mut c_char) -> RjStatus {
    guard(|| {
        let p = poly.as_ref().ok_or_else(|| null("poly"))?;
        let lambda = Partition::try_from(p.lambda.clone())?;
        let d = eigenvalue_d(&lambda, &p.params, p.m)?;
        let doc = PolyDoc { lambda: &p.lambda, m: p.m, params: &p.params, eigenvalue: d.to_string(), poly: p.poly.to_json() };
        write_out(out_json, to_cstring(json(&doc)?)?)
    })
}

/// Run the interpolation checks for `m` variables and return the report as
/// JSON. `passed` receives whether every check held.
///
/// # Safety
/// `config_toml` must be null or NUL-terminated; `passed` and `out_json`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn rj_interp(
    kind: RjInterp,
    m: usize,
    config_toml: *const c_char,
    passed: *mut bool,
    out_json: *mut *mut c_char,
) -> RjStatus {
    guard(|| {
        let cfg = overlay_config(opt_str(config_toml, "config")?)?;
        let kind = match kind {
            RjInterp::ColumnE => InterpKind::ColumnE,
            RjInterp::RowH => InterpKind::RowH,
        };
        let rep = interpolation_checks(kind, m, &cfg.exact.params)?;
        write_out(passed, rep.passed())?;
        write_out(out_json, to_cstring(json(&rep)?)?)
    })
}

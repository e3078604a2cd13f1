//! C ABI over kahler-ot. Potentials and costs are opaque handles; every call
//! returns a `KotStatus`, and the message of the last failure on the calling
//! thread is available from `kot_last_error`.
//!
//! Arrays are caller-owned, row-major and sized by the documented counts.
//! Nothing here retains a caller pointer beyond the call.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use kahler_ot::cgeometry;
use kahler_ot::hessian;
use kahler_ot::kahler::{self, KahlerCurvPoint};
use kahler_ot::mtw::{self, CostSpec};
use kahler_ot::potentials::{parse_potential_arg, PotentialSpec};
use kahler_ot::transport::{self, CostMatrix};
use kahler_ot::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KotStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A point or pair lies outside the domain.
    Domain = 3,
    /// Inversion, convergence or degeneracy failure.
    Numerical = 4,
    NotOrthogonal = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KotRoute {
    Direct = 0,
    Potential = 1,
    Curvature = 2,
}

/// Opaque potential handle.
pub struct KotPotential {
    spec: PotentialSpec,
}

/// Opaque cost handle.
pub struct KotCost {
    cost: CostSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> KotStatus {
    match e {
        Error::OutOfDomain { .. } | Error::RegionOutsideDomain { .. } | Error::PairOutOfDomain { .. } => {
            KotStatus::Domain
        }
        Error::NotOrthogonal { .. } => KotStatus::NotOrthogonal,
        e if e.is_numerical() => KotStatus::Numerical,
        _ => KotStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KotStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KotStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("{what} is null"));
            KotStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            KotStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

fn check_dim(expected: usize, n: usize) -> Result<(), Fail> {
    if n != expected {
        return Err(Fail::Lib(Error::Dimension(format!("expected dimension {expected}, got {n}"))));
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse `catalog:<name>[:k=v,...]` or `expr:<expression>`.
///
/// `spec` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kot_potential_new(spec: *const c_char, out: *mut *mut KotPotential) -> KotStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let spec = parse_potential_arg(text(spec, "spec")?)?;
        *out = Box::into_raw(Box::new(KotPotential { spec }));
        Ok(())
    })
}

/// `p` must come from `kot_potential_new` and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn kot_potential_free(p: *mut KotPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Dimension of the potential's domain; 0 for a null handle.
///
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kot_potential_dim(p: *const KotPotential) -> usize {
    p.as_ref().map_or(0, |h| h.spec.dim())
}

/// Value and derivatives at `point` (length n). `grad` holds n values,
/// `hess` n², `d3` n³ and `d4` n⁴; `d3` and `d4` may be null.
///
/// All non-null pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn kot_eval_bundle(
    p: *const KotPotential,
    point: *const f64,
    n: usize,
    value: *mut f64,
    grad: *mut f64,
    hess: *mut f64,
    d3: *mut f64,
    d4: *mut f64,
) -> KotStatus {
    guard(|| {
        let h = handle(p, "potential")?;
        check_dim(h.spec.dim(), n)?;
        let b = h.spec.eval_bundle(input(point, n, "point")?)?;
        *value.as_mut().ok_or(Fail::Null("value"))? = b.value;
        output(grad, n, "grad")?.copy_from_slice(&b.grad);
        let hs = output(hess, n * n, "hess")?;
        for i in 0..n {
            for j in 0..n {
                hs[i * n + j] = b.d2[(i, j)];
            }
        }
        if !d3.is_null() {
            output(d3, n * n * n, "d3")?.copy_from_slice(b.d3.as_slice());
        }
        if !d4.is_null() {
            output(d4, n * n * n * n, "d4")?.copy_from_slice(b.d4.as_slice());
        }
        Ok(())
    })
}

/// MTW tensor of the cost Ψ(x − y) at z = x − y, by the chosen route.
///
/// `z`, `xi`, `eta` hold n values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kot_mtw(
    p: *const KotPotential,
    route: KotRoute,
    z: *const f64,
    xi: *const f64,
    eta: *const f64,
    n: usize,
    out: *mut f64,
) -> KotStatus {
    guard(|| {
        let h = handle(p, "potential")?;
        check_dim(h.spec.dim(), n)?;
        let (z, xi, eta) = (input(z, n, "z")?, input(xi, n, "xi")?, input(eta, n, "eta")?);
        let v = match route {
            KotRoute::Direct => mtw::mtw_direct(&CostSpec::psi(h.spec.clone()), z, &vec![0.0; n], xi, eta)?,
            KotRoute::Potential => mtw::mtw_potential(&h.spec, z, xi, eta)?,
            KotRoute::Curvature => mtw::mtw_curvature(&h.spec, z, xi, eta)?,
        };
        *out.as_mut().ok_or(Fail::Null("out"))? = v.value;
        Ok(())
    })
}

/// Anti-bisectional curvature at `point`. With `orthogonal` set, pairs with
/// η(ξ) ≠ 0 are rejected with `NotOrthogonal`.
///
/// `point`, `xi`, `eta` hold n values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kot_anti_bisectional(
    p: *const KotPotential,
    point: *const f64,
    xi: *const f64,
    eta: *const f64,
    n: usize,
    orthogonal: bool,
    out: *mut f64,
) -> KotStatus {
    guard(|| {
        let h = handle(p, "potential")?;
        check_dim(h.spec.dim(), n)?;
        let k = kahler::kahler_curvature(&h.spec, input(point, n, "point")?)?;
        let (xi, eta) = (input(xi, n, "xi")?, input(eta, n, "eta")?);
        let v = if orthogonal {
            kahler::orthogonal_anti_bisectional(&k, xi, eta)?
        } else {
            kahler::anti_bisectional(&k, xi, eta)?
        };
        *out.as_mut().ok_or(Fail::Null("out"))? = v;
        Ok(())
    })
}

/// Holomorphic sectional curvature of ξ at `point`.
///
/// `point`, `xi` hold n values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kot_holomorphic_sectional(
    p: *const KotPotential,
    point: *const f64,
    xi: *const f64,
    n: usize,
    out: *mut f64,
) -> KotStatus {
    guard(|| {
        let h = handle(p, "potential")?;
        check_dim(h.spec.dim(), n)?;
        let k: KahlerCurvPoint = kahler::kahler_curvature(&h.spec, input(point, n, "point")?)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = kahler::holomorphic_sectional(&k, input(xi, n, "xi")?)?;
        Ok(())
    })
}

/// θ = ∇Ψ(u).
///
/// `u` and `theta` hold n values.
#[no_mangle]
pub unsafe extern "C" fn kot_to_dual(p: *const KotPotential, u: *const f64, n: usize, theta: *mut f64) -> KotStatus {
    guard(|| {
        let h = handle(p, "potential")?;
        check_dim(h.spec.dim(), n)?;
        let t = hessian::to_dual(&h.spec, input(u, n, "u")?)?;
        output(theta, n, "theta")?.copy_from_slice(&t);
        Ok(())
    })
}

/// u with ∇Ψ(u) = θ. `guess` may be null for the default starting point.
///
/// `theta`, `u` and a non-null `guess` hold n values.
#[no_mangle]
pub unsafe extern "C" fn kot_from_dual(
    p: *const KotPotential,
    theta: *const f64,
    guess: *const f64,
    n: usize,
    u: *mut f64,
) -> KotStatus {
    guard(|| {
        let h = handle(p, "potential")?;
        check_dim(h.spec.dim(), n)?;
        let g = if guess.is_null() {
            cgeometry::default_guess(&h.spec)
        } else {
            input(guess, n, "guess")?.to_vec()
        };
        let r = hessian::from_dual(&h.spec, input(theta, n, "theta")?, &g)?;
        output(u, n, "u")?.copy_from_slice(&r);
        Ok(())
    })
}

/// c-exponential: y with −c_x(x, y) = momentum for c = Ψ(x − y).
///
/// `x`, `momentum` and `y` hold n values.
#[no_mangle]
pub unsafe extern "C" fn kot_c_exp(
    p: *const KotPotential,
    x: *const f64,
    momentum: *const f64,
    n: usize,
    y: *mut f64,
) -> KotStatus {
    guard(|| {
        let h = handle(p, "potential")?;
        check_dim(h.spec.dim(), n)?;
        let r = cgeometry::c_exp(&h.spec, input(x, n, "x")?, input(momentum, n, "momentum")?, None)?;
        output(y, n, "y")?.copy_from_slice(&r);
        Ok(())
    })
}

/// Parse a cost: `psi:<potential>`, `d-alpha:<alpha>:<potential>`,
/// `log-cost[:n]`, `ecf[:n]` or `raw:<expr>`. `dim` fills in an omitted
/// dimension (coordinates per point); pass 0 for none.
///
/// `spec` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kot_cost_new(spec: *const c_char, dim: usize, out: *mut *mut KotCost) -> KotStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let cost = CostSpec::parse(text(spec, "spec")?, (dim > 0).then_some(dim))?;
        *out = Box::into_raw(Box::new(KotCost { cost }));
        Ok(())
    })
}

/// `c` must come from `kot_cost_new` and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn kot_cost_free(c: *mut KotCost) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Coordinates per point expected by the cost; 0 for a null handle.
///
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kot_cost_point_dim(c: *const KotCost) -> usize {
    c.as_ref().map_or(0, |h| h.cost.point_dim())
}

/// C_ij = c(x_i, y_j) for `m` points `xs` and `k` points `ys` of dimension
/// `d`; `out` receives m·k values.
///
/// `xs` holds m·d values, `ys` k·d, `out` m·k.
#[no_mangle]
pub unsafe extern "C" fn kot_cost_matrix(
    c: *const KotCost,
    xs: *const f64,
    m: usize,
    ys: *const f64,
    k: usize,
    d: usize,
    out: *mut f64,
) -> KotStatus {
    guard(|| {
        let h = handle(c, "cost")?;
        check_dim(h.cost.point_dim(), d)?;
        if d == 0 {
            return Err(Fail::Lib(Error::Dimension("points need coordinates".into())));
        }
        let xs: Vec<Vec<f64>> = input(xs, m * d, "xs")?.chunks(d).map(<[f64]>::to_vec).collect();
        let ys: Vec<Vec<f64>> = input(ys, k * d, "ys")?.chunks(d).map(<[f64]>::to_vec).collect();
        let cm = transport::cost_matrix(&h.cost, &xs, &ys)?;
        output(out, m * k, "out")?.copy_from_slice(&cm.data);
        Ok(())
    })
}

/// Exact optimal coupling for masses `mu` (m) and `nu` (k) under the
/// row-major cost matrix `c` (m·k). `plan` receives m·k values and `cost`
/// the total cost.
///
/// Pointers must be valid for the stated lengths; `cost` may be null.
#[no_mangle]
pub unsafe extern "C" fn kot_solve_exact(
    c: *const f64,
    mu: *const f64,
    m: usize,
    nu: *const f64,
    k: usize,
    plan: *mut f64,
    cost: *mut f64,
) -> KotStatus {
    guard(|| {
        let cm = CostMatrix::new(m, k, input(c, m * k, "c")?.to_vec())?;
        let p = transport::solve_exact(input(mu, m, "mu")?, input(nu, k, "nu")?, &cm)?;
        output(plan, m * k, "plan")?.copy_from_slice(&p.entries);
        if let Some(out) = cost.as_mut() {
            *out = p.cost;
        }
        Ok(())
    })
}

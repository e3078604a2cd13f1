use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use kahler_ot_ffi::*;

fn potential(spec: &str) -> *mut KotPotential {
    let s = CString::new(spec).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { kot_potential_new(s.as_ptr(), &mut p) }, KotStatus::Ok);
    p
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(kot_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(kot_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn bundle_and_routes() {
    let p = potential("catalog:multinomial");
    assert_eq!(unsafe { kot_potential_dim(p) }, 2);
    let (mut v, mut g, mut h) = (0.0, [0.0; 2], [0.0; 4]);
    let st = unsafe {
        kot_eval_bundle(p, [0.0, 0.0].as_ptr(), 2, &mut v, g.as_mut_ptr(), h.as_mut_ptr(), ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(st, KotStatus::Ok);
    assert!((v - 3f64.ln()).abs() < 1e-15);
    assert!((g[0] - 1.0 / 3.0).abs() < 1e-15 && (h[1] + 1.0 / 9.0).abs() < 1e-15);

    let (z, xi, eta) = ([0.3, -0.2], [1.0, 0.5], [0.5, -1.0]);
    let mut vals = [0.0; 3];
    for (r, route) in [KotRoute::Direct, KotRoute::Potential, KotRoute::Curvature].into_iter().enumerate() {
        let st = unsafe { kot_mtw(p, route, z.as_ptr(), xi.as_ptr(), eta.as_ptr(), 2, &mut vals[r]) };
        assert_eq!(st, KotStatus::Ok);
    }
    assert!((vals[0] - vals[1]).abs() < 1e-10 && (vals[1] - vals[2]).abs() < 1e-10);
    unsafe { kot_potential_free(p) };
}

#[test]
fn legendre_and_exponential() {
    let p = potential("catalog:siegel-dual");
    let u = [0.2, 1.5];
    let (mut th, mut back) = ([0.0; 2], [0.0; 2]);
    assert_eq!(unsafe { kot_to_dual(p, u.as_ptr(), 2, th.as_mut_ptr()) }, KotStatus::Ok);
    assert_eq!(unsafe { kot_from_dual(p, th.as_ptr(), ptr::null(), 2, back.as_mut_ptr()) }, KotStatus::Ok);
    assert!(back.iter().zip(&u).all(|(a, b)| (a - b).abs() < 1e-9));
    unsafe { kot_potential_free(p) };

    let q = potential("catalog:quadratic");
    let mut y = [0.0; 2];
    assert_eq!(unsafe { kot_c_exp(q, [1.0, 2.0].as_ptr(), [0.5, -0.25].as_ptr(), 2, y.as_mut_ptr()) }, KotStatus::Ok);
    assert_eq!(y, [1.5, 1.75]);
    unsafe { kot_potential_free(q) };
}

#[test]
fn errors_map_to_status_codes() {
    let bad = CString::new("catalog:nope").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { kot_potential_new(bad.as_ptr(), &mut p) }, KotStatus::InvalidArgument);
    assert!(p.is_null());
    assert!(last_error().contains("nope"));

    assert_eq!(unsafe { kot_potential_new(ptr::null(), &mut p) }, KotStatus::NullPointer);

    let h = potential("catalog:normal-half-plane");
    let mut out = 0.0;
    let st = unsafe { kot_holomorphic_sectional(h, [0.0, 1.0].as_ptr(), [1.0, 0.0].as_ptr(), 2, &mut out) };
    assert_eq!(st, KotStatus::Domain);
    let st = unsafe {
        kot_anti_bisectional(h, [0.0, -1.0].as_ptr(), [1.0, 0.0].as_ptr(), [1.0, 1.0].as_ptr(), 2, true, &mut out)
    };
    assert_eq!(st, KotStatus::NotOrthogonal);
    let st = unsafe { kot_holomorphic_sectional(h, [0.0, -1.0].as_ptr(), [1.0, 0.0].as_ptr(), 3, &mut out) };
    assert_eq!(st, KotStatus::InvalidArgument);
    let st = unsafe { kot_holomorphic_sectional(h, [0.0, -1.0].as_ptr(), [1.0, 0.0].as_ptr(), 2, &mut out) };
    assert_eq!(st, KotStatus::Ok);
    assert!((out - 2.0).abs() < 1e-12);
    unsafe { kot_potential_free(h) };
    unsafe { kot_potential_free(ptr::null_mut()) };
}

#[test]
fn transport_through_handles() {
    let spec = CString::new("psi:catalog:quadratic").unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { kot_cost_new(spec.as_ptr(), 0, &mut c) }, KotStatus::Ok);
    assert_eq!(unsafe { kot_cost_point_dim(c) }, 2);
    let xs = [0.0, 0.0, 1.0, 0.0];
    let ys = [1.1, 0.0, 0.1, 0.0];
    let mut cm = [0.0; 4];
    assert_eq!(unsafe { kot_cost_matrix(c, xs.as_ptr(), 2, ys.as_ptr(), 2, 2, cm.as_mut_ptr()) }, KotStatus::Ok);
    let (mut plan, mut cost) = ([0.0; 4], 0.0);
    let m = [0.5, 0.5];
    let st = unsafe { kot_solve_exact(cm.as_ptr(), m.as_ptr(), 2, m.as_ptr(), 2, plan.as_mut_ptr(), &mut cost) };
    assert_eq!(st, KotStatus::Ok);
    assert_eq!(plan, [0.0, 0.5, 0.5, 0.0]);
    assert!((cost - 0.005).abs() < 1e-12);
    let bad = [0.5, 0.6];
    let st = unsafe { kot_solve_exact(cm.as_ptr(), m.as_ptr(), 2, bad.as_ptr(), 2, plan.as_mut_ptr(), &mut cost) };
    assert_eq!(st, KotStatus::InvalidArgument);
    unsafe { kot_cost_free(c) };
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/kahler_ot.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "kot_potential_new",
        "kot_potential_free",
        "kot_eval_bundle",
        "kot_mtw",
        "kot_solve_exact",
        "typedef struct KotPotential KotPotential",
        "KOT_STATUS_DOMAIN",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"kahler_ot.h\"\nint main(void) { KotPotential *p = 0; double v = 0; \
         KotStatus s = kot_potential_new(\"catalog:quadratic\", &p); \
         s = kot_holomorphic_sectional(p, &v, &v, 1, &v); kot_potential_free(p); return (int)s; }\n",
    )
    .unwrap();
    let include = header.parent().unwrap();
    match Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(include).arg(&src).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; skipped syntax check"),
    }
}

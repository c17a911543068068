use kofuks_ffi::*;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

fn engine(cfg: &str) -> *mut KfEngine {
    let text = CString::new(cfg).unwrap();
    let mut e = ptr::null_mut();
    let s = unsafe { kf_engine_new(text.as_ptr(), &mut e) };
    assert_eq!(s, KfStatus::Ok, "{}", last_error());
    assert!(!e.is_null());
    e
}

fn last_error() -> String {
    let n = unsafe { kf_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0 as c_char; n];
    unsafe { kf_last_error(buf.as_mut_ptr(), n) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn disk_sample_matches_closed_form() {
    let e = engine("");
    let mut m = KfMetricSample::default();
    assert_eq!(unsafe { kf_metric_sample(e, 0.3, -0.4, &mut m) }, KfStatus::Ok);
    let s: f64 = 0.25;
    assert!((m.g_tilde - 6.0 / (1.0 - s).powi(2)).abs() < 1e-10);
    let mut rho = 0.0;
    assert_eq!(unsafe { kf_rho(e, 0.3, -0.4, &mut rho) }, KfStatus::Ok);
    assert!((rho + 0.75).abs() < 1e-14);
    unsafe { kf_engine_free(e) };
}

#[test]
fn errors_are_reported() {
    let text = CString::new("domain = disk\nbogus = 1\n").unwrap();
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { kf_engine_new(text.as_ptr(), &mut e) }, KfStatus::Parse);
    assert!(e.is_null());
    assert!(last_error().contains("bogus"));
    assert_eq!(unsafe { kf_engine_new(ptr::null(), ptr::null_mut()) }, KfStatus::NullPointer);
    let e = engine("");
    let mut m = KfMetricSample::default();
    assert_eq!(unsafe { kf_metric_sample(e, 1.5, 0.0, &mut m) }, KfStatus::Domain);
    assert_eq!(unsafe { kf_metric_sample(ptr::null(), 0.0, 0.0, &mut m) }, KfStatus::NullPointer);
    let mut small = [0 as c_char; 2];
    let need = unsafe { kf_last_error(small.as_mut_ptr(), 2) };
    assert!(need > 2);
    assert_eq!(small[0], 0);
    unsafe { kf_engine_free(e) };
    unsafe { kf_engine_free(ptr::null_mut()) };
}

#[test]
fn geodesic_through_the_origin_is_a_diameter() {
    let e = engine("");
    let mut tr = ptr::null_mut();
    assert_eq!(unsafe { kf_geodesic(e, 0.0, 0.0, 0.0, 1.0, 1.0, &mut tr) }, KfStatus::Ok);
    let n = unsafe { kf_trajectory_len(tr) };
    assert!(n > 2);
    let mut st = KfState::default();
    for i in 0..n {
        assert_eq!(unsafe { kf_trajectory_state(tr, i, &mut st) }, KfStatus::Ok);
        assert!(st.x.abs() < 1e-12);
    }
    assert!(st.y > 0.0 && (st.t - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { kf_trajectory_state(tr, n, &mut st) }, KfStatus::OutOfRange);
    let mut buf = [0 as c_char; 64];
    assert_eq!(unsafe { kf_trajectory_termination(tr, buf.as_mut_ptr(), 64) }, KfStatus::Ok);
    assert!(!unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().is_empty());
    unsafe { kf_trajectory_free(tr) };
    unsafe { kf_engine_free(e) };
}

#[test]
fn neck_loop_on_the_annulus() {
    let e = engine("domain = annulus\nr = 0.5\n");
    let w = [1i64];
    let mut lp = KfLoop::default();
    let z = 0.5f64.sqrt();
    assert_eq!(unsafe { kf_find_loop(e, z, 0.0, w.as_ptr(), 1, &mut lp) }, KfStatus::Ok, "{}", last_error());
    assert!(lp.converged && lp.residual < 1e-10);
    assert!((lp.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
    unsafe { kf_engine_free(e) };
}

#[test]
fn spiral_is_refused_on_the_disk() {
    let e = engine("");
    let mut c = KfSpiralCertificate::default();
    assert_eq!(unsafe { kf_spiral(e, 0.3, 0.0, &mut c) }, KfStatus::Numerical);
    unsafe { kf_engine_free(e) };
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(kf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/kofuks.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "kf_engine_new", "kf_engine_free", "kf_rho", "kf_metric_sample", "kf_geodesic",
        "kf_trajectory_len", "kf_trajectory_state", "kf_trajectory_termination", "kf_trajectory_free",
        "kf_find_loop", "kf_spiral", "kf_last_error", "kf_version",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing");
    }
    let src = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("header_check.c");
    std::fs::write(
        &src,
        "#include \"kofuks.h\"\nint main(void) { KfEngine *e = 0; KfStatus s = kf_engine_new(0, &e); kf_engine_free(e); return s == KF_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
    {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(_) => eprintln!("no C compiler; header syntax check skipped"),
    }
}

use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ndarray::Array2;
use ood_core::gaussian::{fit_gaussian, DistanceModel, EpsilonPolicy};
use ood_ffi::*;

fn last_error() -> String {
    let p = ood_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn sample(n: usize, d: usize) -> Vec<f64> {
    (0..n * d).map(|i| ((i * 7919) % 101) as f64 / 10.0 + (i % d) as f64).collect()
}

#[test]
fn gaussian_matches_core() {
    let (n, d) = (30, 4);
    let data = sample(n, d);
    let mut g = ptr::null_mut();
    let s = unsafe { ood_gaussian_fit(data.as_ptr(), n, d, OodEpsilonKind::Relative as u32, 1e-6, &mut g) };
    assert_eq!(s, OodStatus::Ok);
    assert_eq!(unsafe { ood_gaussian_dim(g) }, d);

    let mut out = vec![0.0; n];
    let s = unsafe { ood_gaussian_mahalanobis(g, data.as_ptr(), n, d, out.as_mut_ptr()) };
    assert_eq!(s, OodStatus::Ok);
    let m = Array2::from_shape_vec((n, d), data).unwrap();
    let core = fit_gaussian(m.view(), EpsilonPolicy::Relative(1e-6)).unwrap();
    assert_eq!(out, core.mahalanobis_batch(m.view()).unwrap());
    assert_eq!(unsafe { ood_gaussian_epsilon(g) }, core.epsilon());

    let s = unsafe { ood_gaussian_mahalanobis(g, out.as_ptr(), n, d - 1, out.clone().as_mut_ptr()) };
    assert_eq!(s, OodStatus::DimensionMismatch);
    unsafe { ood_gaussian_free(g) };
}

#[test]
fn singular_and_bad_arguments_report_errors() {
    let data = sample(3, 10);
    let mut g = ptr::null_mut();
    let s = unsafe { ood_gaussian_fit(data.as_ptr(), 3, 10, OodEpsilonKind::None as u32, 0.0, &mut g) };
    assert_eq!(s, OodStatus::SingularCovariance);
    assert!(g.is_null());
    assert!(last_error().contains("singular"), "{}", last_error());

    let s = unsafe { ood_gaussian_fit(data.as_ptr(), 3, 10, 9, 0.0, &mut g) };
    assert_eq!(s, OodStatus::InvalidArgument);
    let s = unsafe { ood_gaussian_fit(ptr::null(), 3, 10, 0, 0.0, &mut g) };
    assert_eq!(s, OodStatus::NullPointer);
    let s = unsafe { ood_gaussian_fit(data.as_ptr(), 3, 10, 2, 1e-6, ptr::null_mut()) };
    assert_eq!(s, OodStatus::NullPointer);

    let bad = [1.0, f64::NAN, 2.0, 3.0];
    let s = unsafe { ood_gaussian_fit(bad.as_ptr(), 2, 2, 2, 1e-6, &mut g) };
    assert_eq!(s, OodStatus::InvalidData);
    assert_eq!(unsafe { ood_gaussian_dim(ptr::null()) }, 0);
    unsafe { ood_gaussian_free(ptr::null_mut()) };
}

#[test]
fn pca_transform_and_round_trip() {
    let (n, d, k) = (20, 6, 3);
    let data = sample(n, d);
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ood_pca_fit(data.as_ptr(), n, d, k, &mut p) }, OodStatus::Ok);
    assert_eq!(unsafe { (ood_pca_n_components(p), ood_pca_input_dim(p)) }, (k, d));
    let mut a = vec![0.0; n * k];
    assert_eq!(unsafe { ood_pca_transform(p, data.as_ptr(), n, d, a.as_mut_ptr()) }, OodStatus::Ok);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("pca").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ood_pca_save(p, path.as_ptr()) }, OodStatus::Ok);
    let mut q = ptr::null_mut();
    assert_eq!(unsafe { ood_pca_load(path.as_ptr(), &mut q) }, OodStatus::Ok);
    let mut b = vec![0.0; n * k];
    assert_eq!(unsafe { ood_pca_transform(q, data.as_ptr(), n, d, b.as_mut_ptr()) }, OodStatus::Ok);
    assert_eq!(a, b);

    let mut r = ptr::null_mut();
    assert_eq!(unsafe { ood_pca_fit(data.as_ptr(), n, d, 50, &mut r) }, OodStatus::InvalidArgument);
    unsafe {
        ood_pca_free(p);
        ood_pca_free(q);
    }
}

#[test]
fn gaussian_save_load() {
    let data = sample(25, 3);
    let mut g = ptr::null_mut();
    unsafe { ood_gaussian_fit(data.as_ptr(), 25, 3, 2, 1e-6, &mut g) };
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ood_gaussian_save(g, path.as_ptr()) }, OodStatus::Ok);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ood_gaussian_load(path.as_ptr(), &mut h) }, OodStatus::Ok);
    let (mut a, mut b) = (vec![0.0; 25], vec![0.0; 25]);
    unsafe {
        ood_gaussian_mahalanobis(g, data.as_ptr(), 25, 3, a.as_mut_ptr());
        ood_gaussian_mahalanobis(h, data.as_ptr(), 25, 3, b.as_mut_ptr());
    }
    assert_eq!(a, b);
    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ood_gaussian_load(missing.as_ptr(), &mut h) }, OodStatus::Io);
    unsafe {
        ood_gaussian_free(g);
        ood_gaussian_free(h);
    }
}

#[test]
fn metrics_fixtures() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let flags = [0u8, 0, 1, 1];
    let mut m = OodMetrics::default();
    assert_eq!(unsafe { ood_metrics(scores.as_ptr(), flags.as_ptr(), 4, 0.75, &mut m) }, OodStatus::Ok);
    assert_eq!(m.auroc, 0.75);
    assert_eq!(m.tpr_target, 0.75);

    let flags = [0u8; 4];
    assert_eq!(
        unsafe { ood_metrics(scores.as_ptr(), flags.as_ptr(), 4, 0.75, &mut m) },
        OodStatus::InvalidData
    );
    assert!(!last_error().is_empty());
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ood_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/ood.h")).unwrap();
    for name in [
        "ood_gaussian_fit",
        "ood_gaussian_mahalanobis",
        "ood_gaussian_free",
        "ood_pca_transform",
        "ood_metrics",
        "ood_last_error_message",
        "OOD_STATUS_SINGULAR_COVARIANCE",
        "OOD_EPSILON_KIND_RELATIVE",
        "typedef struct OodGaussian OodGaussian",
    ] {
        assert!(header.contains(name), "{name} missing from ood.h");
    }
}

/// The static library next to this test binary (`target/<profile>/`).
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libood_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_client_compiles_and_runs() {
    let Some(lib) = static_lib() else {
        panic!("libood_ffi.a not found next to the test binary");
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir().join("examples/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = text.split_whitespace().map(|v| v.parse().unwrap()).collect();
    // corners of a square: the center is at distance 0; (3, 1) at √(4/(4/3)) = √3
    assert!(values[0].abs() < 1e-12);
    assert!((values[1] - 3f64.sqrt()).abs() < 1e-6);
    assert_eq!(values[2], 0.75);
}

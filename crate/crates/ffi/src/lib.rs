//! C ABI over `ood-core`: Gaussian fitting and Mahalanobis scoring, PCA,
//! and detection metrics.
//!
//! Models live behind opaque handles that the caller frees with the matching
//! `*_free` function. Every fallible call returns an [`OodStatus`]; on
//! failure [`ood_last_error_message`] describes the error. Matrices are
//! row-major `double` buffers.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use ndarray::ArrayView2;
use ood_core::gaussian::{fit_gaussian, DistanceModel, EpsilonPolicy, GaussianModel};
use ood_core::metrics::{evaluate_at, ScoredSample};
use ood_core::reduction::{fit_pca, PcaModel};
use ood_core::tensor_io::Label;
use ood_core::OodError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    SingularCovariance = 4,
    InvalidData = 5,
    Io = 6,
    Panic = 7,
}

/// Ridge policy for [`ood_gaussian_fit`], passed as `uint32_t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodEpsilonKind {
    None = 0,
    Absolute = 1,
    Relative = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OodMetrics {
    pub auroc: f64,
    pub aupr: f64,
    pub fpr_at_tpr: f64,
    pub tpr_target: f64,
}

/// Fitted Gaussian (opaque).
pub struct OodGaussian(GaussianModel);

/// Fitted PCA (opaque).
pub struct OodPca(PcaModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &OodError) -> OodStatus {
    match err {
        OodError::Config(_) | OodError::TooManyComponents { .. } | OodError::SampleSize { .. } => {
            OodStatus::InvalidArgument
        }
        OodError::Dimension { .. } | OodError::ShapeMismatch { .. } | OodError::Rank { .. } => {
            OodStatus::DimensionMismatch
        }
        OodError::SingularCovariance { .. } => OodStatus::SingularCovariance,
        OodError::Io { .. } => OodStatus::Io,
        _ => OodStatus::InvalidData,
    }
}

enum Failure {
    Status(OodStatus, String),
    Core(OodError),
}

impl From<OodError> for Failure {
    fn from(e: OodError) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(OodStatus::NullPointer, format!("{what} is null"))
}

/// Run `body`, recording any error or panic for `ood_last_error_message`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> OodStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => OodStatus::Ok,
        Ok(Err(Failure::Status(s, m))) => {
            set_error(m);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            OodStatus::Panic
        }
    }
}

unsafe fn matrix<'a>(data: *const f64, rows: usize, cols: usize) -> Result<ArrayView2<'a, f64>, Failure> {
    if data.is_null() {
        return Err(null("data"));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure::Status(OodStatus::InvalidArgument, "rows * cols overflows".into()))?;
    let values = slice::from_raw_parts(data, len);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(OodError::NonFinite { index: i }.into());
    }
    Ok(ArrayView2::from_shape((rows, cols), values).expect("length checked"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(OodStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn epsilon_policy(kind: u32, value: f64) -> Result<EpsilonPolicy, Failure> {
    match kind {
        k if k == OodEpsilonKind::None as u32 => Ok(EpsilonPolicy::None),
        k if k == OodEpsilonKind::Absolute as u32 => Ok(EpsilonPolicy::Absolute(value)),
        k if k == OodEpsilonKind::Relative as u32 => Ok(EpsilonPolicy::Relative(value)),
        other => Err(Failure::Status(
            OodStatus::InvalidArgument,
            format!("unknown epsilon kind {other}"),
        )),
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ood_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ood_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fit a Gaussian to the `n × d` row-major `data`. `epsilon_kind` is an
/// [`OodEpsilonKind`] value.
#[no_mangle]
pub unsafe extern "C" fn ood_gaussian_fit(
    data: *const f64,
    n: usize,
    d: usize,
    epsilon_kind: u32,
    epsilon_value: f64,
    out: *mut *mut OodGaussian,
) -> OodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = matrix(data, n, d)?;
        let model = fit_gaussian(m, epsilon_policy(epsilon_kind, epsilon_value)?)?;
        *out = Box::into_raw(Box::new(OodGaussian(model)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ood_gaussian_dim(model: *const OodGaussian) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// Ridge added to the covariance diagonal at fit time.
#[no_mangle]
pub unsafe extern "C" fn ood_gaussian_epsilon(model: *const OodGaussian) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.epsilon())
}

/// Mahalanobis distance of each of the `n` rows of `rows` (`n × d`) into `out[n]`.
#[no_mangle]
pub unsafe extern "C" fn ood_gaussian_mahalanobis(
    model: *const OodGaussian,
    rows: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> OodStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = matrix(rows, n, d)?;
        let distances = model.0.mahalanobis_batch(m)?;
        slice::from_raw_parts_mut(out, n).copy_from_slice(&distances);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ood_gaussian_save(model: *const OodGaussian, dir: *const c_char) -> OodStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        model.0.save(&path_arg(dir)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ood_gaussian_load(dir: *const c_char, out: *mut *mut OodGaussian) -> OodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = GaussianModel::load(&path_arg(dir)?)?;
        *out = Box::into_raw(Box::new(OodGaussian(model)));
        Ok(())
    })
}

/// Free a handle from `ood_gaussian_fit` or `ood_gaussian_load`. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn ood_gaussian_free(model: *mut OodGaussian) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fit standardization plus PCA with `n_components` components on `n × d` data.
#[no_mangle]
pub unsafe extern "C" fn ood_pca_fit(
    data: *const f64,
    n: usize,
    d: usize,
    n_components: usize,
    out: *mut *mut OodPca,
) -> OodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = fit_pca(matrix(data, n, d)?, n_components)?;
        *out = Box::into_raw(Box::new(OodPca(model)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ood_pca_n_components(model: *const OodPca) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_components())
}

#[no_mangle]
pub unsafe extern "C" fn ood_pca_input_dim(model: *const OodPca) -> usize {
    model.as_ref().map_or(0, |m| m.0.input_dim())
}

/// Project `n × d` rows; writes `n × n_components` values to `out`.
#[no_mangle]
pub unsafe extern "C" fn ood_pca_transform(
    model: *const OodPca,
    rows: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> OodStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let projected = model.0.apply(matrix(rows, n, d)?)?;
        let k = model.0.n_components();
        let dst = slice::from_raw_parts_mut(out, n * k);
        for (chunk, row) in dst.chunks_exact_mut(k.max(1)).zip(projected.rows()) {
            for (c, v) in chunk.iter_mut().zip(row) {
                *c = *v;
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ood_pca_save(model: *const OodPca, dir: *const c_char) -> OodStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        model.0.save(&path_arg(dir)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ood_pca_load(dir: *const c_char, out: *mut *mut OodPca) -> OodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = PcaModel::load(&path_arg(dir)?)?;
        *out = Box::into_raw(Box::new(OodPca(model)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ood_pca_free(model: *mut OodPca) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// AUROC, AUPR and FPR at `tpr_target` for `n` scores. `is_ood[i]` is
/// nonzero for OOD samples; higher scores mean more OOD.
#[no_mangle]
pub unsafe extern "C" fn ood_metrics(
    scores: *const f64,
    is_ood: *const u8,
    n: usize,
    tpr_target: f64,
    out: *mut OodMetrics,
) -> OodStatus {
    guard(|| {
        if scores.is_null() {
            return Err(null("scores"));
        }
        if is_ood.is_null() {
            return Err(null("is_ood"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let scores = slice::from_raw_parts(scores, n);
        let flags = slice::from_raw_parts(is_ood, n);
        let samples: Vec<ScoredSample> = scores
            .iter()
            .zip(flags)
            .enumerate()
            .map(|(i, (&s, &f))| ScoredSample::new(i.to_string(), s, if f != 0 { Label::Ood } else { Label::Id }))
            .collect();
        let m = evaluate_at(&samples, tpr_target)?;
        *out = OodMetrics {
            auroc: m.auroc,
            aupr: m.aupr,
            fpr_at_tpr: m.fpr_at_tpr,
            tpr_target: m.tpr_target,
        };
        Ok(())
    })
}

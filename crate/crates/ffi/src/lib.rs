//! C ABI over the `amortis` library.
//!
//! Every fallible function returns an [`AmortisStatus`]; on failure the message is available
//! from [`amortis_last_error`] on the same thread until the next call. Objects are opaque
//! handles released with their `_free` function. Matrices are row-major `double` buffers.
//! Task names (`"two_moons"`, `"gaussian_linear"`, ...) and model names (`"cpvae"`, `"upvae"`)
//! are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use amortis::gauss::{kl_diag, DiagGaussian};
use amortis::metrics::{c2st, mmd2, mmd2_median};
use amortis::models::{ModelKind, ModelSpec};
use amortis::nn::Matrix;
use amortis::sims::{generate_dataset, Dataset, SimTask, TaskId};
use amortis::train::{train_model, TrainConfig, TrainedModel};
use amortis::{rng, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AmortisStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Simulator = 4,
    Numeric = 5,
    Format = 6,
    Io = 7,
    Panic = 8,
}

impl From<&Error> for AmortisStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Config(_) => AmortisStatus::InvalidArgument,
            Error::InvalidLayerSizes(_)
            | Error::ShapeMismatch { .. }
            | Error::DimensionMismatch { .. }
            | Error::StaleCache => AmortisStatus::ShapeMismatch,
            Error::Simulator { .. } | Error::DatasetRow { .. } | Error::AbcStarved { .. } => AmortisStatus::Simulator,
            Error::NonFiniteGradient
            | Error::NonFiniteLoss { .. }
            | Error::NonFiniteOutput(_)
            | Error::Diverged { .. } => AmortisStatus::Numeric,
            Error::Checkpoint(_) | Error::Format { .. } | Error::Json(_) => AmortisStatus::Format,
            Error::Io { .. } => AmortisStatus::Io,
        }
    }
}

/// Opaque simulated training set.
pub struct AmortisDataset {
    inner: Dataset,
}

/// Opaque trained posterior model with its scalers.
pub struct AmortisModel {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(AmortisStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail((&e).into(), e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> AmortisStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AmortisStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            AmortisStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(AmortisStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(AmortisStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> FfiResult<&'a mut [f64]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn matrix_arg(p: *const f64, rows: usize, cols: usize, what: &str) -> FfiResult<Matrix> {
    let n = rows.checked_mul(cols).ok_or_else(|| invalid(format!("{what} is too large")))?;
    Ok(Matrix::from_vec(rows, cols, slice_arg(p, n, what)?.to_vec())?)
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> FfiResult {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn parse_task(s: &str) -> FfiResult<TaskId> {
    Ok(s.parse()?)
}

/// Message for the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn amortis_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn amortis_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `task` must be a NUL-terminated string; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn amortis_task_dims(task: *const c_char, theta_dim: *mut usize, y_dim: *mut usize) -> AmortisStatus {
    guard(|| {
        let (t, y) = parse_task(str_arg(task, "task")?)?.dims();
        write_out(theta_dim, t, "theta_dim")?;
        write_out(y_dim, y, "y_dim")
    })
}

/// Simulates `n` prior draws and their observations.
///
/// # Safety
/// `task` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn amortis_dataset_generate(
    task: *const c_char,
    n: usize,
    seed: u64,
    out: *mut *mut AmortisDataset,
) -> AmortisStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n < 2 {
            return Err(invalid("a dataset needs at least 2 rows"));
        }
        let sim = SimTask::new(parse_task(str_arg(task, "task")?)?);
        let ds = generate_dataset(&sim, n, seed)?;
        out.write(Box::into_raw(Box::new(AmortisDataset { inner: ds })));
        Ok(())
    })
}

/// Number of rows, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn amortis_dataset_len(ds: *const AmortisDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Copies the native-unit θ rows (`len` must equal rows × θ-dim).
///
/// # Safety
/// `ds` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn amortis_dataset_copy_thetas(ds: *const AmortisDataset, buf: *mut f64, len: usize) -> AmortisStatus {
    guard(|| copy_matrix(ds.as_ref().map(|d| &d.inner.thetas), buf, len))
}

/// Copies the native-unit observation rows (`len` must equal rows × y-dim).
///
/// # Safety
/// `ds` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn amortis_dataset_copy_ys(ds: *const AmortisDataset, buf: *mut f64, len: usize) -> AmortisStatus {
    guard(|| copy_matrix(ds.as_ref().map(|d| &d.inner.ys), buf, len))
}

unsafe fn copy_matrix(m: Option<&Matrix>, buf: *mut f64, len: usize) -> FfiResult {
    let m = m.ok_or_else(|| null("dataset"))?;
    if len != m.as_slice().len() {
        return Err(Fail(
            AmortisStatus::ShapeMismatch,
            format!("buffer holds {len} values, need {}", m.as_slice().len()),
        ));
    }
    out_slice(buf, len, "buf")?.copy_from_slice(m.as_slice());
    Ok(())
}

/// # Safety
/// `ds` must be NULL or a handle from `amortis_dataset_generate` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn amortis_dataset_free(ds: *mut AmortisDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains a model with the task's default architecture and training settings.
/// `max_epochs` of 0 keeps the default.
///
/// # Safety
/// `ds` must be a live handle, `model` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn amortis_model_train(
    ds: *const AmortisDataset,
    model: *const c_char,
    seed: u64,
    max_epochs: usize,
    out: *mut *mut AmortisModel,
) -> AmortisStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("dataset"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let kind: ModelKind = str_arg(model, "model")?.parse()?;
        let mut cfg = TrainConfig::for_task(ds.task, kind);
        cfg.seed = seed;
        if max_epochs > 0 {
            cfg.max_epochs = max_epochs;
        }
        let (trained, _) = train_model(ModelSpec::for_task(ds.task, kind), ds, &cfg)?;
        out.write(Box::into_raw(Box::new(AmortisModel { inner: trained })));
        Ok(())
    })
}

/// Loads a checkpoint and its JSON sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn amortis_model_load(path: *const c_char, out: *mut *mut AmortisModel) -> AmortisStatus {
    guard(|| {
        let p = PathBuf::from(str_arg(path, "path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let m = TrainedModel::load(&p)?;
        out.write(Box::into_raw(Box::new(AmortisModel { inner: m })));
        Ok(())
    })
}

/// Writes the checkpoint to `path` and its sidecar next to it.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn amortis_model_save(model: *const AmortisModel, path: *const c_char) -> AmortisStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        m.save(&PathBuf::from(str_arg(path, "path")?), None)?;
        Ok(())
    })
}

/// θ-dimension, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn amortis_model_theta_dim(model: *const AmortisModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.model.spec().theta_dim)
}

/// Observation dimension, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn amortis_model_y_dim(model: *const AmortisModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.model.spec().y_dim)
}

/// Draws `m` posterior samples for the native-unit observation `y0` into `out`
/// (`out_len` must equal m × θ-dim), in native θ units.
///
/// # Safety
/// `model` must be a live handle, `y0` valid for `y_len` doubles and `out` for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn amortis_model_sample(
    model: *const AmortisModel,
    y0: *const f64,
    y_len: usize,
    m: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> AmortisStatus {
    guard(|| {
        let tm = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let td = tm.model.spec().theta_dim;
        if m.checked_mul(td) != Some(out_len) {
            return Err(Fail(
                AmortisStatus::ShapeMismatch,
                format!("output holds {out_len} values, need {m} x {td}"),
            ));
        }
        let y = slice_arg(y0, y_len, "y0")?;
        let s = tm.sample_native(y, m, &mut rng::seeded(seed))?;
        out_slice(out, out_len, "out")?.copy_from_slice(s.as_slice());
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn amortis_model_free(model: *mut AmortisModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Squared MMD (V-statistic, Gaussian kernels at h/2, h, 2h) between `p` (n_p × d) and `q`
/// (n_q × d). A non-positive `h` selects the median-heuristic bandwidth.
///
/// # Safety
/// `p` and `q` must hold n_p·d and n_q·d doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amortis_mmd2(
    p: *const f64,
    n_p: usize,
    q: *const f64,
    n_q: usize,
    d: usize,
    h: f64,
    out: *mut f64,
) -> AmortisStatus {
    guard(|| {
        let a = matrix_arg(p, n_p, d, "p")?;
        let b = matrix_arg(q, n_q, d, "q")?;
        let v = if h > 0.0 { mmd2(&a, &b, h)? } else { mmd2_median(&a, &b)?.value };
        write_out(out, v, "out")
    })
}

/// Cross-validated classifier two-sample accuracy between `p` and `q`.
///
/// # Safety
/// `p` and `q` must hold n_p·d and n_q·d doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amortis_c2st(
    p: *const f64,
    n_p: usize,
    q: *const f64,
    n_q: usize,
    d: usize,
    seed: u64,
    out: *mut f64,
) -> AmortisStatus {
    guard(|| {
        let a = matrix_arg(p, n_p, d, "p")?;
        let b = matrix_arg(q, n_q, d, "q")?;
        write_out(out, c2st(&a, &b, seed)?, "out")
    })
}

/// KL(q ‖ p) between diagonal Gaussians given by means and variances of length `d`.
///
/// # Safety
/// All four input pointers must hold `d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amortis_kl_diag(
    mean_q: *const f64,
    var_q: *const f64,
    mean_p: *const f64,
    var_p: *const f64,
    d: usize,
    out: *mut f64,
) -> AmortisStatus {
    guard(|| {
        let q = DiagGaussian::new(slice_arg(mean_q, d, "mean_q")?.to_vec(), slice_arg(var_q, d, "var_q")?.to_vec())?;
        let p = DiagGaussian::new(slice_arg(mean_p, d, "mean_p")?.to_vec(), slice_arg(var_p, d, "var_p")?.to_vec())?;
        write_out(out, kl_diag(&q, &p)?, "out")
    })
}

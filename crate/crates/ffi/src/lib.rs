//! C ABI over `genimpute`.
//!
//! Every fallible function returns a [`GiStatus`]; on anything but
//! `GI_STATUS_OK` the message is available from [`gi_last_error_message`]
//! on the same thread. Objects are opaque handles released with their
//! `*_free` function. Matrices cross the boundary as row-major `double`
//! buffers, masks as row-major `uint8_t` buffers of 0/1.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use genimpute::harness::{
    load_checkpoint, prepare, save_checkpoint, Dataset, Prepared, ScalingScope, TrainedModel,
};
use genimpute::hyper::{HyperParams, Method};
use genimpute::metrics::rmse_missing;
use genimpute::rng::{self, purpose};
use genimpute::tabular::{EncodedMatrix, MaskMatrix};
use genimpute::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GiStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Schema = 3,
    Data = 4,
    Io = 5,
    UndefinedMetric = 6,
    Diverged = 7,
    CheckpointVersion = 8,
    CorruptCheckpoint = 9,
    BufferTooSmall = 10,
    Internal = 11,
}

/// Which partition of a prepared dataset to address.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GiPartition {
    Train = 0,
    Test = 1,
}

/// Which matrix of a partition to copy out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GiMatrix {
    /// Encoded values before amputation.
    Truth = 0,
    /// Encoded values with noise in the missing cells.
    Amputed = 1,
    /// 1 observed, 0 missing, as doubles.
    Mask = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GiScaling {
    All = 0,
    Train = 1,
}

/// A loaded CSV with its schema.
pub struct GiDataset(Dataset);

/// Split, scaled and amputated partitions of one dataset.
pub struct GiPrepared(Prepared);

/// A trained GAIN or VAE.
pub struct GiModel(TrainedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GiStatus {
    match e {
        Error::Invalid(_) | Error::Shape { .. } | Error::Unbound(_) | Error::NotScalar { .. } => {
            GiStatus::InvalidArgument
        }
        Error::Schema(_) => GiStatus::Schema,
        Error::Data { .. } | Error::Csv(_) | Error::Json(_) => GiStatus::Data,
        Error::Io { .. } => GiStatus::Io,
        Error::UndefinedMetric(_) => GiStatus::UndefinedMetric,
        Error::Diverged { .. } | Error::NonFinite { .. } => GiStatus::Diverged,
        Error::CheckpointVersion { .. } => GiStatus::CheckpointVersion,
        Error::CorruptCheckpoint(_) => GiStatus::CorruptCheckpoint,
        _ => GiStatus::Internal,
    }
}

struct Fail(GiStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GiStatus::NullArgument, format!("`{what}` is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GiStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            GiStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GiStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn out<T>(p: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < values.len() {
        return Err(Fail(
            GiStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

fn parse_method(s: &str) -> Result<Method, Fail> {
    s.parse::<Method>().map_err(Fail::from)
}

fn partition(
    prep: &Prepared,
    p: GiPartition,
) -> (&EncodedMatrix, &genimpute::tabular::AmputedDataset) {
    match p {
        GiPartition::Train => (&prep.train_truth, &prep.train),
        GiPartition::Test => (&prep.test_truth, &prep.test),
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn gi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a CSV file. `schema_path` may be null to infer variable types.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gi_dataset_load(
    csv_path: *const c_char,
    schema_path: *const c_char,
    out_dataset: *mut *mut GiDataset,
) -> GiStatus {
    guard(|| {
        let csv = PathBuf::from(str_arg(csv_path, "csv_path")?);
        let schema = opt_str_arg(schema_path, "schema_path")?.map(PathBuf::from);
        let d = Dataset::load(&csv, schema.as_deref())?;
        out(
            out_dataset,
            Box::into_raw(Box::new(GiDataset(d))),
            "out_dataset",
        )
    })
}

/// # Safety
/// `dataset` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gi_dataset_shape(
    dataset: *const GiDataset,
    out_rows: *mut usize,
    out_variables: *mut usize,
) -> GiStatus {
    guard(|| {
        let d = &handle(dataset, "dataset")?.0;
        out(out_rows, d.rows.len(), "out_rows")?;
        out(out_variables, d.schema.num_variables(), "out_variables")
    })
}

/// # Safety
/// `dataset` must be null or a handle from [`gi_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gi_dataset_free(dataset: *mut GiDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Splits 90/10, scales and amputates both partitions with probability `missing_p`.
///
/// # Safety
/// `dataset` must be a live handle; `out_prepared` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gi_ampute(
    dataset: *const GiDataset,
    missing_p: f64,
    seed: u64,
    scaling: GiScaling,
    out_prepared: *mut *mut GiPrepared,
) -> GiStatus {
    guard(|| {
        let d = &handle(dataset, "dataset")?.0;
        let scope = match scaling {
            GiScaling::All => ScalingScope::All,
            GiScaling::Train => ScalingScope::Train,
        };
        let p = prepare(d, missing_p, seed, scope)?;
        out(
            out_prepared,
            Box::into_raw(Box::new(GiPrepared(p))),
            "out_prepared",
        )
    })
}

/// Rows of a partition and the encoded feature count.
///
/// # Safety
/// `prepared` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gi_prepared_shape(
    prepared: *const GiPrepared,
    which: GiPartition,
    out_rows: *mut usize,
    out_features: *mut usize,
) -> GiStatus {
    guard(|| {
        let p = &handle(prepared, "prepared")?.0;
        let (truth, _) = partition(p, which);
        out(out_rows, truth.rows(), "out_rows")?;
        out(out_features, truth.cols(), "out_features")
    })
}

/// Copies one matrix of a partition into `buf` (row-major, `rows * features` values).
///
/// # Safety
/// `prepared` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gi_prepared_copy(
    prepared: *const GiPrepared,
    which: GiPartition,
    matrix: GiMatrix,
    buf: *mut f64,
    len: usize,
) -> GiStatus {
    guard(|| {
        let p = &handle(prepared, "prepared")?.0;
        let (truth, amputed) = partition(p, which);
        match matrix {
            GiMatrix::Truth => copy_out(truth.values(), buf, len),
            GiMatrix::Amputed => copy_out(amputed.data.values(), buf, len),
            GiMatrix::Mask => copy_out(amputed.mask.to_matrix().values(), buf, len),
        }
    })
}

/// # Safety
/// `prepared` must be null or a handle from [`gi_ampute`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gi_prepared_free(prepared: *mut GiPrepared) {
    if !prepared.is_null() {
        drop(Box::from_raw(prepared));
    }
}

/// Trains on the training partition. `hyper_json` may be null for defaults;
/// otherwise it is a JSON object of hyperparameters where missing fields keep
/// their defaults. `method` overrides any method in the JSON.
///
/// # Safety
/// `prepared` must be a live handle; strings null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gi_train(
    prepared: *const GiPrepared,
    method: *const c_char,
    hyper_json: *const c_char,
    out_model: *mut *mut GiModel,
) -> GiStatus {
    guard(|| {
        let p = &handle(prepared, "prepared")?.0;
        let method = parse_method(str_arg(method, "method")?)?;
        let mut hyper: HyperParams = match opt_str_arg(hyper_json, "hyper_json")? {
            Some(s) => serde_json::from_str(s)
                .map_err(|e| Fail(GiStatus::InvalidArgument, format!("hyper_json: {e}")))?,
            None => HyperParams::default(),
        };
        hyper.method = method;
        let model = TrainedModel::train(&p.train, &p.schema, &hyper)?;
        out(
            out_model,
            Box::into_raw(Box::new(GiModel(model))),
            "out_model",
        )
    })
}

/// Imputes a partition into `buf`. `method` may be null to use the model's
/// own method, or name another procedure of the same family (e.g. `vae+it`
/// on a `vae` model). Writes the pass count of iterative procedures to
/// `out_iterations` when it is non-null (0 otherwise).
///
/// # Safety
/// Handles must be live; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gi_impute(
    model: *mut GiModel,
    prepared: *const GiPrepared,
    which: GiPartition,
    method: *const c_char,
    seed: u64,
    buf: *mut f64,
    len: usize,
    out_iterations: *mut usize,
) -> GiStatus {
    guard(|| {
        let m = &mut handle_mut(model, "model")?.0;
        let p = &handle(prepared, "prepared")?.0;
        let method = match opt_str_arg(method, "method")? {
            Some(s) => parse_method(s)?,
            None => m.hyper().method,
        };
        let (_, data) = partition(p, which);
        let imputed = m.impute(data, method, &mut rng::stream(seed, purpose::IMPUTE))?;
        copy_out(imputed.matrix.values(), buf, len)?;
        if !out_iterations.is_null() {
            out_iterations.write(imputed.iterations_used.unwrap_or(0));
        }
        Ok(())
    })
}

/// Root mean squared error over the cells where `mask` is 0.
///
/// # Safety
/// `truth` and `imputed` must hold `rows * cols` doubles, `mask` as many bytes.
#[no_mangle]
pub unsafe extern "C" fn gi_rmse_missing(
    truth: *const f64,
    imputed: *const f64,
    mask: *const u8,
    rows: usize,
    cols: usize,
    out_rmse: *mut f64,
) -> GiStatus {
    guard(|| {
        if truth.is_null() || imputed.is_null() || mask.is_null() {
            return Err(null("matrix"));
        }
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Fail(GiStatus::InvalidArgument, "rows * cols overflows".into()))?;
        let t = EncodedMatrix::new(rows, cols, std::slice::from_raw_parts(truth, n).to_vec())?;
        let i = EncodedMatrix::new(rows, cols, std::slice::from_raw_parts(imputed, n).to_vec())?;
        let m = MaskMatrix::new(rows, cols, std::slice::from_raw_parts(mask, n).to_vec())?;
        out(out_rmse, rmse_missing(&t, &i, &m)?, "out_rmse")
    })
}

/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gi_model_save(model: *const GiModel, path: *const c_char) -> GiStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        save_checkpoint(m, &PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Loads a checkpoint. With a non-null `prepared`, the checkpoint's schema
/// must match the prepared dataset's.
///
/// # Safety
/// `path` NUL-terminated; `prepared` null or live; `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn gi_model_load(
    path: *const c_char,
    prepared: *const GiPrepared,
    out_model: *mut *mut GiModel,
) -> GiStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let expected = prepared.as_ref().map(|p| &p.0.schema);
        let m = load_checkpoint(&path, expected)?;
        out(out_model, Box::into_raw(Box::new(GiModel(m))), "out_model")
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gi_model_free(model: *mut GiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

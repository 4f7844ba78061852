//! C ABI over the solarcast library.
//!
//! Every fallible call returns a [`SolarcastStatus`]; on failure the message
//! is kept per thread and read with [`solarcast_last_error`]. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use chrono::NaiveDate;
use solarcast::dataset::{irradiance_to_power, DatasetError};
use solarcast::embedding::{Embedding, EmbeddingError};
use solarcast::eval::{mae, r2, rmse, EvalError};
use solarcast::forest::{ForestError, TrainedModel};
use solarcast::geo::{haversine, Location};
use solarcast::synth::{clear_sky_ghi, solar_zenith};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolarcastStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    SchemaMismatch = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// A loaded model file.
pub struct SolarcastModel {
    model: TrainedModel,
    names: Vec<CString>,
}

/// A loaded node embedding.
pub struct SolarcastEmbedding {
    embedding: Embedding,
    checksum: CString,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolarcastMetrics {
    pub r2: f64,
    pub mae: f64,
    pub rmse: f64,
}

struct Failure(SolarcastStatus, String);

impl Failure {
    fn new(status: SolarcastStatus, msg: impl Into<String>) -> Self {
        Self(status, msg.into())
    }
}

impl From<ForestError> for Failure {
    fn from(e: ForestError) -> Self {
        let status = match e {
            ForestError::Io(_) => SolarcastStatus::Io,
            ForestError::SchemaMismatch(_) => SolarcastStatus::SchemaMismatch,
            ForestError::Format(_) | ForestError::UnsupportedFormat(_) => SolarcastStatus::Format,
            _ => SolarcastStatus::InvalidArgument,
        };
        Self(status, e.to_string())
    }
}

impl From<EmbeddingError> for Failure {
    fn from(e: EmbeddingError) -> Self {
        Self(SolarcastStatus::Format, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Self(SolarcastStatus::InvalidArgument, e.to_string())
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Self(SolarcastStatus::InvalidArgument, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SolarcastStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SolarcastStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SolarcastStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(SolarcastStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::new(SolarcastStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    Ok(std::slice::from_raw_parts(non_null(p, what)?, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    Ok(std::slice::from_raw_parts_mut(out_ref(p, what)?, len))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    let s = CStr::from_ptr(non_null(p, "path")?)
        .to_str()
        .map_err(|_| Failure::new(SolarcastStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn solarcast_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn solarcast_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file written by the `train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn solarcast_model_load(path: *const c_char, out: *mut *mut SolarcastModel) -> SolarcastStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let model = TrainedModel::load(&path_arg(path)?)?;
        let names = model
            .feature_names
            .iter()
            .map(|n| {
                CString::new(n.as_str()).map_err(|_| Failure::new(SolarcastStatus::Format, "feature name contains NUL"))
            })
            .collect::<Result<_, _>>()?;
        *out = Box::into_raw(Box::new(SolarcastModel { model, names }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`solarcast_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn solarcast_model_free(model: *mut SolarcastModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input columns the model expects; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn solarcast_model_feature_count(model: *const SolarcastModel) -> usize {
    model.as_ref().map_or(0, |m| m.names.len())
}

/// Name of column `index`, or NULL when out of range. Owned by the handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn solarcast_model_feature_name(model: *const SolarcastModel, index: usize) -> *const c_char {
    model.as_ref().and_then(|m| m.names.get(index)).map_or(ptr::null(), |c| c.as_ptr())
}

/// Predicts GHI for `n_rows` unscaled rows of `n_cols` values each,
/// row-major. The model's stored scaler is applied first.
///
/// # Safety
/// `values` must hold `n_rows * n_cols` doubles and `out` `n_rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn solarcast_model_predict(
    model: *const SolarcastModel,
    values: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> SolarcastStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        if n_cols != m.names.len() {
            return Err(Failure::new(
                SolarcastStatus::SchemaMismatch,
                format!("model expects {} columns, got {n_cols}", m.names.len()),
            ));
        }
        let len = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| Failure::new(SolarcastStatus::InvalidArgument, "row count overflows"))?;
        let x = slice(values, len, "values")?;
        let out = slice_mut(out, n_rows, "out")?;
        if n_rows > 0 {
            out.copy_from_slice(&m.model.predict_raw(x)?);
        }
        Ok(())
    })
}

/// Loads an embedding CSV written by the `embed` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn solarcast_embedding_load(
    path: *const c_char,
    out: *mut *mut SolarcastEmbedding,
) -> SolarcastStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let file =
            std::fs::File::open(path_arg(path)?).map_err(|e| Failure::new(SolarcastStatus::Io, e.to_string()))?;
        let embedding = Embedding::read_csv(file)?;
        let checksum = CString::new(embedding.checksum()).expect("hex has no NUL");
        *out = Box::into_raw(Box::new(SolarcastEmbedding { embedding, checksum }));
        Ok(())
    })
}

/// # Safety
/// `embedding` must come from [`solarcast_embedding_load`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn solarcast_embedding_free(embedding: *mut SolarcastEmbedding) {
    if !embedding.is_null() {
        drop(Box::from_raw(embedding));
    }
}

/// # Safety
/// `embedding` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn solarcast_embedding_node_count(embedding: *const SolarcastEmbedding) -> usize {
    embedding.as_ref().map_or(0, |e| e.embedding.n)
}

/// # Safety
/// `embedding` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn solarcast_embedding_dims(embedding: *const SolarcastEmbedding) -> usize {
    embedding.as_ref().map_or(0, |e| e.embedding.dims)
}

/// Hex SHA-256 of the embedding, as recorded in model files. Owned by the
/// handle.
///
/// # Safety
/// `embedding` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn solarcast_embedding_checksum(embedding: *const SolarcastEmbedding) -> *const c_char {
    embedding.as_ref().map_or(ptr::null(), |e| e.checksum.as_ptr())
}

/// Copies the vector of `node` into `out`, which holds `out_len` doubles.
///
/// # Safety
/// `out` must be writable for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn solarcast_embedding_row(
    embedding: *const SolarcastEmbedding,
    node: usize,
    out: *mut f64,
    out_len: usize,
) -> SolarcastStatus {
    guard(|| {
        let e = &non_null(embedding, "embedding")?.embedding;
        if node >= e.n {
            return Err(Failure::new(SolarcastStatus::OutOfRange, format!("node {node} of {}", e.n)));
        }
        if out_len != e.dims {
            return Err(Failure::new(
                SolarcastStatus::InvalidArgument,
                format!("buffer holds {out_len}, dims is {}", e.dims),
            ));
        }
        slice_mut(out, out_len, "out")?.copy_from_slice(e.row(node));
        Ok(())
    })
}

/// Great-circle distance in km on a sphere of radius 6371 km.
#[no_mangle]
pub extern "C" fn solarcast_haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    haversine(&Location::new(0, lat1, lon1), &Location::new(1, lat2, lon2))
}

/// Solar zenith angle in degrees for a local clock time whose noon is solar
/// noon at `reference_meridian`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn solarcast_solar_zenith(
    lat: f64,
    lon: f64,
    year: i32,
    month: u32,
    day: u32,
    hour: u32,
    minute: u32,
    reference_meridian: f64,
    out: *mut f64,
) -> SolarcastStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let t = NaiveDate::from_ymd_opt(year, month, day).and_then(|d| d.and_hms_opt(hour, minute, 0)).ok_or_else(
            || {
                Failure::new(
                    SolarcastStatus::InvalidArgument,
                    format!("{year}-{month}-{day} {hour}:{minute} is not a valid time"),
                )
            },
        )?;
        if ![lat, lon, reference_meridian].iter().all(|v| v.is_finite()) || lat.abs() > 90.0 {
            return Err(Failure::new(SolarcastStatus::InvalidArgument, "coordinates out of range"));
        }
        *out = solar_zenith(lat, lon, t, reference_meridian);
        Ok(())
    })
}

/// Clear-sky GHI in W/m² for a zenith angle in degrees; 0 at or below the
/// horizon.
#[no_mangle]
pub extern "C" fn solarcast_clear_sky_ghi(sza_deg: f64) -> f64 {
    clear_sky_ghi(sza_deg)
}

/// Panel output in watts: `ghi * area * efficiency`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn solarcast_irradiance_to_power(
    ghi: f64,
    area_m2: f64,
    efficiency: f64,
    out: *mut f64,
) -> SolarcastStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = irradiance_to_power(ghi, area_m2, efficiency)?;
        Ok(())
    })
}

/// R², MAE and RMSE of `n` predictions.
///
/// # Safety
/// `y_true` and `y_pred` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn solarcast_metrics(
    y_true: *const f64,
    y_pred: *const f64,
    n: usize,
    out: *mut SolarcastMetrics,
) -> SolarcastStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let (t, p) = (slice(y_true, n, "y_true")?, slice(y_pred, n, "y_pred")?);
        *out = SolarcastMetrics { r2: r2(t, p)?, mae: mae(t, p)?, rmse: rmse(t, p)? };
        Ok(())
    })
}

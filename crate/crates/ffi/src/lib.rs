//! C ABI over the `hwdemand` library.
//!
//! Every function returns an [`HwdStatus`]; on failure a message for the
//! calling thread is available from [`hwd_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `_free` function. Strings returned through `char **` are owned by the
//! caller and released with [`hwd_string_free`]. Panics never unwind into C;
//! they are reported as `HWD_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hwdemand::calendar::{build_calendar, emit_calendar, CalendarFormat};
use hwdemand::eventdetect::{detect_events, events_to_csv, EventConfig};
use hwdemand::metrics::MetricTriple;
use hwdemand::neuralnet::{load_model, predict_series, save_model, LstmModel};
use hwdemand::timeseries::{forward_fill_resample, parse_series, RegularSeries, DEFAULT_STEP_SECONDS};
use hwdemand::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HwdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Numeric = 5,
    Checkpoint = 6,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HwdMetrics {
    /// Mean absolute percentage error as a ratio.
    pub mape: f64,
    pub rmse: f64,
    pub r2: f64,
}

/// Opaque regular one-minute temperature series.
pub struct HwdSeries(RegularSeries);

/// Opaque trained forecaster.
pub struct HwdModel(LstmModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn status_of(err: &Error) -> HwdStatus {
    match err {
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) | Error::UnknownFormat(_) => HwdStatus::Parse,
        Error::Io(_) => HwdStatus::Io,
        Error::Checkpoint(_) | Error::VersionMismatch { .. } => HwdStatus::Checkpoint,
        Error::NonFinite { .. }
        | Error::NonFiniteParameter(_)
        | Error::DegenerateScaler(_)
        | Error::NearZeroActual { .. }
        | Error::ConstantActual
        | Error::IdenticalPoints => HwdStatus::Numeric,
        _ => HwdStatus::InvalidArgument,
    }
}

struct Failure(HwdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(HwdStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `body`, converting errors and panics into a status plus message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> HwdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            HwdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            HwdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HwdStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(HwdStatus::InvalidArgument, "output contains a nul byte".into()))
}

/// Message describing the last failure on this thread; empty after success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn hwd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn hwd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses `timestamp,t_mid` CSV text and forward-fills it onto a one-minute grid.
#[no_mangle]
pub unsafe extern "C" fn hwd_series_from_csv(csv_text: *const c_char, household_id: *const c_char, out: *mut *mut HwdSeries) -> HwdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(csv_text, "csv_text")?;
        let id = str_arg(household_id, "household_id")?;
        let series = forward_fill_resample(&parse_series(text, id)?, DEFAULT_STEP_SECONDS)?;
        *out = Box::into_raw(Box::new(HwdSeries(series)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hwd_series_len(series: *const HwdSeries, out_len: *mut usize) -> HwdStatus {
    guard(|| {
        *out_arg(out_len, "out_len")? = ref_arg(series, "series")?.0.len();
        Ok(())
    })
}

/// UTC seconds of the first value.
#[no_mangle]
pub unsafe extern "C" fn hwd_series_start(series: *const HwdSeries, out_start: *mut i64) -> HwdStatus {
    guard(|| {
        *out_arg(out_start, "out_start")? = ref_arg(series, "series")?.0.start();
        Ok(())
    })
}

/// Copies up to `capacity` values into `buffer`; `out_written` receives the
/// number copied. A buffer shorter than the series is an error.
#[no_mangle]
pub unsafe extern "C" fn hwd_series_values(
    series: *const HwdSeries,
    buffer: *mut f64,
    capacity: usize,
    out_written: *mut usize,
) -> HwdStatus {
    guard(|| {
        let values = ref_arg(series, "series")?.0.values();
        let written = out_arg(out_written, "out_written")?;
        *written = 0;
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        if capacity < values.len() {
            return Err(Failure(
                HwdStatus::InvalidArgument,
                format!("buffer holds {capacity} values, series has {}", values.len()),
            ));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buffer, values.len());
        *written = values.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hwd_series_free(series: *mut HwdSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Loads a JSON checkpoint.
#[no_mangle]
pub unsafe extern "C" fn hwd_model_load(path: *const c_char, out: *mut *mut HwdModel) -> HwdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = load_model(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(HwdModel(model)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hwd_model_save(model: *const HwdModel, path: *const c_char) -> HwdStatus {
    guard(|| {
        save_model(&ref_arg(model, "model")?.0, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Window length the model consumes; predictions start this many steps
/// after the input series.
#[no_mangle]
pub unsafe extern "C" fn hwd_model_lookback(model: *const HwdModel, out_lookback: *mut usize) -> HwdStatus {
    guard(|| {
        *out_arg(out_lookback, "out_lookback")? = ref_arg(model, "model")?.0.config.lookback;
        Ok(())
    })
}

/// Teacher-forced one-step forecast over `input`.
#[no_mangle]
pub unsafe extern "C" fn hwd_model_predict(model: *const HwdModel, input: *const HwdSeries, out: *mut *mut HwdSeries) -> HwdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let pred = predict_series(&ref_arg(model, "model")?.0, &ref_arg(input, "input")?.0)?;
        *out = Box::into_raw(Box::new(HwdSeries(pred)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hwd_model_free(model: *mut HwdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// MAPE, RMSE and R² of `predicted` against `actual`, both of length `n`.
#[no_mangle]
pub unsafe extern "C" fn hwd_metrics(actual: *const f64, predicted: *const f64, n: usize, out: *mut HwdMetrics) -> HwdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if actual.is_null() {
            return Err(null("actual"));
        }
        if predicted.is_null() {
            return Err(null("predicted"));
        }
        let a = std::slice::from_raw_parts(actual, n);
        let p = std::slice::from_raw_parts(predicted, n);
        let m = MetricTriple::evaluate(a, p)?;
        *out = HwdMetrics {
            mape: m.mape,
            rmse: m.rmse,
            r2: m.r2,
        };
        Ok(())
    })
}

fn event_config(contamination: f64, seed: u64) -> EventConfig {
    EventConfig {
        contamination,
        seed,
        ..EventConfig::default()
    }
}

/// Shower events in `series` as CSV
/// (`household,start_iso8601,duration_min,peak_drop_c,score`).
#[no_mangle]
pub unsafe extern "C" fn hwd_detect_events_csv(
    series: *const HwdSeries,
    contamination: f64,
    seed: u64,
    out_csv: *mut *mut c_char,
) -> HwdStatus {
    guard(|| {
        let out = out_arg(out_csv, "out_csv")?;
        *out = ptr::null_mut();
        let s = &ref_arg(series, "series")?.0;
        let events = detect_events(s, &event_config(contamination, seed))?;
        let rows: Vec<_> = events.into_iter().map(|e| (s.household_id().to_string(), e)).collect();
        *out = into_c_string(events_to_csv(&rows))?;
        Ok(())
    })
}

/// Weekly calendar JSON of the events in `series`, binned at a fixed UTC offset.
#[no_mangle]
pub unsafe extern "C" fn hwd_calendar_json(
    series: *const HwdSeries,
    contamination: f64,
    utc_offset_seconds: i32,
    seed: u64,
    out_json: *mut *mut c_char,
) -> HwdStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        *out = ptr::null_mut();
        let s = &ref_arg(series, "series")?.0;
        let events = detect_events(s, &event_config(contamination, seed))?;
        let period = (s.start(), s.end() + i64::from(s.step_seconds()));
        let cal = build_calendar(s.household_id(), &events, period, utc_offset_seconds, contamination)?;
        let bytes = emit_calendar(&cal, CalendarFormat::Json)?;
        *out = into_c_string(String::from_utf8(bytes).expect("JSON is UTF-8"))?;
        Ok(())
    })
}

/// Releases a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn hwd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

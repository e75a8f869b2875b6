//! C ABI over `aers-core`.
//!
//! Every fallible function returns an [`AersStatus`]; on failure a message is
//! available from [`aers_last_error_message`] on the same thread. Objects are
//! opaque handles released with their matching `*_free` function. Strings
//! handed out by the library are UTF-8 and NUL-terminated.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use aers_core::ingest::IngestError;
use aers_core::model::{export_snapshot, import_snapshot};
use aers_core::pipeline::{ingest_directory, IngestOptions};
use aers_core::stats::{corpus_summary, percentile, standard_errors, top_n, RankMetric};
use aers_core::surveil::{detect_outbreaks, DetectConfig};
use aers_core::{normalize_drug_name, CountStore, Error, ModelError, Quarter, SurveilError, Weighting};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AersStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Schema = 5,
    Model = 6,
    Stats = 7,
    Panic = 99,
}

/// Ranking metric for [`aers_top_n`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub enum AersMetric {
    Qsum = 0,
    Qmax = 1,
    Qaverage = 2,
}

/// Subject weighting for [`aers_store_build_from_dir`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub enum AersWeighting {
    Additive = 0,
    Multiplicative = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: AersStatus, message: impl Into<String>) -> AersStatus {
    set_error(message);
    status
}

fn status_of(e: &Error) -> AersStatus {
    match e {
        Error::Ingest(IngestError::Io { .. } | IngestError::MissingDrugFile { .. } | IngestError::NoQuarters(_)) => {
            AersStatus::Io
        }
        Error::Ingest(IngestError::SchemaMismatch { .. } | IngestError::Schema(_)) => AersStatus::Schema,
        Error::Model(ModelError::Io { .. }) => AersStatus::Io,
        Error::Model(ModelError::Snapshot { .. }) => AersStatus::Parse,
        Error::Model(_) => AersStatus::Model,
        Error::Surveil(SurveilError::Config(_)) => AersStatus::InvalidArgument,
        Error::Quarter(_) => AersStatus::InvalidArgument,
        Error::Stats(_) | Error::Surveil(_) | Error::Synth(_) => AersStatus::Stats,
    }
}

fn from_error(e: impl Into<Error>) -> AersStatus {
    let e = e.into();
    fail(status_of(&e), e.to_string())
}

/// Runs `body`, turning panics into [`AersStatus::Panic`].
fn guard(body: impl FnOnce() -> Result<(), AersStatus>) -> AersStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AersStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(AersStatus::Panic, format!("internal error: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AersStatus> {
    if p.is_null() {
        return Err(fail(AersStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(AersStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn store_arg<'a>(p: *const AersStore) -> Result<&'a CountStore, AersStatus> {
    p.as_ref().map(|s| &s.inner).ok_or_else(|| fail(AersStatus::NullPointer, "store is null"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), AersStatus> {
    if out.is_null() {
        return Err(fail(AersStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn owned_c_string(s: &str) -> CString {
    CString::new(s.replace('\0', "\u{FFFD}")).expect("NULs replaced")
}

/// Message for the last failure on this thread; empty after a success.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn aers_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn aers_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Drug-name by quarter count store.
pub struct AersStore {
    inner: CountStore,
}

/// Loads a snapshot CSV (with its `.meta.json` beside it).
///
/// # Safety
/// `csv_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_store_import(csv_path: *const c_char, out: *mut *mut AersStore) -> AersStatus {
    guard(|| {
        let path = str_arg(csv_path, "csv_path")?;
        let inner = import_snapshot(Path::new(path)).map_err(from_error)?;
        write_out(out, Box::into_raw(Box::new(AersStore { inner })))
    })
}

/// Ingests every quarter found in `dir` using the default schema, or the
/// one named by `AERS_SCHEMA`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_store_build_from_dir(
    dir: *const c_char,
    weighting: u32,
    out: *mut *mut AersStore,
) -> AersStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        let weighting = match weighting {
            w if w == AersWeighting::Additive as u32 => Weighting::Additive,
            w if w == AersWeighting::Multiplicative as u32 => Weighting::Multiplicative,
            w => return Err(fail(AersStatus::InvalidArgument, format!("unknown weighting {w}"))),
        };
        let schema = aers_core::ingest::SchemaConfig::from_env().map_err(|e| from_error(IngestError::from(e)))?;
        let options = IngestOptions { range: None, weighting, schema };
        let inner = ingest_directory(Path::new(dir), &options).map_err(from_error)?.store;
        write_out(out, Box::into_raw(Box::new(AersStore { inner })))
    })
}

/// Writes the snapshot CSV and its `.meta.json`.
///
/// # Safety
/// `store` must come from this library; `csv_path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn aers_store_export(store: *const AersStore, csv_path: *const c_char) -> AersStatus {
    guard(|| {
        let store = store_arg(store)?;
        let path = str_arg(csv_path, "csv_path")?;
        export_snapshot(store, Path::new(path)).map(drop).map_err(from_error)
    })
}

/// # Safety
/// `store` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn aers_store_free(store: *mut AersStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Store dimensions and totals.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AersStoreInfo {
    pub drug_names: u64,
    pub quarters: u64,
    pub total_subjects: u64,
    pub total_events: u64,
}

/// # Safety
/// `store` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_store_info(store: *const AersStore, out: *mut AersStoreInfo) -> AersStatus {
    guard(|| {
        let s = store_arg(store)?;
        write_out(
            out,
            AersStoreInfo {
                drug_names: s.drug_count() as u64,
                quarters: s.quarters().len() as u64,
                total_subjects: s.total_subjects(),
                total_events: s.total_events(),
            },
        )
    })
}

/// Count for one drug (normalized before lookup) in one quarter; 0 when
/// absent.
///
/// # Safety
/// `store` must come from this library; `drug` must be NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_store_count(
    store: *const AersStore,
    drug: *const c_char,
    year: u16,
    quarter: u8,
    out: *mut u64,
) -> AersStatus {
    guard(|| {
        let s = store_arg(store)?;
        let drug = normalize_drug_name(str_arg(drug, "drug")?);
        let q = Quarter::new(year, quarter).map_err(from_error)?;
        write_out(out, s.count(&drug, q))
    })
}

/// Corpus-wide statistics of per-drug totals. Absent values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AersCorpusSummary {
    pub n_drug_names: u64,
    pub sum: u64,
    pub mean: f64,
    pub se_mean: f64,
    pub sd: f64,
    pub variance: f64,
    pub skewness: f64,
    pub se_skewness: f64,
    pub kurtosis: f64,
    pub se_kurtosis: f64,
    pub range: u64,
    pub min: u64,
    pub max: u64,
    pub median: f64,
    pub mode: u64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

/// # Safety
/// `store` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_corpus_summary(store: *const AersStore, out: *mut AersCorpusSummary) -> AersStatus {
    guard(|| {
        let s = corpus_summary(store_arg(store)?).map_err(from_error)?;
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        write_out(
            out,
            AersCorpusSummary {
                n_drug_names: s.n_drug_names,
                sum: s.sum,
                mean: s.mean,
                se_mean: nan(s.se_mean),
                sd: nan(s.sd),
                variance: nan(s.variance),
                skewness: nan(s.skewness),
                se_skewness: nan(s.se_skewness),
                kurtosis: nan(s.kurtosis),
                se_kurtosis: nan(s.se_kurtosis),
                range: s.range,
                min: s.min,
                max: s.max,
                median: s.median,
                mode: s.mode,
                p25: s.p25,
                p50: s.p50,
                p75: s.p75,
            },
        )
    })
}

/// One row of [`aers_top_n`]. `drug` is owned by the list.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AersMeasures {
    pub drug: *const c_char,
    pub qsum: u64,
    pub qmin: u64,
    pub qmax: u64,
    pub qmedian: f64,
    pub qaverage: f64,
    pub qsd: f64,
    pub active_quarters: u32,
}

pub struct AersMeasuresList {
    names: Vec<CString>,
    rows: Vec<aers_core::stats::QuarterlyMeasures>,
}

/// # Safety
/// `store` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_top_n(
    store: *const AersStore,
    n: usize,
    metric: u32,
    out: *mut *mut AersMeasuresList,
) -> AersStatus {
    guard(|| {
        let store = store_arg(store)?;
        let metric = match metric {
            m if m == AersMetric::Qsum as u32 => RankMetric::Qsum,
            m if m == AersMetric::Qmax as u32 => RankMetric::Qmax,
            m if m == AersMetric::Qaverage as u32 => RankMetric::Qaverage,
            m => return Err(fail(AersStatus::InvalidArgument, format!("unknown metric {m}"))),
        };
        let rows = top_n(store, n, metric);
        let names = rows.iter().map(|r| owned_c_string(r.drug.as_str())).collect();
        write_out(out, Box::into_raw(Box::new(AersMeasuresList { names, rows })))
    })
}

/// # Safety
/// `list` must come from [`aers_top_n`] or be null.
#[no_mangle]
pub unsafe extern "C" fn aers_measures_len(list: *const AersMeasuresList) -> usize {
    list.as_ref().map_or(0, |l| l.rows.len())
}

/// # Safety
/// `list` must come from [`aers_top_n`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_measures_get(
    list: *const AersMeasuresList,
    index: usize,
    out: *mut AersMeasures,
) -> AersStatus {
    guard(|| {
        let l = list.as_ref().ok_or_else(|| fail(AersStatus::NullPointer, "list is null"))?;
        let r = l
            .rows
            .get(index)
            .ok_or_else(|| fail(AersStatus::InvalidArgument, format!("index {index} out of range")))?;
        write_out(
            out,
            AersMeasures {
                drug: l.names[index].as_ptr(),
                qsum: r.qsum,
                qmin: r.qmin,
                qmax: r.qmax,
                qmedian: r.qmedian,
                qaverage: r.qaverage,
                qsd: r.qsd,
                active_quarters: r.active_quarters,
            },
        )
    })
}

/// # Safety
/// `list` must come from [`aers_top_n`] and not be used afterwards. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn aers_measures_free(list: *mut AersMeasuresList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

/// One row of [`aers_detect`]. `drug` is owned by the list.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AersAlert {
    pub drug: *const c_char,
    pub year: u16,
    pub quarter: u8,
    pub count: u64,
    pub baseline_median: f64,
    pub baseline_sd: f64,
    pub score: f64,
    pub fold_change: f64,
}

pub struct AersAlertList {
    names: Vec<CString>,
    alerts: Vec<aers_core::surveil::Alert>,
}

/// Outbreak alerts, sorted by descending score.
///
/// # Safety
/// `store` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_detect(
    store: *const AersStore,
    theta: f64,
    min_count: u64,
    min_active: usize,
    out: *mut *mut AersAlertList,
) -> AersStatus {
    guard(|| {
        let store = store_arg(store)?;
        let config = DetectConfig { theta, min_count, min_active };
        let alerts = detect_outbreaks(store, &config).map_err(from_error)?;
        let names = alerts.iter().map(|a| owned_c_string(a.drug.as_str())).collect();
        write_out(out, Box::into_raw(Box::new(AersAlertList { names, alerts })))
    })
}

/// # Safety
/// `list` must come from [`aers_detect`] or be null.
#[no_mangle]
pub unsafe extern "C" fn aers_alerts_len(list: *const AersAlertList) -> usize {
    list.as_ref().map_or(0, |l| l.alerts.len())
}

/// # Safety
/// `list` must come from [`aers_detect`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_alerts_get(list: *const AersAlertList, index: usize, out: *mut AersAlert) -> AersStatus {
    guard(|| {
        let l = list.as_ref().ok_or_else(|| fail(AersStatus::NullPointer, "list is null"))?;
        let a = l
            .alerts
            .get(index)
            .ok_or_else(|| fail(AersStatus::InvalidArgument, format!("index {index} out of range")))?;
        write_out(
            out,
            AersAlert {
                drug: l.names[index].as_ptr(),
                year: a.quarter.year(),
                quarter: a.quarter.q(),
                count: a.count,
                baseline_median: a.baseline_median,
                baseline_sd: a.baseline_sd,
                score: a.departure_score,
                fold_change: a.fold_change,
            },
        )
    })
}

/// # Safety
/// `list` must come from [`aers_detect`] and not be used afterwards. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn aers_alerts_free(list: *mut AersAlertList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

/// Standard errors of skewness and kurtosis for sample size `n >= 4`.
///
/// # Safety
/// Both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_standard_errors(n: u64, se_skewness: *mut f64, se_kurtosis: *mut f64) -> AersStatus {
    guard(|| {
        if se_skewness.is_null() || se_kurtosis.is_null() {
            return Err(fail(AersStatus::NullPointer, "output pointer is null"));
        }
        let (s, k) = standard_errors(n).map_err(from_error)?;
        write_out(se_skewness, s)?;
        write_out(se_kurtosis, k)
    })
}

/// Percentile `p` in `[0, 1]` of `len` values.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_percentile(values: *const f64, len: usize, p: f64, out: *mut f64) -> AersStatus {
    guard(|| {
        if values.is_null() && len > 0 {
            return Err(fail(AersStatus::NullPointer, "values is null"));
        }
        let slice = if len == 0 { &[][..] } else { std::slice::from_raw_parts(values, len) };
        let v = percentile(slice, p).map_err(from_error)?;
        write_out(out, v)
    })
}

/// Normalized form of a raw drug name. Release the result with
/// [`aers_string_free`].
///
/// # Safety
/// `raw` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aers_normalize_drug_name(raw: *const c_char, out: *mut *mut c_char) -> AersStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        let name = normalize_drug_name(raw);
        write_out(out, owned_c_string(name.as_str()).into_raw())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn aers_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

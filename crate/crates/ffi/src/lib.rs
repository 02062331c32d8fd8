//! C ABI over `knnball`.
//!
//! Every fallible function returns a [`KbStatus`] and writes its result
//! through an out-pointer. On failure, [`kb_last_error`] returns a message
//! for the calling thread. Strings handed out by the library are released
//! with [`kb_string_free`]; experiments with [`kb_experiment_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use knnball::experiment::{
    persist, run_experiment_with_workers, ExperimentConfig, OutputPaths, SummaryReport,
};
use knnball::geometry::{
    ball_box_volume, spherical_cap_volume, union_two_balls_cone_sector, union_two_balls_exact,
    unit_ball_volume, BallUnionQuery, BoxVolumeQuery,
};
use knnball::limits::{self, ThresholdParams};
use knnball::measures::PointSample;
use knnball::nn::kth_nn_radii;
use knnball::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KbStatus {
    Ok = 0,
    InvalidArgument = 1,
    ThresholdOutOfRange = 2,
    GridDegenerate = 3,
    Density = 4,
    Io = 5,
    Parse = 6,
    NullPointer = 7,
    /// The experiment has not been run yet.
    NotRun = 8,
    Panic = 9,
}

/// One replicate's outputs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KbRecord {
    pub replicate_id: u64,
    pub seed: u64,
    pub count: u64,
    pub hat_count: u64,
    pub max_content: f64,
    pub centered_max: f64,
    pub occupancy_ok: bool,
}

/// Opaque experiment handle.
pub struct KbExperiment {
    config: ExperimentConfig,
    report: Option<SummaryReport>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(KbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) => KbStatus::InvalidArgument,
            Error::ThresholdOutOfRange { .. } => KbStatus::ThresholdOutOfRange,
            Error::GridDegenerate { .. } => KbStatus::GridDegenerate,
            Error::Density(_) => KbStatus::Density,
            Error::Io { .. } => KbStatus::Io,
            Error::Parse { .. } | Error::Json(_) => KbStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(KbStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            KbStatus::Panic
        }
    }
}

fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        Failure(
            KbStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn handle<'a>(h: *const KbExperiment) -> Result<&'a KbExperiment, Failure> {
    h.as_ref().ok_or_else(|| null("experiment handle"))
}

fn report(h: &KbExperiment) -> Result<&SummaryReport, Failure> {
    h.report
        .as_ref()
        .ok_or_else(|| Failure(KbStatus::NotRun, "experiment has not been run".into()))
}

/// Message for the last failure on this thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn kb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Volume of the unit ball in `d` dimensions.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_unit_ball_volume(d: usize, out: *mut f64) -> KbStatus {
    guard(|| write(out, unit_ball_volume(d)?))
}

/// Volume of `{x in B(0,1) : x_1 >= a}`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_spherical_cap_volume(d: usize, a: f64, out: *mut f64) -> KbStatus {
    guard(|| write(out, spherical_cap_volume(d, a)?))
}

/// Volume of the union of two radius-`r` balls with centers `t` apart.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_union_two_balls(d: usize, r: f64, t: f64, out: *mut f64) -> KbStatus {
    guard(|| write(out, union_two_balls_exact(&BallUnionQuery::new(d, r, t)?)))
}

/// Cone-sector approximation of the unit-ball union volume.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_union_two_balls_cone_sector(
    d: usize,
    t: f64,
    out: *mut f64,
) -> KbStatus {
    guard(|| write(out, union_two_balls_cone_sector(d, t)?))
}

/// Volume of `B(center, r)` inside the unit cube.
///
/// # Safety
/// `center` must point to `d` readable doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_ball_box_volume(
    center: *const f64,
    d: usize,
    r: f64,
    out: *mut f64,
) -> KbStatus {
    guard(|| {
        if center.is_null() {
            return Err(null("center"));
        }
        let c = std::slice::from_raw_parts(center, d).to_vec();
        write(out, ball_box_volume(&BoxVolumeQuery::new(c, r)?))
    })
}

/// Threshold `v` for sample size `n`, order `k`, level `t`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_threshold(n: u64, k: u64, t: f64, out: *mut f64) -> KbStatus {
    guard(|| write(out, limits::threshold(n, k, t)?))
}

/// Exact expected number of exceedances.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_expected_count(n: u64, k: u64, t: f64, out: *mut f64) -> KbStatus {
    guard(|| write(out, limits::expected_count(&ThresholdParams::new(n, k, t)?)))
}

/// `P(Bin(m, s) < k)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_binomial_tail(m: u64, k: u64, s: f64, out: *mut f64) -> KbStatus {
    guard(|| write(out, limits::binomial_tail(m, k, s)?))
}

/// Standard Gumbel distribution function.
#[no_mangle]
pub extern "C" fn kb_gumbel_cdf(t: f64) -> f64 {
    limits::gumbel_cdf(t)
}

/// Distance from each of `n` points to its `k`-th nearest neighbour.
///
/// `points` is row-major, `n * d` doubles in `[0, 1]`; `out` receives `n` radii.
///
/// # Safety
/// `points` must hold `n * d` readable doubles and `out` `n` writable ones.
#[no_mangle]
pub unsafe extern "C" fn kb_kth_nn_radii(
    points: *const f64,
    n: usize,
    d: usize,
    k: usize,
    out: *mut f64,
) -> KbStatus {
    guard(|| {
        if points.is_null() {
            return Err(null("points"));
        }
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let len = n
            .checked_mul(d)
            .ok_or_else(|| Failure(KbStatus::InvalidArgument, "n * d overflows".into()))?;
        let sample =
            PointSample::from_points(d, std::slice::from_raw_parts(points, len).to_vec(), 0)?;
        let radii = kth_nn_radii(&sample, k)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(radii.radii());
        Ok(())
    })
}

/// Creates an experiment from a JSON configuration.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_experiment_new(
    config_json: *const c_char,
    out: *mut *mut KbExperiment,
) -> KbStatus {
    guard(|| {
        let text = str_arg(config_json, "config")?;
        let config: ExperimentConfig = serde_json::from_str(text).map_err(Error::from)?;
        config.validate()?;
        write(
            out,
            Box::into_raw(Box::new(KbExperiment {
                config,
                report: None,
            })),
        )
    })
}

/// Runs all replicates. `workers == 0` uses every core.
///
/// # Safety
/// `h` must be a live handle from [`kb_experiment_new`].
#[no_mangle]
pub unsafe extern "C" fn kb_experiment_run(h: *mut KbExperiment, workers: usize) -> KbStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| null("experiment handle"))?;
        let workers = (workers > 0).then_some(workers);
        h.report = Some(run_experiment_with_workers(&h.config, workers)?);
        Ok(())
    })
}

/// Summary of a finished run as JSON; free with [`kb_string_free`].
///
/// # Safety
/// `h` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_experiment_summary_json(
    h: *const KbExperiment,
    out: *mut *mut c_char,
) -> KbStatus {
    guard(|| {
        let text = serde_json::to_string(report(handle(h)?)?).map_err(Error::from)?;
        let c = CString::new(text).map_err(|e| Failure(KbStatus::Parse, e.to_string()))?;
        write(out, c.into_raw())
    })
}

/// Writes `replicates.csv` and `summary.json` into `dir`.
///
/// # Safety
/// `h` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn kb_experiment_persist(
    h: *const KbExperiment,
    dir: *const c_char,
) -> KbStatus {
    guard(|| {
        let r = report(handle(h)?)?;
        let dir = str_arg(dir, "dir")?;
        Ok(persist(r, &OutputPaths::in_dir(Path::new(dir)))?)
    })
}

/// Number of replicate records.
///
/// # Safety
/// `h` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_experiment_record_count(
    h: *const KbExperiment,
    out: *mut usize,
) -> KbStatus {
    guard(|| write(out, report(handle(h)?)?.records.len()))
}

/// Record `i`, in replicate order.
///
/// # Safety
/// `h` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kb_experiment_record(
    h: *const KbExperiment,
    i: usize,
    out: *mut KbRecord,
) -> KbStatus {
    guard(|| {
        let r = report(handle(h)?)?.records.get(i).ok_or_else(|| {
            Failure(
                KbStatus::InvalidArgument,
                format!("record index {i} out of range"),
            )
        })?;
        write(
            out,
            KbRecord {
                replicate_id: r.replicate_id,
                seed: r.seed,
                count: r.count,
                hat_count: r.hat_count,
                max_content: r.max_content,
                centered_max: r.centered_max,
                occupancy_ok: r.occupancy_ok,
            },
        )
    })
}

/// Releases an experiment. Null is ignored.
///
/// # Safety
/// `h` must come from [`kb_experiment_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn kb_experiment_free(h: *mut KbExperiment) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

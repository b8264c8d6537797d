//! C ABI over `meg-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` / `*_load`
//! and released by the matching `*_free`. Every fallible call returns a
//! [`MegStatus`]; on failure the message is available from
//! [`meg_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use meg_core::channel::{noise_variance, transmission_time, ChannelSpec};
use meg_core::config::{load_scenario, ScenarioConfig};
use meg_core::content::{ContentGrid, LatentSeed, ProtocolId, SeedKind, TextPrompt};
use meg_core::metrics::expected_overhead;
use meg_core::pipeline::{Pipeline, PipelineParams};
use meg_core::protocol::{PayloadSizes, UplinkMode};
use meg_core::report::{cmd_run, cmd_table};
use meg_core::MegError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    ParseError = 4,
    IoError = 5,
    SimulationError = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque toy pipeline.
pub struct MegPipeline {
    inner: Pipeline,
}

/// Opaque resolved scenario.
pub struct MegScenario {
    inner: ScenarioConfig,
}

/// Bit totals of one protocol.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MegOverhead {
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    pub aggregate_bits: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &MegError) -> MegStatus {
    match err {
        MegError::DimensionMismatch { .. } => MegStatus::DimensionMismatch,
        MegError::InvalidParameter { .. }
        | MegError::InvalidPayload(_)
        | MegError::InvalidPartition(_)
        | MegError::UnknownProtocol(_)
        | MegError::ChannelConfig(_)
        | MegError::SelectionOutOfRange { .. }
        | MegError::Empty(_) => MegStatus::InvalidArgument,
        MegError::Parse { .. } | MegError::Json(_) => MegStatus::ParseError,
        MegError::Io { .. } | MegError::Csv(_) => MegStatus::IoError,
        MegError::Scheduling(_) | MegError::StepFailed { .. } => MegStatus::SimulationError,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (MegStatus, String)>) -> MegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MegStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MegStatus::Panic
        }
    }
}

fn core(err: MegError) -> (MegStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> (MegStatus, String) {
    (MegStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, name: &str) -> Result<&'a [f64], (MegStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn copy_out(values: &[f64], out: *mut f64, capacity: usize, out_len: *mut usize) -> Result<(), (MegStatus, String)> {
    if out_len.is_null() {
        return Err(null("out_len"));
    }
    *out_len = values.len();
    if capacity < values.len() {
        return Err((
            MegStatus::BufferTooSmall,
            format!("need {} values, buffer holds {capacity}", values.len()),
        ));
    }
    if out.is_null() {
        return Err(null("out"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, (MegStatus, String)> {
    if ptr.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| (MegStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn meg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn meg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a pipeline with latent dim `d` over `height`x`width` grids and
/// `pool_factor` sketches. `es_count` per-server generators are derived from `seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn meg_pipeline_new(
    d: usize,
    height: usize,
    width: usize,
    pool_factor: usize,
    es_count: usize,
    seed: u64,
    out: *mut *mut MegPipeline,
) -> MegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = PipelineParams::new(d, height, width, pool_factor, seed).with_es_count(es_count);
        let inner = Pipeline::build(params).map_err(core)?;
        *out = Box::into_raw(Box::new(MegPipeline { inner }));
        Ok(())
    })
}

/// # Safety
/// `pipeline` must come from [`meg_pipeline_new`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn meg_pipeline_free(pipeline: *mut MegPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Latent dimension, or 0 for NULL.
///
/// # Safety
/// `pipeline` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn meg_pipeline_latent_dim(pipeline: *const MegPipeline) -> usize {
    pipeline.as_ref().map_or(0, |p| p.inner.params().latent_dim)
}

/// Text embedding length expected by [`meg_pipeline_infer`], or 0 for NULL.
///
/// # Safety
/// `pipeline` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn meg_pipeline_text_dim(pipeline: *const MegPipeline) -> usize {
    pipeline.as_ref().map_or(0, |p| p.inner.params().text_dim)
}

/// Task seed of a row-major image and a text embedding.
///
/// # Safety
/// Input pointers must reference `*_len` readable doubles; `out` must hold
/// `capacity` doubles; `out_len` must be writable. `out_len` receives the
/// required length even when the buffer is too small.
#[no_mangle]
pub unsafe extern "C" fn meg_pipeline_infer(
    pipeline: *const MegPipeline,
    image: *const f64,
    image_len: usize,
    embedding: *const f64,
    embedding_len: usize,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> MegStatus {
    guard(|| {
        let p = &pipeline.as_ref().ok_or_else(|| null("pipeline"))?.inner;
        let params = p.params();
        let pixels = slice(image, image_len, "image")?.to_vec();
        let grid = ContentGrid::new(params.height, params.width, pixels, params.bits_per_pixel).map_err(core)?;
        let prompt = TextPrompt {
            text: String::new(),
            embedding: slice(embedding, embedding_len, "embedding")?.to_vec(),
            payload_bits: 0,
        };
        let seed = p.infer(&grid, &prompt).map_err(core)?;
        copy_out(seed.values(), out, capacity, out_len)
    })
}

/// Content seed from a task seed. `es_index < 0` selects the UE generator.
///
/// # Safety
/// As for [`meg_pipeline_infer`].
#[no_mangle]
pub unsafe extern "C" fn meg_pipeline_generate(
    pipeline: *const MegPipeline,
    seed: *const f64,
    seed_len: usize,
    es_index: i64,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> MegStatus {
    guard(|| {
        let p = &pipeline.as_ref().ok_or_else(|| null("pipeline"))?.inner;
        let values = slice(seed, seed_len, "seed")?.to_vec();
        let task = LatentSeed::new(values, SeedKind::TaskSeed, p.params().bits_per_feature).map_err(core)?;
        let es = usize::try_from(es_index).ok();
        let content = p.generate(&task, es).map_err(core)?;
        copy_out(content.values(), out, capacity, out_len)
    })
}

/// Row-major image of a content seed.
///
/// # Safety
/// As for [`meg_pipeline_infer`].
#[no_mangle]
pub unsafe extern "C" fn meg_pipeline_decode(
    pipeline: *const MegPipeline,
    seed: *const f64,
    seed_len: usize,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> MegStatus {
    guard(|| {
        let p = &pipeline.as_ref().ok_or_else(|| null("pipeline"))?.inner;
        let values = slice(seed, seed_len, "seed")?.to_vec();
        let content = LatentSeed::new(values, SeedKind::ContentSeed, p.params().bits_per_feature).map_err(core)?;
        let image = p.decode(&content).map_err(core)?;
        copy_out(image.values(), out, capacity, out_len)
    })
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meg_scenario_load(path: *const c_char, out: *mut *mut MegScenario) -> MegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let inner = load_scenario(Path::new(path)).map_err(core)?.config;
        *out = Box::into_raw(Box::new(MegScenario { inner }));
        Ok(())
    })
}

/// Parses a scenario from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meg_scenario_from_json(json: *const c_char, out: *mut *mut MegScenario) -> MegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(json, "json")?;
        let inner = ScenarioConfig::from_json_str(text, Path::new("<json>")).map_err(core)?.config;
        *out = Box::into_raw(Box::new(MegScenario { inner }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from a scenario constructor and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn meg_scenario_free(scenario: *mut MegScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Replaces the master seed.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn meg_scenario_set_seed(scenario: *mut MegScenario, master_seed: u64) -> MegStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        s.inner.reseed(master_seed);
        Ok(())
    })
}

/// Sets the number of trials.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn meg_scenario_set_trials(scenario: *mut MegScenario, trials: usize) -> MegStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        let mut next = s.inner.clone();
        next.trials = trials;
        next.validate().map_err(core)?;
        s.inner = next;
        Ok(())
    })
}

/// Runs the scenario and writes metrics.csv, overhead.csv,
/// overhead_breakdown.csv and transcript.json into `out_dir`.
///
/// # Safety
/// `scenario` must be a live handle; `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn meg_scenario_run(scenario: *const MegScenario, out_dir: *const c_char) -> MegStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let dir = str_arg(out_dir, "out_dir")?;
        cmd_run(&s.inner, Path::new(dir)).map_err(core)?;
        Ok(())
    })
}

/// Writes table.csv (per-protocol overhead) into `out_dir`.
///
/// # Safety
/// `scenario` must be a live handle; `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn meg_scenario_table(scenario: *const MegScenario, out_dir: *const c_char) -> MegStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let dir = str_arg(out_dir, "out_dir")?;
        cmd_table(&s.inner, Some(Path::new(dir))).map_err(core)?;
        Ok(())
    })
}

/// Closed-form overhead of one protocol, named as on the command line.
///
/// # Safety
/// `protocol` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meg_expected_overhead(
    protocol: *const c_char,
    image_bits: u64,
    seed_bits: u64,
    text_bits: u64,
    sketch_bits: u64,
    es_count: usize,
    unicast_uplink: bool,
    out: *mut MegOverhead,
) -> MegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let id: ProtocolId = str_arg(protocol, "protocol")?.parse().map_err(core)?;
        let sizes = PayloadSizes {
            image_bits,
            seed_bits,
            text_bits,
            sketch_bits,
        };
        let mode = if unicast_uplink { UplinkMode::Unicast } else { UplinkMode::Broadcast };
        let r = expected_overhead(id, &sizes, es_count, mode).map_err(core)?;
        *out = MegOverhead {
            uplink_bits: r.uplink_bits,
            downlink_bits: r.downlink_bits,
            aggregate_bits: r.aggregate_bits,
        };
        Ok(())
    })
}

/// `power * 10^(-snr_db/10)`.
#[no_mangle]
pub extern "C" fn meg_noise_variance(snr_db: f64, signal_power: f64) -> f64 {
    noise_variance(snr_db, signal_power)
}

/// Shannon-rate transmission time in seconds.
///
/// # Safety
/// `out_seconds` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meg_transmission_time(bits: u64, snr_db: f64, bandwidth_hz: f64, out_seconds: *mut f64) -> MegStatus {
    guard(|| {
        if out_seconds.is_null() {
            return Err(null("out_seconds"));
        }
        *out_seconds = transmission_time(bits, &ChannelSpec::new(snr_db, bandwidth_hz)).map_err(core)?;
        Ok(())
    })
}

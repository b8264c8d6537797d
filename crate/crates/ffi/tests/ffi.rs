use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use meg_ffi::*;

fn last_error() -> String {
    let p = meg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn pipeline_round_trip() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { meg_pipeline_new(8, 8, 8, 4, 2, 42, &mut p) }, MegStatus::Ok);
    let d = unsafe { meg_pipeline_latent_dim(p) };
    let t = unsafe { meg_pipeline_text_dim(p) };
    assert_eq!(d, 8);

    let image: Vec<f64> = (0..64).map(|i| (i % 7) as f64 / 7.0).collect();
    let embedding = vec![0.0; t];
    let mut seed = vec![0.0; d];
    let mut len = 0;
    let st = unsafe {
        meg_pipeline_infer(p, image.as_ptr(), image.len(), embedding.as_ptr(), t, seed.as_mut_ptr(), d, &mut len)
    };
    assert_eq!(st, MegStatus::Ok);
    assert_eq!(len, d);

    let mut content = vec![0.0; d];
    let st = unsafe { meg_pipeline_generate(p, seed.as_ptr(), d, -1, content.as_mut_ptr(), d, &mut len) };
    assert_eq!(st, MegStatus::Ok);
    let mut other = vec![0.0; d];
    let st = unsafe { meg_pipeline_generate(p, seed.as_ptr(), d, 1, other.as_mut_ptr(), d, &mut len) };
    assert_eq!(st, MegStatus::Ok);
    assert_ne!(content, other);

    let mut small = vec![0.0; 4];
    let st = unsafe { meg_pipeline_decode(p, content.as_ptr(), d, small.as_mut_ptr(), small.len(), &mut len) };
    assert_eq!(st, MegStatus::BufferTooSmall);
    assert_eq!(len, 64);
    let mut out = vec![0.0; len];
    let st = unsafe { meg_pipeline_decode(p, content.as_ptr(), d, out.as_mut_ptr(), out.len(), &mut len) };
    assert_eq!(st, MegStatus::Ok);
    unsafe { meg_pipeline_free(p) };
}

#[test]
fn errors_map_to_codes() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { meg_pipeline_new(8, 9, 8, 4, 1, 0, &mut p) }, MegStatus::InvalidArgument);
    assert!(last_error().contains("k must divide H"), "{}", last_error());
    assert!(p.is_null());
    assert_eq!(unsafe { meg_pipeline_new(8, 8, 8, 4, 1, 0, ptr::null_mut()) }, MegStatus::NullPointer);

    assert_eq!(unsafe { meg_pipeline_new(4, 8, 8, 4, 1, 0, &mut p) }, MegStatus::Ok);
    let mut out = [0.0; 4];
    let mut len = 0;
    let st = unsafe { meg_pipeline_infer(p, [0.5; 10].as_ptr(), 10, ptr::null(), 0, out.as_mut_ptr(), 4, &mut len) };
    assert_eq!(st, MegStatus::DimensionMismatch);
    unsafe { meg_pipeline_free(p) };
    unsafe { meg_pipeline_free(ptr::null_mut()) };
}

#[test]
fn overhead_and_channel_helpers() {
    let ciag = CString::new("CIAG").unwrap();
    let mut o = MegOverhead::default();
    let st = unsafe { meg_expected_overhead(ciag.as_ptr(), 1_300_000, 28_000, 1_000, 81_250, 1, false, &mut o) };
    assert_eq!(st, MegStatus::Ok);
    assert_eq!((o.uplink_bits, o.downlink_bits, o.aggregate_bits), (29_000, 28_000, 57_000));

    let bogus = CString::new("XYZ").unwrap();
    let st = unsafe { meg_expected_overhead(bogus.as_ptr(), 1, 1, 1, 1, 1, false, &mut o) };
    assert_eq!(st, MegStatus::InvalidArgument);

    assert!((meg_noise_variance(-20.0, 1.0) - 100.0).abs() < 1e-9);
    let mut secs = 0.0;
    assert_eq!(unsafe { meg_transmission_time(1000, 0.0, 1000.0, &mut secs) }, MegStatus::Ok);
    assert!((secs - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { meg_transmission_time(1000, 0.0, 0.0, &mut secs) }, MegStatus::InvalidArgument);
    assert!(!unsafe { CStr::from_ptr(meg_version()) }.to_bytes().is_empty());
}

#[test]
fn scenario_run_writes_outputs() {
    let json = CString::new(
        r#"{"protocols": ["CENTRAL", "CIAG"], "es_count": 1, "trials": 2,
            "pipeline": {"d": 8, "height": 16, "width": 16, "k": 4}}"#,
    )
    .unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { meg_scenario_from_json(json.as_ptr(), &mut s) }, MegStatus::Ok);
    assert_eq!(unsafe { meg_scenario_set_seed(s, 9) }, MegStatus::Ok);
    assert_eq!(unsafe { meg_scenario_set_trials(s, 0) }, MegStatus::InvalidArgument);
    assert_eq!(unsafe { meg_scenario_set_trials(s, 3) }, MegStatus::Ok);

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { meg_scenario_run(s, out.as_ptr()) }, MegStatus::Ok);
    assert_eq!(unsafe { meg_scenario_table(s, out.as_ptr()) }, MegStatus::Ok);
    for f in ["metrics.csv", "overhead.csv", "overhead_breakdown.csv", "transcript.json", "table.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let rows = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 3 * 2);
    unsafe { meg_scenario_free(s) };

    let bad = CString::new("{\"trials\": }").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { meg_scenario_from_json(bad.as_ptr(), &mut s) }, MegStatus::ParseError);
    let missing = CString::new("/nonexistent/scenario.json").unwrap();
    assert_eq!(unsafe { meg_scenario_load(missing.as_ptr(), &mut s) }, MegStatus::IoError);
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/meg.h");
    let text = std::fs::read_to_string(header).unwrap();
    for symbol in ["meg_pipeline_new", "meg_scenario_run", "meg_expected_overhead", "MEG_STATUS_BUFFER_TOO_SMALL"] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).status() else {
        return;
    };
    assert!(status.success());
}

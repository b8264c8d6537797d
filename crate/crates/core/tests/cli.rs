use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn meg(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_meg"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("meg binary runs")
}

fn shipped(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write_scenario(dir: &Path, json: &str) -> String {
    let path = dir.join("scenario.json");
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

fn out_dir(root: &Path, name: &str) -> PathBuf {
    root.join(name)
}

const SMALL: &str = r#"{"protocols": ["CENTRAL", "CIAG", "DCSUC"], "es_count": 2, "trials": 3,
    "pipeline": {"d": 8, "height": 16, "width": 16, "k": 4}}"#;

#[test]
fn validate_accepts_shipped_scenarios() {
    for name in ["reproduction.json", "minimal.json"] {
        let out = meg(&["validate", "--scenario", &shipped(name)], &[]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("CIAG"));
    }
}

#[test]
fn run_is_byte_identical_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let (a, b, c) = (out_dir(tmp.path(), "a"), out_dir(tmp.path(), "b"), out_dir(tmp.path(), "c"));
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = meg(&["run", "--scenario", &scenario, "--out", dir.to_str().unwrap(), "--seed", seed], &[]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["metrics.csv", "overhead.csv", "overhead_breakdown.csv", "transcript.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(c.join("metrics.csv")).unwrap());
    let leftovers: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".meg-stage"))
        .collect();
    assert!(leftovers.is_empty());

    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,protocol,request_id,arrival_s,response_time_s,generation_phase_s,mse,psnr_db,uplink_bits,downlink_bits,aggregate_bits,selected,snr_db"
    );
    assert_eq!(lines.count(), 3 * 3);
    let transcript: serde_json::Value = serde_json::from_slice(&fs::read(a.join("transcript.json")).unwrap()).unwrap();
    assert_eq!(transcript.as_array().unwrap().len(), 9);
    assert!(transcript[0]["steps"][0]["action"].is_string());
}

#[test]
fn reproduction_overhead_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = meg(
        &["run", "--scenario", &shipped("reproduction.json"), "--out", tmp.path().to_str().unwrap()],
        &[("MEG_TRIALS", "1")],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("overhead.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "CIAG,29000,28000,57000,45.6315789"), "{csv}");
    assert!(csv.lines().any(|l| l == "CENTRAL,1301000,1300000,2601000,1"), "{csv}");
    assert_eq!(fs::read_to_string(tmp.path().join("metrics.csv")).unwrap().lines().count(), 1 + 11);
}

#[test]
fn table_prints_and_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = meg(
        &["table", "--scenario", &shipped("reproduction.json"), "--out", tmp.path().to_str().unwrap()],
        &[],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("CIAG") && l.contains("57000") && l.contains("45.63")));
    let csv = fs::read_to_string(tmp.path().join("table.csv")).unwrap();
    assert!(csv.starts_with("protocol,operations,uplink_bits,downlink_bits,aggregate_bits,reduction_vs_central\n"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn sweep_writes_one_row_per_value_and_protocol() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let dir = out_dir(tmp.path(), "sweep");
    let out = meg(
        &[
            "sweep", "--scenario", &scenario, "--out", dir.to_str().unwrap(), "--param", "snr_db", "--values", "20,0,-20",
            "--protocols", "CIAG,CENTRAL",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("snr_db,20,CIAG,3,"));
    assert!(rows[5].starts_with("snr_db,-20,CENTRAL,3,"));
}

#[test]
fn env_overrides_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let dir = out_dir(tmp.path(), "env");
    let out = meg(
        &["run", "--scenario", &scenario, "--out", dir.to_str().unwrap()],
        &[("MEG_TRIALS", "2"), ("MEG_PROTOCOLS", "CIAG"), ("MEG_SNR_DB", "5")],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains(",CIAG,") && r.ends_with(",5")));
}

#[test]
fn pgm_export_writes_images() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        tmp.path(),
        r#"{"protocols": ["CIAG"], "trials": 2, "export_pgm": true, "pipeline": {"d": 8, "height": 16, "width": 16, "k": 4}}"#,
    );
    let dir = out_dir(tmp.path(), "pgm");
    assert!(meg(&["run", "--scenario", &scenario, "--out", dir.to_str().unwrap()], &[]).status.success());
    for label in ["input", "reference", "output"] {
        let bytes = fs::read(dir.join(format!("CIAG_r0_{label}.pgm"))).unwrap();
        assert!(bytes.starts_with(b"P5\n16 16\n255\n"));
    }
}

#[test]
fn bad_scenarios_fail_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = write_scenario(tmp.path(), "{\n  \"trials\": 3,\n  \"pipeline\": {\"k\": }\n}");
    let out = meg(&["validate", "--scenario", &broken], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));

    let invalid = write_scenario(tmp.path(), r#"{"pipeline": {"k": 3, "height": 64}}"#);
    let out = meg(&["validate", "--scenario", &invalid], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("k must divide H"));

    let out = meg(&["validate", "--scenario", &shipped("minimal.json"), "--protocols", "NOPE"], &[]);
    assert!(!out.status.success());
}

//! Artifact emission and the command implementations behind the `meg` binary.
//!
//! CSV column orders are fixed. Floats use 9 significant digits (`%.9g`),
//! infinities print as `inf` / `-inf`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::content::{PgmFormat, ProtocolId};
use crate::error::{MegError, Result};
use crate::metrics::{aggregate_trials, OverheadRecord};
use crate::pipeline::Pipeline;
use crate::protocol::{build_plan, Action, ProtocolPlan, Transcript};
use crate::sim::{run_scenario, run_trial, RunReport, Site};

pub const METRICS_HEADER: [&str; 13] = [
    "trial",
    "protocol",
    "request_id",
    "arrival_s",
    "response_time_s",
    "generation_phase_s",
    "mse",
    "psnr_db",
    "uplink_bits",
    "downlink_bits",
    "aggregate_bits",
    "selected",
    "snr_db",
];
pub const OVERHEAD_HEADER: [&str; 5] = ["protocol", "uplink_bits", "downlink_bits", "aggregate_bits", "reduction_vs_central"];
pub const BREAKDOWN_HEADER: [&str; 4] = ["protocol", "direction", "kind", "bits"];
pub const SWEEP_HEADER: [&str; 11] = [
    "param",
    "value",
    "protocol",
    "trials",
    "psnr_mean_db",
    "psnr_std_db",
    "mse_mean",
    "response_time_mean_s",
    "response_time_std_s",
    "aggregate_bits",
    "generation_phase_mean_s",
];
pub const TABLE_HEADER: [&str; 6] = [
    "protocol",
    "operations",
    "uplink_bits",
    "downlink_bits",
    "aggregate_bits",
    "reduction_vs_central",
];

/// `%.9g`.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    const P: i32 = 9;
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= P {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| MegError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

pub fn write_metrics_csv(path: &Path, reports: &[RunReport], snr_db: f64) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in reports {
        w.write_record([
            r.trial.to_string(),
            r.protocol.to_string(),
            r.request_id.to_string(),
            fmt_g(r.arrival),
            fmt_g(r.response_time),
            fmt_g(r.generation_phase),
            fmt_g(r.quality.mse),
            fmt_g(r.quality.psnr_db),
            r.overhead.uplink_bits.to_string(),
            r.overhead.downlink_bits.to_string(),
            r.overhead.aggregate_bits.to_string(),
            r.transcript.selected.map(|s| s.to_string()).unwrap_or_default(),
            fmt_g(snr_db),
        ])?;
    }
    w.flush().map_err(|e| MegError::io(path, e))
}

/// One record per protocol, in first-seen order.
pub fn overhead_by_protocol(reports: &[RunReport]) -> Vec<OverheadRecord> {
    let mut seen = Vec::new();
    let mut out: Vec<OverheadRecord> = Vec::new();
    for r in reports {
        if !seen.contains(&r.protocol) {
            seen.push(r.protocol);
            out.push(r.overhead.clone());
        }
    }
    out
}

/// Aggregate bits of CENTRAL divided by each protocol's aggregate bits.
pub fn reduction_vs_central(records: &[OverheadRecord], central: &OverheadRecord) -> Vec<Option<f64>> {
    records
        .iter()
        .map(|r| (r.aggregate_bits > 0).then(|| central.aggregate_bits as f64 / r.aggregate_bits as f64))
        .collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_else(|| "inf".into())
}

pub fn write_overhead_csv(path: &Path, records: &[OverheadRecord], central: &OverheadRecord) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(OVERHEAD_HEADER)?;
    for (r, red) in records.iter().zip(reduction_vs_central(records, central)) {
        w.write_record([
            r.protocol.to_string(),
            r.uplink_bits.to_string(),
            r.downlink_bits.to_string(),
            r.aggregate_bits.to_string(),
            fmt_opt(red),
        ])?;
    }
    w.flush().map_err(|e| MegError::io(path, e))
}

pub fn write_breakdown_csv(path: &Path, records: &[OverheadRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(BREAKDOWN_HEADER)?;
    for r in records {
        for e in &r.breakdown {
            w.write_record([r.protocol.to_string(), e.direction.to_string(), e.kind.to_string(), e.bits.to_string()])?;
        }
    }
    w.flush().map_err(|e| MegError::io(path, e))
}

#[derive(Serialize)]
struct TranscriptEntry<'a> {
    trial: usize,
    #[serde(flatten)]
    transcript: &'a Transcript,
}

pub fn write_transcripts(path: &Path, reports: &[RunReport]) -> Result<()> {
    let file = File::create(path).map_err(|e| MegError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let entries: Vec<TranscriptEntry<'_>> = reports
        .iter()
        .map(|r| TranscriptEntry {
            trial: r.trial,
            transcript: &r.transcript,
        })
        .collect();
    serde_json::to_writer_pretty(&mut out, &entries)?;
    out.write_all(b"\n").map_err(|e| MegError::io(path, e))?;
    out.flush().map_err(|e| MegError::io(path, e))
}

/// Input, reference and output images of trial 0.
pub fn write_pgms(dir: &Path, reports: &[RunReport]) -> Result<()> {
    for r in reports.iter().filter(|r| r.trial == 0) {
        let stem = format!("{}_r{}", r.protocol, r.request_id);
        let grids = [
            ("input", &r.input_image),
            ("reference", r.transcript.reference_output()),
            ("output", r.transcript.final_output()),
        ];
        for (label, grid) in grids {
            let path = dir.join(format!("{stem}_{label}.pgm"));
            let file = File::create(&path).map_err(|e| MegError::io(&path, e))?;
            let mut out = BufWriter::new(file);
            grid.write_pgm(&mut out, PgmFormat::P5)?;
            out.flush().map_err(|e| MegError::io(&path, e))?;
        }
    }
    Ok(())
}

/// Compact description of a plan: site and action per step, with edge
/// server indices folded into `ES*` and repeats dropped.
pub fn operations_summary(plan: &ProtocolPlan) -> String {
    let fold = |s: Site| match s {
        Site::Ue => "UE".to_string(),
        Site::Es(_) if plan.es_count > 1 => "ES*".to_string(),
        Site::Es(i) => format!("ES{i}"),
    };
    let mut parts: Vec<String> = Vec::new();
    for step in &plan.steps {
        let part = match &step.action {
            Action::Transmit(t) => {
                let dst = if t.dst.len() > 1 { "ES*".to_string() } else { fold(t.dst[0]) };
                format!("{}->{} {}", fold(t.src), dst, t.payload.kind)
            }
            a => format!("{} {}", fold(step.site), a.name()),
        };
        if !parts.contains(&part) {
            parts.push(part);
        }
    }
    parts.join(" > ")
}

/// Writes into a hidden staging directory and moves the files into `out`
/// only once all of them were written.
fn staged<F: FnOnce(&Path) -> Result<()>>(out: &Path, write: F) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| MegError::io(out, e))?;
    let stage = tempfile::Builder::new()
        .prefix(".meg-stage-")
        .tempdir_in(out)
        .map_err(|e| MegError::io(out, e))?;
    write(stage.path())?;
    let mut names: Vec<PathBuf> = fs::read_dir(stage.path())
        .map_err(|e| MegError::io(stage.path(), e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| MegError::io(stage.path(), e)))
        .collect::<Result<_>>()?;
    names.sort();
    let mut written = Vec::with_capacity(names.len());
    for from in names {
        let to = out.join(from.file_name().expect("staged file name"));
        fs::rename(&from, &to).map_err(|e| MegError::io(&to, e))?;
        written.push(to);
    }
    Ok(written)
}

fn central_overhead(config: &ScenarioConfig, pipeline: &Pipeline, reports: &[RunReport]) -> Result<OverheadRecord> {
    if let Some(r) = reports.iter().find(|r| r.protocol == ProtocolId::Central) {
        return Ok(r.overhead.clone());
    }
    let one = ScenarioConfig {
        arrivals: vec![0.0],
        background: Vec::new(),
        ..config.clone()
    };
    let input = config.load_input_image(Path::new(""))?;
    let r = run_trial(&one, pipeline, input.as_ref(), 0, ProtocolId::Central)?;
    Ok(r[0].overhead.clone())
}

/// `run`: metrics.csv, overhead.csv, overhead_breakdown.csv, transcript.json
/// and, when enabled, PGM dumps.
pub fn cmd_run(config: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let reports = run_scenario(config)?;
    let pipeline = Pipeline::build(config.pipeline.clone())?;
    let records = overhead_by_protocol(&reports);
    let central = central_overhead(config, &pipeline, &reports)?;
    staged(out, |dir| {
        write_metrics_csv(&dir.join("metrics.csv"), &reports, config.channels.default.snr_db)?;
        write_overhead_csv(&dir.join("overhead.csv"), &records, &central)?;
        write_breakdown_csv(&dir.join("overhead_breakdown.csv"), &records)?;
        write_transcripts(&dir.join("transcript.json"), &reports)?;
        if config.export_pgm {
            write_pgms(dir, &reports)?;
        }
        Ok(())
    })
}

/// Sweepable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    SnrDb,
    EsCount,
    LatentDim,
    PoolFactor,
    SeedBits,
}

impl std::str::FromStr for SweepParam {
    type Err = MegError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "snr_db" | "snr" => SweepParam::SnrDb,
            "es_count" | "S" => SweepParam::EsCount,
            "d" | "latent_dim" => SweepParam::LatentDim,
            "k" | "pool_factor" => SweepParam::PoolFactor,
            "seed_bits" => SweepParam::SeedBits,
            other => {
                return Err(MegError::param(
                    "param",
                    format!("`{other}` is not one of snr_db, es_count, d, k, seed_bits"),
                ))
            }
        })
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::SnrDb => "snr_db",
            SweepParam::EsCount => "es_count",
            SweepParam::LatentDim => "d",
            SweepParam::PoolFactor => "k",
            SweepParam::SeedBits => "seed_bits",
        }
    }

    /// A copy of `config` with the parameter set to `value`.
    pub fn apply(self, config: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut c = config.clone();
        let whole = || -> Result<usize> {
            if value.fract() != 0.0 || value < 0.0 || !value.is_finite() {
                return Err(MegError::param(self.name(), format!("{value} is not a non-negative integer")));
            }
            Ok(value as usize)
        };
        match self {
            SweepParam::SnrDb => c.set_snr_db(value),
            SweepParam::EsCount => c.set_es_count(whole()?),
            SweepParam::LatentDim => c.pipeline.latent_dim = whole()?,
            SweepParam::PoolFactor => c.pipeline.pool_factor = whole()?,
            SweepParam::SeedBits => c.payload.seed_bits = Some(whole()? as u64),
        }
        c.validate()?;
        Ok(c)
    }
}

/// One sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub protocol: ProtocolId,
    pub trials: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub mse_mean: f64,
    pub response_mean: f64,
    pub response_std: f64,
    pub aggregate_bits: u64,
    pub generation_mean: f64,
}

pub fn run_sweep(config: &ScenarioConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(MegError::Empty("sweep values".into()));
    }
    let mut rows = Vec::new();
    for &value in values {
        let c = param.apply(config, value)?;
        let reports = run_scenario(&c)?;
        let mut by_protocol: BTreeMap<usize, Vec<&RunReport>> = BTreeMap::new();
        for r in &reports {
            let pos = c.protocols.iter().position(|p| *p == r.protocol).expect("configured protocol");
            by_protocol.entry(pos).or_default().push(r);
        }
        for (pos, rs) in by_protocol {
            let col = |f: fn(&RunReport) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let psnr = aggregate_trials(&col(|r| r.quality.psnr_db))?;
            let mse = aggregate_trials(&col(|r| r.quality.mse))?;
            let resp = aggregate_trials(&col(|r| r.response_time))?;
            let gen = aggregate_trials(&col(|r| r.generation_phase))?;
            rows.push(SweepRow {
                value,
                protocol: c.protocols[pos],
                trials: c.trials,
                psnr_mean: psnr.mean,
                psnr_std: psnr.std,
                mse_mean: mse.mean,
                response_mean: resp.mean,
                response_std: resp.std,
                aggregate_bits: rs[0].overhead.aggregate_bits,
                generation_mean: gen.mean,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, param: SweepParam, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            param.name().to_string(),
            fmt_g(r.value),
            r.protocol.to_string(),
            r.trials.to_string(),
            fmt_g(r.psnr_mean),
            fmt_g(r.psnr_std),
            fmt_g(r.mse_mean),
            fmt_g(r.response_mean),
            fmt_g(r.response_std),
            r.aggregate_bits.to_string(),
            fmt_g(r.generation_mean),
        ])?;
    }
    w.flush().map_err(|e| MegError::io(path, e))
}

pub fn cmd_sweep(config: &ScenarioConfig, param: SweepParam, values: &[f64], out: &Path) -> Result<Vec<PathBuf>> {
    let rows = run_sweep(config, param, values)?;
    staged(out, |dir| write_sweep_csv(&dir.join("sweep.csv"), param, &rows))
}

/// One row of the overhead comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub protocol: ProtocolId,
    pub operations: String,
    pub overhead: OverheadRecord,
    /// `None` when the protocol moves no bits.
    pub reduction_vs_central: Option<f64>,
}

/// Overhead of every configured protocol, measured from one executed request each.
pub fn overhead_table(config: &ScenarioConfig) -> Result<Vec<TableRow>> {
    config.validate()?;
    let one = ScenarioConfig {
        trials: 1,
        arrivals: vec![0.0],
        background: Vec::new(),
        ..config.clone()
    };
    let pipeline = Pipeline::build(one.pipeline.clone())?;
    let input = one.load_input_image(Path::new(""))?;
    let settings = one.plan_settings();
    let mut plans = Vec::new();
    let mut records = Vec::new();
    for &p in &one.protocols {
        plans.push(build_plan(p, &settings)?);
        records.push(run_trial(&one, &pipeline, input.as_ref(), 0, p)?.remove(0).overhead);
    }
    let central = central_overhead(&one, &pipeline, &[])?;
    let reductions = reduction_vs_central(&records, &central);
    Ok(plans
        .iter()
        .zip(records)
        .zip(reductions)
        .map(|((plan, overhead), reduction_vs_central)| TableRow {
            protocol: plan.protocol,
            operations: operations_summary(plan),
            overhead,
            reduction_vs_central,
        })
        .collect())
}

pub fn write_table_csv(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.protocol.to_string(),
            r.operations.clone(),
            r.overhead.uplink_bits.to_string(),
            r.overhead.downlink_bits.to_string(),
            r.overhead.aggregate_bits.to_string(),
            fmt_opt(r.reduction_vs_central),
        ])?;
    }
    w.flush().map_err(|e| MegError::io(path, e))
}

/// Plain-text rendering of the table.
pub fn render_table(rows: &[TableRow]) -> String {
    let mut s = format!(
        "{:<8} {:>12} {:>12} {:>12} {:>10}  {}\n",
        "protocol", "uplink", "downlink", "aggregate", "reduction", "operations"
    );
    for r in rows {
        let red = r.reduction_vs_central.map_or("-".to_string(), |x| format!("{x:.2}"));
        s.push_str(&format!(
            "{:<8} {:>12} {:>12} {:>12} {:>10}  {}\n",
            r.protocol.to_string(), r.overhead.uplink_bits, r.overhead.downlink_bits, r.overhead.aggregate_bits, red, r.operations
        ));
    }
    s
}

pub fn cmd_table(config: &ScenarioConfig, out: Option<&Path>) -> Result<(String, Vec<PathBuf>)> {
    let rows = overhead_table(config)?;
    let text = render_table(&rows);
    let written = match out {
        Some(dir) => staged(dir, |d| write_table_csv(&d.join("table.csv"), &rows))?,
        None => Vec::new(),
    };
    Ok((text, written))
}

/// Validation report: the resolved plan of every configured protocol.
pub fn cmd_validate(config: &ScenarioConfig) -> Result<String> {
    config.validate()?;
    let settings = config.plan_settings();
    let mut s = String::new();
    for &p in &config.protocols {
        let plan = build_plan(p, &settings)?;
        plan.validate()?;
        s.push_str(&format!("{p}: {} steps, {}\n", plan.steps.len(), operations_summary(&plan)));
    }
    Ok(s)
}

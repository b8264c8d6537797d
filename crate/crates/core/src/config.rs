//! Scenario files: JSON schema, defaults, validation and overrides.
//!
//! Units: bits for payloads, seconds for time, Hz for bandwidth, dB for SNR,
//! abstract work units (and work units per second) for computation.
//! Every key is optional; defaults are applied and reported one by one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSpec, EnergyMode, LinkChannels};
use crate::content::{ContentGrid, ProtocolId, TextPrompt};
use crate::error::{MegError, Result};
use crate::pipeline::PipelineParams;
use crate::protocol::{PayloadSizes, PlanSettings, SelectionPolicy, UplinkMode};
use crate::rng;
use crate::sim::{Devices, Direction, WorkModel};

pub const DEFAULT_LATENT_DIM: usize = 64;
pub const DEFAULT_GRID: usize = 64;
pub const DEFAULT_POOL_FACTOR: usize = 8;
/// Default link SNR in dB.
pub const DEFAULT_SNR_DB: f64 = -20.0;
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_ES_COUNT: usize = 2;
pub const DEFAULT_BANDWIDTH_HZ: f64 = 1.0e6;
pub const DEFAULT_UE_RATE: f64 = 100.0;
pub const DEFAULT_ES_RATE: f64 = 1000.0;
pub const DEFAULT_TEXT_BITS: u64 = 1000;
pub const DEFAULT_PROMPT: &str = "generate corals in an underwater scene";

/// Prefix of the environment overrides (`MEG_MASTER_SEED`, `MEG_TRIALS`,
/// `MEG_SNR_DB`, `MEG_ES_COUNT`, `MEG_PROTOCOLS`).
pub const ENV_PREFIX: &str = "MEG_";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPipeline {
    pub d: Option<usize>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub k: Option<usize>,
    pub basis_seed: Option<u64>,
    pub gen_seed: Option<u64>,
    pub es_gen_seeds: Option<Vec<u64>>,
    pub text_mix_weight: Option<f64>,
    pub text_dim: Option<usize>,
    pub bits_per_pixel: Option<u32>,
    pub bits_per_feature: Option<u32>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDevices {
    pub ue_rate: Option<f64>,
    pub es_rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChannel {
    pub snr_db: Option<f64>,
    pub bandwidth_hz: Option<f64>,
    pub energy_mode: Option<EnergyMode>,
    pub reference_symbols: Option<usize>,
    pub noise_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLink {
    pub es: usize,
    pub direction: Direction,
    #[serde(flatten)]
    pub channel: RawChannel,
}

/// Explicit payload sizes; missing entries are derived from the grid dims.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadConfig {
    pub image_bits: Option<u64>,
    pub seed_bits: Option<u64>,
    pub text_bits: Option<u64>,
    pub sketch_bits: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWork {
    pub infer_cost: Option<f64>,
    pub generate_cost: Option<f64>,
    pub decode_cost: Option<f64>,
    pub sketch_cost: Option<f64>,
    pub complete_cost: Option<f64>,
    pub merge_cost: Option<f64>,
    pub split_cost: Option<f64>,
    pub select_cost: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPrompt {
    pub text: Option<String>,
    pub embedding: Option<Vec<f64>>,
    pub payload_bits: Option<u64>,
}

/// Poisson stream of foreign compute jobs on one edge server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundLoad {
    pub es: usize,
    pub rate_per_s: f64,
    pub work_units: f64,
    pub horizon_s: f64,
}

/// The file as written, every field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub name: Option<String>,
    pub master_seed: Option<u64>,
    pub protocols: Option<Vec<ProtocolId>>,
    pub es_count: Option<usize>,
    pub trials: Option<usize>,
    pub pipeline: Option<RawPipeline>,
    pub devices: Option<RawDevices>,
    pub channel: Option<RawChannel>,
    pub links: Option<Vec<RawLink>>,
    pub payload: Option<PayloadConfig>,
    pub uplink_mode: Option<UplinkMode>,
    pub selection: Option<SelectionPolicy>,
    pub work: Option<RawWork>,
    pub arrivals: Option<Vec<f64>>,
    pub background: Option<Vec<BackgroundLoad>>,
    pub prompt: Option<RawPrompt>,
    pub input_image: Option<PathBuf>,
    pub export_pgm: Option<bool>,
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub master_seed: u64,
    pub protocols: Vec<ProtocolId>,
    pub es_count: usize,
    pub trials: usize,
    pub pipeline: PipelineParams,
    /// Which seeds were derived from `master_seed` (and may be regenerated).
    pub derived: DerivedSeeds,
    pub devices: Devices,
    pub channels: LinkChannels,
    pub payload: PayloadConfig,
    pub uplink_mode: UplinkMode,
    pub selection: SelectionPolicy,
    pub work: WorkModel,
    pub arrivals: Vec<f64>,
    pub background: Vec<BackgroundLoad>,
    pub prompt: TextPrompt,
    pub input_image: Option<PathBuf>,
    pub export_pgm: bool,
}

/// Flags for seeds taken from `master_seed` rather than the file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub basis_seed: bool,
    pub gen_seed: bool,
    pub es_gen_seeds: bool,
    pub embedding: bool,
}

/// A loaded scenario plus the defaults that filled it in.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub defaults_applied: Vec<String>,
}

struct Defaults(Vec<String>);

impl Defaults {
    fn take<T: std::fmt::Debug>(&mut self, field: &str, value: Option<T>, default: impl FnOnce() -> T) -> T {
        value.unwrap_or_else(|| {
            let v = default();
            self.0.push(format!("{field} = {v:?}"));
            v
        })
    }
}

impl ScenarioConfig {
    /// Resolves every missing field; returns the list of applied defaults.
    pub fn resolve(raw: RawScenario) -> Result<LoadedScenario> {
        let mut df = Defaults(Vec::new());
        let master_seed = df.take("master_seed", raw.master_seed, || 0);
        let name = df.take("name", raw.name, || "scenario".to_string());
        let protocols = df.take("protocols", raw.protocols, || ProtocolId::ALL.to_vec());
        let es_count = df.take("es_count", raw.es_count, || DEFAULT_ES_COUNT);
        let trials = df.take("trials", raw.trials, || DEFAULT_TRIALS);

        let rp = raw.pipeline.unwrap_or_default();
        let d = df.take("pipeline.d", rp.d, || DEFAULT_LATENT_DIM);
        let height = df.take("pipeline.height", rp.height, || DEFAULT_GRID);
        let width = df.take("pipeline.width", rp.width, || DEFAULT_GRID);
        let k = df.take("pipeline.k", rp.k, || DEFAULT_POOL_FACTOR);
        let mut pipeline = PipelineParams::new(d, height, width, k, 0);
        let mut derived = DerivedSeeds {
            basis_seed: rp.basis_seed.is_none(),
            gen_seed: rp.gen_seed.is_none(),
            es_gen_seeds: rp.es_gen_seeds.is_none(),
            embedding: false,
        };
        pipeline.basis_seed = df.take("pipeline.basis_seed", rp.basis_seed, || {
            rng::derive_seed(master_seed, "pipeline/basis")
        });
        pipeline.gen_seed = df.take("pipeline.gen_seed", rp.gen_seed, || {
            rng::derive_seed(master_seed, "pipeline/generator")
        });
        pipeline.text_mix_weight = df.take("pipeline.text_mix_weight", rp.text_mix_weight, || 0.25);
        pipeline.text_dim = df.take("pipeline.text_dim", rp.text_dim, || 16);
        pipeline.bits_per_pixel = df.take("pipeline.bits_per_pixel", rp.bits_per_pixel, || 8);
        pipeline.bits_per_feature = df.take("pipeline.bits_per_feature", rp.bits_per_feature, || 32);
        pipeline = match rp.es_gen_seeds {
            Some(seeds) => PipelineParams {
                es_gen_seeds: seeds,
                ..pipeline
            },
            None => {
                df.0.push("pipeline.es_gen_seeds = derived from gen_seed".into());
                pipeline.with_es_count(es_count)
            }
        };

        let rd = raw.devices.unwrap_or_default();
        let ue_rate = df.take("devices.ue_rate", rd.ue_rate, || DEFAULT_UE_RATE);
        let es_rates = df.take("devices.es_rates", rd.es_rates, || vec![DEFAULT_ES_RATE; es_count]);
        let devices = Devices::new(ue_rate, &es_rates);

        let rc = raw.channel.unwrap_or_default();
        let default_channel = ChannelSpec {
            snr_db: df.take("channel.snr_db", rc.snr_db, || DEFAULT_SNR_DB),
            bandwidth_hz: df.take("channel.bandwidth_hz", rc.bandwidth_hz, || DEFAULT_BANDWIDTH_HZ),
            energy_mode: df.take("channel.energy_mode", rc.energy_mode, EnergyMode::default),
            reference_symbols: rc.reference_symbols,
            noise_seed: df.take("channel.noise_seed", rc.noise_seed, || 0),
        };
        let mut channels = LinkChannels::uniform(default_channel);
        for link in raw.links.unwrap_or_default() {
            let c = link.channel;
            let spec = ChannelSpec {
                snr_db: c.snr_db.unwrap_or(default_channel.snr_db),
                bandwidth_hz: c.bandwidth_hz.unwrap_or(default_channel.bandwidth_hz),
                energy_mode: c.energy_mode.unwrap_or(default_channel.energy_mode),
                reference_symbols: c.reference_symbols.or(default_channel.reference_symbols),
                noise_seed: c.noise_seed.unwrap_or(default_channel.noise_seed),
            };
            channels.set(link.es, link.direction, spec);
        }

        let payload = raw.payload.unwrap_or_default();
        if payload.image_bits.is_none() || payload.seed_bits.is_none() || payload.sketch_bits.is_none() {
            df.0.push("payload sizes = derived from pipeline dimensions where unset".into());
        }
        let uplink_mode = df.take("uplink_mode", raw.uplink_mode, UplinkMode::default);
        let selection = df.take("selection", raw.selection, SelectionPolicy::default);

        let rw = raw.work.unwrap_or_default();
        let base = WorkModel::default();
        let work = WorkModel {
            infer_cost: df.take("work.infer_cost", rw.infer_cost, || base.infer_cost),
            generate_cost: df.take("work.generate_cost", rw.generate_cost, || base.generate_cost),
            decode_cost: df.take("work.decode_cost", rw.decode_cost, || base.decode_cost),
            sketch_cost: df.take("work.sketch_cost", rw.sketch_cost, || base.sketch_cost),
            complete_cost: df.take("work.complete_cost", rw.complete_cost, || base.complete_cost),
            merge_cost: df.take("work.merge_cost", rw.merge_cost, || base.merge_cost),
            split_cost: df.take("work.split_cost", rw.split_cost, || base.split_cost),
            select_cost: df.take("work.select_cost", rw.select_cost, || base.select_cost),
        };
        let arrivals = df.take("arrivals", raw.arrivals, || vec![0.0]);
        let background = df.take("background", raw.background, Vec::new);

        let rpr = raw.prompt.unwrap_or_default();
        let text = df.take("prompt.text", rpr.text, || DEFAULT_PROMPT.to_string());
        let text_dim = pipeline.text_dim;
        derived.embedding = rpr.embedding.is_none();
        let embedding = df.take("prompt.embedding", rpr.embedding, || {
            derived_embedding(master_seed, text_dim)
        });
        let payload_bits = df.take("prompt.payload_bits", rpr.payload_bits.or(payload.text_bits), || {
            DEFAULT_TEXT_BITS
        });
        let prompt = TextPrompt {
            text,
            embedding,
            payload_bits,
        };
        let export_pgm = df.take("export_pgm", raw.export_pgm, || false);

        let config = ScenarioConfig {
            name,
            master_seed,
            protocols,
            es_count,
            trials,
            pipeline,
            derived,
            devices,
            channels,
            payload,
            uplink_mode,
            selection,
            work,
            arrivals,
            background,
            prompt,
            input_image: raw.input_image,
            export_pgm,
        };
        Ok(LoadedScenario {
            config,
            defaults_applied: df.0,
        })
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<LoadedScenario> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| MegError::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let loaded = Self::resolve(raw)?;
        loaded.config.validate()?;
        Ok(loaded)
    }

    /// Payload sizes with unset entries derived from the grid dimensions.
    pub fn payload_sizes(&self) -> PayloadSizes {
        let derived = PayloadSizes::derived(&self.pipeline, self.prompt.payload_bits);
        let image_bits = self.payload.image_bits.unwrap_or(derived.image_bits);
        let k2 = (self.pipeline.pool_factor * self.pipeline.pool_factor) as u64;
        PayloadSizes {
            image_bits,
            seed_bits: self.payload.seed_bits.unwrap_or(derived.seed_bits),
            text_bits: self.prompt.payload_bits,
            sketch_bits: self.payload.sketch_bits.unwrap_or(image_bits / k2),
        }
    }

    pub fn plan_settings(&self) -> PlanSettings {
        PlanSettings::new(&self.pipeline, self.es_count, self.payload_sizes(), self.uplink_mode)
    }

    /// Link specs with the per-message reference defaulting to the image symbol count.
    pub fn link_channels(&self) -> LinkChannels {
        let n = self.pipeline.pixel_count();
        let mut out = self.channels.clone();
        for spec in std::iter::once(&mut out.default).chain(out.overrides.values_mut()) {
            if spec.energy_mode == EnergyMode::PerMessage && spec.reference_symbols.is_none() {
                spec.reference_symbols = Some(n);
            }
        }
        out
    }

    pub fn set_snr_db(&mut self, snr_db: f64) {
        self.channels = self.channels.with_snr(snr_db);
    }

    /// Changes the server count, growing the device list and generator seeds as needed.
    pub fn set_es_count(&mut self, es_count: usize) {
        self.es_count = es_count;
        if let Some(&last) = self.devices.es.last().map(|d| &d.compute_rate) {
            let rates: Vec<f64> = (0..es_count.max(self.devices.es.len()))
                .map(|i| self.devices.es.get(i).map_or(last, |d| d.compute_rate))
                .collect();
            self.devices = Devices::new(self.devices.ue.compute_rate, &rates);
        }
        if self.derived.es_gen_seeds || self.pipeline.es_gen_seeds.len() < es_count {
            let keep = self.pipeline.es_gen_seeds.clone();
            let fresh = self.pipeline.clone().with_es_count(es_count).es_gen_seeds;
            self.pipeline.es_gen_seeds = if self.derived.es_gen_seeds {
                fresh
            } else {
                keep.iter().copied().chain(fresh.into_iter().skip(keep.len())).collect()
            };
        }
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<Vec<String>> {
        let mut applied = Vec::new();
        for (key, value) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let bad = |e: String| MegError::param(key.clone(), e);
            match name {
                "MASTER_SEED" => self.reseed(value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?),
                "TRIALS" => self.trials = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "SNR_DB" => self.set_snr_db(value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?),
                "ES_COUNT" => {
                    self.set_es_count(value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?)
                }
                "PROTOCOLS" => self.protocols = parse_protocol_list(&value)?,
                _ => continue,
            }
            applied.push(format!("{key}={value}"));
        }
        Ok(applied)
    }

    /// Replaces the master seed and re-derives every seed that was not set explicitly.
    pub fn reseed(&mut self, master_seed: u64) {
        self.master_seed = master_seed;
        if self.derived.basis_seed {
            self.pipeline.basis_seed = rng::derive_seed(master_seed, "pipeline/basis");
        }
        if self.derived.gen_seed {
            self.pipeline.gen_seed = rng::derive_seed(master_seed, "pipeline/generator");
        }
        if self.derived.es_gen_seeds {
            let es_count = self.pipeline.es_gen_seeds.len();
            self.pipeline.es_gen_seeds = self.pipeline.clone().with_es_count(es_count).es_gen_seeds;
        }
        if self.derived.embedding {
            self.prompt.embedding = derived_embedding(master_seed, self.pipeline.text_dim);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        if self.protocols.is_empty() {
            return Err(MegError::param("protocols", "at least one protocol is required"));
        }
        if self.trials == 0 {
            return Err(MegError::param("trials", "must be at least 1"));
        }
        if p.height == 0 || p.width == 0 {
            return Err(MegError::param("pipeline.height/width", "must be at least 1"));
        }
        if p.pool_factor == 0 || p.height % p.pool_factor != 0 {
            return Err(MegError::param("pipeline.k", "k must divide H"));
        }
        if p.width % p.pool_factor != 0 {
            return Err(MegError::param("pipeline.k", "k must divide W"));
        }
        if p.latent_dim > p.pixel_count() {
            return Err(MegError::param("pipeline.d", "d must not exceed H*W"));
        }
        p.validate()?;
        if self.es_count == 0 {
            return Err(MegError::param("es_count", "must be at least 1"));
        }
        if let Some(p) = self.protocols.iter().find(|p| p.is_multi_es()) {
            if self.es_count < 2 {
                return Err(MegError::param("es_count", format!("S must be at least 2 for {p}")));
            }
            if p.is_multi_es() && self.pipeline.es_gen_seeds.len() < self.es_count {
                return Err(MegError::param("pipeline.es_gen_seeds", "need one seed per edge server"));
            }
        }
        if self.protocols.contains(&ProtocolId::Uidcg) && self.es_count > p.latent_dim {
            return Err(MegError::param("es_count", "UIDCG needs S <= d"));
        }
        if self.protocols.contains(&ProtocolId::Dcsuc) && self.es_count > p.sketch_height() {
            return Err(MegError::param("es_count", "DCSUC needs S <= H/k sketch rows"));
        }
        if self.devices.es.len() < self.es_count {
            return Err(MegError::param("devices.es_rates", "need a compute rate for every edge server"));
        }
        self.devices.validate()?;
        self.channels.validate()?;
        self.work.validate()?;
        self.payload_sizes().validate()?;
        if self.prompt.embedding.len() != p.text_dim {
            return Err(MegError::param("prompt.embedding", format!("length must equal text_dim = {}", p.text_dim)));
        }
        if self.arrivals.is_empty() {
            return Err(MegError::param("arrivals", "at least one request is required"));
        }
        if self.arrivals.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(MegError::param("arrivals", "must be finite and non-negative"));
        }
        for (i, b) in self.background.iter().enumerate() {
            if b.es >= self.es_count {
                return Err(MegError::param(format!("background[{i}].es"), "no such edge server"));
            }
            if !(b.rate_per_s > 0.0) || !(b.work_units >= 0.0) || !(b.horizon_s >= 0.0) {
                return Err(MegError::param(
                    format!("background[{i}]"),
                    "rate must be positive, work and horizon non-negative",
                ));
            }
        }
        if let SelectionPolicy::FixedIndex(i) = self.selection {
            if i >= self.es_count {
                return Err(MegError::param("selection", "fixed index must be below es_count"));
            }
        }
        Ok(())
    }

    /// The configured input image, if any, checked against the grid dims.
    pub fn load_input_image(&self, base: &Path) -> Result<Option<ContentGrid>> {
        let Some(rel) = &self.input_image else {
            return Ok(None);
        };
        let path = if rel.is_absolute() { rel.clone() } else { base.join(rel) };
        let bytes = std::fs::read(&path).map_err(|e| MegError::io(&path, e))?;
        let grid = crate::content::read_pgm(&bytes, self.pipeline.bits_per_pixel)?;
        if grid.height() != self.pipeline.height || grid.width() != self.pipeline.width {
            return Err(MegError::dims(
                format!("{}x{}", self.pipeline.height, self.pipeline.width),
                format!("{}x{} in {}", grid.height(), grid.width(), path.display()),
            ));
        }
        Ok(Some(grid))
    }
}

/// Deterministic stand-in prompt embedding.
pub fn derived_embedding(master_seed: u64, dim: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng::stream(master_seed, "prompt/embedding");
    (0..dim).map(|_| StandardNormal.sample(&mut r)).collect()
}

pub fn parse_protocol_list(s: &str) -> Result<Vec<ProtocolId>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

/// Reads, resolves and validates a scenario file, logging each applied default.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path).map_err(|e| MegError::io(path, e))?;
    let mut loaded = ScenarioConfig::from_json_str(&text, path)?;
    if let (Some(img), Some(dir)) = (&loaded.config.input_image, path.parent()) {
        if img.is_relative() {
            loaded.config.input_image = Some(dir.join(img));
        }
    }
    for d in &loaded.defaults_applied {
        log::info!("default applied: {d}");
    }
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedScenario> {
        ScenarioConfig::from_json_str(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let loaded = parse(r#"{"protocols": ["CIAG"]}"#).unwrap();
        let c = &loaded.config;
        assert_eq!(c.pipeline.latent_dim, 64);
        assert_eq!((c.pipeline.height, c.pipeline.width), (64, 64));
        assert_eq!(c.pipeline.pool_factor, 8);
        assert_eq!(c.channels.default.snr_db, -20.0);
        assert_eq!(c.trials, 100);
        assert!(loaded.defaults_applied.iter().any(|d| d.starts_with("trials")));
        assert!(!loaded.defaults_applied.iter().any(|d| d.starts_with("protocols")));
    }

    #[test]
    fn k_must_divide_h() {
        let err = parse(r#"{"pipeline": {"k": 3, "height": 64}}"#).unwrap_err();
        assert!(err.to_string().contains("k must divide H"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = parse("{\n  \"trials\": ,\n}").unwrap_err();
        match err {
            MegError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn reseed_matches_resolving_with_that_seed() {
        let mut a = parse(r#"{"master_seed": 1, "es_count": 3}"#).unwrap().config;
        a.reseed(9);
        assert_eq!(a, parse(r#"{"master_seed": 9, "es_count": 3}"#).unwrap().config);

        let mut b = parse(r#"{"master_seed": 1, "pipeline": {"gen_seed": 5}}"#).unwrap().config;
        let kept = b.pipeline.es_gen_seeds.clone();
        b.reseed(9);
        assert_eq!(b.pipeline.gen_seed, 5);
        assert_eq!(b.pipeline.es_gen_seeds, kept);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(r#"{"trails": 3}"#).is_err());
    }

    #[test]
    fn validation_failures() {
        assert!(parse(r#"{"trials": 0}"#).is_err());
        assert!(parse(r#"{"protocols": ["UIDG"], "es_count": 1}"#).is_err());
        assert!(parse(r#"{"protocols": ["CIAG"], "es_count": 1}"#).is_ok());
        assert!(parse(r#"{"pipeline": {"d": 5000}}"#).is_err());
        assert!(parse(r#"{"devices": {"ue_rate": 0}}"#).is_err());
        assert!(parse(r#"{"channel": {"bandwidth_hz": -1}}"#).is_err());
        assert!(parse(r#"{"protocols": ["NOPE"]}"#).is_err());
    }

    #[test]
    fn explicit_payload_sizes_win() {
        let c = parse(r#"{"payload": {"image_bits": 1300000, "seed_bits": 28000, "text_bits": 1000}, "pipeline": {"k": 4}}"#)
            .unwrap()
            .config;
        let s = c.payload_sizes();
        assert_eq!((s.image_bits, s.seed_bits, s.text_bits, s.sketch_bits), (1_300_000, 28_000, 1000, 81_250));
    }

    #[test]
    fn env_overrides() {
        let mut c = parse(r#"{"protocols": ["CIAG"]}"#).unwrap().config;
        let applied = c
            .apply_env(vec![
                ("MEG_TRIALS".to_string(), "7".to_string()),
                ("MEG_SNR_DB".to_string(), "3.5".to_string()),
                ("HOME".to_string(), "/".to_string()),
            ])
            .unwrap();
        assert_eq!(applied.len(), 2);
        assert_eq!(c.trials, 7);
        assert_eq!(c.channels.default.snr_db, 3.5);
        assert!(c.apply_env(vec![("MEG_TRIALS".into(), "x".into())]).is_err());
    }

    #[test]
    fn es_count_growth_extends_devices() {
        let mut c = parse(r#"{"es_count": 2}"#).unwrap().config;
        c.set_es_count(4);
        assert_eq!(c.devices.es.len(), 4);
        assert_eq!(c.pipeline.es_gen_seeds.len(), 4);
        c.validate().unwrap();
    }
}

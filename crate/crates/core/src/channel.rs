//! AWGN links: analog corruption, lossless digital delivery and
//! Shannon-rate transmission timing.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::content::{PayloadSpec, Transport};
use crate::error::{MegError, Result};
use crate::rng::{self, SimRng};
use crate::sim::Direction;

/// How transmit energy scales with message length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    /// Every symbol sees the nominal SNR.
    #[default]
    PerSymbol,
    /// A fixed energy budget (sized for `reference_symbols`) is spread over
    /// the message, so shorter messages get a higher per-symbol SNR.
    PerMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub snr_db: f64,
    pub bandwidth_hz: f64,
    #[serde(default)]
    pub energy_mode: EnergyMode,
    /// Symbol count the per-message energy budget is sized for.
    #[serde(default)]
    pub reference_symbols: Option<usize>,
    #[serde(default)]
    pub noise_seed: u64,
}

impl ChannelSpec {
    pub fn new(snr_db: f64, bandwidth_hz: f64) -> Self {
        Self {
            snr_db,
            bandwidth_hz,
            energy_mode: EnergyMode::PerSymbol,
            reference_symbols: None,
            noise_seed: 0,
        }
    }

    pub fn noiseless(bandwidth_hz: f64) -> Self {
        Self::new(f64::INFINITY, bandwidth_hz)
    }

    pub fn per_message(mut self, reference_symbols: usize) -> Self {
        self.energy_mode = EnergyMode::PerMessage;
        self.reference_symbols = Some(reference_symbols);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) || !self.bandwidth_hz.is_finite() {
            return Err(MegError::param("bandwidth_hz", "must be positive and finite"));
        }
        if self.snr_db.is_nan() {
            return Err(MegError::param("snr_db", "must be a number"));
        }
        if self.reference_symbols == Some(0) {
            return Err(MegError::param("reference_symbols", "must be positive"));
        }
        Ok(())
    }

    pub fn snr_linear(&self) -> f64 {
        db_to_linear(self.snr_db)
    }

    /// Per-symbol SNR (linear) seen by a message of `symbol_count` symbols.
    pub fn effective_snr_linear(&self, symbol_count: usize) -> f64 {
        let base = self.snr_linear();
        match (self.energy_mode, self.reference_symbols) {
            (EnergyMode::PerMessage, Some(reference)) if symbol_count > 0 => {
                base * (reference as f64 / symbol_count as f64)
            }
            _ => base,
        }
    }

    /// Noise variance for a message with the given mean-square power and length.
    pub fn message_noise_variance(&self, signal_power: f64, symbol_count: usize) -> f64 {
        let snr = self.effective_snr_linear(symbol_count);
        if snr.is_infinite() {
            0.0
        } else {
            signal_power / snr
        }
    }
}

/// Channel specs for every UE–ES link, with optional per-link overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkChannels {
    pub default: ChannelSpec,
    #[serde(default)]
    pub overrides: BTreeMap<String, ChannelSpec>,
}

impl LinkChannels {
    pub fn uniform(spec: ChannelSpec) -> Self {
        Self {
            default: spec,
            overrides: BTreeMap::new(),
        }
    }

    fn key(es: usize, direction: Direction) -> String {
        format!("ES{es}/{direction}")
    }

    pub fn set(&mut self, es: usize, direction: Direction, spec: ChannelSpec) {
        self.overrides.insert(Self::key(es, direction), spec);
    }

    pub fn spec(&self, es: usize, direction: Direction) -> &ChannelSpec {
        self.overrides.get(&Self::key(es, direction)).unwrap_or(&self.default)
    }

    pub fn validate(&self) -> Result<()> {
        self.default.validate()?;
        self.overrides.values().try_for_each(ChannelSpec::validate)
    }

    /// Same links with every SNR set to `snr_db`.
    pub fn with_snr(&self, snr_db: f64) -> Self {
        let mut out = self.clone();
        out.default.snr_db = snr_db;
        for spec in out.overrides.values_mut() {
            spec.snr_db = snr_db;
        }
        out
    }
}

/// Independent noise stream per link, derived from one base seed.
#[derive(Debug, Clone)]
pub struct LinkNoise {
    base_seed: u64,
    streams: BTreeMap<(usize, Direction), SimRng>,
}

impl LinkNoise {
    pub fn new(base_seed: u64) -> Self {
        Self {
            base_seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn stream(&mut self, es: usize, direction: Direction, noise_seed: u64) -> &mut SimRng {
        let base = self.base_seed;
        self.streams
            .entry((es, direction))
            .or_insert_with(|| rng::stream(base, &format!("link/ES{es}/{direction}/{noise_seed}")))
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `σ² = P · 10^(−SNR/10)`.
pub fn noise_variance(snr_db: f64, signal_power: f64) -> f64 {
    signal_power * 10f64.powf(-snr_db / 10.0)
}

/// Empirical mean square of a symbol vector.
pub fn signal_power(symbols: &[f64]) -> f64 {
    if symbols.is_empty() {
        return 0.0;
    }
    symbols.iter().map(|v| v * v).sum::<f64>() / symbols.len() as f64
}

/// Adds i.i.d. Gaussian noise with variance set by the vector's own power.
///
/// Draws nothing from `rng` when the variance is zero, so a noiseless link
/// returns its input bit-exactly.
pub fn transmit_analog<R: Rng + ?Sized>(symbols: &[f64], spec: &ChannelSpec, rng: &mut R) -> Result<Vec<f64>> {
    if symbols.is_empty() {
        return Err(MegError::InvalidPayload("analog transmission of an empty vector".into()));
    }
    let variance = spec.message_noise_variance(signal_power(symbols), symbols.len());
    if variance == 0.0 {
        return Ok(symbols.to_vec());
    }
    let sigma = variance.sqrt();
    Ok(symbols
        .iter()
        .map(|&s| {
            let n: f64 = rng.sample(StandardNormal);
            s + sigma * n
        })
        .collect())
}

/// Lossless delivery; only analog payloads are refused.
pub fn transmit_digital(payload: &PayloadSpec, content: &[u8]) -> Result<Vec<u8>> {
    if payload.transport != Transport::DigitalLossless {
        return Err(MegError::InvalidPayload(format!(
            "{} payload is analog and cannot be sent losslessly",
            payload.kind
        )));
    }
    Ok(content.to_vec())
}

/// `bits / (B · log₂(1 + SNR))` seconds.
pub fn transmission_time(bits: u64, spec: &ChannelSpec) -> Result<f64> {
    spec.validate()?;
    if bits == 0 {
        return Ok(0.0);
    }
    let snr = spec.snr_linear();
    if snr.is_infinite() {
        return Ok(0.0);
    }
    let capacity = spec.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2;
    if !capacity.is_normal() {
        return Err(MegError::ChannelConfig(format!(
            "capacity underflows at {} dB over {} Hz",
            spec.snr_db, spec.bandwidth_hz
        )));
    }
    Ok(bits as f64 / capacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::PayloadKind;
    use crate::rng::stream;

    #[test]
    fn variance_examples() {
        assert_eq!(noise_variance(0.0, 1.0), 1.0);
        assert!((noise_variance(-20.0, 1.0) - 100.0).abs() < 1e-9);
        assert!((noise_variance(10.0, 2.0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn per_message_halving_doubles_snr() {
        let spec = ChannelSpec::new(0.0, 1.0).per_message(100);
        let v100 = spec.message_noise_variance(1.0, 100);
        let v50 = spec.message_noise_variance(1.0, 50);
        assert!((v100 / v50 - 2.0).abs() < 1e-12);
        assert!((spec.effective_snr_linear(50) / spec.effective_snr_linear(100) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn huge_snr_is_effectively_noiseless() {
        let spec = ChannelSpec::new(300.0, 1.0);
        let input: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let out = transmit_analog(&input, &spec, &mut stream(1, "x")).unwrap();
        for (a, b) in input.iter().zip(&out) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn same_stream_same_noise() {
        let spec = ChannelSpec::new(0.0, 1.0);
        let input = vec![1.0; 32];
        let a = transmit_analog(&input, &spec, &mut stream(5, "link")).unwrap();
        let b = transmit_analog(&input, &spec, &mut stream(5, "link")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), input.len());
        assert!(transmit_analog(&[], &spec, &mut stream(5, "link")).is_err());
    }

    #[test]
    fn digital_is_bit_exact() {
        let text = PayloadSpec::lossless(PayloadKind::Text, 1000);
        assert_eq!(transmit_digital(&text, b"corals").unwrap(), b"corals");
        let empty = PayloadSpec::lossless(PayloadKind::Text, 0);
        assert!(transmit_digital(&empty, &[]).unwrap().is_empty());
        let img = PayloadSpec::analog(PayloadKind::Image, 8, 1);
        assert!(transmit_digital(&img, b"x").is_err());
    }

    #[test]
    fn timing_examples() {
        assert!((transmission_time(1000, &ChannelSpec::new(0.0, 1000.0)).unwrap() - 1.0).abs() < 1e-12);
        let snr3 = 10.0 * 3f64.log10();
        assert!((transmission_time(1000, &ChannelSpec::new(snr3, 1000.0)).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(transmission_time(0, &ChannelSpec::new(0.0, 1000.0)).unwrap(), 0.0);
        assert!(transmission_time(1, &ChannelSpec::new(-4000.0, 1000.0)).is_err());
        assert!(transmission_time(1, &ChannelSpec::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn timing_monotone() {
        let mut prev = f64::INFINITY;
        for snr in [-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0] {
            let t = transmission_time(5000, &ChannelSpec::new(snr, 1e3)).unwrap();
            assert!(t < prev);
            prev = t;
        }
        let spec = ChannelSpec::new(0.0, 1e3);
        assert!(transmission_time(10, &spec).unwrap() < transmission_time(11, &spec).unwrap());
    }
}

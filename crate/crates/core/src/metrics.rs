//! Communication-overhead accounting, distortion metrics and trial statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::content::{ContentGrid, PayloadKind, ProtocolId, PEAK_VALUE};
use crate::error::{MegError, Result};
use crate::protocol::{PayloadSizes, Transcript, UplinkMode};
use crate::sim::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BreakdownEntry {
    pub direction: Direction,
    pub kind: PayloadKind,
    pub bits: u64,
}

/// Bits moved over the air by one protocol run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadRecord {
    pub protocol: ProtocolId,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    pub aggregate_bits: u64,
    /// Sorted by direction, then payload kind.
    pub breakdown: Vec<BreakdownEntry>,
}

impl OverheadRecord {
    pub fn from_entries(protocol: ProtocolId, entries: impl IntoIterator<Item = (Direction, PayloadKind, u64)>) -> Self {
        let mut by_key: BTreeMap<(Direction, PayloadKind), u64> = BTreeMap::new();
        for (direction, kind, bits) in entries {
            *by_key.entry((direction, kind)).or_default() += bits;
        }
        let breakdown: Vec<BreakdownEntry> = by_key
            .into_iter()
            .map(|((direction, kind), bits)| BreakdownEntry { direction, kind, bits })
            .collect();
        let sum = |d: Direction| breakdown.iter().filter(|e| e.direction == d).map(|e| e.bits).sum::<u64>();
        let uplink_bits = sum(Direction::Uplink);
        let downlink_bits = sum(Direction::Downlink);
        Self {
            protocol,
            uplink_bits,
            downlink_bits,
            aggregate_bits: uplink_bits + downlink_bits,
            breakdown,
        }
    }

    /// Totals observed in an executed transcript.
    pub fn from_transcript(transcript: &Transcript) -> Self {
        Self::from_entries(
            transcript.protocol,
            transcript.transmits.iter().map(|t| (t.direction, t.kind, t.bits)),
        )
    }

    pub fn bits(&self, direction: Direction, kind: PayloadKind) -> u64 {
        self.breakdown
            .iter()
            .find(|e| e.direction == direction && e.kind == kind)
            .map_or(0, |e| e.bits)
    }
}

/// Closed-form overhead of a protocol's canonical plan.
pub fn expected_overhead(
    protocol: ProtocolId,
    sizes: &PayloadSizes,
    es_count: usize,
    uplink_mode: UplinkMode,
) -> Result<OverheadRecord> {
    sizes.validate()?;
    use Direction::{Downlink as Dn, Uplink as Up};
    use PayloadKind::*;
    let s = es_count as u64;
    if protocol.is_multi_es() && es_count < 2 {
        return Err(MegError::param("S", format!("{protocol} needs at least 2 edge servers")));
    }
    let broadcast_copies = match uplink_mode {
        UplinkMode::Broadcast => 1,
        UplinkMode::Unicast => s,
    };
    let PayloadSizes {
        image_bits: img,
        seed_bits: seed,
        text_bits: text,
        sketch_bits: sketch,
    } = *sizes;
    let entries: Vec<(Direction, PayloadKind, u64)> = match protocol {
        ProtocolId::Local => vec![],
        ProtocolId::Central => vec![(Up, Image, img), (Up, Text, text), (Dn, Image, img)],
        ProtocolId::Uieg => vec![(Up, Seed, seed), (Up, Text, text), (Dn, Image, img)],
        ProtocolId::Eiug => vec![(Up, Image, img), (Up, Text, text), (Dn, Seed, seed)],
        ProtocolId::Ciag => vec![(Up, Seed, seed), (Up, Text, text), (Dn, Seed, seed)],
        ProtocolId::Esuc => vec![(Up, Image, img), (Up, Text, text), (Dn, Sketch, sketch)],
        ProtocolId::Uidg => vec![
            (Up, Seed, seed * broadcast_copies),
            (Up, Text, text * broadcast_copies),
            (Dn, Image, img * s),
        ],
        ProtocolId::Diug => vec![(Up, Image, img * s), (Up, Text, text * s), (Dn, Seed, seed * s)],
        ProtocolId::Dsuc => vec![(Up, Image, img * s), (Up, Text, text * s), (Dn, Sketch, sketch * s)],
        ProtocolId::Uidcg => vec![
            (Up, SubSeed, seed),
            (Up, Text, text * broadcast_copies),
            (Dn, PartialContent, img * s),
        ],
        ProtocolId::Dcsuc => vec![(Up, Image, img * s), (Up, Text, text * s), (Dn, SketchTile, sketch)],
    };
    Ok(OverheadRecord::from_entries(protocol, entries))
}

/// `baseline.aggregate / candidate.aggregate`.
pub fn reduction_factor(baseline: &OverheadRecord, candidate: &OverheadRecord) -> Result<f64> {
    if candidate.aggregate_bits == 0 {
        return Err(MegError::param(
            "candidate",
            format!("{} moves no bits; reduction factor undefined", candidate.protocol),
        ));
    }
    Ok(baseline.aggregate_bits as f64 / candidate.aggregate_bits as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub mse: f64,
    /// `+inf` when `mse == 0`.
    pub psnr_db: f64,
}

/// Mean squared error per sample.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub fn psnr_db(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK_VALUE * PEAK_VALUE / mse).log10()
    }
}

pub fn quality(output: &ContentGrid, reference: &ContentGrid) -> Result<QualityRecord> {
    if output.height() != reference.height() || output.width() != reference.width() {
        return Err(MegError::dims(
            format!("{}x{}", reference.height(), reference.width()),
            format!("{}x{}", output.height(), output.width()),
        ));
    }
    let mse = mse(output.values(), reference.values());
    Ok(QualityRecord { mse, psnr_db: psnr_db(mse) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1); zero for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Order-independent sample statistics.
///
/// Values are sorted before summation so any permutation of the input gives
/// a bit-identical summary.
pub fn aggregate_trials(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(MegError::Empty("no trial values to aggregate".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else if mean.is_infinite() && sorted.iter().all(|v| *v == mean) {
        0.0
    } else {
        let mut dev: Vec<f64> = sorted.iter().map(|v| (v - mean) * (v - mean)).collect();
        dev.sort_by(f64::total_cmp);
        (dev.iter().sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(Summary {
        mean,
        std,
        min: sorted[0],
        max: sorted[n - 1],
        count: n,
    })
}

pub fn summarize_quality(records: &[QualityRecord]) -> Result<(Summary, Summary)> {
    let mse: Vec<f64> = records.iter().map(|r| r.mse).collect();
    let psnr: Vec<f64> = records.iter().map(|r| r.psnr_db).collect();
    Ok((aggregate_trials(&mse)?, aggregate_trials(&psnr)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_sizes() -> PayloadSizes {
        PayloadSizes {
            image_bits: 1_300_000,
            seed_bits: 28_000,
            text_bits: 1_000,
            sketch_bits: 81_250,
        }
    }

    #[test]
    fn ciag_moves_57_kb() {
        let r = expected_overhead(ProtocolId::Ciag, &reference_sizes(), 1, UplinkMode::Broadcast).unwrap();
        assert_eq!((r.uplink_bits, r.downlink_bits, r.aggregate_bits), (29_000, 28_000, 57_000));
    }

    #[test]
    fn uieg_and_eiug_mirror() {
        let u = expected_overhead(ProtocolId::Uieg, &reference_sizes(), 1, UplinkMode::Broadcast).unwrap();
        assert_eq!((u.uplink_bits, u.downlink_bits), (29_000, 1_300_000));
        let e = expected_overhead(ProtocolId::Eiug, &reference_sizes(), 1, UplinkMode::Broadcast).unwrap();
        assert_eq!((e.uplink_bits, e.downlink_bits), (1_301_000, 28_000));
    }

    #[test]
    fn local_moves_nothing() {
        let r = expected_overhead(ProtocolId::Local, &reference_sizes(), 1, UplinkMode::Broadcast).unwrap();
        assert_eq!((r.uplink_bits, r.downlink_bits, r.aggregate_bits), (0, 0, 0));
        assert!(r.breakdown.is_empty());
    }

    #[test]
    fn multi_es_requires_two_servers() {
        assert!(expected_overhead(ProtocolId::Uidg, &reference_sizes(), 1, UplinkMode::Broadcast).is_err());
    }

    #[test]
    fn zero_sizes_rejected() {
        let mut s = reference_sizes();
        s.seed_bits = 0;
        assert!(expected_overhead(ProtocolId::Ciag, &s, 1, UplinkMode::Broadcast).is_err());
    }

    #[test]
    fn reduction_factor_cases() {
        let sizes = reference_sizes();
        let central = expected_overhead(ProtocolId::Central, &sizes, 1, UplinkMode::Broadcast).unwrap();
        let ciag = expected_overhead(ProtocolId::Ciag, &sizes, 1, UplinkMode::Broadcast).unwrap();
        let local = expected_overhead(ProtocolId::Local, &sizes, 1, UplinkMode::Broadcast).unwrap();
        let f = reduction_factor(&central, &ciag).unwrap();
        assert!((f - 2_601_000.0 / 57_000.0).abs() < 1e-12);
        assert!((f - 45.63).abs() < 0.01);
        assert_eq!(reduction_factor(&ciag, &ciag).unwrap(), 1.0);
        assert!(reduction_factor(&central, &local).is_err());
    }

    #[test]
    fn unicast_multiplies_broadcast_payloads() {
        let sizes = reference_sizes();
        let b = expected_overhead(ProtocolId::Uidg, &sizes, 3, UplinkMode::Broadcast).unwrap();
        let u = expected_overhead(ProtocolId::Uidg, &sizes, 3, UplinkMode::Unicast).unwrap();
        assert_eq!(b.uplink_bits, 29_000);
        assert_eq!(u.uplink_bits, 87_000);
        assert_eq!(b.downlink_bits, 3_900_000);
    }

    #[test]
    fn quality_cases() {
        let a = ContentGrid::filled(4, 4, 0.3, 8).unwrap();
        let q = quality(&a, &a).unwrap();
        assert_eq!(q.mse, 0.0);
        assert!(q.psnr_db.is_infinite() && q.psnr_db > 0.0);
        let b = ContentGrid::filled(4, 4, 0.4, 8).unwrap();
        let q = quality(&b, &a).unwrap();
        assert!((q.mse - 0.01).abs() < 1e-12);
        assert!((q.psnr_db - 20.0).abs() < 1e-9);
        let c = ContentGrid::filled(2, 8, 0.4, 8).unwrap();
        assert!(quality(&c, &a).is_err());
    }

    #[test]
    fn summary_cases() {
        let s = aggregate_trials(&[4.5]).unwrap();
        assert_eq!((s.mean, s.std, s.count), (4.5, 0.0, 1));
        let s = aggregate_trials(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.min, s.max), (2.0, 1.0, 3.0));
        assert!((s.std - 1.0).abs() < 1e-12);
        assert!(aggregate_trials(&[]).is_err());
        let inf = aggregate_trials(&[f64::INFINITY, f64::INFINITY]).unwrap();
        assert_eq!((inf.mean, inf.std), (f64::INFINITY, 0.0));
    }

    #[test]
    fn summary_is_order_independent() {
        let values = [0.1, 1e10, -3.3, 0.7, 2.0 / 3.0, 1e-9, 42.0];
        let a = aggregate_trials(&values).unwrap();
        let mut rev = values;
        rev.reverse();
        let b = aggregate_trials(&rev).unwrap();
        assert_eq!(a, b);
    }
}

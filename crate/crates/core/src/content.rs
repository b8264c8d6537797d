//! Payload and request types shared by the pipeline, channel and protocol layers.
//!
//! Every payload knows its own bit size. Grid values are kept as `f64` in
//! row-major order and are never clamped here; clamping to `[0, 1]` happens
//! only when a grid is exported as a portable graymap.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MegError, Result};

/// Peak pixel value used by PSNR and PGM scaling.
pub const PEAK_VALUE: f64 = 1.0;

/// Anything that occupies bits on a link.
pub trait PayloadBits {
    fn payload_bits(&self) -> u64;
}

/// Bit size of any payload item.
pub fn payload_bits<T: PayloadBits + ?Sized>(item: &T) -> u64 {
    item.payload_bits()
}

/// An H×W real-valued image, nominal range `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
    bits_per_pixel: u32,
}

impl ContentGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>, bits_per_pixel: u32) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(MegError::param("height/width", "must be at least 1"));
        }
        if bits_per_pixel == 0 {
            return Err(MegError::param("bits_per_pixel", "must be positive"));
        }
        if values.len() != height * width {
            return Err(MegError::dims(
                format!("{} values ({height}x{width})", height * width),
                format!("{} values", values.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            values,
            bits_per_pixel,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64, bits_per_pixel: u32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width], bits_per_pixel)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn bits_per_pixel(&self) -> u32 {
        self.bits_per_pixel
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Returns a grid with the same shape and new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.height, self.width, values, self.bits_per_pixel)
    }

    pub fn write_pgm<W: Write>(&self, out: W, format: PgmFormat) -> Result<()> {
        write_pgm(out, self.height, self.width, &self.values, format)
    }
}

impl PayloadBits for ContentGrid {
    fn payload_bits(&self) -> u64 {
        (self.height * self.width) as u64 * u64::from(self.bits_per_pixel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    TaskSeed,
    ContentSeed,
    SubSeed,
}

impl fmt::Display for SeedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeedKind::TaskSeed => "task_seed",
            SeedKind::ContentSeed => "content_seed",
            SeedKind::SubSeed => "sub_seed",
        })
    }
}

/// Index interval `[lo, hi)` of a sub-seed within a latent of dimension `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubRange {
    pub lo: usize,
    pub hi: usize,
    pub dim: usize,
}

impl SubRange {
    pub fn new(lo: usize, hi: usize, dim: usize) -> Result<Self> {
        if lo >= hi || hi > dim {
            return Err(MegError::InvalidPartition(format!(
                "range [{lo}, {hi}) is not a nonempty interval of [0, {dim})"
            )));
        }
        Ok(Self { lo, hi, dim })
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }
}

/// A latent feature vector: task seed, content seed or indexed sub-seed.
///
/// For a sub-seed, `values` holds only the `[lo, hi)` slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSeed {
    values: Vec<f64>,
    kind: SeedKind,
    sub_range: Option<SubRange>,
    bits_per_feature: u32,
}

impl LatentSeed {
    pub fn new(values: Vec<f64>, kind: SeedKind, bits_per_feature: u32) -> Result<Self> {
        if kind == SeedKind::SubSeed {
            return Err(MegError::InvalidPayload(
                "sub-seeds must be built with LatentSeed::sub_seed".into(),
            ));
        }
        if values.is_empty() {
            return Err(MegError::param("d", "latent dimension must be at least 1"));
        }
        if bits_per_feature == 0 {
            return Err(MegError::param("bits_per_feature", "must be positive"));
        }
        Ok(Self {
            values,
            kind,
            sub_range: None,
            bits_per_feature,
        })
    }

    pub fn sub_seed(values: Vec<f64>, range: SubRange, bits_per_feature: u32) -> Result<Self> {
        if values.len() != range.len() {
            return Err(MegError::dims(range.len(), values.len()));
        }
        if bits_per_feature == 0 {
            return Err(MegError::param("bits_per_feature", "must be positive"));
        }
        Ok(Self {
            values,
            kind: SeedKind::SubSeed,
            sub_range: Some(range),
            bits_per_feature,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> SeedKind {
        self.kind
    }

    pub fn sub_range(&self) -> Option<SubRange> {
        self.sub_range
    }

    pub fn bits_per_feature(&self) -> u32 {
        self.bits_per_feature
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Same kind and range, new values of equal length.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(MegError::dims(self.values.len(), values.len()));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub(crate) fn with_kind(mut self, kind: SeedKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Plain-text dump: one header comment line, then one value per line.
    ///
    /// Values use the shortest round-trip decimal form, so reading the dump
    /// back yields bit-identical values.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| MegError::io("<vector dump>", e);
        write!(out, "# kind={} bits_per_feature={}", self.kind, self.bits_per_feature).map_err(io)?;
        if let Some(r) = self.sub_range {
            write!(out, " range={}..{}/{}", r.lo, r.hi, r.dim).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
        for v in &self.values {
            writeln!(out, "{v:?}").map_err(io)?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(input: R) -> Result<Self> {
        let bad = |line: usize, msg: String| MegError::Parse {
            path: "<vector dump>".into(),
            line,
            column: 1,
            message: msg,
        };
        let mut kind = None;
        let mut bpf = None;
        let mut range = None;
        let mut values = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| MegError::io("<vector dump>", e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    let (key, value) = field
                        .split_once('=')
                        .ok_or_else(|| bad(i + 1, format!("malformed header field `{field}`")))?;
                    match key {
                        "kind" => {
                            kind = Some(match value {
                                "task_seed" => SeedKind::TaskSeed,
                                "content_seed" => SeedKind::ContentSeed,
                                "sub_seed" => SeedKind::SubSeed,
                                other => return Err(bad(i + 1, format!("unknown kind `{other}`"))),
                            })
                        }
                        "bits_per_feature" => {
                            bpf = Some(value.parse::<u32>().map_err(|e| bad(i + 1, e.to_string()))?)
                        }
                        "range" => range = Some(parse_range(value).ok_or_else(|| bad(i + 1, format!("bad range `{value}`")))?),
                        _ => {}
                    }
                }
                continue;
            }
            values.push(line.parse::<f64>().map_err(|e| bad(i + 1, e.to_string()))?);
        }
        let kind = kind.ok_or_else(|| bad(1, "missing kind header".into()))?;
        let bpf = bpf.ok_or_else(|| bad(1, "missing bits_per_feature header".into()))?;
        match (kind, range) {
            (SeedKind::SubSeed, Some((lo, hi, dim))) => {
                LatentSeed::sub_seed(values, SubRange::new(lo, hi, dim)?, bpf)
            }
            (SeedKind::SubSeed, None) => Err(bad(1, "sub_seed requires a range".into())),
            (_, Some(_)) => Err(bad(1, "range only allowed on sub_seed".into())),
            (kind, None) => LatentSeed::new(values, kind, bpf),
        }
    }
}

fn parse_range(s: &str) -> Option<(usize, usize, usize)> {
    let (span, dim) = s.split_once('/')?;
    let (lo, hi) = span.split_once("..")?;
    Some((lo.parse().ok()?, hi.parse().ok()?, dim.parse().ok()?))
}

impl PayloadBits for LatentSeed {
    fn payload_bits(&self) -> u64 {
        self.values.len() as u64 * u64::from(self.bits_per_feature)
    }
}

/// Low-resolution draft: a full `H/k × W/k` sketch or a row tile of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
    pool_factor: usize,
    /// Rows `[lo, hi)` of the full sketch, present only for tiles.
    tile_range: Option<(usize, usize)>,
    bits_per_pixel: u32,
}

impl SketchGrid {
    pub fn new(
        height: usize,
        width: usize,
        values: Vec<f64>,
        pool_factor: usize,
        tile_range: Option<(usize, usize)>,
        bits_per_pixel: u32,
    ) -> Result<Self> {
        if height == 0 || width == 0 || pool_factor == 0 || bits_per_pixel == 0 {
            return Err(MegError::param("sketch", "dimensions, pool factor and bits must be positive"));
        }
        if values.len() != height * width {
            return Err(MegError::dims(height * width, values.len()));
        }
        if let Some((lo, hi)) = tile_range {
            if hi <= lo || hi - lo != height {
                return Err(MegError::InvalidPartition(format!(
                    "tile rows [{lo}, {hi}) do not match tile height {height}"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            values,
            pool_factor,
            tile_range,
            bits_per_pixel,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pool_factor(&self) -> usize {
        self.pool_factor
    }

    pub fn tile_range(&self) -> Option<(usize, usize)> {
        self.tile_range
    }

    pub fn bits_per_pixel(&self) -> u32 {
        self.bits_per_pixel
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            values,
            self.pool_factor,
            self.tile_range,
            self.bits_per_pixel,
        )
    }

    pub fn write_pgm<W: Write>(&self, out: W, format: PgmFormat) -> Result<()> {
        write_pgm(out, self.height, self.width, &self.values, format)
    }
}

impl PayloadBits for SketchGrid {
    fn payload_bits(&self) -> u64 {
        (self.height * self.width) as u64 * u64::from(self.bits_per_pixel)
    }
}

/// User prompt. Always delivered losslessly; its bit size is configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPrompt {
    pub text: String,
    pub embedding: Vec<f64>,
    pub payload_bits: u64,
}

impl PayloadBits for TextPrompt {
    fn payload_bits(&self) -> u64 {
        self.payload_bits
    }
}

/// The eleven generation workflows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProtocolId {
    Local,
    Central,
    Uieg,
    Eiug,
    Ciag,
    Esuc,
    Uidg,
    Diug,
    Dsuc,
    Uidcg,
    Dcsuc,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 11] = [
        ProtocolId::Local,
        ProtocolId::Central,
        ProtocolId::Uieg,
        ProtocolId::Eiug,
        ProtocolId::Ciag,
        ProtocolId::Esuc,
        ProtocolId::Uidg,
        ProtocolId::Diug,
        ProtocolId::Dsuc,
        ProtocolId::Uidcg,
        ProtocolId::Dcsuc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolId::Local => "LOCAL",
            ProtocolId::Central => "CENTRAL",
            ProtocolId::Uieg => "UIEG",
            ProtocolId::Eiug => "EIUG",
            ProtocolId::Ciag => "CIAG",
            ProtocolId::Esuc => "ESUC",
            ProtocolId::Uidg => "UIDG",
            ProtocolId::Diug => "DIUG",
            ProtocolId::Dsuc => "DSUC",
            ProtocolId::Uidcg => "UIDCG",
            ProtocolId::Dcsuc => "DCSUC",
        }
    }

    pub fn is_multi_es(self) -> bool {
        matches!(
            self,
            ProtocolId::Uidg | ProtocolId::Diug | ProtocolId::Dsuc | ProtocolId::Uidcg | ProtocolId::Dcsuc
        )
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolId {
    type Err = MegError;

    /// Accepts the canonical names plus the aliases `BIUG` and `UIBG`.
    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let id = match upper.as_str() {
            "LOCAL" => ProtocolId::Local,
            "CENTRAL" => ProtocolId::Central,
            "UIEG" | "UIBG" => ProtocolId::Uieg,
            "EIUG" | "BIUG" => ProtocolId::Eiug,
            "CIAG" => ProtocolId::Ciag,
            "ESUC" | "ESUE" => ProtocolId::Esuc,
            "UIDG" => ProtocolId::Uidg,
            "DIUG" => ProtocolId::Diug,
            "DSUC" => ProtocolId::Dsuc,
            "UIDCG" => ProtocolId::Uidcg,
            "DCSUC" => ProtocolId::Dcsuc,
            _ => return Err(MegError::UnknownProtocol(s.to_string())),
        };
        Ok(id)
    }
}

impl TryFrom<String> for ProtocolId {
    type Error = MegError;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<ProtocolId> for String {
    fn from(value: ProtocolId) -> Self {
        value.as_str().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub request_id: u64,
    pub input_image: ContentGrid,
    pub prompt: TextPrompt,
    pub protocol_id: ProtocolId,
    pub arrival_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Image,
    Seed,
    SubSeed,
    Sketch,
    SketchTile,
    Text,
    /// Pixel-space partial content emitted by a cooperative generator.
    PartialContent,
}

impl PayloadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PayloadKind::Image => "image",
            PayloadKind::Seed => "seed",
            PayloadKind::SubSeed => "sub_seed",
            PayloadKind::Sketch => "sketch",
            PayloadKind::SketchTile => "sketch_tile",
            PayloadKind::Text => "text",
            PayloadKind::PartialContent => "partial_content",
        }
    }
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    Analog,
    DigitalLossless,
}

/// What a transmit step puts on the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadSpec {
    pub kind: PayloadKind,
    pub bits: u64,
    pub symbol_count: usize,
    pub transport: Transport,
}

impl PayloadSpec {
    pub fn analog(kind: PayloadKind, bits: u64, symbol_count: usize) -> Self {
        Self {
            kind,
            bits,
            symbol_count,
            transport: Transport::Analog,
        }
    }

    pub fn lossless(kind: PayloadKind, bits: u64) -> Self {
        Self {
            kind,
            bits,
            symbol_count: 0,
            transport: Transport::DigitalLossless,
        }
    }
}

impl PayloadBits for PayloadSpec {
    fn payload_bits(&self) -> u64 {
        self.bits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// ASCII graymap.
    P2,
    /// Binary graymap.
    P5,
}

fn to_gray(v: f64) -> u8 {
    (v.clamp(0.0, PEAK_VALUE) / PEAK_VALUE * 255.0).round() as u8
}

/// Writes values as an 8-bit graymap, clamped to `[0, 1]` and scaled to 0..=255.
pub fn write_pgm<W: Write>(
    mut out: W,
    height: usize,
    width: usize,
    values: &[f64],
    format: PgmFormat,
) -> Result<()> {
    if values.len() != height * width {
        return Err(MegError::dims(height * width, values.len()));
    }
    let io = |e| MegError::io("<pgm>", e);
    match format {
        PgmFormat::P2 => {
            writeln!(out, "P2\n{width} {height}\n255").map_err(io)?;
            for row in values.chunks(width) {
                let line: Vec<String> = row.iter().map(|&v| to_gray(v).to_string()).collect();
                writeln!(out, "{}", line.join(" ")).map_err(io)?;
            }
        }
        PgmFormat::P5 => {
            write!(out, "P5\n{width} {height}\n255\n").map_err(io)?;
            let bytes: Vec<u8> = values.iter().map(|&v| to_gray(v)).collect();
            out.write_all(&bytes).map_err(io)?;
        }
    }
    Ok(())
}

/// Reads a P2 or P5 graymap into a grid with values scaled to `[0, 1]`.
pub fn read_pgm(bytes: &[u8], bits_per_pixel: u32) -> Result<ContentGrid> {
    let bad = |msg: &str| MegError::Parse {
        path: "<pgm>".into(),
        line: 1,
        column: 1,
        message: msg.to_string(),
    };
    // header tokens, skipping comments
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    let magic = tokens[0];
    let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let maxval: u32 = tokens[3].parse().map_err(|_| bad("bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit graymaps are supported"));
    }
    let scale = f64::from(maxval);
    let values: Vec<f64> = match magic {
        "P5" => {
            let data = &bytes[pos + 1..];
            if data.len() < width * height {
                return Err(bad("truncated raster"));
            }
            data[..width * height].iter().map(|&b| f64::from(b) / scale).collect()
        }
        "P2" => {
            let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| bad("non-ASCII raster"))?;
            text.split_whitespace()
                .take(width * height)
                .map(|t| t.parse::<u32>().map(|v| f64::from(v) / scale).map_err(|_| bad("bad sample")))
                .collect::<Result<_>>()?
        }
        _ => return Err(bad("not a P2/P5 graymap")),
    };
    ContentGrid::new(height, width, values, bits_per_pixel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_bits_are_product() {
        let g = ContentGrid::filled(512, 512, 0.0, 8).unwrap();
        assert_eq!(payload_bits(&g), 2_097_152);
    }

    #[test]
    fn seed_bits_are_product() {
        let s = LatentSeed::new(vec![0.0; 16], SeedKind::TaskSeed, 32).unwrap();
        assert_eq!(payload_bits(&s), 512);
    }

    #[test]
    fn text_bits_are_configured() {
        let p = TextPrompt {
            text: "corals".into(),
            embedding: vec![1.0; 4],
            payload_bits: 1000,
        };
        assert_eq!(payload_bits(&p), 1000);
    }

    #[test]
    fn sub_seed_requires_valid_range() {
        assert!(SubRange::new(2, 2, 4).is_err());
        assert!(SubRange::new(0, 5, 4).is_err());
        let r = SubRange::new(1, 3, 4).unwrap();
        assert!(LatentSeed::sub_seed(vec![0.0; 3], r, 32).is_err());
        let s = LatentSeed::sub_seed(vec![0.0; 2], r, 32).unwrap();
        assert_eq!(s.payload_bits(), 64);
        assert!(LatentSeed::new(vec![1.0], SeedKind::SubSeed, 32).is_err());
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(ContentGrid::new(0, 4, vec![], 8).is_err());
        assert!(ContentGrid::new(2, 2, vec![0.0; 3], 8).is_err());
    }

    #[test]
    fn protocol_aliases() {
        assert_eq!("BIUG".parse::<ProtocolId>().unwrap(), ProtocolId::Eiug);
        assert_eq!("uibg".parse::<ProtocolId>().unwrap(), ProtocolId::Uieg);
        assert!("FOO".parse::<ProtocolId>().is_err());
        for p in ProtocolId::ALL {
            assert_eq!(p.as_str().parse::<ProtocolId>().unwrap(), p);
        }
    }

    #[test]
    fn pgm_p2_and_p5_decode() {
        let g = ContentGrid::new(2, 2, vec![-1.0, 0.0, 0.5, 2.0], 8).unwrap();
        for fmt in [PgmFormat::P2, PgmFormat::P5] {
            let mut buf = Vec::new();
            g.write_pgm(&mut buf, fmt).unwrap();
            let back = read_pgm(&buf, 8).unwrap();
            let expected = [0.0, 0.0, 128.0 / 255.0, 1.0];
            for (a, b) in back.values().iter().zip(expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sub_seed_dump_round_trip() {
        let r = SubRange::new(3, 5, 8).unwrap();
        let s = LatentSeed::sub_seed(vec![0.1 + 0.2, -1e-300], r, 16).unwrap();
        let mut buf = Vec::new();
        s.write_dump(&mut buf).unwrap();
        assert_eq!(LatentSeed::read_dump(&buf[..]).unwrap(), s);
    }
}

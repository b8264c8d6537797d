//! Message-flow plans for the eleven generation workflows and the executor
//! that runs them over a pipeline and a set of AWGN links.
//!
//! A plan is a topologically ordered list of steps. Each step runs at one
//! site and consumes the outputs of the steps it depends on, as delivered to
//! that site. Execution carries two values per step in lockstep: the noisy
//! value that went through the channels, and the noise-free reference that
//! took the identical path over perfect links.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{self, LinkChannels, LinkNoise};
use crate::content::{
    ContentGrid, GenRequest, LatentSeed, PayloadKind, PayloadSpec, ProtocolId, SketchGrid, TextPrompt, Transport,
};
use crate::error::{MegError, Result};
use crate::metrics;
use crate::pipeline::{partition_ranges, tile_rows, PartialContent, Pipeline, PipelineParams, MEAN_OFFSET};
use crate::sim::{self, Devices, Direction, Site, TaskTiming, WorkModel};

/// How UIDG-style shared uplink payloads reach the edge servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UplinkMode {
    /// One transmission heard by every server; accounted once.
    #[default]
    Broadcast,
    /// One transmission per server.
    Unicast,
}

/// Configured payload sizes used for link accounting and timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadSizes {
    pub image_bits: u64,
    pub seed_bits: u64,
    pub text_bits: u64,
    pub sketch_bits: u64,
}

impl PayloadSizes {
    /// Sizes derived from grid and latent dimensions.
    pub fn derived(params: &PipelineParams, text_bits: u64) -> Self {
        let image_bits = params.pixel_count() as u64 * u64::from(params.bits_per_pixel);
        Self {
            image_bits,
            seed_bits: params.latent_dim as u64 * u64::from(params.bits_per_feature),
            text_bits,
            sketch_bits: image_bits / (params.pool_factor * params.pool_factor) as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("image_bits", self.image_bits),
            ("seed_bits", self.seed_bits),
            ("text_bits", self.text_bits),
            ("sketch_bits", self.sketch_bits),
        ] {
            if v == 0 {
                return Err(MegError::param(format!("payload.{name}"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// Everything `build_plan` needs from a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanSettings {
    pub es_count: usize,
    pub sizes: PayloadSizes,
    pub uplink_mode: UplinkMode,
    pub pixels: usize,
    pub latent_dim: usize,
    pub sketch_height: usize,
    pub sketch_width: usize,
}

impl PlanSettings {
    pub fn new(params: &PipelineParams, es_count: usize, sizes: PayloadSizes, uplink_mode: UplinkMode) -> Self {
        Self {
            es_count,
            sizes,
            uplink_mode,
            pixels: params.pixel_count(),
            latent_dim: params.latent_dim,
            sketch_height: params.sketch_height(),
            sketch_width: params.sketch_width(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub payload: PayloadSpec,
    pub src: Site,
    pub dst: Vec<Site>,
    /// Element of a split output carried by this transmission.
    pub part: Option<usize>,
}

impl Transmission {
    pub fn direction(&self) -> Direction {
        if self.src == Site::Ue {
            Direction::Uplink
        } else {
            Direction::Downlink
        }
    }

    /// Edge server whose link carries the copy delivered to `dst`.
    pub fn link_for(&self, dst: Site) -> usize {
        match (self.src, dst) {
            (Site::Es(i), _) | (Site::Ue, Site::Es(i)) => i,
            (Site::Ue, Site::Ue) => unreachable!("validated plans never loop back to the UE"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Infer,
    /// Seed-to-seed generation; `es` picks a per-server generator, `None` the shared one.
    Generate { es: Option<usize> },
    PartialGenerate { lo: usize, hi: usize, dim: usize },
    Decode,
    Sketch,
    PartialSketch { tile: usize, tiles: usize },
    Complete,
    Split { parts: usize },
    Merge,
    Stitch,
    Select,
    Transmit(Transmission),
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Infer => "infer",
            Action::Generate { .. } => "generate",
            Action::PartialGenerate { .. } => "partial_generate",
            Action::Decode => "decode",
            Action::Sketch => "sketch",
            Action::PartialSketch { .. } => "partial_sketch",
            Action::Complete => "complete",
            Action::Split { .. } => "split",
            Action::Merge => "merge",
            Action::Stitch => "stitch",
            Action::Select => "select",
            Action::Transmit(_) => "transmit",
        }
    }

    pub fn is_generation(&self) -> bool {
        matches!(
            self,
            Action::Generate { .. } | Action::PartialGenerate { .. } | Action::PartialSketch { .. }
        )
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStep {
    pub site: Site,
    #[serde(flatten)]
    pub action: Action,
    pub depends_on: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPlan {
    pub protocol: ProtocolId,
    pub es_count: usize,
    pub steps: Vec<ProtocolStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Image,
    Seed,
    SubSeeds,
    SubSeed,
    Sketch,
    Tile,
    Partial,
    Text,
}

fn payload_shape(kind: PayloadKind) -> Shape {
    match kind {
        PayloadKind::Image => Shape::Image,
        PayloadKind::Seed => Shape::Seed,
        PayloadKind::SubSeed => Shape::SubSeed,
        PayloadKind::Sketch => Shape::Sketch,
        PayloadKind::SketchTile => Shape::Tile,
        PayloadKind::Text => Shape::Text,
        PayloadKind::PartialContent => Shape::Partial,
    }
}

impl ProtocolPlan {
    pub fn transmits(&self) -> impl Iterator<Item = (usize, &Transmission)> {
        self.steps.iter().enumerate().filter_map(|(i, s)| match &s.action {
            Action::Transmit(t) => Some((i, t)),
            _ => None,
        })
    }

    /// Static check: acyclic, every input is available where it is consumed,
    /// payload kinds match, and the last step leaves an image at the UE.
    pub fn validate(&self) -> Result<()> {
        if self.protocol.is_multi_es() && self.es_count < 2 {
            return Err(MegError::param("S", format!("{} needs at least 2 edge servers", self.protocol)));
        }
        if !self.protocol.is_multi_es() && self.es_count != 1 {
            return Err(MegError::param("S", format!("{} is a single-server protocol", self.protocol)));
        }
        let mut outputs: Vec<(Shape, Vec<Site>)> = Vec::with_capacity(self.steps.len());
        for (index, step) in self.steps.iter().enumerate() {
            let fail = |msg: String| MegError::StepFailed {
                index,
                action: step.action.name().into(),
                site: step.site.to_string(),
                source: Box::new(MegError::InvalidPayload(msg)),
            };
            if let Site::Es(i) = step.site {
                if i >= self.es_count {
                    return Err(fail(format!("ES{i} is not part of this plan")));
                }
            }
            let mut inputs = Vec::new();
            for &d in &step.depends_on {
                if d >= index {
                    return Err(fail(format!("depends on step {d}, which does not precede it")));
                }
                let (shape, sites) = &outputs[d];
                if !sites.contains(&step.site) {
                    return Err(fail(format!("output of step {d} is not available at {}", step.site)));
                }
                inputs.push(*shape);
            }
            let has = |s: Shape| inputs.contains(&s);
            let only = |s: Shape| !inputs.is_empty() && inputs.iter().all(|&x| x == s);
            let out = match &step.action {
                Action::Infer if inputs.is_empty() && step.site == Site::Ue => Shape::Seed,
                Action::Infer if has(Shape::Image) && has(Shape::Text) => Shape::Seed,
                Action::Generate { .. } | Action::Decode | Action::Sketch | Action::PartialSketch { .. } | Action::Split { .. }
                    if has(Shape::Seed) =>
                {
                    match &step.action {
                        Action::Generate { .. } => Shape::Seed,
                        Action::Decode => Shape::Image,
                        Action::Sketch => Shape::Sketch,
                        Action::PartialSketch { .. } => Shape::Tile,
                        _ => Shape::SubSeeds,
                    }
                }
                Action::PartialGenerate { .. } if has(Shape::SubSeed) => Shape::Partial,
                Action::Complete if has(Shape::Sketch) => Shape::Image,
                Action::Merge if only(Shape::Partial) => Shape::Image,
                Action::Stitch if only(Shape::Tile) => Shape::Sketch,
                Action::Select if !inputs.is_empty() && only(inputs[0]) => inputs[0],
                Action::Transmit(t) => {
                    if step.site != t.src || t.dst.is_empty() || t.dst.contains(&t.src) {
                        return Err(fail("transmit endpoints are inconsistent".into()));
                    }
                    if t.src != Site::Ue && t.dst != [Site::Ue] {
                        return Err(fail("edge servers only transmit to the UE".into()));
                    }
                    let want = payload_shape(t.payload.kind);
                    let text = t.payload.kind == PayloadKind::Text;
                    if text != (t.payload.transport == Transport::DigitalLossless) {
                        return Err(fail("text is lossless, everything else analog".into()));
                    }
                    let ok = match inputs.as_slice() {
                        [] => (text || want == Shape::Image) && t.src == Site::Ue,
                        [Shape::SubSeeds] => want == Shape::SubSeed && t.part.is_some(),
                        [s] => *s == want && t.part.is_none(),
                        _ => false,
                    };
                    if !ok {
                        return Err(fail(format!("cannot carry {:?} as a {} payload", inputs, t.payload.kind)));
                    }
                    outputs.push((want, t.dst.clone()));
                    continue;
                }
                _ => return Err(fail(format!("unsupported inputs {inputs:?}"))),
            };
            outputs.push((out, vec![step.site]));
        }
        match outputs.last() {
            Some((Shape::Image, sites)) if sites.contains(&Site::Ue) => Ok(()),
            _ => Err(MegError::InvalidPayload(format!(
                "{} plan does not end with an image at the UE",
                self.protocol
            ))),
        }
    }
}

fn share(total: u64, lo: usize, hi: usize, len: usize) -> u64 {
    let at = |i: usize| (u128::from(total) * i as u128 / len as u128) as u64;
    at(hi) - at(lo)
}

struct PlanBuilder<'a> {
    settings: &'a PlanSettings,
    steps: Vec<ProtocolStep>,
}

impl PlanBuilder<'_> {
    fn push(&mut self, site: Site, action: Action, depends_on: Vec<usize>) -> usize {
        self.steps.push(ProtocolStep {
            site,
            action,
            depends_on,
        });
        self.steps.len() - 1
    }

    fn payload(&self, kind: PayloadKind, part: Option<(usize, usize)>) -> PayloadSpec {
        let s = self.settings;
        let sizes = &s.sizes;
        match kind {
            PayloadKind::Image | PayloadKind::PartialContent => PayloadSpec::analog(kind, sizes.image_bits, s.pixels),
            PayloadKind::Seed => PayloadSpec::analog(kind, sizes.seed_bits, s.latent_dim),
            PayloadKind::Sketch => PayloadSpec::analog(kind, sizes.sketch_bits, s.sketch_height * s.sketch_width),
            PayloadKind::Text => PayloadSpec::lossless(kind, sizes.text_bits),
            PayloadKind::SubSeed => {
                let (lo, hi) = part.expect("sub-seed payload needs a range");
                PayloadSpec::analog(kind, share(sizes.seed_bits, lo, hi, s.latent_dim), hi - lo)
            }
            PayloadKind::SketchTile => {
                let (lo, hi) = part.expect("tile payload needs a row range");
                PayloadSpec::analog(
                    kind,
                    share(sizes.sketch_bits, lo, hi, s.sketch_height),
                    (hi - lo) * s.sketch_width,
                )
            }
        }
    }

    fn transmit(&mut self, payload: PayloadSpec, src: Site, dst: Vec<Site>, dep: Option<usize>, part: Option<usize>) -> usize {
        self.push(
            src,
            Action::Transmit(Transmission { payload, src, dst, part }),
            dep.into_iter().collect(),
        )
    }

    fn up(&mut self, kind: PayloadKind, es: usize, dep: Option<usize>) -> usize {
        let payload = self.payload(kind, None);
        self.transmit(payload, Site::Ue, vec![Site::Es(es)], dep, None)
    }

    fn down(&mut self, kind: PayloadKind, es: usize, dep: usize) -> usize {
        let payload = self.payload(kind, None);
        self.transmit(payload, Site::Es(es), vec![Site::Ue], Some(dep), None)
    }

    /// Uplink of a shared payload to every server: one broadcast or S unicasts.
    /// Returns the step that delivers to each server.
    fn fan_out(&mut self, kind: PayloadKind, dep: Option<usize>) -> Vec<usize> {
        let s = self.settings.es_count;
        match self.settings.uplink_mode {
            UplinkMode::Broadcast => {
                let payload = self.payload(kind, None);
                let step = self.transmit(payload, Site::Ue, (0..s).map(Site::Es).collect(), dep, None);
                vec![step; s]
            }
            UplinkMode::Unicast => (0..s).map(|i| self.up(kind, i, dep)).collect(),
        }
    }

    /// UE → ES_i image and text, then ES_i infers a task seed.
    fn remote_infer(&mut self, es: usize) -> usize {
        let img = self.up(PayloadKind::Image, es, None);
        let txt = self.up(PayloadKind::Text, es, None);
        self.push(Site::Es(es), Action::Infer, vec![img, txt])
    }
}

/// Canonical message-flow plan of a protocol.
pub fn build_plan(protocol: ProtocolId, settings: &PlanSettings) -> Result<ProtocolPlan> {
    use PayloadKind::*;
    let s = settings.es_count;
    if protocol.is_multi_es() && s < 2 {
        return Err(MegError::param("S", format!("{protocol} needs at least 2 edge servers")));
    }
    settings.sizes.validate()?;
    let es_count = if protocol.is_multi_es() { s } else { 1 };
    let mut b = PlanBuilder {
        settings,
        steps: Vec::new(),
    };
    let ue = Site::Ue;
    let es0 = Site::Es(0);
    match protocol {
        ProtocolId::Local => {
            let z = b.push(ue, Action::Infer, vec![]);
            let g = b.push(ue, Action::Generate { es: None }, vec![z]);
            b.push(ue, Action::Decode, vec![g]);
        }
        ProtocolId::Central => {
            let z = b.remote_infer(0);
            let g = b.push(es0, Action::Generate { es: None }, vec![z]);
            let x = b.push(es0, Action::Decode, vec![g]);
            b.down(Image, 0, x);
        }
        ProtocolId::Uieg => {
            let z = b.push(ue, Action::Infer, vec![]);
            let up = b.up(Seed, 0, Some(z));
            let txt = b.up(Text, 0, None);
            let g = b.push(es0, Action::Generate { es: None }, vec![up, txt]);
            let x = b.push(es0, Action::Decode, vec![g]);
            b.down(Image, 0, x);
        }
        ProtocolId::Eiug => {
            let z = b.remote_infer(0);
            let g = b.push(es0, Action::Generate { es: None }, vec![z]);
            let dn = b.down(Seed, 0, g);
            b.push(ue, Action::Decode, vec![dn]);
        }
        ProtocolId::Ciag => {
            let z = b.push(ue, Action::Infer, vec![]);
            let up = b.up(Seed, 0, Some(z));
            let txt = b.up(Text, 0, None);
            let g = b.push(es0, Action::Generate { es: None }, vec![up, txt]);
            let dn = b.down(Seed, 0, g);
            b.push(ue, Action::Decode, vec![dn]);
        }
        ProtocolId::Esuc => {
            let z = b.remote_infer(0);
            let g = b.push(es0, Action::Generate { es: None }, vec![z]);
            let sk = b.push(es0, Action::Sketch, vec![g]);
            let dn = b.down(Sketch, 0, sk);
            b.push(ue, Action::Complete, vec![dn]);
        }
        ProtocolId::Uidg => {
            let z = b.push(ue, Action::Infer, vec![]);
            let seeds = b.fan_out(Seed, Some(z));
            let texts = b.fan_out(Text, None);
            let candidates: Vec<usize> = (0..s)
                .map(|i| {
                    let g = b.push(Site::Es(i), Action::Generate { es: Some(i) }, vec![seeds[i], texts[i]]);
                    let x = b.push(Site::Es(i), Action::Decode, vec![g]);
                    b.down(Image, i, x)
                })
                .collect();
            b.push(ue, Action::Select, candidates);
        }
        ProtocolId::Diug => {
            let candidates: Vec<usize> = (0..s)
                .map(|i| {
                    let z = b.remote_infer(i);
                    let g = b.push(Site::Es(i), Action::Generate { es: Some(i) }, vec![z]);
                    let dn = b.down(Seed, i, g);
                    b.push(ue, Action::Decode, vec![dn])
                })
                .collect();
            b.push(ue, Action::Select, candidates);
        }
        ProtocolId::Dsuc => {
            let candidates: Vec<usize> = (0..s)
                .map(|i| {
                    let z = b.remote_infer(i);
                    let g = b.push(Site::Es(i), Action::Generate { es: Some(i) }, vec![z]);
                    let sk = b.push(Site::Es(i), Action::Sketch, vec![g]);
                    b.down(Sketch, i, sk)
                })
                .collect();
            let chosen = b.push(ue, Action::Select, candidates);
            b.push(ue, Action::Complete, vec![chosen]);
        }
        ProtocolId::Uidcg => {
            let d = settings.latent_dim;
            if s > d {
                return Err(MegError::param("S", format!("UIDCG needs S <= d = {d}")));
            }
            let z = b.push(ue, Action::Infer, vec![]);
            let split = b.push(ue, Action::Split { parts: s }, vec![z]);
            let texts = b.fan_out(Text, None);
            let partials: Vec<usize> = partition_ranges(d, s)
                .into_iter()
                .enumerate()
                .map(|(i, (lo, hi))| {
                    let payload = b.payload(SubSeed, Some((lo, hi)));
                    let up = b.transmit(payload, ue, vec![Site::Es(i)], Some(split), Some(i));
                    let y = b.push(Site::Es(i), Action::PartialGenerate { lo, hi, dim: d }, vec![up, texts[i]]);
                    b.down(PartialContent, i, y)
                })
                .collect();
            b.push(ue, Action::Merge, partials);
        }
        ProtocolId::Dcsuc => {
            let h = settings.sketch_height;
            let tiles: Vec<usize> = (0..s)
                .map(|i| {
                    let rows = tile_rows(h, s, i)?;
                    let z = b.remote_infer(i);
                    let g = b.push(Site::Es(i), Action::Generate { es: None }, vec![z]);
                    let t = b.push(Site::Es(i), Action::PartialSketch { tile: i, tiles: s }, vec![g]);
                    let payload = b.payload(SketchTile, Some(rows));
                    Ok(b.transmit(payload, Site::Es(i), vec![ue], Some(t), None))
                })
                .collect::<Result<_>>()?;
            let full = b.push(ue, Action::Stitch, tiles);
            b.push(ue, Action::Complete, vec![full]);
        }
    }
    let plan = ProtocolPlan {
        protocol,
        es_count,
        steps: b.steps,
    };
    plan.validate()?;
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    First,
    /// Least distortion against the noise-free reference; ties go to the lowest index.
    #[default]
    MinDistortionOracle,
    FixedIndex(usize),
}

/// Picks one candidate. `references` holds either one shared reference or
/// one per candidate.
pub fn select_output<C: AsRef<[f64]>>(candidates: &[C], references: &[C], policy: SelectionPolicy) -> Result<usize> {
    let n = candidates.len();
    if n == 0 {
        return Err(MegError::Empty("no candidates to select from".into()));
    }
    match policy {
        SelectionPolicy::First => Ok(0),
        SelectionPolicy::FixedIndex(i) if i < n => Ok(i),
        SelectionPolicy::FixedIndex(i) => Err(MegError::SelectionOutOfRange { index: i, count: n }),
        SelectionPolicy::MinDistortionOracle => {
            if references.len() != 1 && references.len() != n {
                return Err(MegError::dims(format!("1 or {n} references"), references.len()));
            }
            let mut best = (0, f64::INFINITY);
            for (i, c) in candidates.iter().enumerate() {
                let r = if references.len() == 1 { &references[0] } else { &references[i] };
                let (c, r) = (c.as_ref(), r.as_ref());
                if c.len() != r.len() {
                    return Err(MegError::dims(r.len(), c.len()));
                }
                let m = metrics::mse(c, r);
                if m < best.1 {
                    best = (i, m);
                }
            }
            Ok(best.0)
        }
    }
}

impl AsRef<[f64]> for ContentGrid {
    fn as_ref(&self) -> &[f64] {
        self.values()
    }
}

impl AsRef<[f64]> for SketchGrid {
    fn as_ref(&self) -> &[f64] {
        self.values()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub site: Site,
    pub action: String,
    pub depends_on: Vec<usize>,
    pub ready: f64,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitRecord {
    pub step: usize,
    pub src: Site,
    pub dst: Vec<Site>,
    pub kind: PayloadKind,
    pub bits: u64,
    pub symbols: usize,
    pub direction: Direction,
    pub transport: Transport,
    pub noise_applied: bool,
}

/// Full record of one request's execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub protocol: ProtocolId,
    pub request_id: u64,
    pub arrival: f64,
    pub completion: f64,
    pub steps: Vec<StepRecord>,
    pub transmits: Vec<TransmitRecord>,
    /// Candidate index chosen by the select step, if the plan has one.
    pub selected: Option<usize>,
    #[serde(skip)]
    pub final_output: Option<ContentGrid>,
    #[serde(skip)]
    pub reference_output: Option<ContentGrid>,
}

impl Transcript {
    pub fn response_time(&self) -> f64 {
        self.completion - self.arrival
    }

    pub fn final_output(&self) -> &ContentGrid {
        self.final_output.as_ref().expect("transcript without output")
    }

    pub fn reference_output(&self) -> &ContentGrid {
        self.reference_output.as_ref().expect("transcript without reference")
    }

    /// Wall-clock span covered by the steps matching `filter`.
    pub fn phase_span(&self, filter: impl Fn(&str) -> bool) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in self.steps.iter().filter(|s| filter(&s.action)) {
            lo = lo.min(s.start);
            hi = hi.max(s.end);
        }
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }

    /// Span of the generation steps (generate, partial_generate, partial_sketch).
    pub fn generation_phase(&self) -> f64 {
        self.phase_span(|a| matches!(a, "generate" | "partial_generate" | "partial_sketch"))
    }

    pub(crate) fn apply_timing(&mut self, timings: &[TaskTiming], completion: f64) {
        for (record, t) in self.steps.iter_mut().zip(timings) {
            record.ready = t.ready;
            record.start = t.start;
            record.end = t.end;
        }
        self.completion = completion;
    }
}

/// Read-only context shared by every execution.
#[derive(Debug, Clone, Copy)]
pub struct ExecEnv<'a> {
    pub pipeline: &'a Pipeline,
    pub channels: &'a LinkChannels,
    pub devices: &'a Devices,
    pub work: &'a WorkModel,
    pub policy: SelectionPolicy,
}

#[derive(Debug, Clone)]
enum Value {
    Image(ContentGrid),
    Seed(LatentSeed),
    SubSeeds(Vec<LatentSeed>),
    Sketch(SketchGrid),
    Partial(PartialContent),
    Text(TextPrompt),
}

impl Value {
    fn describe(&self) -> &'static str {
        match self {
            Value::Image(_) => "image",
            Value::Seed(_) => "seed",
            Value::SubSeeds(_) => "split seed",
            Value::Sketch(_) => "sketch",
            Value::Partial(_) => "partial content",
            Value::Text(_) => "text",
        }
    }

    fn samples(&self) -> Option<&[f64]> {
        match self {
            Value::Image(g) => Some(g.values()),
            Value::Sketch(s) => Some(s.values()),
            Value::Seed(z) => Some(z.values()),
            Value::Partial(p) => Some(&p.values),
            _ => None,
        }
    }
}

/// Values a step left at each site.
type Delivered = Vec<(Site, Value)>;

fn value_at(out: &Delivered, site: Site) -> Option<&Value> {
    out.iter().find(|(s, _)| *s == site).map(|(_, v)| v)
}

fn seed_input<'v>(inputs: &[&'v Value]) -> Result<&'v LatentSeed> {
    inputs
        .iter()
        .find_map(|v| match v {
            Value::Seed(z) => Some(z),
            _ => None,
        })
        .ok_or_else(|| MegError::InvalidPayload("no seed among the inputs".into()))
}

/// Runs a non-transmit, non-select action on one branch.
fn compute(action: &Action, site: Site, inputs: &[&Value], p: &Pipeline, request: &GenRequest) -> Result<Value> {
    let value = match action {
        Action::Infer => {
            if inputs.is_empty() {
                if site != Site::Ue {
                    return Err(MegError::InvalidPayload("only the UE holds the raw request".into()));
                }
                Value::Seed(p.infer(&request.input_image, &request.prompt)?)
            } else {
                let image = inputs.iter().find_map(|v| match v {
                    Value::Image(g) => Some(g),
                    _ => None,
                });
                let text = inputs.iter().find_map(|v| match v {
                    Value::Text(t) => Some(t),
                    _ => None,
                });
                match (image, text) {
                    (Some(g), Some(t)) => Value::Seed(p.infer(g, t)?),
                    _ => return Err(MegError::InvalidPayload("infer needs an image and a prompt".into())),
                }
            }
        }
        Action::Generate { es } => Value::Seed(p.generate(seed_input(inputs)?, *es)?),
        Action::PartialGenerate { lo, hi, .. } => {
            let sub = inputs
                .iter()
                .find_map(|v| match v {
                    Value::Seed(z) if z.sub_range().is_some() => Some(z),
                    _ => None,
                })
                .ok_or_else(|| MegError::InvalidPayload("partial_generate needs a sub-seed".into()))?;
            let range = sub.sub_range().expect("checked above");
            if (range.lo, range.hi) != (*lo, *hi) {
                return Err(MegError::InvalidPartition(format!(
                    "received sub-seed [{}, {}) but step expects [{lo}, {hi})",
                    range.lo, range.hi
                )));
            }
            Value::Partial(p.partial_generate(sub)?)
        }
        Action::Decode => Value::Image(p.decode(seed_input(inputs)?)?),
        Action::Sketch => Value::Sketch(p.sketch(seed_input(inputs)?)?),
        Action::PartialSketch { tile, tiles } => Value::Sketch(p.partial_sketch(seed_input(inputs)?, *tile, *tiles)?),
        Action::Complete => match inputs {
            [Value::Sketch(s)] => Value::Image(p.complete(s)?),
            _ => return Err(MegError::InvalidPayload("complete needs one sketch".into())),
        },
        Action::Split { parts } => Value::SubSeeds(p.split_seed(seed_input(inputs)?, *parts)?),
        Action::Merge => {
            let parts = inputs
                .iter()
                .map(|v| match v {
                    Value::Partial(y) => Ok(y.clone()),
                    other => Err(MegError::InvalidPayload(format!("cannot merge a {}", other.describe()))),
                })
                .collect::<Result<Vec<_>>>()?;
            Value::Image(p.merge_partials(&parts)?)
        }
        Action::Stitch => {
            let tiles = inputs
                .iter()
                .map(|v| match v {
                    Value::Sketch(t) => Ok(t.clone()),
                    other => Err(MegError::InvalidPayload(format!("cannot stitch a {}", other.describe()))),
                })
                .collect::<Result<Vec<_>>>()?;
            Value::Sketch(p.stitch_tiles(&tiles)?)
        }
        Action::Select | Action::Transmit(_) => unreachable!("handled by the executor"),
    };
    Ok(value)
}

/// Extracts the carried value, checking it against the payload spec.
fn payload_value(t: &Transmission, input: Option<&Value>, request: &GenRequest) -> Result<Value> {
    let value = match (input, t.part) {
        (None, None) if t.payload.kind == PayloadKind::Text => Value::Text(request.prompt.clone()),
        (None, None) if t.payload.kind == PayloadKind::Image => Value::Image(request.input_image.clone()),
        (Some(Value::SubSeeds(parts)), Some(i)) => Value::Seed(
            parts
                .get(i)
                .cloned()
                .ok_or_else(|| MegError::InvalidPartition(format!("split has no part {i}")))?,
        ),
        (Some(v), None) => v.clone(),
        _ => return Err(MegError::InvalidPayload("transmit input does not match its payload".into())),
    };
    let ok = matches!(
        (&value, t.payload.kind),
        (Value::Image(_), PayloadKind::Image)
            | (Value::Seed(_), PayloadKind::Seed)
            | (Value::Seed(_), PayloadKind::SubSeed)
            | (Value::Sketch(_), PayloadKind::Sketch)
            | (Value::Sketch(_), PayloadKind::SketchTile)
            | (Value::Partial(_), PayloadKind::PartialContent)
            | (Value::Text(_), PayloadKind::Text)
    );
    if !ok {
        return Err(MegError::InvalidPayload(format!(
            "a {} cannot travel as a {} payload",
            value.describe(),
            t.payload.kind
        )));
    }
    if let Some(samples) = value.samples() {
        if samples.len() != t.payload.symbol_count {
            return Err(MegError::dims(
                format!("{} symbols", t.payload.symbol_count),
                format!("{} symbols", samples.len()),
            ));
        }
    }
    Ok(value)
}

/// Sends one value over an AWGN link. Grids travel centred on mid-gray.
fn over_the_air(value: &Value, spec: &channel::ChannelSpec, rng: &mut crate::rng::SimRng) -> Result<Value> {
    let centred = |v: &[f64]| v.iter().map(|x| x - MEAN_OFFSET).collect::<Vec<f64>>();
    let restore = |v: Vec<f64>| v.into_iter().map(|x| x + MEAN_OFFSET).collect::<Vec<f64>>();
    Ok(match value {
        Value::Image(g) => Value::Image(g.with_values(restore(channel::transmit_analog(&centred(g.values()), spec, rng)?))?),
        Value::Sketch(s) => Value::Sketch(s.with_values(restore(channel::transmit_analog(&centred(s.values()), spec, rng)?))?),
        Value::Seed(z) => Value::Seed(z.with_values(channel::transmit_analog(z.values(), spec, rng)?)?),
        Value::Partial(y) => Value::Partial(PartialContent {
            range: y.range,
            values: channel::transmit_analog(&y.values, spec, rng)?,
        }),
        Value::SubSeeds(_) | Value::Text(_) => {
            return Err(MegError::InvalidPayload(format!("{} is not an analog payload", value.describe())))
        }
    })
}

fn send_text(t: &Transmission, prompt: &TextPrompt) -> Result<Value> {
    let bytes = channel::transmit_digital(&t.payload, prompt.text.as_bytes())?;
    let text = String::from_utf8(bytes).map_err(|e| MegError::InvalidPayload(e.to_string()))?;
    Ok(Value::Text(TextPrompt {
        text,
        ..prompt.clone()
    }))
}

/// Runs the plan's data flow (no timing). Step times in the returned
/// transcript are zero until [`Transcript::apply_timing`] fills them.
pub(crate) fn execute_values(
    plan: &ProtocolPlan,
    env: &ExecEnv<'_>,
    noise: &mut LinkNoise,
    request: &GenRequest,
) -> Result<Transcript> {
    plan.validate()?;
    let mut noisy: Vec<Delivered> = Vec::with_capacity(plan.steps.len());
    let mut clean: Vec<Delivered> = Vec::with_capacity(plan.steps.len());
    let mut transmits = Vec::new();
    let mut steps = Vec::with_capacity(plan.steps.len());
    let mut selected = None;

    for (index, step) in plan.steps.iter().enumerate() {
        let wrap = |e: MegError| MegError::StepFailed {
            index,
            action: step.action.name().into(),
            site: step.site.to_string(),
            source: Box::new(e),
        };
        let gather = |outs: &[Delivered]| -> Result<Vec<Value>> {
            step.depends_on
                .iter()
                .map(|&d| {
                    value_at(&outs[d], step.site)
                        .cloned()
                        .ok_or_else(|| MegError::InvalidPayload(format!("output of step {d} never reached {}", step.site)))
                })
                .collect()
        };
        let noisy_in = gather(&noisy).map_err(wrap)?;
        let clean_in = gather(&clean).map_err(wrap)?;
        let (n_out, c_out): (Delivered, Delivered) = match &step.action {
            Action::Transmit(t) => {
                let direction = t.direction();
                let n_val = payload_value(t, noisy_in.first(), request).map_err(wrap)?;
                let c_val = payload_value(t, clean_in.first(), request).map_err(wrap)?;
                let mut n_out = Vec::with_capacity(t.dst.len());
                let mut noise_applied = false;
                for &dst in &t.dst {
                    let es = t.link_for(dst);
                    let received = match &n_val {
                        Value::Text(prompt) => send_text(t, prompt).map_err(wrap)?,
                        v => {
                            let spec = env.channels.spec(es, direction);
                            let samples = v.samples().expect("analog values carry samples");
                            noise_applied |= spec.message_noise_variance(channel::signal_power(samples), samples.len()) > 0.0;
                            let rng = noise.stream(es, direction, spec.noise_seed);
                            over_the_air(v, spec, rng).map_err(wrap)?
                        }
                    };
                    n_out.push((dst, received));
                }
                let c_out = t.dst.iter().map(|&d| (d, c_val.clone())).collect();
                transmits.push(TransmitRecord {
                    step: index,
                    src: t.src,
                    dst: t.dst.clone(),
                    kind: t.payload.kind,
                    bits: t.payload.bits,
                    symbols: t.payload.symbol_count,
                    direction,
                    transport: t.payload.transport,
                    noise_applied,
                });
                (n_out, c_out)
            }
            Action::Select => {
                let samples = |vals: &[Value]| -> Result<Vec<Vec<f64>>> {
                    vals.iter()
                        .map(|v| {
                            v.samples()
                                .map(<[f64]>::to_vec)
                                .ok_or_else(|| MegError::InvalidPayload(format!("cannot select a {}", v.describe())))
                        })
                        .collect()
                };
                let cands = samples(&noisy_in).map_err(wrap)?;
                let refs = samples(&clean_in).map_err(wrap)?;
                let i = select_output(&cands, &refs, env.policy).map_err(wrap)?;
                selected = Some(i);
                (
                    vec![(step.site, noisy_in[i].clone())],
                    vec![(step.site, clean_in[i].clone())],
                )
            }
            action => {
                let n_refs: Vec<&Value> = noisy_in.iter().collect();
                let c_refs: Vec<&Value> = clean_in.iter().collect();
                let n = compute(action, step.site, &n_refs, env.pipeline, request).map_err(wrap)?;
                let c = compute(action, step.site, &c_refs, env.pipeline, request).map_err(wrap)?;
                (vec![(step.site, n)], vec![(step.site, c)])
            }
        };
        noisy.push(n_out);
        clean.push(c_out);
        steps.push(StepRecord {
            index,
            site: step.site,
            action: step.action.name().into(),
            depends_on: step.depends_on.clone(),
            ready: 0.0,
            start: 0.0,
            end: 0.0,
        });
    }

    let image_at_ue = |out: Option<&Delivered>| match out.and_then(|o| value_at(o, Site::Ue)) {
        Some(Value::Image(g)) => Ok(g.clone()),
        _ => Err(MegError::InvalidPayload("plan did not leave an image at the UE".into())),
    };
    Ok(Transcript {
        protocol: plan.protocol,
        request_id: request.request_id,
        arrival: request.arrival_time,
        completion: request.arrival_time,
        steps,
        transmits,
        selected,
        final_output: Some(image_at_ue(noisy.last())?),
        reference_output: Some(image_at_ue(clean.last())?),
    })
}

/// Runs a plan for one request in isolation (no competing traffic).
pub fn execute_plan(plan: &ProtocolPlan, env: &ExecEnv<'_>, noise: &mut LinkNoise, request: &GenRequest) -> Result<Transcript> {
    let mut transcript = execute_values(plan, env, noise, request)?;
    let job = sim::plan_job(plan, env, request.arrival_time)?;
    let timing = sim::simulate(std::slice::from_ref(&job))?;
    transcript.apply_timing(&timing[0].tasks, timing[0].completion);
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(s: usize) -> PlanSettings {
        let params = PipelineParams::new(16, 32, 32, 4, 1);
        PlanSettings::new(&params, s, PayloadSizes::derived(&params, 1000), UplinkMode::Broadcast)
    }

    #[test]
    fn all_plans_validate() {
        for p in ProtocolId::ALL {
            let plan = build_plan(p, &settings(3)).unwrap();
            plan.validate().unwrap();
            assert_eq!(plan.es_count, if p.is_multi_es() { 3 } else { 1 });
        }
    }

    #[test]
    fn local_has_no_transmits() {
        assert_eq!(build_plan(ProtocolId::Local, &settings(1)).unwrap().transmits().count(), 0);
    }

    #[test]
    fn ciag_transmits_two_analog_seeds() {
        let plan = build_plan(ProtocolId::Ciag, &settings(1)).unwrap();
        let analog: Vec<_> = plan
            .transmits()
            .filter(|(_, t)| t.payload.transport == Transport::Analog)
            .map(|(_, t)| (t.payload.kind, t.direction()))
            .collect();
        assert_eq!(
            analog,
            vec![(PayloadKind::Seed, Direction::Uplink), (PayloadKind::Seed, Direction::Downlink)]
        );
    }

    #[test]
    fn uidcg_counts_per_server_transmits() {
        let plan = build_plan(ProtocolId::Uidcg, &settings(3)).unwrap();
        let count = |kind, dir| plan.transmits().filter(|(_, t)| t.payload.kind == kind && t.direction() == dir).count();
        assert_eq!(count(PayloadKind::SubSeed, Direction::Uplink), 3);
        assert_eq!(count(PayloadKind::PartialContent, Direction::Downlink), 3);
    }

    #[test]
    fn multi_es_needs_two_servers() {
        assert!(build_plan(ProtocolId::Dsuc, &settings(1)).is_err());
        assert!(build_plan(ProtocolId::Ciag, &settings(1)).is_ok());
    }

    #[test]
    fn direction_accounting() {
        let s = settings(1);
        let analog = |p, dir| -> Vec<PayloadKind> {
            build_plan(p, &s)
                .unwrap()
                .transmits()
                .filter(|(_, t)| t.payload.transport == Transport::Analog && t.direction() == dir)
                .map(|(_, t)| t.payload.kind)
                .collect()
        };
        assert_eq!(analog(ProtocolId::Uieg, Direction::Uplink), vec![PayloadKind::Seed]);
        assert_eq!(analog(ProtocolId::Eiug, Direction::Downlink), vec![PayloadKind::Seed]);
        for dir in [Direction::Uplink, Direction::Downlink] {
            assert!(!analog(ProtocolId::Ciag, dir).contains(&PayloadKind::Image));
        }
    }

    #[test]
    fn broken_plan_rejected() {
        let mut plan = build_plan(ProtocolId::Ciag, &settings(1)).unwrap();
        // downlink of a seed the server never held
        plan.steps[4].depends_on = vec![0];
        assert!(plan.validate().is_err());
        let mut plan = build_plan(ProtocolId::Local, &settings(1)).unwrap();
        plan.steps.pop();
        assert!(plan.validate().is_err());
    }

    #[test]
    fn selection_policies() {
        let reference = vec![0.5; 4];
        let noisy = vec![0.6; 4];
        let cands = [reference.clone(), noisy];
        let refs = [reference.clone()];
        assert_eq!(select_output(&cands[..1], &refs, SelectionPolicy::MinDistortionOracle).unwrap(), 0);
        assert_eq!(select_output(&cands[..1], &refs, SelectionPolicy::First).unwrap(), 0);
        assert_eq!(select_output(&cands[..1], &refs, SelectionPolicy::FixedIndex(0)).unwrap(), 0);
        assert_eq!(select_output(&cands, &refs, SelectionPolicy::MinDistortionOracle).unwrap(), 0);
        assert_eq!(select_output(&cands, &refs, SelectionPolicy::FixedIndex(1)).unwrap(), 1);
        assert!(matches!(
            select_output(&cands, &refs, SelectionPolicy::FixedIndex(2)),
            Err(MegError::SelectionOutOfRange { index: 2, count: 2 })
        ));
        let empty: [Vec<f64>; 0] = [];
        assert!(select_output(&empty, &refs[..0], SelectionPolicy::First).is_err());
    }

    #[test]
    fn oracle_ties_go_low() {
        let r = vec![0.0; 3];
        let cands = [vec![1.0; 3], vec![0.5; 3], vec![-0.5; 3]];
        assert_eq!(select_output(&cands, &[r], SelectionPolicy::MinDistortionOracle).unwrap(), 1);
    }
}

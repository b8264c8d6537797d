//! Deterministic linear stand-in for a latent generative model.
//!
//! The image encoder is `Bᵀ(x − ½)`, the decoder `½ + B z`, where `B` is an
//! `N×d` matrix with orthonormal columns. Generation is an orthogonal
//! rotation `z' = Q z` in latent space. Because every stage is linear, the
//! cooperative split/merge protocols are exact and channel noise propagates
//! in closed form.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::content::{ContentGrid, LatentSeed, SeedKind, SketchGrid, SubRange, TextPrompt};
use crate::error::{MegError, Result};
use crate::rng::{self, SimRng};

/// Mid-gray offset: `z = 0` decodes to a uniform 0.5 grid.
pub const MEAN_OFFSET: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub latent_dim: usize,
    pub height: usize,
    pub width: usize,
    pub pool_factor: usize,
    pub basis_seed: u64,
    pub gen_seed: u64,
    /// One generator seed per edge server, for per-server model diversity.
    pub es_gen_seeds: Vec<u64>,
    pub text_mix_weight: f64,
    pub text_dim: usize,
    pub bits_per_pixel: u32,
    pub bits_per_feature: u32,
}

impl PipelineParams {
    /// Parameters with per-server seeds derived from `gen_seed`.
    pub fn new(latent_dim: usize, height: usize, width: usize, pool_factor: usize, seed: u64) -> Self {
        Self {
            latent_dim,
            height,
            width,
            pool_factor,
            basis_seed: seed,
            gen_seed: rng::derive_seed(seed, "generator"),
            es_gen_seeds: Vec::new(),
            text_mix_weight: 0.25,
            text_dim: 16,
            bits_per_pixel: 8,
            bits_per_feature: 32,
        }
    }

    pub fn with_es_count(mut self, count: usize) -> Self {
        self.es_gen_seeds = (0..count)
            .map(|i| rng::derive_seed(self.gen_seed, &format!("es/{i}")))
            .collect();
        self
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn sketch_height(&self) -> usize {
        self.height / self.pool_factor
    }

    pub fn sketch_width(&self) -> usize {
        self.width / self.pool_factor
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(MegError::param("height/width", "must be at least 1"));
        }
        if self.latent_dim == 0 {
            return Err(MegError::param("d", "must be at least 1"));
        }
        if self.latent_dim > self.pixel_count() {
            return Err(MegError::param("d", "must not exceed H*W"));
        }
        if self.pool_factor == 0 || self.height % self.pool_factor != 0 {
            return Err(MegError::param("k", "k must divide H"));
        }
        if self.width % self.pool_factor != 0 {
            return Err(MegError::param("k", "k must divide W"));
        }
        if !(0.0..=1.0).contains(&self.text_mix_weight) {
            return Err(MegError::param("text_mix_weight", "must lie in [0, 1]"));
        }
        if self.text_dim == 0 {
            return Err(MegError::param("text_dim", "must be at least 1"));
        }
        if self.bits_per_pixel == 0 || self.bits_per_feature == 0 {
            return Err(MegError::param("bits_per_pixel/bits_per_feature", "must be positive"));
        }
        Ok(())
    }
}

/// Column block `B·Q[:, lo..hi]·z[lo..hi]` produced by one cooperating server.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialContent {
    pub range: SubRange,
    pub values: Vec<f64>,
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng: SimRng = rand::SeedableRng::seed_from_u64(seed);
    // column-major fill keeps the draw order independent of nalgebra internals
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    DMatrix::from_vec(rows, cols, data)
}

/// Orthonormal columns from the QR factorization of a seeded Gaussian matrix.
fn orthonormal(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let qr = gaussian(rows, cols, seed).qr();
    let mut q = qr.q();
    let r = qr.r();
    // fix column signs so the factor is unique
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Immutable pipeline; all operations are pure.
#[derive(Debug, Clone)]
pub struct Pipeline {
    params: PipelineParams,
    basis: DMatrix<f64>,
    generator: DMatrix<f64>,
    es_generators: Vec<DMatrix<f64>>,
    text_projection: DMatrix<f64>,
    /// `B·Q`, the pixel-space image of each generator column.
    basis_generator: DMatrix<f64>,
}

impl Pipeline {
    pub fn build(params: PipelineParams) -> Result<Self> {
        params.validate()?;
        let n = params.pixel_count();
        let d = params.latent_dim;
        let basis = orthonormal(n, d, params.basis_seed);
        let generator = orthonormal(d, d, params.gen_seed);
        let es_generators = params.es_gen_seeds.iter().map(|&s| orthonormal(d, d, s)).collect();
        let text_projection = gaussian(d, params.text_dim, rng::derive_seed(params.basis_seed, "text_projection"))
            / (params.text_dim as f64).sqrt();
        let basis_generator = &basis * &generator;
        Ok(Self {
            params,
            basis,
            generator,
            es_generators,
            text_projection,
            basis_generator,
        })
    }

    pub fn params(&self) -> &PipelineParams {
        &self.params
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn generator(&self, es_index: Option<usize>) -> Result<&DMatrix<f64>> {
        match es_index {
            None => Ok(&self.generator),
            Some(i) => self.es_generators.get(i).ok_or_else(|| {
                MegError::param("es_index", format!("{i} out of range for {} servers", self.es_generators.len()))
            }),
        }
    }

    pub fn es_count(&self) -> usize {
        self.es_generators.len()
    }

    fn check_image(&self, image: &ContentGrid) -> Result<()> {
        let p = &self.params;
        if image.height() != p.height || image.width() != p.width {
            return Err(MegError::dims(
                format!("{}x{}", p.height, p.width),
                format!("{}x{}", image.height(), image.width()),
            ));
        }
        Ok(())
    }

    fn check_full_seed(&self, seed: &LatentSeed) -> Result<()> {
        if seed.kind() == SeedKind::SubSeed {
            return Err(MegError::InvalidPayload("sub-seeds must be merged first".into()));
        }
        if seed.dim() != self.params.latent_dim {
            return Err(MegError::dims(self.params.latent_dim, seed.dim()));
        }
        Ok(())
    }

    /// Task seed `Bᵀ(x − ½) + α·P·e` from an image and prompt.
    pub fn infer(&self, image: &ContentGrid, prompt: &TextPrompt) -> Result<LatentSeed> {
        self.check_image(image)?;
        if prompt.embedding.len() != self.params.text_dim {
            return Err(MegError::dims(
                format!("text embedding of length {}", self.params.text_dim),
                prompt.embedding.len(),
            ));
        }
        let centered = DVector::from_iterator(image.len(), image.values().iter().map(|v| v - MEAN_OFFSET));
        let mut z = self.basis.tr_mul(&centered);
        let alpha = self.params.text_mix_weight;
        if alpha != 0.0 {
            let e = DVector::from_column_slice(&prompt.embedding);
            z += alpha * (&self.text_projection * e);
        }
        LatentSeed::new(z.as_slice().to_vec(), SeedKind::TaskSeed, self.params.bits_per_feature)
    }

    /// Content seed `Q z`, using the per-server generator when `es_index` is set.
    pub fn generate(&self, seed: &LatentSeed, es_index: Option<usize>) -> Result<LatentSeed> {
        if seed.kind() != SeedKind::TaskSeed {
            return Err(MegError::InvalidPayload(format!("generate expects a task_seed, got {}", seed.kind())));
        }
        self.check_full_seed(seed)?;
        let q = self.generator(es_index)?;
        let z = q * DVector::from_column_slice(seed.values());
        Ok(seed.with_values(z.as_slice().to_vec())?.with_kind(SeedKind::ContentSeed))
    }

    /// Image `½ + B z`. Values are not clamped.
    pub fn decode(&self, seed: &LatentSeed) -> Result<ContentGrid> {
        self.check_full_seed(seed)?;
        let x = &self.basis * DVector::from_column_slice(seed.values());
        let values = x.iter().map(|v| v + MEAN_OFFSET).collect();
        ContentGrid::new(self.params.height, self.params.width, values, self.params.bits_per_pixel)
    }

    /// Decode, then `k×k` average pooling.
    pub fn sketch(&self, seed: &LatentSeed) -> Result<SketchGrid> {
        let image = self.decode(seed)?;
        pool(&image, self.params.pool_factor)
    }

    /// Bilinear upsampling of a full sketch back to `H×W`.
    pub fn complete(&self, sketch: &SketchGrid) -> Result<ContentGrid> {
        if sketch.tile_range().is_some() {
            return Err(MegError::InvalidPayload("tiles must be stitched before completion".into()));
        }
        let p = &self.params;
        if sketch.height() != p.sketch_height() || sketch.width() != p.sketch_width() {
            return Err(MegError::dims(
                format!("{}x{} sketch", p.sketch_height(), p.sketch_width()),
                format!("{}x{}", sketch.height(), sketch.width()),
            ));
        }
        let values = upsample_bilinear(sketch.values(), sketch.height(), sketch.width(), p.pool_factor);
        ContentGrid::new(p.height, p.width, values, p.bits_per_pixel)
    }

    /// Contiguous partition into `parts` sub-seeds; the first `d mod parts`
    /// pieces take one extra coordinate.
    pub fn split_seed(&self, seed: &LatentSeed, parts: usize) -> Result<Vec<LatentSeed>> {
        self.check_full_seed(seed)?;
        split_seed(seed, parts)
    }

    /// Pixel-space contribution of one sub-seed under the shared generator.
    pub fn partial_generate(&self, sub: &LatentSeed) -> Result<PartialContent> {
        let range = sub
            .sub_range()
            .ok_or_else(|| MegError::InvalidPayload("partial_generate expects a sub_seed".into()))?;
        if range.dim != self.params.latent_dim {
            return Err(MegError::dims(self.params.latent_dim, range.dim));
        }
        let block = self.basis_generator.columns(range.lo, range.len());
        let y = block * DVector::from_column_slice(sub.values());
        Ok(PartialContent {
            range,
            values: y.as_slice().to_vec(),
        })
    }

    /// `½ + Σ yᵢ`; the ranges must partition `[0, d)`.
    pub fn merge_partials(&self, parts: &[PartialContent]) -> Result<ContentGrid> {
        let d = self.params.latent_dim;
        let n = self.params.pixel_count();
        check_partition(parts.iter().map(|p| (p.range.lo, p.range.hi)), d, "sub-seed ranges")?;
        let mut acc = vec![0.0; n];
        let mut ordered: Vec<&PartialContent> = parts.iter().collect();
        ordered.sort_by_key(|p| p.range.lo);
        for part in ordered {
            if part.range.dim != d || part.values.len() != n {
                return Err(MegError::dims(n, part.values.len()));
            }
            for (a, v) in acc.iter_mut().zip(&part.values) {
                *a += v;
            }
        }
        let values = acc.into_iter().map(|v| v + MEAN_OFFSET).collect();
        ContentGrid::new(self.params.height, self.params.width, values, self.params.bits_per_pixel)
    }

    /// Rows `[lo, hi)` of the full sketch for tile `tile_index` of `tiles`.
    pub fn partial_sketch(&self, seed: &LatentSeed, tile_index: usize, tiles: usize) -> Result<SketchGrid> {
        let (lo, hi) = tile_rows(self.params.sketch_height(), tiles, tile_index)?;
        let full = self.sketch(seed)?;
        let w = full.width();
        let values = full.values()[lo * w..hi * w].to_vec();
        SketchGrid::new(hi - lo, w, values, full.pool_factor(), Some((lo, hi)), full.bits_per_pixel())
    }

    /// Row-concatenates tiles into the full sketch.
    pub fn stitch_tiles(&self, tiles: &[SketchGrid]) -> Result<SketchGrid> {
        let h = self.params.sketch_height();
        let w = self.params.sketch_width();
        let ranges = tiles
            .iter()
            .map(|t| {
                t.tile_range()
                    .ok_or_else(|| MegError::InvalidPayload("stitch expects sketch tiles".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        check_partition(ranges.iter().copied(), h, "tile rows")?;
        let mut ordered: Vec<&SketchGrid> = tiles.iter().collect();
        ordered.sort_by_key(|t| t.tile_range().map(|r| r.0));
        let mut values = Vec::with_capacity(h * w);
        for t in ordered {
            if t.width() != w {
                return Err(MegError::dims(w, t.width()));
            }
            values.extend_from_slice(t.values());
        }
        SketchGrid::new(h, w, values, self.params.pool_factor, None, self.params.bits_per_pixel)
    }
}

/// Splits a full seed into `parts` contiguous sub-seeds (ceil-first sizes).
pub fn split_seed(seed: &LatentSeed, parts: usize) -> Result<Vec<LatentSeed>> {
    let d = seed.dim();
    if seed.kind() == SeedKind::SubSeed {
        return Err(MegError::InvalidPayload("cannot split a sub-seed".into()));
    }
    if parts == 0 || parts > d {
        return Err(MegError::param("S", format!("must lie in 1..={d}")));
    }
    partition_ranges(d, parts)
        .into_iter()
        .map(|(lo, hi)| {
            LatentSeed::sub_seed(seed.values()[lo..hi].to_vec(), SubRange::new(lo, hi, d)?, seed.bits_per_feature())
        })
        .collect()
}

/// `[0, len)` cut into `parts` contiguous ranges, sizes differing by at most one,
/// larger ranges first.
pub fn partition_ranges(len: usize, parts: usize) -> Vec<(usize, usize)> {
    let base = len / parts;
    let extra = len % parts;
    let mut lo = 0;
    (0..parts)
        .map(|i| {
            let hi = lo + base + usize::from(i < extra);
            let r = (lo, hi);
            lo = hi;
            r
        })
        .collect()
}

/// Row range of tile `index` among `tiles`; the last tile takes the remainder.
pub fn tile_rows(height: usize, tiles: usize, index: usize) -> Result<(usize, usize)> {
    if tiles == 0 || tiles > height {
        return Err(MegError::param("S", format!("tile count must lie in 1..={height}")));
    }
    if index >= tiles {
        return Err(MegError::param("tile_index", format!("{index} out of range for {tiles} tiles")));
    }
    let base = height / tiles;
    let lo = index * base;
    let hi = if index + 1 == tiles { height } else { lo + base };
    Ok((lo, hi))
}

fn check_partition(ranges: impl Iterator<Item = (usize, usize)>, len: usize, what: &str) -> Result<()> {
    let mut ranges: Vec<(usize, usize)> = ranges.collect();
    if ranges.is_empty() {
        return Err(MegError::InvalidPartition(format!("no {what}")));
    }
    ranges.sort_unstable();
    let mut next = 0;
    for (lo, hi) in ranges {
        if lo != next || hi <= lo {
            let kind = if lo < next { "overlap" } else { "gap" };
            return Err(MegError::InvalidPartition(format!("{what}: {kind} at {lo}")));
        }
        next = hi;
    }
    if next != len {
        return Err(MegError::InvalidPartition(format!("{what} cover [0, {next}) instead of [0, {len})")));
    }
    Ok(())
}

/// `k×k` block-mean pooling.
pub fn pool(image: &ContentGrid, k: usize) -> Result<SketchGrid> {
    if k == 0 || image.height() % k != 0 || image.width() % k != 0 {
        return Err(MegError::param("k", "k must divide H and W"));
    }
    let (h, w) = (image.height() / k, image.width() / k);
    let area = (k * k) as f64;
    let mut values = Vec::with_capacity(h * w);
    for bi in 0..h {
        for bj in 0..w {
            let mut sum = 0.0;
            for i in bi * k..(bi + 1) * k {
                for j in bj * k..(bj + 1) * k {
                    sum += image.get(i, j);
                }
            }
            values.push(sum / area);
        }
    }
    SketchGrid::new(h, w, values, k, None, image.bits_per_pixel())
}

/// Half-pixel-centred bilinear upsampling with edge clamping.
fn upsample_bilinear(src: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    let coord = |o: usize, n: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) / k as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let mut out = Vec::with_capacity(h * k * w * k);
    for oi in 0..h * k {
        let (r0, r1, ty) = coord(oi, h);
        for oj in 0..w * k {
            let (c0, c1, tx) = coord(oj, w);
            let top = lerp(src[r0 * w + c0], src[r0 * w + c1], tx);
            let bottom = lerp(src[r1 * w + c0], src[r1 * w + c1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}

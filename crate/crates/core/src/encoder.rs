//! Hierarchical multi-scale feature encoding.
//!
//! Every pyramid level is cut into base-resolution tiles. Each tile goes
//! through the tile encoder, and the per-tile feature maps are put back
//! together in tile order. Each level's map is then average-pooled down to
//! the base grid. The levels are concatenated along the channel axis,
//! smallest scale first.
//!
//! Two reference encoders are provided. Both are local (each output cell
//! depends only on its own patch), so tiling never changes their output.
//! Real backbone features enter through [`load_precomputed_features`].

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pyramid::{self, ImageF32, PyramidError, ScaleSet};
use crate::tensorio::{self, TensorError, TensorF32};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("encoder spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("invalid encoder spec: {0}")]
    InvalidSpec(String),
    #[error("grid side {side} is not a multiple of {target}")]
    NonDivisibleGrid { side: usize, target: usize },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        found: Vec<usize>,
    },
    #[error("precomputed encoders have no tile function; load features with load_precomputed_features")]
    PrecomputedKind,
    #[error(transparent)]
    Pyramid(#[from] PyramidError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    /// Per-channel mean of each patch; dim is always 3.
    PatchMean,
    /// Flattened patch pixels times a seeded random projection.
    SeededLinear,
    /// Features computed elsewhere and loaded from MSTF files.
    Precomputed,
}

/// Tile encoder configuration. `base` is the encoder's native input side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub base: usize,
    pub patch: usize,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl EncoderSpec {
    pub fn patch_mean(base: usize, patch: usize) -> Self {
        Self {
            kind: EncoderKind::PatchMean,
            base,
            patch,
            dim: 3,
            seed: 0,
        }
    }

    pub fn seeded_linear(base: usize, patch: usize, dim: usize, seed: u64) -> Self {
        Self {
            kind: EncoderKind::SeededLinear,
            base,
            patch,
            dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.patch == 0 || self.base == 0 || !self.base.is_multiple_of(self.patch) {
            return Err(EncoderError::InvalidSpec(format!(
                "patch {} must divide base {}",
                self.patch, self.base
            )));
        }
        if self.dim == 0 {
            return Err(EncoderError::InvalidSpec("dim must be >= 1".into()));
        }
        if self.kind == EncoderKind::PatchMean && self.dim != 3 {
            return Err(EncoderError::InvalidSpec(format!(
                "PatchMean produces 3 channels, spec says {}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Side of the feature grid one tile produces.
    pub fn grid_side(&self) -> usize {
        self.base / self.patch
    }
}

/// Spatial feature map, row-major `h x w x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub h: usize,
    pub w: usize,
    pub dim: usize,
    pub values: Vec<f32>,
}

impl FeatureGrid {
    pub fn new(h: usize, w: usize, dim: usize, values: Vec<f32>) -> Result<Self, EncoderError> {
        if values.len() != h * w * dim || h == 0 || w == 0 || dim == 0 {
            return Err(EncoderError::ShapeMismatch {
                expected: (h, w, dim),
                found: vec![values.len()],
            });
        }
        Ok(Self { h, w, dim, values })
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f32] {
        let start = (i * self.w + j) * self.dim;
        &self.values[start..start + self.dim]
    }

    pub fn to_tensor(&self) -> TensorF32 {
        TensorF32::new(vec![self.h, self.w, self.dim], self.values.clone())
            .expect("feature grid shape is a valid tensor shape")
    }

    pub fn from_tensor(t: TensorF32) -> Result<Self, EncoderError> {
        match *t.dims() {
            [h, w, dim] => {
                let values = t.into_data();
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(EncoderError::InvalidSpec(
                        "feature tensor has non-finite values".into(),
                    ));
                }
                Ok(Self { h, w, dim, values })
            }
            _ => Err(EncoderError::ShapeMismatch {
                expected: (0, 0, 0),
                found: t.dims().to_vec(),
            }),
        }
    }

    /// Per-channel mean over all cells, accumulated in f64.
    pub fn channel_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.dim];
        for cell in self.values.chunks_exact(self.dim) {
            for (s, &v) in sums.iter_mut().zip(cell) {
                *s += v as f64;
            }
        }
        let n = (self.h * self.w) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }
}

/// Base-grid features with channel blocks ordered by ascending scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleFeatures {
    pub g: usize,
    pub dim_total: usize,
    pub values: Vec<f32>,
    pub scale_order: ScaleSet,
}

impl MultiScaleFeatures {
    pub fn block_dim(&self) -> usize {
        self.dim_total / self.scale_order.scales().len()
    }

    /// Channel block `k` as a standalone grid.
    pub fn channel_block(&self, k: usize) -> FeatureGrid {
        let d = self.block_dim();
        let values = self
            .values
            .chunks_exact(self.dim_total)
            .flat_map(|cell| cell[k * d..(k + 1) * d].iter().copied())
            .collect();
        FeatureGrid {
            h: self.g,
            w: self.g,
            dim: d,
            values,
        }
    }

    pub fn to_tensor(&self) -> TensorF32 {
        TensorF32::new(vec![self.g, self.g, self.dim_total], self.values.clone())
            .expect("multi-scale shape is a valid tensor shape")
    }
}

/// Projection matrix of the seeded linear encoder, shape `3p^2 x dim`,
/// row-major. Entries come from ChaCha8 seeded with `seed` through
/// `SeedableRng::seed_from_u64`; each draw `u` of `next_u64` maps to
/// `((u >> 11) * 2^-53) * 2 - 1`, giving values in [-1, 1).
pub fn seeded_projection(patch: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3 * patch * patch * dim)
        .map(|_| {
            let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            (unit * 2.0 - 1.0) as f32
        })
        .collect()
}

// Applies the local encoder to every patch of `img`; the image side must be
// a multiple of the patch. Used directly for tiles, and by the tests as the
// whole-image reference.
fn encode_patches(img: &ImageF32, spec: &EncoderSpec, projection: Option<&[f32]>) -> FeatureGrid {
    let p = spec.patch;
    let (gh, gw) = (img.height() / p, img.width() / p);
    let dim = spec.dim;
    let mut values = Vec::with_capacity(gh * gw * dim);
    let mut flat = vec![0.0f32; 3 * p * p];
    for ci in 0..gh {
        for cj in 0..gw {
            match projection {
                None => {
                    let mut sums = [0.0f64; 3];
                    for y in ci * p..(ci + 1) * p {
                        for x in cj * p..(cj + 1) * p {
                            for (c, s) in sums.iter_mut().enumerate() {
                                *s += img.at(y, x, c) as f64;
                            }
                        }
                    }
                    let n = (p * p) as f64;
                    values.extend(sums.iter().map(|s| (s / n) as f32));
                }
                Some(m) => {
                    let mut k = 0;
                    for y in ci * p..(ci + 1) * p {
                        for x in cj * p..(cj + 1) * p {
                            for c in 0..3 {
                                flat[k] = img.at(y, x, c);
                                k += 1;
                            }
                        }
                    }
                    for d in 0..dim {
                        let acc: f64 = flat
                            .iter()
                            .enumerate()
                            .map(|(k, &v)| v as f64 * m[k * dim + d] as f64)
                            .sum();
                        values.push(acc as f32);
                    }
                }
            }
        }
    }
    FeatureGrid {
        h: gh,
        w: gw,
        dim,
        values,
    }
}

fn projection_for(spec: &EncoderSpec) -> Result<Option<Vec<f32>>, EncoderError> {
    spec.validate()?;
    match spec.kind {
        EncoderKind::PatchMean => Ok(None),
        EncoderKind::SeededLinear => Ok(Some(seeded_projection(spec.patch, spec.dim, spec.seed))),
        EncoderKind::Precomputed => Err(EncoderError::PrecomputedKind),
    }
}

/// Encodes a single base-resolution tile into a `g x g x dim` grid.
pub fn encode_tile(tile: &ImageF32, spec: &EncoderSpec) -> Result<FeatureGrid, EncoderError> {
    let projection = projection_for(spec)?;
    check_tile(tile, spec)?;
    Ok(encode_patches(tile, spec, projection.as_deref()))
}

fn check_tile(tile: &ImageF32, spec: &EncoderSpec) -> Result<(), EncoderError> {
    if tile.height() != spec.base || tile.width() != spec.base {
        return Err(EncoderError::SpecMismatch(format!(
            "tile is {}x{}, encoder base is {}",
            tile.height(),
            tile.width(),
            spec.base
        )));
    }
    Ok(())
}

/// Whole-image application of a local encoder without tiling. Side must be
/// a multiple of the patch.
pub fn encode_untiled(img: &ImageF32, spec: &EncoderSpec) -> Result<FeatureGrid, EncoderError> {
    let projection = projection_for(spec)?;
    if !img.height().is_multiple_of(spec.patch) || !img.width().is_multiple_of(spec.patch) {
        return Err(EncoderError::SpecMismatch(format!(
            "image {}x{} is not a multiple of patch {}",
            img.height(),
            img.width(),
            spec.patch
        )));
    }
    Ok(encode_patches(img, spec, projection.as_deref()))
}

/// Splits a scaled image into base tiles, encodes them (in parallel) and
/// reassembles the tile grids at their tile positions.
pub fn encode_scale(scaled: &ImageF32, spec: &EncoderSpec) -> Result<FeatureGrid, EncoderError> {
    let projection = projection_for(spec)?;
    let tiles = pyramid::split_tiles(scaled, spec.base)?;
    let grids: Vec<FeatureGrid> = tiles
        .tiles
        .par_iter()
        .map(|t| encode_patches(t, spec, projection.as_deref()))
        .collect();
    Ok(stitch_grids(&grids, tiles.rows, tiles.cols))
}

fn stitch_grids(grids: &[FeatureGrid], rows: usize, cols: usize) -> FeatureGrid {
    let (gh, gw, dim) = (grids[0].h, grids[0].w, grids[0].dim);
    let (h, w) = (rows * gh, cols * gw);
    let mut values = vec![0.0f32; h * w * dim];
    for (k, grid) in grids.iter().enumerate() {
        let (ti, tj) = (k / cols, k % cols);
        for i in 0..gh {
            let dst = ((ti * gh + i) * w + tj * gw) * dim;
            values[dst..dst + gw * dim].copy_from_slice(&grid.values[i * gw * dim..(i + 1) * gw * dim]);
        }
    }
    FeatureGrid { h, w, dim, values }
}

/// Average pooling with `k x k` windows (stride `k`) down to `g x g`.
pub fn pool_to_base(big: &FeatureGrid, g: usize) -> Result<FeatureGrid, EncoderError> {
    if g == 0 || big.h != big.w || !big.h.is_multiple_of(g) {
        return Err(EncoderError::NonDivisibleGrid {
            side: big.h.max(big.w),
            target: g,
        });
    }
    let k = big.h / g;
    if k == 1 {
        return Ok(big.clone());
    }
    let dim = big.dim;
    let norm = (k * k) as f64;
    let mut values = Vec::with_capacity(g * g * dim);
    let mut acc = vec![0.0f64; dim];
    for i in 0..g {
        for j in 0..g {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for y in i * k..(i + 1) * k {
                for x in j * k..(j + 1) * k {
                    for (a, &v) in acc.iter_mut().zip(big.cell(y, x)) {
                        *a += v as f64;
                    }
                }
            }
            values.extend(acc.iter().map(|a| (a / norm) as f32));
        }
    }
    Ok(FeatureGrid {
        h: g,
        w: g,
        dim,
        values,
    })
}

/// Concatenates same-shape grids along the channel axis.
pub fn concat_channels(grids: &[FeatureGrid]) -> FeatureGrid {
    let (h, w) = (grids[0].h, grids[0].w);
    let dim: usize = grids.iter().map(|g| g.dim).sum();
    let mut values = Vec::with_capacity(h * w * dim);
    for cell in 0..h * w {
        for grid in grids {
            values.extend_from_slice(&grid.values[cell * grid.dim..(cell + 1) * grid.dim]);
        }
    }
    FeatureGrid { h, w, dim, values }
}

/// Full hierarchical encoding of a square image.
pub fn encode_multiscale(
    img: &ImageF32,
    scales: &ScaleSet,
    spec: &EncoderSpec,
) -> Result<MultiScaleFeatures, EncoderError> {
    spec.validate()?;
    if spec.kind == EncoderKind::Precomputed {
        return Err(EncoderError::PrecomputedKind);
    }
    if scales.base() != spec.base {
        return Err(EncoderError::SpecMismatch(format!(
            "scale set base {} differs from encoder base {}",
            scales.base(),
            spec.base
        )));
    }
    let levels = pyramid::build_pyramid(img, scales)?;
    let g = spec.grid_side();
    let pooled = levels
        .iter()
        .map(|level| encode_scale(level, spec).and_then(|big| pool_to_base(&big, g)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(from_levels(&pooled, scales.clone()))
}

fn from_levels(pooled: &[FeatureGrid], scales: ScaleSet) -> MultiScaleFeatures {
    let merged = concat_channels(pooled);
    MultiScaleFeatures {
        g: merged.h,
        dim_total: merged.dim,
        values: merged.values,
        scale_order: scales,
    }
}

/// Builds multi-scale features from externally computed per-scale grids
/// (one per scale, ascending). Each level must be `(scale/base)*g` square
/// with a common channel count.
pub fn combine_precomputed(
    levels: &[FeatureGrid],
    scales: &ScaleSet,
    g: usize,
) -> Result<MultiScaleFeatures, EncoderError> {
    if levels.len() != scales.scales().len() {
        return Err(EncoderError::SpecMismatch(format!(
            "{} feature levels for {} scales",
            levels.len(),
            scales.scales().len()
        )));
    }
    let dim = levels[0].dim;
    let mut pooled = Vec::with_capacity(levels.len());
    for (level, &s) in levels.iter().zip(scales.scales()) {
        let side = s / scales.base() * g;
        if level.h != side || level.w != side || level.dim != dim {
            return Err(EncoderError::ShapeMismatch {
                expected: (side, side, dim),
                found: vec![level.h, level.w, level.dim],
            });
        }
        pooled.push(pool_to_base(level, g)?);
    }
    Ok(from_levels(&pooled, scales.clone()))
}

/// Loads an `[h, w, dim]` MSTF feature file and checks its shape.
pub fn load_precomputed_features(
    path: impl AsRef<Path>,
    expected: (usize, usize, usize),
) -> Result<FeatureGrid, EncoderError> {
    let t = tensorio::read_mstf(path)?;
    let (h, w, d) = expected;
    if t.dims() != [h, w, d] {
        return Err(EncoderError::ShapeMismatch {
            expected,
            found: t.dims().to_vec(),
        });
    }
    FeatureGrid::from_tensor(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(EncoderSpec::patch_mean(378, 14).validate().is_ok());
        assert!(EncoderSpec::patch_mean(378, 16).validate().is_err());
        let mut bad = EncoderSpec::patch_mean(378, 14);
        bad.dim = 4;
        assert!(bad.validate().is_err());
        assert!(EncoderSpec::seeded_linear(378, 14, 0, 1).validate().is_err());
        assert_eq!(EncoderSpec::patch_mean(378, 14).grid_side(), 27);
    }

    #[test]
    fn constant_patch_mean() {
        let spec = EncoderSpec::patch_mean(378, 14);
        let grid = encode_tile(&ImageF32::filled(378, 378, 0.5), &spec).unwrap();
        assert_eq!((grid.h, grid.w, grid.dim), (27, 27, 3));
        assert!(grid.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn wrong_tile_side() {
        let spec = EncoderSpec::patch_mean(378, 14);
        assert!(matches!(
            encode_tile(&ImageF32::filled(392, 392, 0.5), &spec),
            Err(EncoderError::SpecMismatch(_))
        ));
    }

    #[test]
    fn precomputed_has_no_tile_fn() {
        let spec = EncoderSpec {
            kind: EncoderKind::Precomputed,
            base: 28,
            patch: 14,
            dim: 8,
            seed: 0,
        };
        assert!(matches!(
            encode_tile(&ImageF32::filled(28, 28, 0.0), &spec),
            Err(EncoderError::PrecomputedKind)
        ));
    }

    #[test]
    fn projection_range_and_determinism() {
        let a = seeded_projection(2, 5, 42);
        assert_eq!(a.len(), 60);
        assert!(a.iter().all(|&v| (-1.0..1.0).contains(&v)));
        assert_eq!(a, seeded_projection(2, 5, 42));
        assert_ne!(a, seeded_projection(2, 5, 43));
    }

    #[test]
    fn pool_arithmetic() {
        let big = FeatureGrid::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pool_to_base(&big, 1).unwrap().values, vec![2.5]);
        assert_eq!(pool_to_base(&big, 2).unwrap(), big);
        assert!(matches!(
            pool_to_base(&big, 3),
            Err(EncoderError::NonDivisibleGrid { .. })
        ));
    }

    #[test]
    fn single_scale_equals_tile() {
        let spec = EncoderSpec::seeded_linear(28, 7, 4, 9);
        let px: Vec<f32> = (0..28 * 28 * 3).map(|i| (i % 17) as f32 / 17.0).collect();
        let img = ImageF32::new(28, 28, px).unwrap();
        let ms = encode_multiscale(&img, &ScaleSet::single(28).unwrap(), &spec).unwrap();
        let tile = encode_tile(&img, &spec).unwrap();
        assert_eq!(ms.values, tile.values);
        assert_eq!(ms.dim_total, 4);
    }

    #[test]
    fn base_mismatch_rejected() {
        let spec = EncoderSpec::patch_mean(28, 7);
        let err = encode_multiscale(&ImageF32::filled(28, 28, 0.0), &ScaleSet::default(), &spec);
        assert!(matches!(err, Err(EncoderError::SpecMismatch(_))));
    }
}

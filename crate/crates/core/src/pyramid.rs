//! Multi-resolution pyramid construction and base-resolution tiling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensorio::{ImageU8, TensorError, TensorF32};

/// Native side of the tile encoder.
pub const DEFAULT_BASE: usize = 378;
/// 378, 2x378 and 3x378.
pub const DEFAULT_SCALES: [usize; 3] = [378, 756, 1134];

#[derive(Debug, Error, PartialEq)]
pub enum PyramidError {
    #[error("image is not square: {height}x{width}")]
    NonSquare { height: usize, width: usize },
    #[error("side {side} is not a multiple of base {base}")]
    NonDivisibleSide { side: usize, base: usize },
    #[error("inconsistent tile grid: {0}")]
    InconsistentGrid(String),
    #[error("invalid scale set: {0}")]
    InvalidScaleSet(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
}

/// Square side lengths of the pyramid levels, smallest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScaleSetRaw", into = "ScaleSetRaw")]
pub struct ScaleSet {
    base: usize,
    scales: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ScaleSetRaw {
    base: usize,
    scales: Vec<usize>,
}

impl TryFrom<ScaleSetRaw> for ScaleSet {
    type Error = PyramidError;
    fn try_from(raw: ScaleSetRaw) -> Result<Self, Self::Error> {
        ScaleSet::new(raw.base, raw.scales)
    }
}

impl From<ScaleSet> for ScaleSetRaw {
    fn from(s: ScaleSet) -> Self {
        ScaleSetRaw {
            base: s.base,
            scales: s.scales,
        }
    }
}

impl ScaleSet {
    pub fn new(base: usize, scales: Vec<usize>) -> Result<Self, PyramidError> {
        if base == 0 {
            return Err(PyramidError::InvalidScaleSet("base must be >= 1".into()));
        }
        if scales.first() != Some(&base) {
            return Err(PyramidError::InvalidScaleSet(format!(
                "first scale must equal base {base}, got {scales:?}"
            )));
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PyramidError::InvalidScaleSet(format!(
                "scales must be strictly increasing: {scales:?}"
            )));
        }
        if let Some(s) = scales.iter().find(|&&s| s % base != 0) {
            return Err(PyramidError::InvalidScaleSet(format!(
                "scale {s} is not a multiple of base {base}"
            )));
        }
        Ok(Self { base, scales })
    }

    pub fn single(base: usize) -> Result<Self, PyramidError> {
        Self::new(base, vec![base])
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    /// Total number of base tiles across all levels, sum of (scale/base)^2.
    pub fn tile_count(&self) -> usize {
        self.scales
            .iter()
            .map(|s| (s / self.base) * (s / self.base))
            .sum()
    }
}

impl Default for ScaleSet {
    fn default() -> Self {
        Self {
            base: DEFAULT_BASE,
            scales: DEFAULT_SCALES.to_vec(),
        }
    }
}

/// RGB float image, interleaved, row-major. Pixel values are normally in
/// [0, 1]; only finiteness is enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF32 {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl ImageF32 {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self, PyramidError> {
        if height == 0 || width == 0 {
            return Err(PyramidError::InvalidImage(format!(
                "empty image {height}x{width}"
            )));
        }
        if pixels.len() != height * width * 3 {
            return Err(PyramidError::InvalidImage(format!(
                "{height}x{width}x3 needs {} values, got {}",
                height * width * 3,
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(PyramidError::InvalidImage("non-finite pixel".into()));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0 && value.is_finite());
        Self {
            height,
            width,
            pixels: vec![value; height * width * 3],
        }
    }

    pub fn from_u8(img: &ImageU8) -> Self {
        Self {
            height: img.height,
            width: img.width,
            pixels: img.pixels.iter().map(|&p| p as f32 / 255.0).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    pub fn to_tensor(&self) -> TensorF32 {
        TensorF32::new(vec![self.height, self.width, 3], self.pixels.clone())
            .expect("image shape is a valid tensor shape")
    }

    pub fn from_tensor(t: &TensorF32) -> Result<Self, TensorError> {
        match t.dims() {
            [h, w, 3] => Self::new(*h, *w, t.data().to_vec()).map_err(|e| {
                TensorError::InvalidShape {
                    dims: t.dims().to_vec(),
                    reason: e.to_string(),
                }
            }),
            _ => Err(TensorError::InvalidShape {
                dims: t.dims().to_vec(),
                reason: "image tensors are [H, W, 3]".into(),
            }),
        }
    }
}

/// Base-resolution tiles of one square image, in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub rows: usize,
    pub cols: usize,
    pub tile_side: usize,
    pub tiles: Vec<ImageF32>,
}

impl TileGrid {
    pub fn tile(&self, row: usize, col: usize) -> &ImageF32 {
        &self.tiles[row * self.cols + col]
    }
}

// Source coordinate under the half-pixel-center convention, clamped to the
// valid sample range; returns (lower index, upper index, upper weight).
fn source_taps(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let ratio = src_len as f64 / dst_len as f64;
    let s = ((dst as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, s - lo as f64)
}

/// Bilinear resampling with half-pixel centers and edge clamping.
/// Channels are interpolated independently.
pub fn resize_bilinear(img: &ImageF32, out_h: usize, out_w: usize) -> ImageF32 {
    assert!(out_h >= 1 && out_w >= 1, "output size must be positive");
    if out_h == img.height && out_w == img.width {
        return img.clone();
    }
    let cols: Vec<_> = (0..out_w)
        .map(|dx| source_taps(dx, img.width, out_w))
        .collect();
    let mut pixels = Vec::with_capacity(out_h * out_w * 3);
    for dy in 0..out_h {
        let (y0, y1, fy) = source_taps(dy, img.height, out_h);
        for &(x0, x1, fx) in &cols {
            for c in 0..3 {
                let top = (1.0 - fx) * img.at(y0, x0, c) as f64 + fx * img.at(y0, x1, c) as f64;
                let bot = (1.0 - fx) * img.at(y1, x0, c) as f64 + fx * img.at(y1, x1, c) as f64;
                pixels.push(((1.0 - fy) * top + fy * bot) as f32);
            }
        }
    }
    ImageF32 {
        height: out_h,
        width: out_w,
        pixels,
    }
}

pub fn split_tiles(img: &ImageF32, base: usize) -> Result<TileGrid, PyramidError> {
    if !img.is_square() {
        return Err(PyramidError::NonSquare {
            height: img.height,
            width: img.width,
        });
    }
    let side = img.width;
    if base == 0 || !side.is_multiple_of(base) {
        return Err(PyramidError::NonDivisibleSide { side, base });
    }
    let n = side / base;
    let mut tiles = Vec::with_capacity(n * n);
    for ti in 0..n {
        for tj in 0..n {
            let mut px = Vec::with_capacity(base * base * 3);
            for y in ti * base..(ti + 1) * base {
                let start = (y * side + tj * base) * 3;
                px.extend_from_slice(&img.pixels[start..start + base * 3]);
            }
            tiles.push(ImageF32 {
                height: base,
                width: base,
                pixels: px,
            });
        }
    }
    Ok(TileGrid {
        rows: n,
        cols: n,
        tile_side: base,
        tiles,
    })
}

pub fn stitch_tiles(grid: &TileGrid) -> Result<ImageF32, PyramidError> {
    if grid.rows == 0 || grid.cols == 0 || grid.tile_side == 0 {
        return Err(PyramidError::InconsistentGrid("empty grid".into()));
    }
    if grid.tiles.len() != grid.rows * grid.cols {
        return Err(PyramidError::InconsistentGrid(format!(
            "{}x{} grid holds {} tiles",
            grid.rows,
            grid.cols,
            grid.tiles.len()
        )));
    }
    let t = grid.tile_side;
    if let Some((k, bad)) = grid
        .tiles
        .iter()
        .enumerate()
        .find(|(_, tile)| tile.height != t || tile.width != t)
    {
        return Err(PyramidError::InconsistentGrid(format!(
            "tile {k} is {}x{}, expected {t}x{t}",
            bad.height, bad.width
        )));
    }
    let (h, w) = (grid.rows * t, grid.cols * t);
    let mut pixels = vec![0.0f32; h * w * 3];
    for ti in 0..grid.rows {
        for tj in 0..grid.cols {
            let tile = grid.tile(ti, tj);
            for y in 0..t {
                let dst = ((ti * t + y) * w + tj * t) * 3;
                pixels[dst..dst + t * 3].copy_from_slice(&tile.pixels[y * t * 3..(y + 1) * t * 3]);
            }
        }
    }
    Ok(ImageF32 {
        height: h,
        width: w,
        pixels,
    })
}

/// One image per scale, each resampled directly from `img`.
pub fn build_pyramid(img: &ImageF32, scales: &ScaleSet) -> Result<Vec<ImageF32>, PyramidError> {
    if !img.is_square() {
        return Err(PyramidError::NonSquare {
            height: img.height,
            width: img.width,
        });
    }
    Ok(scales
        .scales()
        .iter()
        .map(|&s| resize_bilinear(img, s, s))
        .collect())
}

/// Zero-pad the shorter axis symmetrically (extra column/row goes to the
/// far side when the difference is odd), then resize to `base`x`base`.
pub fn prepare_square(img: &ImageF32, base: usize) -> ImageF32 {
    let side = img.height.max(img.width);
    let padded = if img.is_square() {
        img.clone()
    } else {
        let top = (side - img.height) / 2;
        let left = (side - img.width) / 2;
        let mut pixels = vec![0.0f32; side * side * 3];
        for y in 0..img.height {
            let src = y * img.width * 3;
            let dst = ((y + top) * side + left) * 3;
            pixels[dst..dst + img.width * 3].copy_from_slice(&img.pixels[src..src + img.width * 3]);
        }
        ImageF32 {
            height: side,
            width: side,
            pixels,
        }
    };
    resize_bilinear(&padded, base, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, vals: &[f32]) -> ImageF32 {
        let px = vals.iter().flat_map(|&v| [v, v, v]).collect();
        ImageF32::new(h, w, px).unwrap()
    }

    #[test]
    fn scale_set_validation() {
        assert!(ScaleSet::new(378, vec![378, 756, 1134]).is_ok());
        assert!(ScaleSet::new(378, vec![756, 1134]).is_err());
        assert!(ScaleSet::new(378, vec![378, 378]).is_err());
        assert!(ScaleSet::new(378, vec![378, 500]).is_err());
        assert!(ScaleSet::new(0, vec![0]).is_err());
        assert_eq!(ScaleSet::default().tile_count(), 14);
    }

    #[test]
    fn scale_set_json() {
        let s: ScaleSet = serde_json::from_str(r#"{"base":2,"scales":[2,4]}"#).unwrap();
        assert_eq!(s.scales(), &[2, 4]);
        assert!(serde_json::from_str::<ScaleSet>(r#"{"base":2,"scales":[4]}"#).is_err());
    }

    #[test]
    fn upsample_two_by_two_matches_hand_values() {
        // Source coordinates per axis for 2 -> 4: 0, 0.25, 0.75, 1 (ends clamped).
        // The input is 2*row + col, which bilinear reproduces exactly.
        let img = gray(2, 2, &[0.0, 1.0, 2.0, 3.0]);
        let out = resize_bilinear(&img, 4, 4);
        #[rustfmt::skip]
        let expected = [
            0.0, 0.25, 0.75, 1.0,
            0.5, 0.75, 1.25, 1.5,
            1.5, 1.75, 2.25, 2.5,
            2.0, 2.25, 2.75, 3.0,
        ];
        for (k, e) in expected.iter().enumerate() {
            for c in 0..3 {
                assert_eq!(out.at(k / 4, k % 4, c), *e, "cell {k}");
            }
        }
    }

    #[test]
    fn quadrant_stitch() {
        let tiles = (0..4).map(|v| ImageF32::filled(2, 2, v as f32)).collect();
        let grid = TileGrid {
            rows: 2,
            cols: 2,
            tile_side: 2,
            tiles,
        };
        let img = stitch_tiles(&grid).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expected = (2 * (y / 2) + x / 2) as f32;
                assert_eq!(img.at(y, x, 0), expected);
            }
        }
    }

    #[test]
    fn stitch_rejects_odd_tile() {
        let mut tiles: Vec<_> = (0..3).map(|_| ImageF32::filled(378, 378, 0.0)).collect();
        tiles.push(ImageF32::filled(377, 377, 0.0));
        let grid = TileGrid {
            rows: 2,
            cols: 2,
            tile_side: 378,
            tiles,
        };
        assert!(matches!(
            stitch_tiles(&grid),
            Err(PyramidError::InconsistentGrid(_))
        ));
    }

    #[test]
    fn split_errors() {
        let rect = ImageF32::filled(4, 6, 0.0);
        assert_eq!(
            split_tiles(&rect, 2).unwrap_err(),
            PyramidError::NonSquare {
                height: 4,
                width: 6
            }
        );
        let sq = ImageF32::filled(10, 10, 0.0);
        assert_eq!(
            split_tiles(&sq, 3).unwrap_err(),
            PyramidError::NonDivisibleSide { side: 10, base: 3 }
        );
    }

    #[test]
    fn split_tile_counts() {
        for (side, n) in [(1134, 3), (756, 2), (378, 1)] {
            let g = split_tiles(&ImageF32::filled(side, side, 0.25), 378).unwrap();
            assert_eq!((g.rows, g.cols, g.tiles.len()), (n, n, n * n));
        }
        let img = ImageF32::filled(378, 378, 0.5);
        assert_eq!(split_tiles(&img, 378).unwrap().tiles[0], img);
    }

    #[test]
    fn split_places_blocks_row_major() {
        let px: Vec<f32> = (0..16).flat_map(|v| [v as f32; 3]).collect();
        let img = ImageF32::new(4, 4, px).unwrap();
        let g = split_tiles(&img, 2).unwrap();
        // Top-left value of tile (i,j) is pixel (2i, 2j).
        let corners: Vec<f32> = g.tiles.iter().map(|t| t.at(0, 0, 0)).collect();
        assert_eq!(corners, vec![0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn pyramid_levels() {
        let img = ImageF32::filled(378, 378, 0.3);
        let levels = build_pyramid(&img, &ScaleSet::default()).unwrap();
        let sides: Vec<_> = levels.iter().map(|l| l.width()).collect();
        assert_eq!(sides, vec![378, 756, 1134]);
        assert_eq!(levels[0], img);
        for l in &levels {
            assert!(l.pixels().iter().all(|&v| v == 0.3));
        }
        assert!(build_pyramid(&ImageF32::filled(3, 4, 0.0), &ScaleSet::default()).is_err());
    }

    #[test]
    fn pad_wide_and_tall() {
        // 100 rows x 50 cols: 25 zero columns on each side before resizing.
        let img = ImageF32::filled(100, 50, 1.0);
        let out = prepare_square(&img, 100);
        for y in 0..100 {
            for x in 0..100 {
                let expected = if (25..75).contains(&x) { 1.0 } else { 0.0 };
                assert_eq!(out.at(y, x, 1), expected, "({y},{x})");
            }
        }
        let tall = prepare_square(&ImageF32::filled(2, 5, 1.0), 5);
        for x in 0..5 {
            assert_eq!(tall.at(0, x, 0), 0.0);
            assert_eq!(tall.at(1, x, 0), 1.0);
            assert_eq!(tall.at(2, x, 0), 1.0);
            assert_eq!(tall.at(3, x, 0), 0.0);
        }
    }

    #[test]
    fn prepare_square_identity_on_base() {
        let img = gray(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(prepare_square(&img, 2), img);
    }
}

//! Tensor persistence (the MSTF container) and image ingestion.
//!
//! MSTF layout, all integers little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "MSTF"
//! 4       1           version (0x01)
//! 5       1           dtype   (0x01 = f32 LE)
//! 6       1           ndim    (1..=4)
//! 7       1           reserved (0x00)
//! 8       4*ndim      dims, u32 each
//! ...     4*prod      payload, f32 each, row-major
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MSTF";
pub const VERSION: u8 = 0x01;
pub const DTYPE_F32: u8 = 0x01;
pub const HEADER_LEN: usize = 8;
pub const MAX_NDIM: usize = 4;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("malformed header: {field}: {detail}")]
    MalformedHeader { field: &'static str, detail: String },
    #[error("unsupported {field}: 0x{value:02x}")]
    UnsupportedVersion { field: &'static str, value: u8 },
    #[error("length mismatch in {field}: expected {expected} bytes, found {found}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid tensor shape {dims:?}: {reason}")]
    InvalidShape { dims: Vec<usize>, reason: String },
    #[error("image decode failed for {path}: {reason}")]
    DecodeError { path: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dense row-major f32 tensor with 1 to 4 dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorF32 {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl TensorF32 {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        if dims.is_empty() || dims.len() > MAX_NDIM {
            return Err(TensorError::InvalidShape {
                dims,
                reason: format!("ndim must be in 1..={MAX_NDIM}"),
            });
        }
        if dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
            return Err(TensorError::InvalidShape {
                dims,
                reason: "every dim must be in 1..=u32::MAX".into(),
            });
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(TensorError::InvalidShape {
                dims,
                reason: format!("product(dims) = {expected} but data has {}", data.len()),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Byte length of the encoded form.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 4 * self.dims.len() + 4 * self.data.len()
    }
}

pub fn encode_mstf(t: &TensorF32) -> Vec<u8> {
    let mut out = Vec::with_capacity(t.encoded_len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(t.dims.len() as u8);
    out.push(0x00);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mstf(bytes: &[u8]) -> Result<TensorF32, TensorError> {
    if bytes.len() < HEADER_LEN {
        return Err(TensorError::LengthMismatch {
            field: "header",
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(TensorError::MalformedHeader {
            field: "magic",
            detail: format!("expected \"MSTF\", found {:02x?}", &bytes[0..4]),
        });
    }
    if bytes[4] != VERSION {
        return Err(TensorError::UnsupportedVersion {
            field: "version",
            value: bytes[4],
        });
    }
    if bytes[5] != DTYPE_F32 {
        return Err(TensorError::UnsupportedVersion {
            field: "dtype",
            value: bytes[5],
        });
    }
    let ndim = bytes[6] as usize;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(TensorError::MalformedHeader {
            field: "ndim",
            detail: format!("{ndim} is outside 1..={MAX_NDIM}"),
        });
    }
    if bytes[7] != 0 {
        return Err(TensorError::MalformedHeader {
            field: "reserved",
            detail: format!("expected 0x00, found 0x{:02x}", bytes[7]),
        });
    }
    let dims_end = HEADER_LEN + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(TensorError::LengthMismatch {
            field: "dims",
            expected: dims_end,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(TensorError::MalformedHeader {
            field: "dims",
            detail: format!("dim {pos} is zero"),
        });
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| TensorError::MalformedHeader {
            field: "dims",
            detail: format!("{dims:?} overflows"),
        })?;
    let payload = &bytes[dims_end..];
    if payload.len() != count {
        return Err(TensorError::LengthMismatch {
            field: "payload",
            expected: count,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(TensorF32 { dims, data })
}

pub fn read_mstf(path: impl AsRef<Path>) -> Result<TensorF32, TensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_mstf(&bytes)
}

pub fn write_mstf(path: impl AsRef<Path>, t: &TensorF32) -> Result<(), TensorError> {
    let path = path.as_ref();
    fs::write(path, encode_mstf(t)).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Decoded 8-bit RGB image, interleaved, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageU8 {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, TensorError> {
        if pixels.len() != height * width * 3 {
            return Err(TensorError::InvalidShape {
                dims: vec![height, width, 3],
                reason: format!("pixel buffer has {} bytes", pixels.len()),
            });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }
}

/// Decode a PNG or JPEG file to 8-bit RGB. Grayscale (and gray+alpha)
/// inputs come out with three identical channels; alpha is dropped.
pub fn load_image_rgb8(path: impl AsRef<Path>) -> Result<ImageU8, TensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_image_rgb8(&bytes).map_err(|reason| TensorError::DecodeError {
        path: path.display().to_string(),
        reason,
    })
}

pub fn decode_image_rgb8(bytes: &[u8]) -> Result<ImageU8, String> {
    let format = image::guess_format(bytes).map_err(|e| e.to_string())?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(format!("unsupported format {format:?}"));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| e.to_string())?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(ImageU8 {
        height: h as usize,
        width: w as usize,
        pixels: rgb.into_raw(),
    })
}

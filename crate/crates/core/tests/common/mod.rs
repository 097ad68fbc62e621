#![allow(dead_code)]

use std::path::PathBuf;

use medvl::encoder::{EncoderKind, EncoderSpec, FeatureGrid};
use medvl::pyramid::ImageF32;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn random_image(rng: &mut ChaCha8Rng, side: usize) -> ImageF32 {
    let pixels = (0..side * side * 3).map(|_| rng.random::<f32>()).collect();
    ImageF32::new(side, side, pixels).unwrap()
}

// Brute-force reference: every patch of the whole scaled image is encoded
// directly, with its own copy of the documented projection stream.
pub fn oracle_projection(patch: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3 * patch * patch * dim)
        .map(|_| ((rng.next_u64() >> 11) as f64 / 9007199254740992.0) * 2.0 - 1.0)
        .map(|v| v as f32 as f64)
        .collect()
}

pub fn oracle_encode(img: &ImageF32, spec: &EncoderSpec) -> Vec<f64> {
    let p = spec.patch;
    let g = img.height() / p;
    let proj = match spec.kind {
        EncoderKind::SeededLinear => oracle_projection(p, spec.dim, spec.seed),
        _ => Vec::new(),
    };
    let mut out = Vec::with_capacity(g * g * spec.dim);
    let mut patch = Vec::with_capacity(3 * p * p);
    for i in 0..g {
        for j in 0..g {
            patch.clear();
            for y in 0..p {
                for x in 0..p {
                    for c in 0..3 {
                        patch.push(img.at(i * p + y, j * p + x, c) as f64);
                    }
                }
            }
            match spec.kind {
                EncoderKind::PatchMean => {
                    for c in 0..3 {
                        let s: f64 = patch.iter().skip(c).step_by(3).sum();
                        out.push(s / (p * p) as f64);
                    }
                }
                _ => {
                    for d in 0..spec.dim {
                        out.push(patch.iter().enumerate().map(|(k, v)| v * proj[k * spec.dim + d]).sum());
                    }
                }
            }
        }
    }
    out
}

pub fn max_abs(a: &FeatureGrid, b: &[f64]) -> f64 {
    assert_eq!(a.values.len(), b.len());
    a.values.iter().zip(b).map(|(x, y)| (*x as f64 - y).abs()).fold(0.0, f64::max)
}

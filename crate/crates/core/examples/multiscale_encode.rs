//! Encodes an image at three scales and pools everything onto the base grid.

use medvl::encoder::{encode_multiscale, EncoderSpec};
use medvl::pyramid::{ImageF32, ScaleSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let side = 378;
    let px = (0..side * side * 3).map(|_| rng.random::<f32>()).collect();
    let img = ImageF32::new(side, side, px)?;

    let scales = ScaleSet::default();
    for spec in [EncoderSpec::patch_mean(378, 14), EncoderSpec::seeded_linear(378, 14, 8, 0)] {
        let feats = encode_multiscale(&img, &scales, &spec)?;
        println!("{:?}: shape {:?}", spec.kind, feats.to_tensor().dims());
        for (k, s) in scales.scales().iter().enumerate() {
            let means = feats.channel_block(k).channel_means();
            println!("  scale {s:>4} block mean[0..3] = {:.4?}", &means[..3]);
        }
    }
    Ok(())
}

//! Builds the three-level image pyramid and cuts each level into base tiles.
//!
//! Pass an image path to use a real picture; otherwise a synthetic gradient is used.

use medvl::pyramid::{build_pyramid, prepare_square, split_tiles, stitch_tiles, ImageF32, ScaleSet};
use medvl::tensorio;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let img = match std::env::args().nth(1) {
        Some(path) => ImageF32::from_u8(&tensorio::load_image_rgb8(path)?),
        None => gradient(300, 200),
    };
    println!("input {}x{}", img.height(), img.width());

    let scales = ScaleSet::default();
    let square = prepare_square(&img, scales.base());
    let levels = build_pyramid(&square, &scales)?;
    for level in &levels {
        let grid = split_tiles(level, scales.base())?;
        assert_eq!(&stitch_tiles(&grid)?, level);
        println!("scale {:>4}: {}x{} tiles", level.height(), grid.rows, grid.cols);
    }
    println!("total tiles: {}", scales.tile_count());
    Ok(())
}

fn gradient(h: usize, w: usize) -> ImageF32 {
    let mut px = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            px.extend([x as f32 / w as f32, y as f32 / h as f32, 0.5]);
        }
    }
    ImageF32::new(h, w, px).expect("buffer matches shape")
}

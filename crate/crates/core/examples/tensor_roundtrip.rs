//! Writes a small tensor to an MSTF file, reads it back and shows the header bytes.

use medvl::tensorio::{self, TensorF32};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("grid.mstf");

    let t = TensorF32::new(vec![2, 3], vec![0.0, 0.5, 1.0, -1.0, 2.5, 3.25])?;
    tensorio::write_mstf(&path, &t)?;

    let bytes = std::fs::read(&path)?;
    println!("{} bytes, header {:02x?}", bytes.len(), &bytes[..8]);

    let back = tensorio::read_mstf(&path)?;
    println!("dims {:?}", back.dims());
    println!("data {:?}", back.data());
    assert_eq!(back, t);
    Ok(())
}

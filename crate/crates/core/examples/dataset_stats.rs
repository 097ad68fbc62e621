//! Per-split VQA counts and per-domain instruction-data counts from the bundled fixtures.
//!
//! Usage: `dataset_stats [slake-json]` to count a local SLAKE file instead.

use medvl::eval::{dataset_stats, ingest_file, instruct_stats, render_dataset_stats, render_instruct_stats};
use medvl::eval::{SourceFormat, Split};
use medvl::synth::read_instruct_file;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let slake = std::env::args().nth(1).unwrap_or(format!("{fixtures}/slake_mini.json"));

    let items = ingest_file(SourceFormat::Slake, &slake, Split::Test)?;
    print!("{}", render_dataset_stats("SLAKE", &dataset_stats(&items)));

    let rad = ingest_file(SourceFormat::VqaRad, format!("{fixtures}/vqarad_mini.json"), Split::Train)?;
    print!("{}", render_dataset_stats("VQA-RAD", &dataset_stats(&rad)));

    let records = read_instruct_file(format!("{fixtures}/instruct_domains.json"))?;
    print!("{}", render_instruct_stats(&instruct_stats(&records)));
    Ok(())
}

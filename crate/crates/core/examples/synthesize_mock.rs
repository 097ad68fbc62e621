//! Generates instruction data from caption samples with the offline mock transport.

use medvl::synth::{
    read_caption_jsonl, synthesize, to_instruct_json, MixPlan, MockTransport, NoSleep, Provider,
    ProviderClient, ProviderConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/captions_20.jsonl");
    let samples = read_caption_jsonl(path)?;

    let transport = MockTransport::canned();
    let a = ProviderClient::new(ProviderConfig::default_a(), &transport, &NoSleep);
    let b = ProviderClient::new(ProviderConfig::default_b(), &transport, &NoSleep);
    let plan = MixPlan { ratio_a: 0.25, seed: 7 };

    let outcomes = synthesize(&samples, &[], &plan, &a, &b)?;
    let via_a = outcomes.iter().filter(|o| o.provider == Provider::A).count();
    println!("{} samples, {via_a} via provider A", outcomes.len());

    let pairs: Vec<_> = samples
        .iter()
        .zip(outcomes)
        .filter_map(|(s, o)| o.result.ok().map(|(conv, _)| (s.clone(), conv)))
        .collect();
    let json = to_instruct_json(&pairs[..1])?;
    println!("{json}");
    Ok(())
}

//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 11 also checks full public datasets when these variables point
//! at local copies:
//! `MEDVL_SLAKE_TEST_JSON`, `MEDVL_VQARAD_JSON`, `MEDVL_FT20K_JSON`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{fixture, max_abs, oracle_encode, random_image};
use medvl::connector::{
    lr_at, mlp_backward, train_stage, FreezeMask, MlpParams, Stage, TrainConfig,
};
use medvl::encoder::{encode_multiscale, encode_scale, EncoderSpec};
use medvl::eval::{
    self, closed_accuracy, dataset_stats, evaluate, ingest_file, instruct_stats, open_recall,
    AnswerType, Prediction, SourceFormat, Split, SplitStats, VqaItem,
};
use medvl::pyramid::{build_pyramid, split_tiles, stitch_tiles, ScaleSet};
use medvl::synth::{
    self, assign_providers, parse_conversation, parse_instruct_json, records_to_json, MixPlan,
    MockTransport, NoSleep, Provider, ProviderClient, ProviderConfig, Role, IMAGE_PREFIX,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn tiling_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    for k in 0..100 {
        let img = random_image(&mut rng, 1134);
        let grid = split_tiles(&img, 378).map_err(|e| e.to_string())?;
        ensure(grid.tiles.len() == 9, format!("image {k}: {} tiles", grid.tiles.len()))?;
        ensure(stitch_tiles(&grid).map_err(|e| e.to_string())? == img, format!("image {k} differs"))?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("100 images, 9 tiles each, {elapsed:.2?}"))
}

fn shape_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = random_image(&mut rng, 500);
    let scales = ScaleSet::default();
    let levels = build_pyramid(&img, &scales).map_err(|e| e.to_string())?;
    let tiles: usize = levels.iter().map(|l| split_tiles(l, 378).unwrap().tiles.len()).sum();
    ensure(tiles == 14 && scales.tile_count() == 14, format!("{tiles} tiles"))?;
    for spec in [EncoderSpec::patch_mean(378, 14), EncoderSpec::seeded_linear(378, 14, 8, 0)] {
        let ms = encode_multiscale(&img, &scales, &spec).map_err(|e| e.to_string())?;
        let want = [27, 27, 3 * spec.dim];
        ensure(ms.to_tensor().dims() == want, format!("dim {}: {:?}", spec.dim, ms.to_tensor().dims()))?;
    }
    Ok("27x27x9 and 27x27x24 from 14 tiles".into())
}

fn tiling_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for spec in [EncoderSpec::patch_mean(378, 14), EncoderSpec::seeded_linear(378, 14, 8, 0)] {
        for side in [378, 756, 1134] {
            for _ in 0..20 {
                let img = random_image(&mut rng, side);
                let tiled = encode_scale(&img, &spec).map_err(|e| e.to_string())?;
                worst = worst.max(max_abs(&tiled, &oracle_encode(&img, &spec)));
            }
        }
    }
    ensure(worst < 1e-5, format!("max abs diff {worst:e}"))?;
    Ok(format!("120 images, max abs diff {worst:.1e}"))
}

fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

fn loop_loss(x: &Array2<f64>, y: &Array2<f64>, p: &MlpParams) -> f64 {
    let mut total = 0.0;
    for (xi, yi) in x.outer_iter().zip(y.outer_iter()) {
        let hid: Vec<f64> = (0..p.w1.ncols())
            .map(|j| gelu(p.b1[j] + (0..xi.len()).map(|k| xi[k] * p.w1[[k, j]]).sum::<f64>()))
            .collect();
        let out: Vec<f64> = (0..p.w2.ncols())
            .map(|o| p.b2[o] + hid.iter().enumerate().map(|(j, h)| h * p.w2[[j, o]]).sum::<f64>())
            .collect();
        let dot: f64 = out.iter().zip(yi.iter()).map(|(a, b)| a * b).sum();
        let na = out.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = yi.iter().map(|b| b * b).sum::<f64>().sqrt();
        total += 1.0 - dot / (na * nb);
    }
    total / x.nrows() as f64
}

fn params_len(p: &MlpParams) -> usize {
    p.w1.len() + p.b1.len() + p.w2.len() + p.b2.len()
}

fn param_mut(p: &mut MlpParams, mut i: usize) -> &mut f64 {
    if i < p.w1.len() {
        return p.w1.iter_mut().nth(i).unwrap();
    }
    i -= p.w1.len();
    if i < p.b1.len() {
        return &mut p.b1[i];
    }
    i -= p.b1.len();
    if i < p.w2.len() {
        return p.w2.iter_mut().nth(i).unwrap();
    }
    &mut p.b2[i - p.w2.len()]
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
}

fn gradient_check() -> Check {
    let start = Instant::now();
    let step = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (n, d_in, h, d_out) = (6, 5, 7, 4);
        let x = random_matrix(&mut rng, n, d_in);
        let y = random_matrix(&mut rng, n, d_out);
        let p = MlpParams::init(d_in, h, d_out, rng.random());
        let (_, grads) = mlp_backward(&x, &y, &p).map_err(|e| e.to_string())?;
        let mut g = grads.clone();
        for i in 0..params_len(&p) {
            let mut plus = p.clone();
            *param_mut(&mut plus, i) += step;
            let mut minus = p.clone();
            *param_mut(&mut minus, i) -= step;
            let numeric = (loop_loss(&x, &y, &plus) - loop_loss(&x, &y, &minus)) / (2.0 * step);
            let analytic = *param_mut(&mut g, i);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-4, format!("max relative error {worst:e}"))?;
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("max relative error {worst:.1e}, {elapsed:.2?}"))
}

fn schedule() -> Check {
    for (stage, peak) in [(Stage::ConnectorPretrain, 1e-3), (Stage::InstructFinetune, 2e-5)] {
        let cfg = TrainConfig::for_stage(stage);
        for total in [100, 1000, 4653] {
            let w = cfg.warmup_steps(total);
            let at_end = lr_at(w - 1, total, &cfg);
            let max = (0..=total).map(|s| lr_at(s, total, &cfg)).fold(0.0, f64::max);
            ensure(at_end == peak && max == peak, format!("{stage:?} total {total}: peak {max}"))?;
            ensure(lr_at(total, total, &cfg) == 0.0, format!("{stage:?} total {total}: nonzero at end"))?;
        }
    }
    Ok("peaks 1e-3 / 2e-5 after warmup, 0 at final step".into())
}

fn freeze_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_matrix(&mut rng, 48, 6);
    let y = random_matrix(&mut rng, 48, 5);
    let p0 = MlpParams::init(6, 16, 5, 6);
    let mut cfg = TrainConfig::pretrain();
    cfg.global_batch = 8;
    cfg.weight_decay = 0.1;
    let out = train_stage(&x, &y, &cfg, &FreezeMask::all_frozen(), &p0).map_err(|e| e.to_string())?;
    ensure(out.params == p0, "parameters changed")?;
    Ok(format!("{} steps, parameters bit-identical", out.steps()))
}

fn quota() -> Check {
    for (n, want) in [(4, 1), (20, 5), (101, 25)] {
        let ids: Vec<String> = (0..n).map(|i| format!("sample-{i}")).collect();
        let plan = MixPlan { ratio_a: 0.25, seed: 7 };
        let a = assign_providers(&ids, &plan).map_err(|e| e.to_string())?;
        let b = assign_providers(&ids, &plan).map_err(|e| e.to_string())?;
        let got = a.values().filter(|&&p| p == Provider::A).count();
        ensure(got == want, format!("N={n}: {got} assigned to A"))?;
        ensure(a == b, format!("N={n}: mapping differs across runs"))?;
    }
    Ok("A counts {1, 5, 25}, stable per seed".into())
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 12] = [
        "User:", "Assistant:", "**User**:", "**Assistant:**", "<image>", "\\n", "\n", " ", "**", ":",
        "x", "\r\n",
    ];
    (0..rng.random_range(0..40))
        .map(|_| {
            if rng.random_bool(0.2) {
                char::from_u32(rng.random_range(0..0x3000)).unwrap_or('?').to_string()
            } else {
                PIECES[rng.random_range(0..PIECES.len())].to_string()
            }
        })
        .collect()
}

fn parser_golden() -> Check {
    let text = std::fs::read_to_string(fixture("sample_generation.txt")).map_err(|e| e.to_string())?;
    let conv = parse_conversation(&text).map_err(|e| e.to_string())?;
    let humans = conv.turns().iter().filter(|t| t.role == Role::Human).count();
    let assistants = conv.turns().len() - humans;
    ensure(humans == 3 && assistants == 3, format!("{humans} human, {assistants} assistant turns"))?;
    ensure(
        conv.turns()[0].text == "What is the location of the extraskeletal mass?",
        format!("first question {:?}", conv.turns()[0].text),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..10_000 {
        let s = random_text(&mut rng);
        catch_unwind(|| {
            let _ = parse_conversation(&s);
        })
        .map_err(|_| format!("parser panicked on input {i}: {s:?}"))?;
    }
    Ok("3 + 3 turns, 10000 fuzz inputs without panic".into())
}

fn instruct_format() -> Check {
    let samples = synth::read_caption_jsonl(fixture("captions_20.jsonl")).map_err(|e| e.to_string())?;
    let t = MockTransport::canned();
    let a = ProviderClient::new(ProviderConfig::default_a(), &t, &NoSleep);
    let b = ProviderClient::new(ProviderConfig::default_b(), &t, &NoSleep);
    let outcomes = synth::synthesize(&samples, &[], &MixPlan::default(), &a, &b).map_err(|e| e.to_string())?;
    let pairs = samples
        .iter()
        .zip(outcomes)
        .map(|(s, o)| o.result.map(|(conv, _)| (s.clone(), conv)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let json = synth::to_instruct_json(&pairs).map_err(|e| e.to_string())?;
    let records = parse_instruct_json(&json).map_err(|e| e.to_string())?;
    for r in &records {
        let first = r.first_human().ok_or(format!("{}: no human turn", r.id))?;
        ensure(first.value.starts_with(IMAGE_PREFIX), format!("{}: missing image prefix", r.id))?;
    }
    ensure(records_to_json(&records).map_err(|e| e.to_string())? == json, "round trip differs")?;
    Ok(format!("{} records, prefix present, round trip identical", records.len()))
}

fn item(qid: &str, answer: &str, answer_type: AnswerType) -> VqaItem {
    VqaItem {
        qid: qid.into(),
        image: "i.jpg".into(),
        question: "q".into(),
        answer: answer.into(),
        answer_type,
        split: Split::Test,
    }
}

fn pred(qid: &str, text: &str) -> Prediction {
    Prediction { qid: qid.into(), text: text.into() }
}

fn metrics() -> Check {
    let r = open_recall("the left lobe is affected", "left lower lobe").map_err(|e| e.to_string())?;
    ensure(r == 2.0 / 3.0, format!("open recall {r}"))?;
    let items = [
        item("a", "yes", AnswerType::Closed),
        item("b", "no", AnswerType::Closed),
        item("c", "yes", AnswerType::Closed),
    ];
    let preds = [pred("a", "Yes."), pred("b", "no"), pred("c", "no")];
    let acc = closed_accuracy(&preds, &items).map_err(|e| e.to_string())?;
    ensure(acc == 2.0 / 3.0, format!("closed accuracy {acc}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let words = ["yes", "no", "left", "lobe", "lung", "mass", "ct", "axial"];
    let mut items = Vec::new();
    let mut preds = Vec::new();
    for i in 0..10_000 {
        let closed = rng.random_bool(0.5);
        let answer = if closed {
            words[rng.random_range(0..2)].to_string()
        } else {
            (0..rng.random_range(1..4)).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
        };
        let guess = (0..rng.random_range(1..4)).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" ");
        let qid = format!("q{i}");
        items.push(item(&qid, &answer, if closed { AnswerType::Closed } else { AnswerType::Open }));
        preds.push(pred(&qid, &guess));
    }
    let base = evaluate(&preds, &items).map_err(|e| e.to_string())?;
    for _ in 0..3 {
        items.shuffle(&mut rng);
        preds.shuffle(&mut rng);
        let r = evaluate(&preds, &items).map_err(|e| e.to_string())?;
        ensure(
            r.closed_accuracy == base.closed_accuracy && r.open_recall == base.open_recall && r.average == base.average,
            "aggregates depend on order",
        )?;
    }
    Ok("2/3 and 2/3 exactly, 10000-item aggregates order-free".into())
}

fn split_triplet(s: &SplitStats) -> (usize, usize, usize) {
    (s.total, s.open, s.closed)
}

fn dataset_counts() -> Check {
    let items = eval::read_items(fixture("vqa_10.jsonl")).map_err(|e| e.to_string())?;
    let s = dataset_stats(&items);
    ensure(split_triplet(&s[&Split::Test]) == (4, 1, 3), "vqa_10 test counts")?;
    ensure(split_triplet(&s[&Split::Train]) == (6, 3, 3), "vqa_10 train counts")?;
    let slake = ingest_file(SourceFormat::Slake, fixture("slake_mini.json"), Split::Test).map_err(|e| e.to_string())?;
    ensure(split_triplet(&dataset_stats(&slake)[&Split::Test]) == (5, 3, 2), "slake fixture counts")?;
    let rad = ingest_file(SourceFormat::VqaRad, fixture("vqarad_mini.json"), Split::Train).map_err(|e| e.to_string())?;
    ensure(split_triplet(&dataset_stats(&rad)[&Split::Test]) == (3, 1, 2), "vqa-rad fixture counts")?;
    let records = synth::read_instruct_file(fixture("instruct_domains.json")).map_err(|e| e.to_string())?;
    let ct = instruct_stats(&records)["CT"].clone();
    ensure((ct.images, ct.qa_pairs) == (2, 6), "instruct fixture CT row")?;

    let mut notes = vec!["fixtures ok".to_string()];
    let full: [(&str, &dyn Fn(&str) -> Result<(), String>); 3] = [
        ("MEDVL_SLAKE_TEST_JSON", &|path| {
            let items = ingest_file(SourceFormat::Slake, path, Split::Test).map_err(|e| e.to_string())?;
            let got = split_triplet(&dataset_stats(&items)[&Split::Test]);
            ensure(got == (1061, 645, 416), format!("SLAKE test {got:?}"))
        }),
        ("MEDVL_VQARAD_JSON", &|path| {
            let items = ingest_file(SourceFormat::VqaRad, path, Split::Train).map_err(|e| e.to_string())?;
            let got = split_triplet(&dataset_stats(&items)[&Split::Test]);
            ensure(got == (451, 179, 272), format!("VQA-RAD test {got:?}"))
        }),
        ("MEDVL_FT20K_JSON", &|path| {
            let records = synth::read_instruct_file(path).map_err(|e| e.to_string())?;
            let ct = instruct_stats(&records)["CT"].clone();
            ensure((ct.images, ct.qa_pairs) == (6809, 41630), format!("CT row {} / {}", ct.images, ct.qa_pairs))
        }),
    ];
    for (var, check) in full {
        match std::env::var(var) {
            Ok(path) => {
                check(&path)?;
                notes.push(format!("{var} ok"));
            }
            Err(_) => notes.push(format!("{var} unset, skipped")),
        }
    }
    Ok(notes.join(", "))
}

fn convergence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_matrix(&mut rng, 200, 8);
    let a = random_matrix(&mut rng, 8, 8);
    let y = x.dot(&a);
    let p0 = MlpParams::init(8, 64, 8, 1);
    let mut cfg = TrainConfig::pretrain();
    cfg.global_batch = 8;
    cfg.epochs = 40;
    cfg.seed = 12;
    let mask = FreezeMask::for_stage(Stage::ConnectorPretrain);
    let run = || train_stage(&x, &y, &cfg, &mask, &p0).map_err(|e| e.to_string());
    let first = run()?;
    let second = run()?;
    ensure(first.params == second.params && first.trace == second.trace, "runs differ")?;
    let (loss, _) = mlp_backward(&x, &y, &first.params).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(loss < 0.01, format!("final loss {loss}"))?;
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("final loss {loss:.5} after {} steps, deterministic, {elapsed:.2?}", first.steps()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("tiling round-trip", tiling_round_trip),
        ("multi-scale shape law", shape_law),
        ("tiling-equivalence oracle", tiling_oracle),
        ("gradient check", gradient_check),
        ("learning-rate schedule", schedule),
        ("freeze law", freeze_law),
        ("synthesis quota", quota),
        ("parser golden and fuzz", parser_golden),
        ("instruct format", instruct_format),
        ("metrics", metrics),
        ("dataset statistics", dataset_counts),
        ("convergence smoke test", convergence),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

use std::path::PathBuf;

use medvl::eval::{
    self, dataset_stats, evaluate, ingest_file, instruct_stats, normalize, open_recall, AnswerType,
    DomainStats, Prediction, SourceFormat, Split, SplitStats, VqaItem,
};
use medvl::synth::read_instruct_file;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn stats(total: usize, open: usize, closed: usize, images: usize) -> SplitStats {
    SplitStats { total, open, closed, images }
}

#[test]
fn bundled_ten_item_fixture() {
    let items = eval::read_items(fixture("vqa_10.jsonl")).unwrap();
    let s = dataset_stats(&items);
    assert_eq!(s[&Split::Train], stats(6, 3, 3, 4));
    assert_eq!(s[&Split::Test], stats(4, 1, 3, 3));
}

#[test]
fn slake_fixture_keeps_english_only() {
    let items = ingest_file(SourceFormat::Slake, fixture("slake_mini.json"), Split::Test).unwrap();
    assert_eq!(dataset_stats(&items)[&Split::Test], stats(5, 3, 2, 3));
}

#[test]
fn vqa_rad_fixture_splits_on_phrase_type() {
    let items = ingest_file(SourceFormat::VqaRad, fixture("vqarad_mini.json"), Split::Train).unwrap();
    let s = dataset_stats(&items);
    assert_eq!(s[&Split::Test], stats(3, 1, 2, 2));
    assert_eq!(s[&Split::Train], stats(3, 1, 2, 2));
}

#[test]
fn instruct_fixture_domains() {
    let records = read_instruct_file(fixture("instruct_domains.json")).unwrap();
    let s = instruct_stats(&records);
    assert_eq!(s["CT"], DomainStats { images: 2, qa_pairs: 6 });
    assert_eq!(s["MRI"], DomainStats { images: 1, qa_pairs: 1 });
    assert_eq!(s["Histology"], DomainStats::default());
}

const WORDS: [&str; 12] = [
    "yes", "no", "left", "right", "lobe", "lung", "liver", "mass", "ct", "mri", "axial", "t2",
];

fn random_phrase(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..5);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn random_dataset(n: usize, seed: u64) -> (Vec<VqaItem>, Vec<Prediction>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(n);
    let mut preds = Vec::with_capacity(n);
    for i in 0..n {
        let qid = format!("q{i:05}");
        let closed = rng.random_bool(0.4);
        let answer = if closed {
            if rng.random_bool(0.5) { "yes" } else { "no" }.to_string()
        } else {
            random_phrase(&mut rng)
        };
        let text = if rng.random_bool(0.3) { answer.to_uppercase() + "." } else { random_phrase(&mut rng) };
        items.push(VqaItem {
            qid: qid.clone(),
            image: format!("img{}.jpg", i % 97),
            question: "q".into(),
            answer,
            answer_type: if closed { AnswerType::Closed } else { AnswerType::Open },
            split: Split::Test,
        });
        preds.push(Prediction { qid, text });
    }
    (items, preds)
}

#[test]
fn aggregates_ignore_order() {
    let (items, preds) = random_dataset(10_000, 3);
    let base = evaluate(&preds, &items).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..3 {
        let mut idx: Vec<usize> = (0..items.len()).collect();
        idx.shuffle(&mut rng);
        let si: Vec<_> = idx.iter().map(|&i| items[i].clone()).collect();
        idx.shuffle(&mut rng);
        let sp: Vec<_> = idx.iter().map(|&i| preds[i].clone()).collect();
        let r = evaluate(&sp, &si).unwrap();
        assert_eq!(r.closed_accuracy, base.closed_accuracy);
        assert_eq!(r.open_recall, base.open_recall);
        assert_eq!(r.average, base.average);
        assert_eq!(r.per_item, base.per_item);
    }
    assert_eq!(base.n_open + base.n_closed, 10_000);
}

#[test]
fn scores_stay_in_unit_interval() {
    let (items, preds) = random_dataset(2_000, 9);
    let r = evaluate(&preds, &items).unwrap();
    assert!(r.per_item.iter().all(|s| (0.0..=1.0).contains(&s.score)));
}

#[test]
fn appending_text_never_lowers_recall() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..2_000 {
        let answer = random_phrase(&mut rng);
        let pred = random_phrase(&mut rng);
        let extra = random_phrase(&mut rng);
        let before = open_recall(&pred, &answer).unwrap();
        let after = open_recall(&format!("{pred} {extra}"), &answer).unwrap();
        assert!(after >= before);
    }
}

#[test]
fn normalize_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..2_000 {
        let s: String = (0..rng.random_range(0..30))
            .map(|_| char::from_u32(rng.random_range(0x20..0x250)).unwrap_or(' '))
            .collect();
        let once = normalize(&s);
        assert_eq!(normalize(&once.join(" ")), once);
    }
}

#[test]
fn report_json_has_table_fields() {
    let (items, preds) = random_dataset(20, 1);
    let r = evaluate(&preds, &items).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for key in ["closed_accuracy", "open_recall", "average", "n_closed", "n_open", "per_item"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

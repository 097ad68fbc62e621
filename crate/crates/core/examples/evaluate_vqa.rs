//! Scores predictions against the bundled ten-question fixture and prints the table row.

use medvl::eval::{evaluate, read_items, render_report, Prediction, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/vqa_10.jsonl");
    let items: Vec<_> = read_items(path)?.into_iter().filter(|i| i.split == Split::Test).collect();

    let preds = [("q7", "Axial plane."), ("q8", "Yes"), ("q9", "yes"), ("q10", "no")]
        .map(|(qid, text)| Prediction { qid: qid.into(), text: text.into() });

    let report = evaluate(&preds, &items)?;
    print!("{}", render_report("fixture", &report));
    for s in &report.per_item {
        println!("{:<4} {:?} {:.3}", s.qid, s.answer_type, s.score);
    }
    Ok(())
}

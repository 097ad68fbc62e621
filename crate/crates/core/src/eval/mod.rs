//! VQA scoring: exact token-list accuracy for closed questions, unique-token
//! recall for open ones, and the Open / Closed / Average report.

mod ingest;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{ingest, ingest_file, SourceFormat};
pub use stats::{
    canonical_domain, dataset_stats, instruct_stats, render_dataset_stats, render_instruct_stats,
    DomainStats, SplitStats, DOMAINS,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing predictions for {} item(s): {}", .0.len(), preview(.0))]
    MissingPrediction(Vec<String>),
    #[error("predictions for unknown qids: {}", preview(.0))]
    UnknownPrediction(Vec<String>),
    #[error("duplicate qids: {}", preview(.0))]
    DuplicateQid(Vec<String>),
    #[error("no CLOSED items to score")]
    EmptyClosedSet,
    #[error("ground-truth answer {0:?} has no tokens")]
    EmptyGroundTruth(String),
    #[error("record {index} is malformed: {reason}")]
    MalformedRecord { index: usize, reason: String },
    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },
}

fn preview(ids: &[String]) -> String {
    let shown: Vec<&str> = ids.iter().take(10).map(String::as_str).collect();
    if ids.len() > 10 {
        format!("{}, ... ({} more)", shown.join(", "), ids.len() - 10)
    } else {
        shown.join(", ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AnswerType {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validate" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaItem {
    pub qid: String,
    pub image: String,
    pub question: String,
    pub answer: String,
    pub answer_type: AnswerType,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub qid: String,
    pub text: String,
}

/// Lowercase, map everything outside `[a-z0-9]` to a space, split.
pub fn normalize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_lowercase() || c.is_ascii_digit() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// 1.0 when the normalized token lists are identical, else 0.0.
pub fn closed_match(pred: &str, answer: &str) -> f64 {
    if normalize(pred) == normalize(answer) {
        1.0
    } else {
        0.0
    }
}

/// Fraction of the distinct answer tokens that occur in the prediction.
pub fn open_recall(pred: &str, answer: &str) -> Result<f64, EvalError> {
    let truth: BTreeSet<String> = normalize(answer).into_iter().collect();
    if truth.is_empty() {
        return Err(EvalError::EmptyGroundTruth(answer.to_string()));
    }
    let got: HashSet<String> = normalize(pred).into_iter().collect();
    let hit = truth.iter().filter(|t| got.contains(*t)).count();
    Ok(hit as f64 / truth.len() as f64)
}

fn index_predictions(preds: &[Prediction]) -> Result<HashMap<&str, &str>, EvalError> {
    let mut map = HashMap::with_capacity(preds.len());
    let mut dups = BTreeSet::new();
    for p in preds {
        if map.insert(p.qid.as_str(), p.text.as_str()).is_some() {
            dups.insert(p.qid.clone());
        }
    }
    if !dups.is_empty() {
        return Err(EvalError::DuplicateQid(dups.into_iter().collect()));
    }
    Ok(map)
}

fn check_items(items: &[VqaItem]) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    let dups: BTreeSet<String> = items
        .iter()
        .filter(|i| !seen.insert(i.qid.as_str()))
        .map(|i| i.qid.clone())
        .collect();
    if dups.is_empty() {
        Ok(())
    } else {
        Err(EvalError::DuplicateQid(dups.into_iter().collect()))
    }
}

/// Mean exact-match score over the CLOSED items.
pub fn closed_accuracy(preds: &[Prediction], items: &[VqaItem]) -> Result<f64, EvalError> {
    check_items(items)?;
    let by_qid = index_predictions(preds)?;
    let closed: Vec<&VqaItem> = items
        .iter()
        .filter(|i| i.answer_type == AnswerType::Closed)
        .collect();
    if closed.is_empty() {
        return Err(EvalError::EmptyClosedSet);
    }
    let mut missing: Vec<String> = closed
        .iter()
        .filter(|i| !by_qid.contains_key(i.qid.as_str()))
        .map(|i| i.qid.clone())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(EvalError::MissingPrediction(missing));
    }
    let correct = closed
        .iter()
        .filter(|i| closed_match(by_qid[i.qid.as_str()], &i.answer) == 1.0)
        .count();
    Ok(correct as f64 / closed.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub qid: String,
    pub answer_type: AnswerType,
    pub score: f64,
}

/// Aggregate scores. A column is `None` when the dataset has no items of
/// that type (rendered as "/").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub closed_accuracy: Option<f64>,
    pub open_recall: Option<f64>,
    pub average: Option<f64>,
    pub n_closed: usize,
    pub n_open: usize,
    pub per_item: Vec<ItemScore>,
}

/// Scores every item. Per-item scores are kept sorted by qid, and the
/// sums run in that order, so the aggregates do not depend on input order.
pub fn evaluate(preds: &[Prediction], items: &[VqaItem]) -> Result<EvalReport, EvalError> {
    check_items(items)?;
    let by_qid = index_predictions(preds)?;
    let known: HashSet<&str> = items.iter().map(|i| i.qid.as_str()).collect();
    let mut unknown: Vec<String> = preds
        .iter()
        .filter(|p| !known.contains(p.qid.as_str()))
        .map(|p| p.qid.clone())
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(EvalError::UnknownPrediction(unknown));
    }
    let mut missing: Vec<String> = items
        .iter()
        .filter(|i| !by_qid.contains_key(i.qid.as_str()))
        .map(|i| i.qid.clone())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(EvalError::MissingPrediction(missing));
    }

    let mut per_item = items
        .iter()
        .map(|item| {
            let pred = by_qid[item.qid.as_str()];
            let score = match item.answer_type {
                AnswerType::Closed => closed_match(pred, &item.answer),
                AnswerType::Open => open_recall(pred, &item.answer)?,
            };
            Ok(ItemScore {
                qid: item.qid.clone(),
                answer_type: item.answer_type,
                score,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    per_item.sort_by(|a, b| a.qid.cmp(&b.qid));

    let mean_of = |kind: AnswerType| {
        let (sum, n) = per_item
            .iter()
            .filter(|s| s.answer_type == kind)
            .fold((0.0, 0usize), |(s, n), x| (s + x.score, n + 1));
        ((n > 0).then(|| sum / n as f64), n)
    };
    let (open_recall, n_open) = mean_of(AnswerType::Open);
    let (closed_accuracy, n_closed) = mean_of(AnswerType::Closed);
    let present: Vec<f64> = [open_recall, closed_accuracy].into_iter().flatten().collect();
    let average = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(EvalReport {
        closed_accuracy,
        open_recall,
        average,
        n_closed,
        n_open,
        per_item,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "/".into())
}

/// Plain-text Open / Closed / Average table, scores in percent.
pub fn render_report(name: &str, report: &EvalReport) -> String {
    let mut out = String::new();
    let width = name.len().max(7);
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>8}", "Dataset", "Open", "Closed", "Average");
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>8}  {:>8}",
        name,
        cell(report.open_recall),
        cell(report.closed_accuracy),
        cell(report.average)
    );
    let _ = writeln!(out, "(n_open = {}, n_closed = {})", report.n_open, report.n_closed);
    out
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_jsonl(&text)
}

pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(index, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::MalformedRecord {
                index,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn read_items(path: impl AsRef<Path>) -> Result<Vec<VqaItem>, EvalError> {
    read_jsonl(path.as_ref())
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, EvalError> {
    read_jsonl(path.as_ref())
}

pub fn items_to_jsonl(items: &[VqaItem]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("VqaItem serializes") + "\n")
        .collect()
}

/// Splits present in `items`, with their counts.
pub fn split_counts(items: &[VqaItem]) -> BTreeMap<Split, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i.split).or_insert(0) += 1;
    }
    m
}

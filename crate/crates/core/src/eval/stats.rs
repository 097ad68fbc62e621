//! Per-split VQA counts and per-domain instruct-data counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use super::{AnswerType, Split, VqaItem};
use crate::synth::InstructRecord;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub total: usize,
    pub open: usize,
    pub closed: usize,
    pub images: usize,
}

pub fn dataset_stats(items: &[VqaItem]) -> BTreeMap<Split, SplitStats> {
    let mut images: BTreeMap<Split, BTreeSet<&str>> = BTreeMap::new();
    let mut out: BTreeMap<Split, SplitStats> = BTreeMap::new();
    for i in items {
        let s = out.entry(i.split).or_default();
        s.total += 1;
        match i.answer_type {
            AnswerType::Open => s.open += 1,
            AnswerType::Closed => s.closed += 1,
        }
        images.entry(i.split).or_default().insert(&i.image);
    }
    for (split, set) in images {
        out.get_mut(&split).unwrap().images = set.len();
    }
    out
}

pub fn render_dataset_stats(name: &str, stats: &BTreeMap<Split, SplitStats>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{name}");
    let _ = writeln!(out, "{:<6} {:>8} {:>8} {:>8} {:>8}", "split", "QAs", "open", "closed", "images");
    for (split, s) in stats {
        let label = serde_json::to_value(split).unwrap();
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:>8} {:>8} {:>8}",
            label.as_str().unwrap_or("?"),
            s.total,
            s.open,
            s.closed,
            s.images
        );
    }
    out
}

/// Display names of the five image domains, in report order.
pub const DOMAINS: [&str; 5] = ["Chest X-Ray", "MRI", "Histology", "Pathology", "CT"];

const UNLABELED: &str = "Unlabeled";

/// Maps a domain tag (either a key such as `ct_scan` or a display name)
/// to its display name. Unknown tags are passed through.
pub fn canonical_domain(tag: &str) -> String {
    let key: String = tag
        .to_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    match key.as_str() {
        "chestxray" | "cxr" | "xray" => "Chest X-Ray",
        "ctscan" | "ct" => "CT",
        "mri" => "MRI",
        "histology" => "Histology",
        "gross" | "pathology" => "Pathology",
        _ => return tag.to_string(),
    }
    .to_string()
}

fn domain_of(record: &InstructRecord) -> String {
    match record.extra.get("domain") {
        Some(Value::String(s)) => canonical_domain(s),
        Some(Value::Object(flags)) => flags
            .iter()
            .find(|(_, v)| v.as_bool() == Some(true))
            .map(|(k, _)| canonical_domain(k))
            .unwrap_or_else(|| UNLABELED.into()),
        _ => UNLABELED.into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DomainStats {
    pub images: usize,
    pub qa_pairs: usize,
}

/// Distinct images and QA pairs per domain. The five known domains are
/// always present (possibly with zero counts); other tags appear only
/// when they occur.
pub fn instruct_stats(records: &[InstructRecord]) -> BTreeMap<String, DomainStats> {
    let mut images: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    let mut out: BTreeMap<String, DomainStats> = DOMAINS
        .iter()
        .map(|d| (d.to_string(), DomainStats::default()))
        .collect();
    for r in records {
        let d = domain_of(r);
        images.entry(d.clone()).or_default().insert(&r.image);
        out.entry(d).or_default().qa_pairs += r.qa_pairs();
    }
    for (d, set) in images {
        out.get_mut(&d).unwrap().images = set.len();
    }
    out
}

pub fn render_instruct_stats(stats: &BTreeMap<String, DomainStats>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>8} {:>8}", "domain", "images", "QAs");
    let known = DOMAINS.iter().map(|d| d.to_string());
    let others = stats.keys().filter(|k| !DOMAINS.contains(&k.as_str())).cloned();
    let (mut ti, mut tq) = (0, 0);
    for d in known.chain(others) {
        let s = &stats[&d];
        ti += s.images;
        tq += s.qa_pairs;
        let _ = writeln!(out, "{:<12} {:>8} {:>8}", d, s.images, s.qa_pairs);
    }
    let _ = writeln!(out, "{:<12} {:>8} {:>8}", "Total", ti, tq);
    out
}

//! Converters from the public VQA release formats to [`VqaItem`].

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{normalize, parse_jsonl, AnswerType, EvalError, Split, VqaItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    /// JSON-lines of `VqaItem`.
    Normalized,
    /// SLAKE release JSON (array with `img_name`, `q_lang`, ...). English only.
    Slake,
    /// VQA-RAD release JSON; the split comes from `phrase_type`.
    VqaRad,
    /// PathVQA-style records, JSON array or JSON-lines; yes/no answers are CLOSED.
    PathVqa,
}

impl FromStr for SourceFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "normalized" | "jsonl" => Ok(Self::Normalized),
            "slake" => Ok(Self::Slake),
            "vqa-rad" | "vqarad" => Ok(Self::VqaRad),
            "pathvqa" | "path-vqa" | "generic" => Ok(Self::PathVqa),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

/// Parses `text` in the given format. `split` labels every item for
/// formats that do not record a split themselves.
pub fn ingest(format: SourceFormat, text: &str, split: Split) -> Result<Vec<VqaItem>, EvalError> {
    let items = match format {
        SourceFormat::Normalized => parse_jsonl(text)?,
        SourceFormat::Slake => objects(text)?
            .iter()
            .enumerate()
            .filter(|(_, o)| o.get("q_lang").and_then(Value::as_str).unwrap_or("en") == "en")
            .map(|(i, o)| {
                Ok(VqaItem {
                    qid: field(o, i, &["qid"])?,
                    image: field(o, i, &["img_name", "image"])?,
                    question: field(o, i, &["question"])?,
                    answer: field(o, i, &["answer"])?,
                    answer_type: answer_type(o, i)?,
                    split,
                })
            })
            .collect::<Result<_, EvalError>>()?,
        SourceFormat::VqaRad => objects(text)?
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let phrase = o.get("phrase_type").and_then(Value::as_str).unwrap_or("");
                Ok(VqaItem {
                    qid: field(o, i, &["qid"])?,
                    image: field(o, i, &["image_name", "image"])?,
                    question: field(o, i, &["question"])?,
                    answer: field(o, i, &["answer"])?,
                    answer_type: answer_type(o, i)?,
                    split: if phrase.starts_with("test") { Split::Test } else { Split::Train },
                })
            })
            .collect::<Result<_, EvalError>>()?,
        SourceFormat::PathVqa => objects(text)?
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let answer = field(o, i, &["answer"])?;
                let kind = if o.contains_key("answer_type") {
                    answer_type(o, i)?
                } else if matches!(normalize(&answer).as_slice(), [t] if t == "yes" || t == "no") {
                    AnswerType::Closed
                } else {
                    AnswerType::Open
                };
                Ok(VqaItem {
                    qid: field(o, i, &["qid", "id"])?,
                    image: field(o, i, &["image", "img_id", "image_name"])?,
                    question: field(o, i, &["question"])?,
                    answer,
                    answer_type: kind,
                    split,
                })
            })
            .collect::<Result<_, EvalError>>()?,
    };
    check(&items)?;
    Ok(items)
}

pub fn ingest_file(
    format: SourceFormat,
    path: impl AsRef<Path>,
    split: Split,
) -> Result<Vec<VqaItem>, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    ingest(format, &text, split)
}

fn check(items: &[VqaItem]) -> Result<(), EvalError> {
    if let Some(index) = items.iter().position(|i| i.answer.trim().is_empty()) {
        return Err(EvalError::MalformedRecord {
            index,
            reason: "empty answer".into(),
        });
    }
    super::check_items(items)
}

// A JSON array of objects, or one object per line.
fn objects(text: &str) -> Result<Vec<Map<String, Value>>, EvalError> {
    let values: Vec<Value> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| EvalError::MalformedRecord {
            index: 0,
            reason: e.to_string(),
        })?
    } else {
        parse_jsonl(text)?
    };
    values
        .into_iter()
        .enumerate()
        .map(|(index, v)| match v {
            Value::Object(m) => Ok(m),
            other => Err(EvalError::MalformedRecord {
                index,
                reason: format!("expected an object, got {other}"),
            }),
        })
        .collect()
}

fn field(o: &Map<String, Value>, index: usize, keys: &[&str]) -> Result<String, EvalError> {
    let v = keys.iter().find_map(|k| o.get(*k)).ok_or_else(|| EvalError::MalformedRecord {
        index,
        reason: format!("missing field {:?}", keys[0]),
    })?;
    match v {
        Value::String(s) => Ok(s.trim().to_string()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(if *b { "yes" } else { "no" }.to_string()),
        other => Err(EvalError::MalformedRecord {
            index,
            reason: format!("field {:?} has unexpected value {other}", keys[0]),
        }),
    }
}

fn answer_type(o: &Map<String, Value>, index: usize) -> Result<AnswerType, EvalError> {
    let raw = field(o, index, &["answer_type"])?;
    match raw.to_ascii_uppercase().as_str() {
        "OPEN" => Ok(AnswerType::Open),
        "CLOSED" => Ok(AnswerType::Closed),
        _ => Err(EvalError::MalformedRecord {
            index,
            reason: format!("unknown answer_type {raw:?}"),
        }),
    }
}

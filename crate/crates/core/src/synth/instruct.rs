//! LLaVA-style instruct JSON: an array of
//! `{"id", "image", "conversations": [{"from", "value"}, ...]}` records.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use super::conversation::{Conversation, Role};
use super::prompt::CaptionSample;
use super::SynthError;

pub const IMAGE_PREFIX: &str = "<image>\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructTurn {
    pub from: String,
    pub value: String,
}

/// One instruct record. Unknown keys (such as a `domain` tag) are kept in
/// `extra` and written back after the three standard keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructRecord {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    pub image: String,
    pub conversations: Vec<InstructTurn>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    match Value::deserialize(d)? {
        Value::String(s) => Ok(s),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!(
            "id must be a string or number, got {other}"
        ))),
    }
}

impl InstructRecord {
    pub fn from_conversation(sample: &CaptionSample, conv: &Conversation) -> Self {
        let mut conversations: Vec<InstructTurn> = conv
            .turns()
            .iter()
            .map(|t| InstructTurn {
                from: match t.role {
                    Role::Human => "human",
                    Role::Assistant => "gpt",
                }
                .to_string(),
                value: t.text.clone(),
            })
            .collect();
        if let Some(first) = conversations.iter_mut().find(|t| t.from == "human") {
            if !first.value.starts_with(IMAGE_PREFIX) {
                first.value.insert_str(0, IMAGE_PREFIX);
            }
        }
        Self {
            id: sample.id.clone(),
            image: sample.image_ref.clone(),
            conversations,
            extra: Map::new(),
        }
    }

    pub fn first_human(&self) -> Option<&InstructTurn> {
        self.conversations.iter().find(|t| t.from == "human")
    }

    /// Question/answer pairs: gpt turns that directly follow a human turn.
    pub fn qa_pairs(&self) -> usize {
        self.conversations
            .windows(2)
            .filter(|w| w[0].from == "human" && w[1].from == "gpt")
            .count()
    }
}

/// Serializes records built from parsed conversations, in input order.
pub fn to_instruct_json(items: &[(CaptionSample, Conversation)]) -> Result<String, SynthError> {
    let records: Vec<InstructRecord> = items
        .iter()
        .map(|(s, c)| InstructRecord::from_conversation(s, c))
        .collect();
    check_unique(&records)?;
    records_to_json(&records)
}

pub fn records_to_json(records: &[InstructRecord]) -> Result<String, SynthError> {
    serde_json::to_string_pretty(records).map_err(|e| SynthError::Format(e.to_string()))
}

pub fn parse_instruct_json(text: &str) -> Result<Vec<InstructRecord>, SynthError> {
    let values: Vec<Value> =
        serde_json::from_str(text).map_err(|e| SynthError::Format(e.to_string()))?;
    values
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            serde_json::from_value(v).map_err(|e| SynthError::MalformedRecord {
                index,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn read_instruct_file(path: impl AsRef<Path>) -> Result<Vec<InstructRecord>, SynthError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SynthError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_instruct_json(&text)
}

fn check_unique(records: &[InstructRecord]) -> Result<(), SynthError> {
    let mut seen = HashSet::new();
    let mut dups: Vec<String> = records
        .iter()
        .filter(|r| !seen.insert(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if dups.is_empty() {
        Ok(())
    } else {
        dups.sort();
        dups.dedup();
        Err(SynthError::DuplicateIds(dups))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MergeCounts {
    pub from_a: usize,
    pub from_b: usize,
}

/// Concatenates `a` then `b`, refusing any repeated id.
pub fn merge_instruct(
    a: Vec<InstructRecord>,
    b: Vec<InstructRecord>,
) -> Result<(Vec<InstructRecord>, MergeCounts), SynthError> {
    let counts = MergeCounts {
        from_a: a.len(),
        from_b: b.len(),
    };
    let mut merged = a;
    merged.extend(b);
    check_unique(&merged)?;
    Ok((merged, counts))
}

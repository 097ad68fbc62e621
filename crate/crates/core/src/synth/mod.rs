//! Instruction-data synthesis: prompt assembly, deterministic assignment of
//! samples to two providers, concurrent generation and conversion of the
//! replies into instruct JSON.

mod conversation;
mod instruct;
mod prompt;
mod provider;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conversation::{parse_conversation, Conversation, Role, Turn};
pub use instruct::{
    merge_instruct, parse_instruct_json, read_instruct_file, records_to_json, to_instruct_json,
    InstructRecord, InstructTurn, MergeCounts, IMAGE_PREFIX,
};
pub use prompt::{build_prompt, CaptionSample, FewShot, Prompt, SYSTEM_PROMPT};
pub use provider::{
    call_provider, canned_marker, extract_text, is_retryable, request_body, request_headers,
    Backoff, Completion, HttpRequest, HttpResponse, HttpTransport, MockTransport, NoSleep,
    ProviderClient, ProviderConfig, ProviderKind, Sleeper, ThreadSleeper, Transport,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("sample {0} has an empty caption")]
    EmptyCaption(String),
    #[error("duplicate ids: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("request failed after {attempts} attempt(s){}: {detail}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    HttpError {
        status: Option<u16>,
        attempts: u32,
        detail: String,
    },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("no conversation turns found")]
    NoTurnsFound,
    #[error("turn {turn} repeats role {role:?}")]
    RoleOrderViolation { turn: usize, role: Role },
    #[error("conversation starts with an assistant turn")]
    DanglingAssistant,
    #[error("conversation needs at least 2 turns, found {0}")]
    TooFewTurns(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("record {index} is malformed: {reason}")]
    MalformedRecord { index: usize, reason: String },
    #[error("bad instruct JSON: {0}")]
    Format(String),
    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provider {
    A,
    B,
}

/// Share of samples routed to provider A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub ratio_a: f64,
    pub seed: u64,
}

impl Default for MixPlan {
    fn default() -> Self {
        Self {
            ratio_a: 0.25,
            seed: 0,
        }
    }
}

/// Number of ids that go to provider A: `round(ratio * n)`, ties to even.
pub fn quota_a(ratio_a: f64, n: usize) -> usize {
    (ratio_a * n as f64).round_ties_even() as usize
}

/// Exact-quota assignment. The ids are permuted with a ChaCha8 stream seeded
/// by `plan.seed`, and the first `quota_a` ids of that permutation go to A.
pub fn assign_providers(
    ids: &[String],
    plan: &MixPlan,
) -> Result<BTreeMap<String, Provider>, SynthError> {
    if !(0.0..=1.0).contains(&plan.ratio_a) {
        return Err(SynthError::InvalidConfig(format!(
            "ratio_a {} is outside [0, 1]",
            plan.ratio_a
        )));
    }
    check_unique_ids(ids.iter().map(String::as_str))?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    let quota = quota_a(plan.ratio_a, ids.len());
    Ok(order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let p = if rank < quota { Provider::A } else { Provider::B };
            (ids[i].clone(), p)
        })
        .collect())
}

fn check_unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), SynthError> {
    let mut seen = HashSet::new();
    let mut dups: Vec<String> = ids.filter(|id| !seen.insert(*id)).map(str::to_string).collect();
    if dups.is_empty() {
        return Ok(());
    }
    dups.sort();
    dups.dedup();
    Err(SynthError::DuplicateIds(dups))
}

/// Reads one `CaptionSample` per non-blank line.
pub fn read_caption_jsonl(path: impl AsRef<Path>) -> Result<Vec<CaptionSample>, SynthError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SynthError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_caption_jsonl(&text)
}

pub fn parse_caption_jsonl(text: &str) -> Result<Vec<CaptionSample>, SynthError> {
    let samples = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<CaptionSample>(l).map_err(|e| SynthError::MalformedRecord {
                index: i,
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(s) = samples.iter().find(|s| s.caption.trim().is_empty()) {
        return Err(SynthError::EmptyCaption(s.id.clone()));
    }
    check_unique_ids(samples.iter().map(|s| s.id.as_str()))?;
    Ok(samples)
}

/// Few-shot demonstrations: a JSON array of `{"input", "output"}`.
pub fn read_fewshots(path: impl AsRef<Path>) -> Result<Vec<FewShot>, SynthError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SynthError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| SynthError::Format(e.to_string()))
}

#[derive(Debug)]
pub struct SampleOutcome {
    pub id: String,
    pub provider: Provider,
    pub result: Result<(Conversation, Completion), SynthError>,
}

/// Generates a conversation for every sample. Each provider runs at most
/// `max_parallel` requests at once. Outcomes come back in input order.
pub fn synthesize(
    samples: &[CaptionSample],
    fewshots: &[FewShot],
    plan: &MixPlan,
    client_a: &ProviderClient<'_>,
    client_b: &ProviderClient<'_>,
) -> Result<Vec<SampleOutcome>, SynthError> {
    client_a.config.validate()?;
    client_b.config.validate()?;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let assignment = assign_providers(&ids, plan)?;
    let providers: Vec<Provider> = ids.iter().map(|id| assignment[id]).collect();

    let slots: Mutex<Vec<Option<SampleOutcome>>> =
        Mutex::new((0..samples.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for (which, client) in [(Provider::A, client_a), (Provider::B, client_b)] {
            let queue: Vec<usize> = (0..samples.len()).filter(|&i| providers[i] == which).collect();
            if queue.is_empty() {
                continue;
            }
            let next = AtomicUsize::new(0);
            let workers = client.config.max_parallel.min(queue.len());
            let (queue, next, slots) = (std::sync::Arc::new(queue), std::sync::Arc::new(next), &slots);
            for _ in 0..workers {
                let (queue, next) = (queue.clone(), next.clone());
                scope.spawn(move || loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&i) = queue.get(k) else { break };
                    let sample = &samples[i];
                    let result = build_prompt(sample, fewshots)
                        .and_then(|p| client.complete(&p))
                        .and_then(|c| parse_conversation(&c.text).map(|conv| (conv, c)));
                    slots.lock().unwrap()[i] = Some(SampleOutcome {
                        id: sample.id.clone(),
                        provider: which,
                        result,
                    });
                });
            }
        }
    });
    Ok(slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every sample is processed"))
        .collect())
}

//! Chat provider clients: the two wire formats, credential lookup and the
//! retry loop.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::Prompt;
use super::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderKind {
    /// `POST /v1/messages`, key in `x-api-key`.
    MessagesApi,
    /// `POST /v1/chat/completions`, key as a bearer token.
    ChatCompletions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: String,
    pub model: String,
    pub auth_env_var: String,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_attempts() -> u32 {
    5
}
fn default_timeout() -> u64 {
    120
}
fn default_parallel() -> usize {
    4
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_temperature() -> f64 {
    0.7
}

impl ProviderConfig {
    /// Provider A: a Messages-API endpoint.
    pub fn default_a() -> Self {
        Self {
            kind: ProviderKind::MessagesApi,
            base_url: "https://api.anthropic.com".into(),
            model: "claude-3-opus-20240229".into(),
            auth_env_var: "PROVIDER_A_API_KEY".into(),
            max_attempts: default_attempts(),
            timeout_secs: default_timeout(),
            max_parallel: default_parallel(),
            max_tokens: default_max_tokens(),
            temperature: default_temperature(),
        }
    }

    /// Provider B: any OpenAI-compatible chat-completions server.
    pub fn default_b() -> Self {
        Self {
            kind: ProviderKind::ChatCompletions,
            base_url: "http://localhost:8000".into(),
            model: "meta-llama/Meta-Llama-3-70B-Instruct".into(),
            auth_env_var: "PROVIDER_B_API_KEY".into(),
            ..Self::default_a()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.max_attempts == 0 {
            return Err(SynthError::InvalidConfig("max_attempts must be >= 1".into()));
        }
        if self.max_parallel == 0 {
            return Err(SynthError::InvalidConfig("max_parallel must be >= 1".into()));
        }
        if self.base_url.is_empty() || self.model.is_empty() {
            return Err(SynthError::InvalidConfig("base_url and model are required".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        match self.kind {
            ProviderKind::MessagesApi => format!("{base}/v1/messages"),
            ProviderKind::ChatCompletions => format!("{base}/v1/chat/completions"),
        }
    }
}

/// JSON body for one generation request, keys in wire order.
pub fn request_body(cfg: &ProviderConfig, prompt: &Prompt) -> Value {
    match cfg.kind {
        ProviderKind::MessagesApi => json!({
            "model": cfg.model,
            "max_tokens": cfg.max_tokens,
            "system": prompt.system,
            "messages": [{"role": "user", "content": prompt.user}],
            "temperature": cfg.temperature,
        }),
        ProviderKind::ChatCompletions => json!({
            "model": cfg.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": cfg.temperature,
        }),
    }
}

pub fn request_headers(cfg: &ProviderConfig, key: &str) -> Vec<(String, String)> {
    let mut headers = vec![("content-type".to_string(), "application/json".to_string())];
    match cfg.kind {
        ProviderKind::MessagesApi => {
            headers.push(("x-api-key".into(), key.into()));
            headers.push(("anthropic-version".into(), "2023-06-01".into()));
        }
        ProviderKind::ChatCompletions => {
            headers.push(("authorization".into(), format!("Bearer {key}")));
        }
    }
    headers
}

/// Pulls the generated text out of a response body.
pub fn extract_text(kind: ProviderKind, body: &str) -> Result<String, SynthError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| SynthError::MalformedResponse(format!("invalid JSON: {e}")))?;
    let (text, path) = match kind {
        ProviderKind::MessagesApi => (v.pointer("/content/0/text"), "content[0].text"),
        ProviderKind::ChatCompletions => (
            v.pointer("/choices/0/message/content"),
            "choices[0].message.content",
        ),
    };
    text.and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| SynthError::MalformedResponse(format!("missing {path}")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: body.into(),
        }
    }
}

pub trait Transport: Send + Sync {
    /// Sends a JSON POST. `Err` means the request never produced an HTTP
    /// status (connect failure, timeout).
    fn post(&self, req: &HttpRequest, timeout: Duration) -> Result<HttpResponse, String>;

    fn needs_credentials(&self) -> bool {
        true
    }
}

/// Blocking reqwest transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, SynthError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn post(&self, req: &HttpRequest, timeout: Duration) -> Result<HttpResponse, String> {
        let mut builder = self.client.post(&req.url).timeout(timeout).body(req.body.clone());
        for (k, v) in &req.headers {
            builder = builder.header(k, v);
        }
        let resp = builder.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Offline transport. `canned` answers every request with a short
/// conversation built from the prompt's caption, shaped like the provider's
/// real response; `scripted` replays a fixed queue of responses. All
/// requests are recorded.
pub struct MockTransport {
    script: Option<Mutex<VecDeque<Result<HttpResponse, String>>>>,
    requests: Mutex<Vec<HttpRequest>>,
}

/// Marker appended to canned answers so callers can tell providers apart.
pub fn canned_marker(kind: ProviderKind) -> &'static str {
    match kind {
        ProviderKind::MessagesApi => "[mock messages-api]",
        ProviderKind::ChatCompletions => "[mock chat-completions]",
    }
}

impl MockTransport {
    pub fn canned() -> Self {
        Self {
            script: None,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn scripted(responses: Vec<Result<HttpResponse, String>>) -> Self {
        Self {
            script: Some(Mutex::new(responses.into())),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.requests.lock().unwrap().clone()
    }

    fn canned_response(req: &HttpRequest) -> HttpResponse {
        let body: Value = serde_json::from_str(&req.body).unwrap_or(Value::Null);
        let kind = if req.url.ends_with("/v1/messages") {
            ProviderKind::MessagesApi
        } else {
            ProviderKind::ChatCompletions
        };
        let user = match kind {
            ProviderKind::MessagesApi => body.pointer("/messages/0/content"),
            ProviderKind::ChatCompletions => body.pointer("/messages/1/content"),
        }
        .and_then(Value::as_str)
        .unwrap_or("");
        let caption = user
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("Figure Caption: "))
            .unwrap_or("a biomedical figure");
        let marker = canned_marker(kind);
        let text = format!(
            "User: <image>\\nWhat does the image show?\n\
             Assistant: The image appears to show the following: {caption} {marker}\n\
             User: Is there anything else visible?\n\
             Assistant: Fine detail is hard to judge here; please consult a healthcare professional. {marker}"
        );
        let payload = match kind {
            ProviderKind::MessagesApi => json!({
                "id": "msg_mock",
                "type": "message",
                "role": "assistant",
                "content": [{"type": "text", "text": text}],
            }),
            ProviderKind::ChatCompletions => json!({
                "id": "chatcmpl-mock",
                "object": "chat.completion",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
            }),
        };
        HttpResponse::new(200, payload.to_string())
    }
}

impl Transport for MockTransport {
    fn post(&self, req: &HttpRequest, _timeout: Duration) -> Result<HttpResponse, String> {
        self.requests.lock().unwrap().push(req.clone());
        match &self.script {
            None => Ok(Self::canned_response(req)),
            Some(queue) => queue
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or_else(|| Err("mock script exhausted".into())),
        }
    }

    fn needs_credentials(&self) -> bool {
        false
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Does not wait; useful in tests and mock runs.
pub struct NoSleep;

impl Sleeper for NoSleep {
    fn sleep(&self, _d: Duration) {}
}

/// Exponential backoff with full jitter: the wait before retry `k`
/// (1-based) is uniform in `[0, base * factor^(k-1)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl Backoff {
    pub fn ceiling(&self, retry: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(retry as i32 - 1))
    }

    pub fn delay<R: Rng + ?Sized>(&self, retry: u32, rng: &mut R) -> Duration {
        self.ceiling(retry).mul_f64(rng.random::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
    pub backoffs: Vec<Duration>,
}

pub fn is_retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// Client bound to one provider configuration and transport.
pub struct ProviderClient<'a> {
    pub config: ProviderConfig,
    pub transport: &'a dyn Transport,
    pub sleeper: &'a dyn Sleeper,
    pub backoff: Backoff,
}

impl<'a> ProviderClient<'a> {
    pub fn new(config: ProviderConfig, transport: &'a dyn Transport, sleeper: &'a dyn Sleeper) -> Self {
        Self {
            config,
            transport,
            sleeper,
            backoff: Backoff::default(),
        }
    }

    pub fn complete(&self, prompt: &Prompt) -> Result<Completion, SynthError> {
        call_provider(&self.config, prompt, self.transport, self.sleeper, self.backoff)
    }
}

/// One generation request with retries on 429, 5xx and transport failures.
/// Credentials are resolved before any I/O.
pub fn call_provider(
    cfg: &ProviderConfig,
    prompt: &Prompt,
    transport: &dyn Transport,
    sleeper: &dyn Sleeper,
    backoff: Backoff,
) -> Result<Completion, SynthError> {
    cfg.validate()?;
    let key = if transport.needs_credentials() {
        match std::env::var(&cfg.auth_env_var) {
            Ok(k) if !k.is_empty() => k,
            _ => return Err(SynthError::MissingCredential(cfg.auth_env_var.clone())),
        }
    } else {
        String::from("mock-key")
    };
    let req = HttpRequest {
        url: cfg.endpoint(),
        headers: request_headers(cfg, &key),
        body: request_body(cfg, prompt).to_string(),
    };
    let timeout = Duration::from_secs(cfg.timeout_secs);
    let mut rng = rand::rng();
    let mut backoffs = Vec::new();
    let mut last_failure = String::new();
    for attempt in 1..=cfg.max_attempts {
        match transport.post(&req, timeout) {
            Ok(resp) if (200..300).contains(&resp.status) => {
                let text = extract_text(cfg.kind, &resp.body)?;
                return Ok(Completion {
                    text,
                    attempts: attempt,
                    backoffs,
                });
            }
            Ok(resp) if !is_retryable(resp.status) => {
                return Err(SynthError::HttpError {
                    status: Some(resp.status),
                    attempts: attempt,
                    detail: snippet(&resp.body),
                });
            }
            Ok(resp) => last_failure = format!("HTTP {}: {}", resp.status, snippet(&resp.body)),
            Err(e) => last_failure = e,
        }
        if attempt < cfg.max_attempts {
            let wait = backoff.delay(attempt, &mut rng);
            backoffs.push(wait);
            sleeper.sleep(wait);
        }
    }
    Err(SynthError::HttpError {
        status: None,
        attempts: cfg.max_attempts,
        detail: last_failure,
    })
}

fn snippet(body: &str) -> String {
    body.chars().take(200).collect()
}

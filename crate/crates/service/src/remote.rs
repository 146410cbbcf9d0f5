//! HTTP clients for remotely hosted models.

use std::collections::BTreeMap;
use std::future::Future;
use std::time::Duration;

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use reqwest::{Client, RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vst_core::analysis::{ClassifierBackend, PhonemizerBackend, TranscriberBackend};
use vst_core::llm::{ChatBackend, ChatRequest, ChatRole, LlmError};
use vst_core::{BackendFailure, Chunk, FailureKind, LabelProbs};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Attempts after the first one.
    pub retries: u32,
    /// Delay before the first retry; doubles each time.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { retries: 2, base_delay: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    /// Runs `op` until it succeeds, fails permanently, or retries run out.
    pub async fn run<T, F, Fut>(&self, mut op: F) -> Result<T, BackendFailure>
    where
        F: FnMut() -> Fut,
        Fut: Future<Output = Result<T, BackendFailure>>,
    {
        let mut attempt = 0;
        loop {
            match op().await {
                Err(e) if e.kind.is_transient() && attempt < self.retries => {
                    tracing::warn!(attempt, error = %e, "transient backend failure, retrying");
                    tokio::time::sleep(self.base_delay * 2u32.pow(attempt)).await;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

fn transport(e: reqwest::Error) -> BackendFailure {
    if e.is_timeout() {
        BackendFailure::new(FailureKind::Timeout, e.to_string())
    } else if e.is_decode() {
        BackendFailure::new(FailureKind::Schema, e.to_string())
    } else {
        BackendFailure::new(FailureKind::Network, e.to_string())
    }
}

/// 401/403 are credential problems, 429 and 5xx are worth retrying, and any
/// other rejection means the request itself was not understood.
fn status_failure(status: StatusCode, body: &str) -> BackendFailure {
    let detail = format!("HTTP {}: {}", status.as_u16(), body.chars().take(200).collect::<String>());
    let kind = match status {
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => FailureKind::Auth,
        s if s == StatusCode::TOO_MANY_REQUESTS || s.is_server_error() => FailureKind::Status,
        _ => FailureKind::Schema,
    };
    BackendFailure::new(kind, detail)
}

async fn send_json<T: DeserializeOwned>(request: RequestBuilder) -> Result<T, BackendFailure> {
    let response = request.send().await.map_err(transport)?;
    let status = response.status();
    let body = response.text().await.map_err(transport)?;
    if !status.is_success() {
        return Err(status_failure(status, &body));
    }
    serde_json::from_str(&body).map_err(|e| BackendFailure::new(FailureKind::Schema, e.to_string()))
}

/// Endpoint settings shared by the speech clients.
#[derive(Debug, Clone)]
pub struct Endpoint {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl Endpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into(), api_key: None, timeout: Duration::from_secs(30), retry: RetryPolicy::default() }
    }

    fn post(&self, http: &Client) -> RequestBuilder {
        let rb = http.post(&self.url).timeout(self.timeout);
        match &self.api_key {
            Some(k) => rb.bearer_auth(k),
            None => rb,
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct AudioPayload {
    audio: String,
    sample_rate_hz: u32,
}

impl AudioPayload {
    fn of(chunk: &Chunk) -> Self {
        Self { audio: B64.encode(chunk.pcm_bytes()), sample_rate_hz: chunk.sample_rate_hz }
    }
}

async fn post_audio<T: DeserializeOwned>(http: &Client, ep: &Endpoint, chunk: &Chunk) -> Result<T, BackendFailure> {
    let payload = AudioPayload::of(chunk);
    ep.retry.run(|| send_json(ep.post(http).json(&payload))).await
}

/// Expects a JSON object mapping all six labels to probabilities.
pub struct RemoteClassifier {
    http: Client,
    endpoint: Endpoint,
}

impl RemoteClassifier {
    pub fn new(http: Client, endpoint: Endpoint) -> Self {
        Self { http, endpoint }
    }
}

#[async_trait]
impl ClassifierBackend for RemoteClassifier {
    async fn classify(&self, chunk: &Chunk) -> Result<LabelProbs, BackendFailure> {
        let map: BTreeMap<String, f64> = post_audio(&self.http, &self.endpoint, chunk).await?;
        LabelProbs::from_map(&map).map_err(|e| BackendFailure::new(FailureKind::Schema, e.to_string()))
    }
}

#[derive(Deserialize)]
struct AsrReply {
    text: String,
}

/// Expects `{"text": ...}`.
pub struct RemoteTranscriber {
    http: Client,
    endpoint: Endpoint,
}

impl RemoteTranscriber {
    pub fn new(http: Client, endpoint: Endpoint) -> Self {
        Self { http, endpoint }
    }
}

#[async_trait]
impl TranscriberBackend for RemoteTranscriber {
    async fn transcribe(&self, chunk: &Chunk) -> Result<String, BackendFailure> {
        let reply: AsrReply = post_audio(&self.http, &self.endpoint, chunk).await?;
        Ok(reply.text)
    }
}

#[derive(Deserialize)]
struct PhonemeReply {
    phonemes: Vec<String>,
}

/// Expects `{"phonemes": ["p", "ɪ", ...]}`.
pub struct RemotePhonemizer {
    http: Client,
    endpoint: Endpoint,
}

impl RemotePhonemizer {
    pub fn new(http: Client, endpoint: Endpoint) -> Self {
        Self { http, endpoint }
    }
}

#[async_trait]
impl PhonemizerBackend for RemotePhonemizer {
    async fn phonemize(&self, chunk: &Chunk) -> Result<Vec<String>, BackendFailure> {
        let reply: PhonemeReply = post_audio(&self.http, &self.endpoint, chunk).await?;
        Ok(reply.phonemes)
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

/// OpenAI-style `/chat/completions` client.
pub struct RemoteChat {
    http: Client,
    endpoint: Endpoint,
    model: String,
}

impl RemoteChat {
    /// `base_url` may be the API root or the full completions URL.
    pub fn new(http: Client, mut endpoint: Endpoint, model: impl Into<String>) -> Self {
        let trimmed = endpoint.url.trim_end_matches('/');
        if !trimmed.ends_with("/chat/completions") {
            endpoint.url = format!("{trimmed}/chat/completions");
        }
        Self { http, endpoint, model: model.into() }
    }

    pub fn url(&self) -> &str {
        &self.endpoint.url
    }
}

#[async_trait]
impl ChatBackend for RemoteChat {
    async fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = CompletionBody {
            model: &self.model,
            messages: request
                .messages()
                .iter()
                .map(|m| WireMessage {
                    role: match m.role {
                        ChatRole::System => "system",
                        ChatRole::Human => "user",
                    },
                    content: &m.content,
                })
                .collect(),
            temperature: request.temperature(),
        };
        let reply: CompletionReply = self
            .endpoint
            .retry
            .run(|| send_json(self.endpoint.post(&self.http).json(&body)))
            .await
            .map_err(LlmError::BackendUnavailable)?;
        let text = reply.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default();
        if text.trim().is_empty() {
            return Err(LlmError::ResponseEmpty);
        }
        Ok(text)
    }
}

//! Uniform access to chat-completion agents: remote endpoints speaking the
//! de-facto chat-completions JSON protocol, and a deterministic scripted mock
//! for desk-scale verification.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::dataset::TernaryLabel;
use crate::prompts::PromptStage;
use crate::seeded::derive_rng;

/// Sampling and transport parameters for one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub retry_limit: u32,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    #[serde(with = "duration_millis")]
    pub backoff_base: Duration,
    pub backoff_factor: f64,
    pub jitter: bool,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            max_tokens: 512,
            retry_limit: 3,
            timeout: Duration::from_secs(60),
            backoff_base: Duration::from_secs(1),
            backoff_factor: 2.0,
            jitter: true,
        }
    }
}

mod duration_secs {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(secs))
    }
}

mod duration_millis {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = u64::deserialize(d)?;
        Ok(Duration::from_millis(ms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }
    }
}

/// How a mock endpoint answers when no script rule matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockBehavior {
    /// Answer with the scenario's gold label.
    EchoGold,
    /// Always answer with the given label.
    FixedLabel(TernaryLabel),
    /// Answer with a label drawn from the seeded per-call generator.
    SeededRandomLabel,
}

/// One scripted response. `None` fields match anything; rules are checked in
/// order and the first match wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub scenario_id: Option<String>,
    pub stage: Option<PromptStage>,
    pub turn_index: Option<u32>,
    pub response: String,
}

impl MockRule {
    fn matches(&self, ctx: &CallContext<'_>) -> bool {
        self.scenario_id.as_deref().is_none_or(|s| s == ctx.scenario_id)
            && self.stage.is_none_or(|s| s == ctx.stage)
            && self.turn_index.is_none_or(|t| t == ctx.turn_index)
    }
}

/// A deterministic scripted agent. Identical (spec, call context) always
/// produce identical responses; there is no hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSpec {
    pub seed: u64,
    #[serde(default)]
    pub script: Vec<MockRule>,
    pub default_behavior: MockBehavior,
    /// Simulated per-call latency. The recorded latency equals this value, so
    /// transcripts stay reproducible.
    #[serde(default)]
    pub delay_ms: u64,
}

impl MockSpec {
    pub fn echo_gold() -> Self {
        MockSpec {
            seed: 0,
            script: Vec::new(),
            default_behavior: MockBehavior::EchoGold,
            delay_ms: 0,
        }
    }

    pub fn fixed(label: TernaryLabel) -> Self {
        MockSpec {
            seed: 0,
            script: Vec::new(),
            default_behavior: MockBehavior::FixedLabel(label),
            delay_ms: 0,
        }
    }

    pub fn respond(&self, ctx: &CallContext<'_>) -> String {
        for rule in &self.script {
            if rule.matches(ctx) {
                return rule.response.clone();
            }
        }
        match &self.default_behavior {
            MockBehavior::EchoGold => format!("{}.", ctx.gold),
            MockBehavior::FixedLabel(label) => format!("{label}."),
            MockBehavior::SeededRandomLabel => {
                let mut rng = derive_rng(
                    self.seed,
                    &[
                        ctx.scenario_id,
                        ctx.stage.id(),
                        &ctx.turn_index.to_string(),
                    ],
                );
                let label = TernaryLabel::ANSWERS[rng.gen_range(0..3)];
                format!("{label}.")
            }
        }
    }
}

/// Where completions for an endpoint come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Http {
        base_url: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
    Mock(MockSpec),
}

/// One configured agent: a role name ("M1", "M2", "judge"), a model id, and
/// the transport behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub name: String,
    pub model_id: String,
    pub backend: Backend,
    #[serde(default)]
    pub params: GenerationParams,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_in_flight() -> usize {
    4
}

impl ModelEndpoint {
    pub fn mock(name: &str, spec: MockSpec) -> Self {
        ModelEndpoint {
            name: name.to_string(),
            model_id: format!("mock-{name}"),
            backend: Backend::Mock(spec),
            params: GenerationParams::default(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn is_mock(&self) -> bool {
        matches!(self.backend, Backend::Mock(_))
    }
}

/// Per-call context: which scenario, stage, and turn this request belongs to.
/// The mock keys its script on it; errors carry it for diagnosis.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub scenario_id: &'a str,
    pub gold: TernaryLabel,
    pub stage: PromptStage,
    pub turn_index: u32,
}

/// Completed request: assistant text plus transport bookkeeping. Mock calls
/// report zero latency and one attempt so transcripts stay reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
    pub latency_ms: u64,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("endpoint {endpoint} stage {stage}: request timed out after {attempts} attempt(s)")]
    Timeout {
        endpoint: String,
        stage: String,
        attempts: u32,
    },
    #[error("endpoint {endpoint} stage {stage}: HTTP status {status}")]
    Endpoint {
        endpoint: String,
        stage: String,
        status: u16,
    },
    #[error("endpoint {endpoint} stage {stage}: retries exhausted after {attempts} attempt(s): {last_error}")]
    RetriesExhausted {
        endpoint: String,
        stage: String,
        attempts: u32,
        last_error: String,
    },
    #[error("endpoint {endpoint} stage {stage}: malformed response: {detail}")]
    MalformedResponse {
        endpoint: String,
        stage: String,
        detail: String,
    },
    #[error("endpoint {endpoint}: api key environment variable {var} is not set")]
    MissingApiKey { endpoint: String, var: String },
    #[error("messages must be nonempty")]
    EmptyMessages,
    #[error("last message must have role user")]
    LastMessageNotUser,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

/// Shared completion client. Safe to call concurrently; a per-endpoint
/// semaphore bounds in-flight requests. Mock endpoints bypass transport
/// entirely.
pub struct ModelClient {
    http: reqwest::Client,
    limiters: Mutex<HashMap<String, Arc<Semaphore>>>,
}

impl Default for ModelClient {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelClient {
    pub fn new() -> Self {
        ModelClient {
            http: reqwest::Client::new(),
            limiters: Mutex::new(HashMap::new()),
        }
    }

    fn limiter(&self, endpoint: &ModelEndpoint) -> Arc<Semaphore> {
        let mut map = self.limiters.lock().expect("limiter mutex poisoned");
        map.entry(endpoint.name.clone())
            .or_insert_with(|| Arc::new(Semaphore::new(endpoint.max_in_flight.max(1))))
            .clone()
    }

    /// Complete a prompt against an endpoint. Transient transport failures
    /// (timeouts, connection errors, 5xx) are retried up to `retry_limit`
    /// times with capped exponential backoff; client errors (4xx) fail fast.
    pub async fn complete(
        &self,
        endpoint: &ModelEndpoint,
        ctx: CallContext<'_>,
        messages: &[ChatMessage],
    ) -> Result<Completion, ClientError> {
        if messages.is_empty() {
            return Err(ClientError::EmptyMessages);
        }
        if messages.last().map(|m| m.role) != Some(ChatRole::User) {
            return Err(ClientError::LastMessageNotUser);
        }
        match &endpoint.backend {
            Backend::Mock(spec) => {
                if spec.delay_ms > 0 {
                    tokio::time::sleep(Duration::from_millis(spec.delay_ms)).await;
                }
                Ok(Completion {
                    text: spec.respond(&ctx),
                    attempts: 1,
                    latency_ms: spec.delay_ms,
                })
            }
            Backend::Http { base_url, api_key_env } => {
                self.complete_http(endpoint, base_url, api_key_env.as_deref(), ctx, messages)
                    .await
            }
        }
    }

    async fn complete_http(
        &self,
        endpoint: &ModelEndpoint,
        base_url: &str,
        api_key_env: Option<&str>,
        ctx: CallContext<'_>,
        messages: &[ChatMessage],
    ) -> Result<Completion, ClientError> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError::MissingApiKey {
                endpoint: endpoint.name.clone(),
                var: var.to_string(),
            })?),
            None => None,
        };
        let _permit = self
            .limiter(endpoint)
            .acquire_owned()
            .await
            .expect("limiter closed");

        let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        let body = WireRequest {
            model: &endpoint.model_id,
            messages,
            temperature: endpoint.params.temperature,
            max_tokens: endpoint.params.max_tokens,
        };
        let max_attempts = endpoint.params.retry_limit + 1;
        let started = Instant::now();
        let mut last_was_timeout = false;
        let mut last_error = String::new();

        for attempt in 1..=max_attempts {
            let mut req = self
                .http
                .post(&url)
                .timeout(endpoint.params.timeout)
                .json(&body);
            if let Some(key) = &api_key {
                req = req.bearer_auth(key);
            }
            match req.send().await {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: WireResponse =
                            resp.json().await.map_err(|e| ClientError::MalformedResponse {
                                endpoint: endpoint.name.clone(),
                                stage: ctx.stage.id().to_string(),
                                detail: e.to_string(),
                            })?;
                        let text = parsed
                            .choices
                            .into_iter()
                            .next()
                            .map(|c| c.message.content)
                            .ok_or_else(|| ClientError::MalformedResponse {
                                endpoint: endpoint.name.clone(),
                                stage: ctx.stage.id().to_string(),
                                detail: "no choices in response".to_string(),
                            })?;
                        return Ok(Completion {
                            text,
                            attempts: attempt,
                            latency_ms: started.elapsed().as_millis() as u64,
                        });
                    }
                    if status.is_server_error() {
                        last_was_timeout = false;
                        last_error = format!("HTTP status {status}");
                        log::warn!(
                            "endpoint {} stage {} attempt {attempt}/{max_attempts}: {last_error}",
                            endpoint.name,
                            ctx.stage.id()
                        );
                    } else {
                        return Err(ClientError::Endpoint {
                            endpoint: endpoint.name.clone(),
                            stage: ctx.stage.id().to_string(),
                            status: status.as_u16(),
                        });
                    }
                }
                Err(e) => {
                    last_was_timeout = e.is_timeout();
                    last_error = e.to_string();
                    log::warn!(
                        "endpoint {} stage {} attempt {attempt}/{max_attempts}: {last_error}",
                        endpoint.name,
                        ctx.stage.id()
                    );
                }
            }
            if attempt < max_attempts {
                tokio::time::sleep(backoff_delay(&endpoint.params, attempt)).await;
            }
        }
        if last_was_timeout {
            Err(ClientError::Timeout {
                endpoint: endpoint.name.clone(),
                stage: ctx.stage.id().to_string(),
                attempts: max_attempts,
            })
        } else {
            Err(ClientError::RetriesExhausted {
                endpoint: endpoint.name.clone(),
                stage: ctx.stage.id().to_string(),
                attempts: max_attempts,
                last_error,
            })
        }
    }
}

fn backoff_delay(params: &GenerationParams, attempt: u32) -> Duration {
    const MAX_BACKOFF: Duration = Duration::from_secs(30);
    let exp = params.backoff_factor.powi(attempt.saturating_sub(1) as i32);
    let base = params.backoff_base.as_secs_f64() * exp;
    let scaled = if params.jitter {
        base * rand::thread_rng().gen_range(0.5..1.5)
    } else {
        base
    };
    Duration::from_secs_f64(scaled).min(MAX_BACKOFF)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx<'a>(scenario: &'a str, stage: PromptStage, turn: u32) -> CallContext<'a> {
        CallContext {
            scenario_id: scenario,
            gold: TernaryLabel::No,
            stage,
            turn_index: turn,
        }
    }

    #[tokio::test]
    async fn scripted_rule_takes_precedence() {
        let spec = MockSpec {
            seed: 1,
            script: vec![MockRule {
                scenario_id: Some("s1".into()),
                stage: Some(PromptStage::DInitial),
                turn_index: Some(0),
                response: "Answer: Yes".into(),
            }],
            default_behavior: MockBehavior::EchoGold,
            delay_ms: 0,
        };
        let endpoint = ModelEndpoint::mock("M1", spec);
        let client = ModelClient::new();
        let got = client
            .complete(&endpoint, ctx("s1", PromptStage::DInitial, 0), &[ChatMessage::user("p")])
            .await
            .unwrap();
        assert_eq!(got.text, "Answer: Yes");
        assert_eq!((got.attempts, got.latency_ms), (1, 0));
        // non-matching context falls through to the default
        let other = client
            .complete(&endpoint, ctx("s2", PromptStage::DInitial, 0), &[ChatMessage::user("p")])
            .await
            .unwrap();
        assert_eq!(other.text, "No.");
    }

    #[tokio::test]
    async fn echo_gold_tracks_the_scenario() {
        let endpoint = ModelEndpoint::mock("M1", MockSpec::echo_gold());
        let client = ModelClient::new();
        let mut c = ctx("s1", PromptStage::SingleWithRot, 0);
        c.gold = TernaryLabel::Neither;
        let got = client
            .complete(&endpoint, c, &[ChatMessage::user("p")])
            .await
            .unwrap();
        assert_eq!(got.text, "Neither.");
    }

    #[tokio::test]
    async fn mock_is_pure_under_interleaving() {
        let spec = MockSpec {
            seed: 99,
            script: Vec::new(),
            default_behavior: MockBehavior::SeededRandomLabel,
            delay_ms: 0,
        };
        let endpoint = ModelEndpoint::mock("M1", spec);
        let client = ModelClient::new();
        let a1 = client
            .complete(&endpoint, ctx("a", PromptStage::DInitial, 0), &[ChatMessage::user("p")])
            .await
            .unwrap();
        let b = client
            .complete(&endpoint, ctx("b", PromptStage::DInitial, 0), &[ChatMessage::user("p")])
            .await
            .unwrap();
        let a2 = client
            .complete(&endpoint, ctx("a", PromptStage::DInitial, 0), &[ChatMessage::user("p")])
            .await
            .unwrap();
        assert_eq!(a1.text, a2.text);
        let _ = b;
    }

    #[tokio::test]
    async fn message_preconditions_are_enforced() {
        let endpoint = ModelEndpoint::mock("M1", MockSpec::echo_gold());
        let client = ModelClient::new();
        let err = client
            .complete(&endpoint, ctx("s", PromptStage::DInitial, 0), &[])
            .await
            .unwrap_err();
        assert!(matches!(err, ClientError::EmptyMessages));
        let assistant_last = [ChatMessage {
            role: ChatRole::Assistant,
            content: "x".into(),
        }];
        let err = client
            .complete(&endpoint, ctx("s", PromptStage::DInitial, 0), &assistant_last)
            .await
            .unwrap_err();
        assert!(matches!(err, ClientError::LastMessageNotUser));
    }

    #[test]
    fn chat_message_serialization_round_trip_preserves_bytes() {
        let msg = ChatMessage::user("line one\nline two\ttabbed \u{1F600} {story}");
        let json = serde_json::to_string(&msg).unwrap();
        let back: ChatMessage = serde_json::from_str(&json).unwrap();
        assert_eq!(back, msg);
    }
}

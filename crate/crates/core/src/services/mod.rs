//! Clients for the generation stack (chat completion, reference-voice TTS,
//! verbatim ASR) and deterministic offline stand-ins for each.

pub mod audio;
pub mod chat;
pub mod http;
pub mod narrator;
pub mod speech;
pub mod stub;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::Persona;
use crate::prompts::RenderedPrompt;
use crate::timbre::TimbreEntry;

pub use audio::{AudioBlob, AudioError, ResampleQuality, PIPELINE_RATE};
pub use chat::ChatClient;
pub use http::{
    network_requests, EndpointClient, HttpRequest, HttpResponse, HttpTransport, RecordingSleeper, ReplayTransport,
    ScriptedTransport, Sleeper, ThreadSleeper, TransportError, UreqTransport,
};
pub use narrator::stub_generate;
pub use speech::{AsrClient, TtsClient};
pub use stub::{ClassifierMode, StubClassifier, StubNarrator, StubRationaleModel, StubTranscriber, StubTts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub backoff_factor: f64,
    pub jitter_fraction: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_backoff_ms: 500,
            backoff_factor: 2.0,
            jitter_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Send audio attachments as `input_audio` parts.
    #[serde(default)]
    pub multimodal: bool,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_in_flight() -> usize {
    4
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            auth_token_env: None,
            model: model.into(),
            timeout_s: default_timeout(),
            retry: RetryPolicy::default(),
            max_in_flight: default_in_flight(),
            multimodal: false,
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |m: &str| Err(ServiceError::Config(format!("{}: {m}", self.base_url)));
        if self.retry.max_attempts < 1 {
            return bad("retry.max_attempts must be at least 1");
        }
        if !(self.timeout_s > 0.0) {
            return bad("timeout_s must be positive");
        }
        if self.max_in_flight < 1 {
            return bad("max_in_flight must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.retry.jitter_fraction) {
            return bad("retry.jitter_fraction must lie in [0, 1]");
        }
        if !self.base_url.starts_with("http://") && !self.base_url.starts_with("https://") {
            return bad("base_url must be an http(s) URL");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DecodeParams {
    pub fn synthesis() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 1024,
            top_p: 1.0,
            seed: None,
        }
    }

    pub fn evaluation() -> Self {
        Self {
            temperature: 0.2,
            max_tokens: 1024,
            top_p: 1.0,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if !(self.temperature >= 0.0) || !(self.top_p > 0.0 && self.top_p <= 1.0) || self.max_tokens == 0 {
            return Err(ServiceError::Config(format!("invalid decode parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub finish_reason: String,
    pub latency_ms: u64,
    pub raw_payload_hash: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ServiceError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("server error {status} after {attempts} attempt(s)")]
    ServerError { status: u16, attempts: u32 },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("audio decode failed: {0}")]
    AudioDecode(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Timeout { .. } => "timeout",
            ServiceError::RateLimited { .. } => "rate_limited",
            ServiceError::ServerError { .. } => "server_error",
            ServiceError::Auth { .. } => "auth",
            ServiceError::Http { .. } => "http",
            ServiceError::Protocol(_) => "protocol",
            ServiceError::Unreachable(_) => "unreachable",
            ServiceError::AudioDecode(_) => "audio_decode",
            ServiceError::EmptyInput(_) => "empty_input",
            ServiceError::Config(_) => "config",
        }
    }

    pub fn is_unreachable(&self) -> bool {
        matches!(self, ServiceError::Unreachable(_))
    }
}

impl From<AudioError> for ServiceError {
    fn from(e: AudioError) -> Self {
        ServiceError::AudioDecode(e.to_string())
    }
}

/// A chat-completion model.
pub trait ChatModel: Send + Sync {
    fn complete(&self, prompt: &RenderedPrompt, decode: &DecodeParams) -> Result<ModelResponse, ServiceError>;
}

/// Produces a picture description for a persona.
pub trait NarrativeGenerator: Send + Sync {
    fn narrate(&self, persona: &Persona, prompt: &RenderedPrompt, seed: u64) -> Result<ModelResponse, ServiceError>;
}

/// Reference-based speech synthesis. Output is always mono 16 kHz.
pub trait SpeechSynthesizer: Send + Sync {
    fn synthesize(&self, text: &str, reference: &TimbreEntry, seed: u64) -> Result<AudioBlob, ServiceError>;
}

/// Verbatim transcription. `source` is the file the audio came from, if any.
pub trait Transcriber: Send + Sync {
    fn transcribe(&self, audio: &AudioBlob, source: Option<&Path>) -> Result<String, ServiceError>;
}

/// Narration through a chat model rendering the synthesis prompt.
pub struct ChatNarrator {
    pub model: Arc<dyn ChatModel>,
    pub decode: DecodeParams,
}

impl NarrativeGenerator for ChatNarrator {
    fn narrate(&self, _persona: &Persona, prompt: &RenderedPrompt, seed: u64) -> Result<ModelResponse, ServiceError> {
        self.model.complete(prompt, &self.decode.with_seed(seed))
    }
}

/// Collapses whitespace and straightens quotes; disfluencies are kept.
pub fn normalize_transcript(text: &str) -> String {
    text.replace(['\u{2018}', '\u{2019}'], "'")
        .replace(['\u{201c}', '\u{201d}'], "\"")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

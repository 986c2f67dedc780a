use std::sync::Arc;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::http::{EndpointClient, HttpTransport};
use super::{ChatModel, DecodeParams, EndpointConfig, ModelResponse, ServiceError};
use crate::hashing::sha256_hex;
use crate::prompts::{RenderedPrompt, Role};

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: Role,
    content: WireContent<'a>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum WireContent<'a> {
    Text(&'a str),
    Parts(Vec<Part<'a>>),
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Part<'a> {
    Text { text: &'a str },
    InputAudio { input_audio: InputAudio },
}

#[derive(Serialize)]
struct InputAudio {
    data: String,
    format: &'static str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Value>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<Value>,
}

/// OpenAI-style `/chat/completions` body. With `multimodal`, attachments are
/// appended to the last user message as base64 `input_audio` parts.
pub fn build_chat_body(
    model: &str,
    prompt: &RenderedPrompt,
    decode: &DecodeParams,
    multimodal: bool,
) -> Result<Vec<u8>, ServiceError> {
    let mut audio = Vec::new();
    if multimodal {
        for path in &prompt.attachments {
            let bytes = std::fs::read(path)
                .map_err(|e| ServiceError::AudioDecode(format!("attachment {}: {e}", path.display())))?;
            audio.push(base64::engine::general_purpose::STANDARD.encode(bytes));
        }
    }
    let last_user = prompt.messages.iter().rposition(|m| m.role == Role::User);
    let mut audio = Some(audio).filter(|a| !a.is_empty());
    let messages = prompt
        .messages
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let content = match (Some(i) == last_user).then(|| audio.take()).flatten() {
                Some(clips) => {
                    let mut parts = vec![Part::Text { text: &m.content }];
                    parts.extend(clips.into_iter().map(|data| Part::InputAudio {
                        input_audio: InputAudio { data, format: "wav" },
                    }));
                    WireContent::Parts(parts)
                }
                None => WireContent::Text(&m.content),
            };
            WireMessage { role: m.role, content }
        })
        .collect();
    let req = ChatRequest {
        model,
        messages,
        temperature: decode.temperature,
        max_tokens: decode.max_tokens,
        top_p: decode.top_p,
        seed: decode.seed,
    };
    Ok(serde_json::to_vec(&req).expect("request serializes"))
}

/// First choice text and finish reason.
pub fn parse_chat_response(body: &[u8]) -> Result<(String, String), ServiceError> {
    let resp: ChatResponse =
        serde_json::from_slice(body).map_err(|e| ServiceError::Protocol(format!("chat response: {e}")))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ServiceError::Protocol("chat response has no choices".into()))?;
    let finish = choice.finish_reason.unwrap_or_else(|| "stop".to_string());
    let text = match choice.message.content {
        Some(Value::String(s)) => s,
        Some(Value::Array(parts)) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        Some(Value::Null) | None => String::new(),
        Some(other) => return Err(ServiceError::Protocol(format!("unexpected content type: {other}"))),
    };
    if text.trim().is_empty() && finish != "content_filter" {
        return Err(ServiceError::Protocol(format!(
            "empty completion (finish_reason {finish})"
        )));
    }
    if let Some(usage) = resp.usage {
        log::debug!("token usage: {usage}");
    }
    Ok((text, finish))
}

pub struct ChatClient {
    client: EndpointClient,
}

impl ChatClient {
    pub fn new(config: EndpointConfig, transport: Arc<dyn HttpTransport>) -> Result<Self, ServiceError> {
        Ok(Self {
            client: EndpointClient::new(config, transport)?,
        })
    }

    pub fn live(config: EndpointConfig) -> Result<Self, ServiceError> {
        Ok(Self {
            client: EndpointClient::live(config)?,
        })
    }

    pub fn from_client(client: EndpointClient) -> Self {
        Self { client }
    }

    pub fn endpoint(&self) -> &EndpointClient {
        &self.client
    }
}

impl ChatModel for ChatClient {
    fn complete(&self, prompt: &RenderedPrompt, decode: &DecodeParams) -> Result<ModelResponse, ServiceError> {
        let cfg = &self.client.config;
        let body = build_chat_body(&cfg.model, prompt, decode, cfg.multimodal)?;
        let (resp, attempts) = self.client.post_json("/chat/completions", body)?;
        let (text, finish_reason) = parse_chat_response(&resp.body)?;
        Ok(ModelResponse {
            text,
            finish_reason,
            latency_ms: resp.latency_ms,
            raw_payload_hash: sha256_hex(&resp.body),
            attempts,
        })
    }
}

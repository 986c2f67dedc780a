use std::path::Path;
use std::sync::Arc;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::audio::{AudioBlob, ResampleQuality};
use super::http::{EndpointClient, HttpTransport};
use super::{normalize_transcript, EndpointConfig, ServiceError, SpeechSynthesizer, Transcriber};
use crate::label::Language;
use crate::timbre::TimbreEntry;

fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

#[derive(Serialize, Deserialize)]
struct AudioPayload {
    data: String,
    format: String,
}

#[derive(Serialize)]
struct SpeechRequest<'a> {
    model: &'a str,
    input: &'a str,
    voice: &'a str,
    reference_audio: AudioPayload,
    response_format: &'static str,
    seed: u64,
}

/// Accepts raw WAV bytes or JSON `{"audio": "<base64 wav>"}`.
pub fn decode_speech_response(body: &[u8]) -> Result<AudioBlob, ServiceError> {
    if body.starts_with(b"RIFF") {
        return Ok(AudioBlob::from_wav_bytes(body)?);
    }
    let v: serde_json::Value = serde_json::from_slice(body)
        .map_err(|_| ServiceError::AudioDecode("response is neither WAV nor JSON".into()))?;
    let data = v
        .get("audio")
        .or_else(|| v.get("data"))
        .and_then(|d| d.as_str())
        .ok_or_else(|| ServiceError::Protocol("speech response has no audio field".into()))?;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| ServiceError::AudioDecode(format!("base64: {e}")))?;
    Ok(AudioBlob::from_wav_bytes(&bytes)?)
}

/// Reference-based voice cloning over `POST {base_url}/audio/speech`.
pub struct TtsClient {
    client: EndpointClient,
    pub quality: ResampleQuality,
}

impl TtsClient {
    pub fn new(config: EndpointConfig, transport: Arc<dyn HttpTransport>) -> Result<Self, ServiceError> {
        Ok(Self::from_client(EndpointClient::new(config, transport)?))
    }

    pub fn live(config: EndpointConfig) -> Result<Self, ServiceError> {
        Ok(Self::from_client(EndpointClient::live(config)?))
    }

    pub fn from_client(client: EndpointClient) -> Self {
        Self {
            client,
            quality: ResampleQuality::Sinc,
        }
    }

    pub fn request_body(&self, text: &str, reference: &TimbreEntry, reference_wav: &[u8], seed: u64) -> Vec<u8> {
        let req = SpeechRequest {
            model: &self.client.config.model,
            input: text,
            voice: &reference.timbre_id,
            reference_audio: AudioPayload {
                data: b64(reference_wav),
                format: "wav".into(),
            },
            response_format: "wav",
            seed,
        };
        serde_json::to_vec(&req).expect("request serializes")
    }
}

impl SpeechSynthesizer for TtsClient {
    fn synthesize(&self, text: &str, reference: &TimbreEntry, seed: u64) -> Result<AudioBlob, ServiceError> {
        if text.trim().is_empty() {
            return Err(ServiceError::EmptyInput("text to synthesize".into()));
        }
        let wav = std::fs::read(&reference.file_path)
            .map_err(|e| ServiceError::AudioDecode(format!("reference {}: {e}", reference.file_path.display())))?;
        let body = self.request_body(text, reference, &wav, seed);
        let (resp, _) = self.client.post_json("/audio/speech", body)?;
        let audio = decode_speech_response(&resp.body)?;
        if audio.is_empty() {
            return Err(ServiceError::AudioDecode("service returned no samples".into()));
        }
        Ok(audio.standardize(self.quality))
    }
}

#[derive(Serialize)]
struct TranscriptionRequest<'a> {
    model: &'a str,
    audio: AudioPayload,
    #[serde(skip_serializing_if = "Option::is_none")]
    language: Option<&'static str>,
    response_format: &'static str,
}

#[derive(Deserialize)]
struct TranscriptionResponse {
    text: String,
}

/// Verbatim ASR over `POST {base_url}/audio/transcriptions`, JSON in and out.
pub struct AsrClient {
    client: EndpointClient,
    pub language: Option<Language>,
}

impl AsrClient {
    pub fn new(config: EndpointConfig, transport: Arc<dyn HttpTransport>) -> Result<Self, ServiceError> {
        Ok(Self {
            client: EndpointClient::new(config, transport)?,
            language: None,
        })
    }

    pub fn live(config: EndpointConfig) -> Result<Self, ServiceError> {
        Ok(Self {
            client: EndpointClient::live(config)?,
            language: None,
        })
    }
}

impl Transcriber for AsrClient {
    fn transcribe(&self, audio: &AudioBlob, _source: Option<&Path>) -> Result<String, ServiceError> {
        if audio.is_empty() {
            return Err(ServiceError::EmptyInput("zero-length audio".into()));
        }
        let req = TranscriptionRequest {
            model: &self.client.config.model,
            audio: AudioPayload {
                data: b64(&audio.to_wav_bytes()),
                format: "wav".into(),
            },
            language: self.language.map(|l| l.tag()),
            response_format: "json",
        };
        let body = serde_json::to_vec(&req).expect("request serializes");
        let (resp, _) = self.client.post_json("/audio/transcriptions", body)?;
        let parsed: TranscriptionResponse = serde_json::from_slice(&resp.body)
            .map_err(|e| ServiceError::Protocol(format!("transcription response: {e}")))?;
        Ok(normalize_transcript(&parsed.text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::Sex;
    use crate::services::http::{RecordingSleeper, ScriptedTransport};
    use crate::services::HttpResponse;
    use crate::timbre::AgeBucket;

    fn reference(dir: &Path) -> TimbreEntry {
        let path = dir.join("ref.wav");
        let a = AudioBlob::mono16k(vec![0; 16_000 * 4]);
        a.write_wav(&path).unwrap();
        TimbreEntry {
            timbre_id: "f1".into(),
            file_path: path,
            sex: Sex::Female,
            age_bucket: AgeBucket::Seventies,
            duration_s: 4.0,
            sample_rate_hz: 16_000,
            channels: 1,
            checksum: String::new(),
        }
    }

    fn tts(body: Vec<u8>) -> TtsClient {
        let t = Arc::new(ScriptedTransport::new([Ok(HttpResponse {
            status: 200,
            body,
            latency_ms: 1,
        })]));
        TtsClient::from_client(
            EndpointClient::new(EndpointConfig::new("http://stub.invalid", "tts"), t)
                .unwrap()
                .with_sleeper(Arc::new(RecordingSleeper::default())),
        )
    }

    #[test]
    fn stereo_24k_is_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = AudioBlob::new(vec![100; 24_000 * 2 * 2], 24_000, 2).unwrap();
        let c = tts(stereo.to_wav_bytes());
        let out = c.synthesize("hello there", &reference(dir.path()), 1).unwrap();
        assert!(out.is_pipeline_format());
        assert_eq!(out.frames(), 32_000);
    }

    #[test]
    fn json_wrapped_audio_and_garbage() {
        let a = AudioBlob::mono16k(vec![1, 2, 3]);
        let body = serde_json::json!({ "audio": b64(&a.to_wav_bytes()) }).to_string();
        assert_eq!(decode_speech_response(body.as_bytes()).unwrap(), a);
        assert!(matches!(
            decode_speech_response(b"<html>"),
            Err(ServiceError::AudioDecode(_))
        ));
    }

    #[test]
    fn empty_text_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = tts(vec![]);
        assert!(matches!(
            c.synthesize("  ", &reference(dir.path()), 1),
            Err(ServiceError::EmptyInput(_))
        ));
    }

    #[test]
    fn asr_round_trip() {
        let t = Arc::new(ScriptedTransport::new([ScriptedTransport::status(
            200,
            r#"{"text":" um  the boy "}"#,
        )]));
        let c = AsrClient::new(EndpointConfig::new("http://stub.invalid", "asr"), t.clone()).unwrap();
        let out = c.transcribe(&AudioBlob::mono16k(vec![0; 100]), None).unwrap();
        assert_eq!(out, "um the boy");
        assert!(t.requests()[0].url.ends_with("/audio/transcriptions"));
        assert!(matches!(
            c.transcribe(&AudioBlob::mono16k(vec![]), None),
            Err(ServiceError::EmptyInput(_))
        ));
    }
}

//! Chat-completion backends: OpenAI-compatible and Ollama-style HTTP
//! clients plus a scripted backend for deterministic runs and replay.

mod http;
mod scripted;
mod tokens;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{OllamaBackend, OpenAiBackend};
pub use scripted::{read_transcript, write_transcript, RecordingBackend, ScriptedBackend, ScriptedReply, TranscriptEntry};
pub use tokens::{count_tokens_approx, tokenize_approx};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("backend error: {0}")]
    Backend(String),
    #[error("authentication error: {0}")]
    Auth(String),
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("transcript i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAttachment {
    pub mime: String,
    #[serde(with = "b64")]
    pub bytes: Vec<u8>,
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageAttachment>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, text: text.into(), images: Vec::new() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, text: text.into(), images: Vec::new() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, text: text.into(), images: Vec::new() }
    }

    pub fn with_jpeg(mut self, bytes: Vec<u8>) -> Self {
        assert_eq!(self.role, Role::User, "images are only attached to user messages");
        self.images.push(ImageAttachment { mime: "image/jpeg".into(), bytes });
        self
    }
}

/// SHA-256 over a canonical rendering of the request: roles, texts, and
/// image digests.
pub fn request_sha256(messages: &[ChatMessage]) -> String {
    let canonical: Vec<serde_json::Value> = messages
        .iter()
        .map(|m| {
            let images: Vec<serde_json::Value> = m
                .images
                .iter()
                .map(|i| serde_json::json!({"mime": i.mime, "sha256": hex::encode(Sha256::digest(&i.bytes))}))
                .collect();
            serde_json::json!({"role": m.role, "text": m.text, "images": images})
        })
        .collect();
    let bytes = serde_json::to_vec(&canonical).expect("json");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub latency_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    OpenaiCompatible,
    Ollama,
    Scripted,
}

impl std::str::FromStr for BackendKind {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, LlmError> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "openai_compatible" | "openai" => Ok(BackendKind::OpenaiCompatible),
            "ollama" => Ok(BackendKind::Ollama),
            "scripted" | "replay" => Ok(BackendKind::Scripted),
            other => Err(LlmError::Config(format!("unknown backend kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    /// Name of the environment variable holding the API key; empty means
    /// no credential is sent.
    pub api_key_env: String,
    pub request_timeout_s: f64,
    pub transport_retries: u32,
    pub retry_base_delay_s: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::OpenaiCompatible,
            base_url: "http://localhost:11434/v1".into(),
            model: "qwen2.5vl:7b".into(),
            temperature: 0.7,
            max_tokens: 8192,
            seed: Some(42),
            api_key_env: String::new(),
            request_timeout_s: 300.0,
            transport_retries: 3,
            retry_base_delay_s: 0.5,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Config("max_tokens must be > 0".into()));
        }
        if self.request_timeout_s.is_nan() || self.request_timeout_s <= 0.0 {
            return Err(LlmError::Config("request_timeout_s must be > 0".into()));
        }
        Ok(())
    }

    /// GPT-5 family models only accept temperature 1.
    pub fn is_gpt5_family(&self) -> bool {
        let m = self.model.to_ascii_lowercase();
        m.contains("gpt-5") || m.contains("gpt5")
    }

    pub fn effective_temperature(&self) -> f64 {
        if self.is_gpt5_family() {
            1.0
        } else {
            self.temperature
        }
    }

    pub(crate) fn api_key(&self) -> Result<Option<String>, LlmError> {
        if self.api_key_env.is_empty() {
            return Ok(None);
        }
        match std::env::var(&self.api_key_env) {
            Ok(k) if !k.is_empty() => Ok(Some(k)),
            _ => Err(LlmError::Auth(format!("environment variable {} is not set", self.api_key_env))),
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError>;

    /// True when latencies are synthetic rather than measured.
    fn is_synthetic(&self) -> bool {
        false
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError> {
        (**self).complete(messages)
    }

    fn is_synthetic(&self) -> bool {
        (**self).is_synthetic()
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError> {
        (**self).complete(messages)
    }

    fn is_synthetic(&self) -> bool {
        (**self).is_synthetic()
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError> {
        (**self).complete(messages)
    }

    fn is_synthetic(&self) -> bool {
        (**self).is_synthetic()
    }
}

/// Builds an HTTP backend from `cfg`. Scripted backends need a transcript
/// and are constructed directly via [`ScriptedBackend`].
pub fn build_http_backend(cfg: &BackendConfig) -> Result<Arc<dyn ChatBackend>, LlmError> {
    cfg.validate()?;
    match cfg.kind {
        BackendKind::OpenaiCompatible => Ok(Arc::new(OpenAiBackend::new(cfg.clone()))),
        BackendKind::Ollama => Ok(Arc::new(OllamaBackend::new(cfg.clone()))),
        BackendKind::Scripted => Err(LlmError::Config("scripted backend needs a transcript".into())),
    }
}

/// One-shot completion against the backend described by `cfg`.
pub fn complete(messages: &[ChatMessage], cfg: &BackendConfig) -> Result<Completion, LlmError> {
    build_http_backend(cfg)?.complete(messages)
}

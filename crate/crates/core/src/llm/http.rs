//! Blocking HTTP clients for the two supported wire formats.

use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Value};

use super::{BackendConfig, ChatBackend, ChatMessage, Completion, LlmError};

fn agent(cfg: &BackendConfig) -> ureq::Agent {
    let config = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(cfg.request_timeout_s)))
        .http_status_as_error(false)
        .build();
    ureq::Agent::new_with_config(config)
}

fn endpoint(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

/// POSTs `body`, retrying transport failures, 429 and 5xx with exponential
/// backoff. Returns the parsed JSON body and wall-clock latency.
fn post_with_retries(agent: &ureq::Agent, cfg: &BackendConfig, url: &str, body: &Value) -> Result<(Value, f64), LlmError> {
    let key = cfg.api_key()?;
    let start = Instant::now();
    let mut attempt = 0u32;
    loop {
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(k) = &key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let failure = match req.send_json(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                match status {
                    200..=299 => {
                        let value: Value = resp
                            .body_mut()
                            .read_json()
                            .map_err(|e| LlmError::Backend(format!("invalid response body: {e}")))?;
                        return Ok((value, start.elapsed().as_secs_f64()));
                    }
                    401 | 403 => {
                        let text = resp.body_mut().read_to_string().unwrap_or_default();
                        return Err(LlmError::Auth(format!("HTTP {status}: {}", snippet(&text))));
                    }
                    429 | 500..=599 => {
                        let text = resp.body_mut().read_to_string().unwrap_or_default();
                        format!("HTTP {status}: {}", snippet(&text))
                    }
                    _ => {
                        let text = resp.body_mut().read_to_string().unwrap_or_default();
                        return Err(LlmError::Backend(format!("HTTP {status}: {}", snippet(&text))));
                    }
                }
            }
            Err(e) => format!("transport: {e}"),
        };
        if attempt >= cfg.transport_retries {
            return Err(LlmError::Backend(format!("{failure} (after {} attempts)", attempt + 1)));
        }
        let delay = cfg.retry_base_delay_s * 2f64.powi(attempt as i32);
        log::warn!("request to {url} failed ({failure}); retrying in {delay:.2}s");
        std::thread::sleep(Duration::from_secs_f64(delay.max(0.0)));
        attempt += 1;
    }
}

fn snippet(text: &str) -> String {
    crate::table::truncate_chars(text.trim(), 200)
}

fn as_u64(v: &Value) -> Option<u64> {
    v.as_u64()
}

/// Client for `/chat/completions` style endpoints.
pub struct OpenAiBackend {
    cfg: BackendConfig,
    agent: ureq::Agent,
}

impl OpenAiBackend {
    pub fn new(cfg: BackendConfig) -> Self {
        let agent = agent(&cfg);
        OpenAiBackend { cfg, agent }
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        let msgs: Vec<Value> = messages
            .iter()
            .map(|m| {
                if m.images.is_empty() {
                    json!({"role": m.role, "content": m.text})
                } else {
                    let mut parts: Vec<Value> = m
                        .images
                        .iter()
                        .map(|i| {
                            let url = format!("data:{};base64,{}", i.mime, STANDARD.encode(&i.bytes));
                            json!({"type": "image_url", "image_url": {"url": url}})
                        })
                        .collect();
                    parts.push(json!({"type": "text", "text": m.text}));
                    json!({"role": m.role, "content": parts})
                }
            })
            .collect();
        let mut body = json!({
            "model": self.cfg.model,
            "messages": msgs,
            "temperature": self.cfg.effective_temperature(),
        });
        let limit_key = if self.cfg.is_gpt5_family() { "max_completion_tokens" } else { "max_tokens" };
        body[limit_key] = json!(self.cfg.max_tokens);
        if let Some(seed) = self.cfg.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError> {
        let url = endpoint(&self.cfg.base_url, "chat/completions");
        let (resp, latency_s) = post_with_retries(&self.agent, &self.cfg, &url, &self.request_body(messages))?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Backend("response has no choices[0].message.content".into()))?
            .to_string();
        Ok(Completion {
            text,
            prompt_tokens: resp.pointer("/usage/prompt_tokens").and_then(as_u64),
            completion_tokens: resp.pointer("/usage/completion_tokens").and_then(as_u64),
            latency_s,
        })
    }
}

/// Client for Ollama's native `/api/chat` endpoint.
pub struct OllamaBackend {
    cfg: BackendConfig,
    agent: ureq::Agent,
}

impl OllamaBackend {
    pub fn new(cfg: BackendConfig) -> Self {
        let agent = agent(&cfg);
        OllamaBackend { cfg, agent }
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        let msgs: Vec<Value> = messages
            .iter()
            .map(|m| {
                let mut msg = json!({"role": m.role, "content": m.text});
                if !m.images.is_empty() {
                    let imgs: Vec<String> = m.images.iter().map(|i| STANDARD.encode(&i.bytes)).collect();
                    msg["images"] = json!(imgs);
                }
                msg
            })
            .collect();
        let mut options = json!({
            "temperature": self.cfg.effective_temperature(),
            "num_predict": self.cfg.max_tokens,
        });
        if let Some(seed) = self.cfg.seed {
            options["seed"] = json!(seed);
        }
        json!({"model": self.cfg.model, "messages": msgs, "stream": false, "options": options})
    }
}

impl ChatBackend for OllamaBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError> {
        let url = endpoint(&self.cfg.base_url, "api/chat");
        let (resp, latency_s) = post_with_retries(&self.agent, &self.cfg, &url, &self.request_body(messages))?;
        let text = resp
            .pointer("/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Backend("response has no message.content".into()))?
            .to_string();
        Ok(Completion {
            text,
            prompt_tokens: resp.get("prompt_eval_count").and_then(as_u64),
            completion_tokens: resp.get("eval_count").and_then(as_u64),
            latency_s,
        })
    }
}

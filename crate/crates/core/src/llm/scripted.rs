//! Deterministic backends: canned replies, transcript recording, replay.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{count_tokens_approx, request_sha256, ChatBackend, ChatMessage, Completion, LlmError};

/// One line of a transcript JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub index: usize,
    pub request_sha256: String,
    pub response: String,
    pub completion_tokens: Option<u64>,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedReply {
    pub text: String,
    pub completion_tokens: Option<u64>,
    pub latency_s: f64,
    /// When set and the backend is strict, the incoming request must hash
    /// to this value.
    pub request_sha256: Option<String>,
}

impl ScriptedReply {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let completion_tokens = Some(count_tokens_approx(&text) as u64);
        ScriptedReply { text, completion_tokens, latency_s: 0.0, request_sha256: None }
    }

    pub fn with_usage(mut self, completion_tokens: u64, latency_s: f64) -> Self {
        self.completion_tokens = Some(completion_tokens);
        self.latency_s = latency_s;
        self
    }
}

/// Serves replies in order. Latencies are whatever the script says.
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<ScriptedReply>>,
    served: Mutex<usize>,
    strict: bool,
}

impl ScriptedBackend {
    pub fn new<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_replies(texts.into_iter().map(ScriptedReply::new))
    }

    pub fn from_replies(replies: impl IntoIterator<Item = ScriptedReply>) -> Self {
        ScriptedBackend { replies: Mutex::new(replies.into_iter().collect()), served: Mutex::new(0), strict: false }
    }

    /// Replays a recorded transcript, checking request hashes and treating
    /// any extra request as a mismatch.
    pub fn replay(entries: &[TranscriptEntry]) -> Self {
        let replies = entries.iter().map(|e| ScriptedReply {
            text: e.response.clone(),
            completion_tokens: e.completion_tokens,
            latency_s: e.latency_s,
            request_sha256: Some(e.request_sha256.clone()),
        });
        ScriptedBackend { strict: true, ..Self::from_replies(replies) }
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("lock").len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError> {
        let mut served = self.served.lock().expect("lock");
        let Some(reply) = self.replies.lock().expect("lock").pop_front() else {
            let msg = format!("script exhausted after {} replies", *served);
            return Err(if self.strict { LlmError::ReplayMismatch(msg) } else { LlmError::Backend(msg) });
        };
        if self.strict {
            if let Some(expected) = &reply.request_sha256 {
                let got = request_sha256(messages);
                if &got != expected {
                    return Err(LlmError::ReplayMismatch(format!(
                        "request {} hashes to {got}, transcript expects {expected}",
                        *served
                    )));
                }
            }
        }
        *served += 1;
        Ok(Completion {
            text: reply.text,
            prompt_tokens: None,
            completion_tokens: reply.completion_tokens,
            latency_s: reply.latency_s,
        })
    }

    fn is_synthetic(&self) -> bool {
        true
    }
}

/// Wraps a backend and keeps a transcript of every successful completion.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend { inner, entries: Mutex::new(Vec::new()) }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("lock").clone()
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError> {
        let completion = self.inner.complete(messages)?;
        let mut entries = self.entries.lock().expect("lock");
        let index = entries.len();
        entries.push(TranscriptEntry {
            index,
            request_sha256: request_sha256(messages),
            response: completion.text.clone(),
            completion_tokens: completion.completion_tokens,
            latency_s: completion.latency_s,
        });
        Ok(completion)
    }

    fn is_synthetic(&self) -> bool {
        self.inner.is_synthetic()
    }
}

pub fn write_transcript(path: &Path, entries: &[TranscriptEntry]) -> Result<(), LlmError> {
    let io = |e: std::io::Error| LlmError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for e in entries {
        let line = serde_json::to_string(e).expect("json");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, LlmError> {
    let io = |e: std::io::Error| LlmError::Io(format!("{}: {e}", path.display()));
    let reader = BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| LlmError::Io(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serves_in_order_then_fails() {
        let b = ScriptedBackend::new(["one", "two words"]);
        assert!(b.is_synthetic());
        assert_eq!(b.complete(&[]).unwrap().text, "one");
        let second = b.complete(&[]).unwrap();
        assert_eq!((second.text.as_str(), second.completion_tokens), ("two words", Some(2)));
        assert!(matches!(b.complete(&[]), Err(LlmError::Backend(_))));
    }

    #[test]
    fn record_then_replay() {
        let msgs_a = [ChatMessage::user("a")];
        let msgs_b = [ChatMessage::user("b")];
        let rec = RecordingBackend::new(ScriptedBackend::from_replies([
            ScriptedReply::new("x").with_usage(5, 1.5),
            ScriptedReply::new("y"),
        ]));
        rec.complete(&msgs_a).unwrap();
        rec.complete(&msgs_b).unwrap();
        let entries = rec.entries();
        assert_eq!(entries[0].index, 0);
        assert_eq!(entries[0].latency_s, 1.5);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_transcript(&path, &entries).unwrap();
        let back = read_transcript(&path).unwrap();
        assert_eq!(back, entries);

        let replay = ScriptedBackend::replay(&back);
        assert_eq!(replay.complete(&msgs_a).unwrap().completion_tokens, Some(5));
        assert_eq!(replay.complete(&msgs_b).unwrap().text, "y");
        assert!(matches!(replay.complete(&msgs_b), Err(LlmError::ReplayMismatch(_))));
    }

    #[test]
    fn replay_detects_changed_request() {
        let entries = vec![TranscriptEntry {
            index: 0,
            request_sha256: request_sha256(&[ChatMessage::user("a")]),
            response: "x".into(),
            completion_tokens: None,
            latency_s: 0.0,
        }];
        let replay = ScriptedBackend::replay(&entries);
        assert!(matches!(replay.complete(&[ChatMessage::user("b")]), Err(LlmError::ReplayMismatch(_))));
    }
}

//! The episode loop.
//!
//! Each step composes an observation under the current modality, asks the
//! backend for a JSON reply, executes the action batch, checks the model's
//! predicted metadata against the realized table state, and feeds the
//! result into the next step's prompt.

mod ledger;
mod parse;
mod prompt;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{count_tokens_approx, ChatBackend, ChatMessage, RecordingBackend, TranscriptEntry};
use crate::observation::{compose_observation, serialize_markdown, truncate, Modality, RenderConfig, TextFormat};
use crate::state::{extract_state, match_state, MatchReport, RealizedState};
use crate::table::tools::{value_as_string, FINAL_ANSWER, SWITCH_MODALITY};
use crate::table::{apply_tool, Table, TableEnv, TableError, ToolAction, ToolOutput};

pub use ledger::{canonical_json, ActionLedger, LedgerEntry};
pub use parse::{parse_response, AgentResponse, ParseError};
pub use prompt::{
    budget_note, build_step_prompt, build_system_prompt, compose_feedback, format_catalogue, replan_banner,
    NOTE_WINDOW, RETRY_INSTRUCTION, SYSTEM_PROMPT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid episode config: {0}")]
    Config(String),
    #[error("trajectory i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub parse_retries: usize,
    pub attempts: usize,
    pub seed: u64,
    pub initial_modality: Modality,
    pub render: RenderConfig,
    pub preview_rows: usize,
    pub output_truncate_chars: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_steps: 12,
            parse_retries: 2,
            attempts: 1,
            seed: 42,
            initial_modality: Modality::Image,
            render: RenderConfig::default(),
            preview_rows: 15,
            output_truncate_chars: 400,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_steps < 1 {
            return Err(AgentError::Config("max_steps must be >= 1".into()));
        }
        if self.attempts < 1 {
            return Err(AgentError::Config("attempts must be >= 1".into()));
        }
        self.render.validate().map_err(|e| AgentError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    FinalAnswer,
    StepBudget,
    ParseFailure,
    BackendError,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: u64,
    pub llm_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub modality: Modality,
    pub prompt: String,
    pub raw_response: String,
    pub parse_errors: Vec<String>,
    pub parsed: Option<AgentResponse>,
    pub outputs: Vec<ToolOutput>,
    pub error: Option<String>,
    pub realized: Option<RealizedState>,
    #[serde(rename = "match")]
    pub match_report: Option<MatchReport>,
    pub latency_s: f64,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub answer: Option<String>,
    pub steps: Vec<StepRecord>,
    /// Steps whose reply parsed and was executed.
    pub turns: usize,
    pub llm_calls: usize,
    pub total_latency_s: f64,
    pub total_output_tokens: u64,
    pub terminated_by: TerminatedBy,
    pub modality_trace: Vec<Modality>,
    pub replans: usize,
    pub attempts_used: usize,
    pub error: Option<String>,
    pub final_table: Table,
    pub transcript: Vec<TranscriptEntry>,
}

/// What one batch did to the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub outputs: Vec<ToolOutput>,
    pub modality: Modality,
    pub final_answer: Option<String>,
    pub error: Option<String>,
    /// Actions attempted, including a failing one.
    pub attempted: usize,
}

fn switch_target(action: &ToolAction) -> Result<Modality, TableError> {
    let bad = |reason: String| TableError::InvalidArgs { tool: SWITCH_MODALITY.into(), reason };
    let mode = action
        .tool_args
        .get("mode")
        .or_else(|| action.tool_args.get("modality"))
        .and_then(value_as_string)
        .ok_or_else(|| bad("missing `mode`".into()))?;
    let mut modality: Modality = mode.parse().map_err(|e: crate::observation::ObservationError| bad(e.to_string()))?;
    if let (Modality::Text(_), Some(fmt)) = (modality, action.tool_args.get("format").and_then(value_as_string)) {
        let fmt: TextFormat = fmt.parse().map_err(|e: crate::observation::ObservationError| bad(e.to_string()))?;
        modality = Modality::Text(fmt);
    }
    Ok(modality)
}

/// Runs `actions` in order. A modality switch changes only the modality, a
/// final answer stops the batch, and a failing tool stops the batch with
/// the environment as it was before that action.
pub fn execute_batch(env: &mut TableEnv, actions: &[ToolAction], modality: Modality) -> BatchOutcome {
    let mut out = BatchOutcome { outputs: Vec::new(), modality, final_answer: None, error: None, attempted: 0 };
    env.last_error = None;
    for action in actions {
        out.attempted += 1;
        let result = match action.tool_name.as_str() {
            FINAL_ANSWER => match action.tool_args.get("answer").and_then(value_as_string) {
                Some(answer) => {
                    out.final_answer = Some(answer);
                    break;
                }
                None => Err(TableError::InvalidArgs { tool: FINAL_ANSWER.into(), reason: "missing `answer`".into() }),
            },
            SWITCH_MODALITY => switch_target(action).map(|m| out.modality = m),
            _ => apply_tool(env, action).map(|o| out.outputs.push(o)),
        };
        if let Err(e) = result {
            let msg = format!("{}: {e}", action.tool_name);
            env.last_error = Some(msg.clone());
            out.error = Some(msg);
            break;
        }
    }
    out
}

fn corrective_message(err: &ParseError) -> String {
    format!("Your reply could not be used: {err}. {RETRY_INSTRUCTION}")
}

/// Runs up to `cfg.attempts` independent episodes and returns the first one
/// that produces an answer (or the last one).
pub fn run_episode(question: &str, table: &Table, backend: &dyn ChatBackend, cfg: &EpisodeConfig) -> EpisodeResult {
    let mut result = run_attempt(question, table, backend, cfg);
    let mut used = 1;
    while result.answer.is_none() && used < cfg.attempts {
        let next = run_attempt(question, table, backend, cfg);
        used += 1;
        let mut transcript = std::mem::take(&mut result.transcript);
        let offset = transcript.len();
        transcript.extend(next.transcript.iter().cloned().map(|mut e| {
            e.index += offset;
            e
        }));
        result = EpisodeResult { transcript, ..next };
    }
    result.attempts_used = used;
    result
}

fn run_attempt(question: &str, table: &Table, backend: &dyn ChatBackend, cfg: &EpisodeConfig) -> EpisodeResult {
    let recorder = RecordingBackend::new(backend);
    let synthetic = backend.is_synthetic();
    let system = build_system_prompt();
    let mut env = TableEnv::new(table.clone());
    let mut modality = cfg.initial_modality;
    let mut ledger = ActionLedger::default();
    let mut feedback: Option<String> = None;
    let mut last_output: Option<String> = None;
    let mut last_error: Option<String> = None;

    let mut steps = Vec::new();
    let mut modality_trace = Vec::new();
    let mut replans = 0;
    let mut answer = None;
    let mut error = None;
    let mut terminated_by = TerminatedBy::StepBudget;

    'steps: for t in 1..=cfg.max_steps {
        let started = Instant::now();
        modality_trace.push(modality);

        let (obs_text, image) = match compose_observation(&env, modality, &cfg.render) {
            Ok(obs) => (obs.text, obs.image),
            Err(e) => {
                let (shown, _) = truncate(&env.current, cfg.render.max_rows, cfg.render.max_cols);
                let note = format!("[NOTE] {modality} observation unavailable ({e}); showing the table as text.");
                (Some(format!("{note}\n{}", serialize_markdown(&shown))), None)
            }
        };
        let step_prompt =
            build_step_prompt(&env, question, cfg, &ledger, last_output.as_deref(), last_error.as_deref(), t);
        let user_text = [obs_text, feedback.take(), Some(step_prompt)].into_iter().flatten().collect::<Vec<_>>().join("\n\n");
        let mut user = ChatMessage::user(user_text.clone());
        if let Some(bytes) = image {
            user = user.with_jpeg(bytes);
        }
        let mut messages = vec![ChatMessage::system(system.clone()), user];

        let mut record = StepRecord {
            step_index: t,
            modality,
            prompt: user_text,
            raw_response: String::new(),
            parse_errors: Vec::new(),
            parsed: None,
            outputs: Vec::new(),
            error: None,
            realized: None,
            match_report: None,
            latency_s: 0.0,
            usage: Usage::default(),
        };
        let mut llm_latency = 0.0;

        let parsed = loop {
            let completion = match recorder.complete(&messages) {
                Ok(c) => c,
                Err(e) => {
                    record.latency_s = if synthetic { llm_latency } else { started.elapsed().as_secs_f64() };
                    error = Some(e.to_string());
                    terminated_by = TerminatedBy::BackendError;
                    steps.push(record);
                    break 'steps;
                }
            };
            llm_latency += completion.latency_s;
            record.usage.llm_calls += 1;
            record.usage.completion_tokens +=
                completion.completion_tokens.unwrap_or_else(|| count_tokens_approx(&completion.text) as u64);
            if let Some(p) = completion.prompt_tokens {
                *record.usage.prompt_tokens.get_or_insert(0) += p;
            }
            record.raw_response = completion.text.clone();
            match parse_response(&completion.text) {
                Ok(r) => break r,
                Err(e) => {
                    record.parse_errors.push(e.to_string());
                    if record.parse_errors.len() > cfg.parse_retries {
                        record.latency_s = if synthetic { llm_latency } else { started.elapsed().as_secs_f64() };
                        error = Some(format!("unparseable reply: {e}"));
                        terminated_by = TerminatedBy::ParseFailure;
                        steps.push(record);
                        break 'steps;
                    }
                    messages.push(ChatMessage::assistant(completion.text));
                    messages.push(ChatMessage::user(corrective_message(&e)));
                }
            }
        };

        let prev = extract_state(&env);
        let outcome = execute_batch(&mut env, &parsed.actions, modality);
        for action in &parsed.actions[..outcome.attempted] {
            ledger.record(t, action);
        }
        modality = outcome.modality;

        let realized = extract_state(&env);
        let output_text = outcome.outputs.last().map(|o| o.text.as_str());
        let report = match_state(&parsed.predicted_metadata, &prev, &realized, output_text);
        if report.replan {
            replans += 1;
        }
        feedback = Some(compose_feedback(
            &outcome.outputs,
            &parsed.predicted_metadata,
            &realized,
            &report,
            cfg.output_truncate_chars,
        ));
        last_output = outcome.outputs.last().map(|o| o.text.clone());
        last_error = outcome.error.clone();

        record.outputs = outcome.outputs;
        record.error = outcome.error;
        record.realized = Some(realized);
        record.match_report = Some(report);
        record.parsed = Some(parsed);
        record.latency_s = if synthetic { llm_latency } else { started.elapsed().as_secs_f64() };
        steps.push(record);

        if let Some(a) = outcome.final_answer {
            answer = Some(a);
            terminated_by = TerminatedBy::FinalAnswer;
            break;
        }
    }

    let turns = steps.iter().filter(|s| s.parsed.is_some()).count();
    EpisodeResult {
        answer,
        turns,
        llm_calls: steps.iter().map(|s| s.usage.llm_calls).sum(),
        total_latency_s: steps.iter().map(|s| s.latency_s).sum(),
        total_output_tokens: steps.iter().map(|s| s.usage.completion_tokens).sum(),
        steps,
        terminated_by,
        modality_trace,
        replans,
        attempts_used: 1,
        error,
        final_table: env.current,
        transcript: recorder.entries(),
    }
}

/// One line of a trajectory log: enough to replay the episode with a
/// scripted backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: String,
    pub table: Table,
    pub config: EpisodeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub result: EpisodeResult,
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<(), AgentError> {
    let io = |e: std::io::Error| AgentError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for t in trajectories {
        writeln!(w, "{}", serde_json::to_string(t).expect("json")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, AgentError> {
    let io = |e: std::io::Error| AgentError::Io(format!("{}: {e}", path.display()));
    let reader = BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| AgentError::Io(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

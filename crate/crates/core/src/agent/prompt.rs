//! Prompt text: the fixed system prompt, per-step budget notes, the step
//! prompt, and post-step feedback.

use std::fmt::Write as _;

use crate::observation::serialize_json;
use crate::state::{MatchReport, PredictedMetadata, RealizedState, RowsPrediction};
use crate::table::tools::catalogue;
use crate::table::{truncate_chars, TableEnv, ToolOutput};

use super::ledger::ActionLedger;
use super::EpisodeConfig;

pub const SYSTEM_PROMPT: &str = r#"You are a table reasoning agent. Use tools to transform the table and answer the question.
You may batch multiple simple actions together in one step to save time.

Respond with JSON only using the schema:
{
  "reasoning": str,
  "predicted_metadata": {
      "rows": "fewer|same|more",// or exact integer
      "cols": [str] or null,    // expected column names,
      "key_output": str or null // expected value in tool output
  },
  "actions": [{"tool_name": str, "tool_args": object}, ...]
}

Action batching rules:
- Group low-complexity operations in one step (e.g. filter + sort, select + rename).
- Use a single action when the result of one step determines the next (e.g. check row count after a filter).
- To answer, include {"tool_name": "f_final_answer", "tool_args": {"answer": "..."}} as the last action.
- To revert to the original table, use f_retrieve_original_df."#;

pub const RETRY_INSTRUCTION: &str = "Respond with JSON only using the schema.";

pub fn build_system_prompt() -> String {
    SYSTEM_PROMPT.to_string()
}

/// Steps-remaining window in which the convergence note is shown.
pub const NOTE_WINDOW: usize = 3;

pub fn budget_note(t: usize, total: usize) -> String {
    debug_assert!(1 <= t && t <= total);
    let remaining = total.saturating_sub(t);
    if remaining == 0 {
        format!("[URGENT] This is your last step ({t}/{total}). You MUST call f_final_answer now.")
    } else if remaining <= NOTE_WINDOW {
        format!("[NOTE] {remaining} steps remaining ({t}/{total}). Start converging toward f_final_answer.")
    } else {
        format!("Step {t} of {total}.")
    }
}

pub fn format_catalogue() -> String {
    let mut out = String::new();
    for spec in catalogue() {
        let sig: Vec<String> = spec.params.iter().map(|p| format!("{}: {}", p.name, p.kind)).collect();
        let _ = writeln!(out, "- {}({}): {}", spec.name, sig.join(", "), spec.description);
        for p in spec.params {
            let req = if p.required { "required" } else { "optional" };
            let _ = writeln!(out, "    {} ({req}): {}", p.name, p.description);
        }
    }
    out.pop();
    out
}

/// Assembles the per-step prompt. `last_output` and `last_error` are the
/// previous step's; both render as `N/A` when absent.
pub fn build_step_prompt(
    env: &TableEnv,
    question: &str,
    cfg: &EpisodeConfig,
    ledger: &ActionLedger,
    last_output: Option<&str>,
    last_error: Option<&str>,
    t: usize,
) -> String {
    let table = &env.current;
    let headers = serde_json::to_string(table.headers()).expect("json");
    let preview = serialize_json(&table.head(cfg.preview_rows));
    let output = last_output
        .map(|o| truncate_chars(o, cfg.output_truncate_chars))
        .unwrap_or_else(|| "N/A".into());
    let mut out = String::new();
    let _ = writeln!(out, "{}", budget_note(t, cfg.max_steps));
    let _ = writeln!(out);
    let _ = writeln!(out, "Question: {question}");
    let _ = writeln!(out, "Table shape: ({}, {})", table.n_rows(), table.n_cols());
    let _ = writeln!(out, "Columns: {headers}");
    let _ = writeln!(out, "Preview rows (JSON): {preview}");
    let _ = writeln!(out, "Last step output: {output}");
    let _ = writeln!(out, "Last error: {}", last_error.unwrap_or("N/A"));
    let _ = writeln!(out);
    out.push_str(&ledger.render());
    let _ = writeln!(out);
    let _ = writeln!(out, "Tools:");
    out.push_str(&format_catalogue());
    out
}

fn describe_rows(r: RowsPrediction) -> String {
    match r {
        RowsPrediction::Fewer => "fewer".into(),
        RowsPrediction::Same => "same".into(),
        RowsPrediction::More => "more".into(),
        RowsPrediction::Exact(n) => n.to_string(),
    }
}

fn json_or_null<T: serde::Serialize>(v: Option<&T>) -> String {
    v.map(|v| serde_json::to_string(v).expect("json")).unwrap_or_else(|| "null".into())
}

/// Banner listing the mismatched fields, expected against observed.
pub fn replan_banner(pred: &PredictedMetadata, realized: &RealizedState, report: &MatchReport) -> String {
    let mut expected = Vec::new();
    let mut observed = Vec::new();
    if !report.rows_ok {
        expected.push(format!("rows={}", pred.rows.map(describe_rows).unwrap_or_default()));
        observed.push(format!("rows={}", realized.rows));
    }
    if !report.cols_ok {
        expected.push(format!("cols={}", json_or_null(pred.cols.as_ref())));
        observed.push(format!("cols={}", json_or_null(Some(&realized.cols))));
    }
    if !report.key_ok {
        expected.push(format!("key_output={}", json_or_null(pred.key_output.as_ref())));
        observed.push(format!("key_output={}", json_or_null(realized.key_output.as_ref())));
    }
    format!(
        "[METADATA MISMATCH] expected {} but observed {}; revise your plan.",
        expected.join(", "),
        observed.join(", ")
    )
}

/// Feedback for the next step: replan banner (if any), the last output,
/// the realized state and the prediction score.
pub fn compose_feedback(
    outputs: &[ToolOutput],
    pred: &PredictedMetadata,
    realized: &RealizedState,
    report: &MatchReport,
    max_chars: usize,
) -> String {
    let mut out = String::new();
    if report.replan {
        let _ = writeln!(out, "{}", replan_banner(pred, realized, report));
    }
    let output = outputs.last().map(|o| o.truncated_text(max_chars)).unwrap_or_else(|| "N/A".into());
    let _ = writeln!(out, "Output: {output}");
    let _ = writeln!(out, "Realized state: {}", serde_json::to_string(realized).expect("json"));
    let _ = write!(out, "Score: {:.2}", report.score);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::match_state;
    use crate::table::fixtures::writers;
    use crate::table::{CellValue, ToolAction};
    use serde_json::json;

    #[test]
    fn system_prompt_content() {
        let p = build_system_prompt();
        assert!(p.contains("\"predicted_metadata\""));
        assert!(p.contains("batch multiple simple actions together"));
        assert!(p.contains("Group low-complexity operations in one step"));
        assert!(p.contains("f_retrieve_original_df"));
        assert_eq!(p, build_system_prompt());
    }

    #[test]
    fn budget_notes() {
        assert_eq!(budget_note(12, 12), "[URGENT] This is your last step (12/12). You MUST call f_final_answer now.");
        assert_eq!(budget_note(10, 12), "[NOTE] 2 steps remaining (10/12). Start converging toward f_final_answer.");
        assert_eq!(budget_note(9, 12), "[NOTE] 3 steps remaining (9/12). Start converging toward f_final_answer.");
        assert_eq!(budget_note(8, 12), "Step 8 of 12.");
        assert_eq!(budget_note(1, 12), "Step 1 of 12.");
        assert!(budget_note(1, 1).starts_with("[URGENT]"));
    }

    #[test]
    fn step_prompt_fields_in_order() {
        let env = TableEnv::new(writers());
        let cfg = EpisodeConfig::default();
        let p = build_step_prompt(&env, "Who wrote most?", &cfg, &ActionLedger::default(), None, None, 1);
        let order = [
            "Step 1 of 12.",
            "Question: Who wrote most?",
            "Table shape: (5, 2)",
            "Columns: [\"Writer\",\"Episodes\"]",
            "Preview rows (JSON): [",
            "Last step output: N/A",
            "Last error: N/A",
            "Prior actions this episode: none",
            "Tools:",
            "- f_filter_rows(",
        ];
        let mut at = 0;
        for field in order {
            let pos = p[at..].find(field).unwrap_or_else(|| panic!("missing or out of order: {field}"));
            at += pos + field.len();
        }
        assert!(!p.contains("[DRIFT WARNING]"));
    }

    #[test]
    fn preview_and_output_are_bounded() {
        let rows: Vec<Vec<CellValue>> = (0..40).map(|i| vec![CellValue::Int(i)]).collect();
        let t = crate::table::Table::new(vec!["n".into()], rows).unwrap();
        let env = TableEnv::new(t);
        let cfg = EpisodeConfig::default();
        let long = "x".repeat(1000);
        let p = build_step_prompt(&env, "q", &cfg, &ActionLedger::default(), Some(&long), Some("boom"), 2);
        assert!(p.contains("{\"n\":14}"));
        assert!(!p.contains("{\"n\":15}"));
        assert!(p.contains(&format!("Last step output: {}\n", "x".repeat(400))));
        assert!(p.contains("Last error: boom"));
    }

    #[test]
    fn repeated_actions_are_flagged() {
        let mut ledger = ActionLedger::default();
        let a = ToolAction::new("f_sort_rows", json!({"column": "Episodes", "order": "desc"}));
        for step in 1..=3 {
            ledger.record(step, &a);
        }
        let env = TableEnv::new(writers());
        let p = build_step_prompt(&env, "q", &EpisodeConfig::default(), &ledger, None, None, 4);
        assert!(p.contains("REPEATED 3×"));
        assert!(p.contains("[DRIFT WARNING] tool+args combos called 2+ times:"));
    }

    #[test]
    fn feedback_for_mismatch_has_banner_first() {
        let pred: PredictedMetadata = serde_json::from_value(json!({
            "rows": "fewer", "cols": ["Country", "Year"], "key_output": "1964"
        }))
        .unwrap();
        let prev = RealizedState { rows: 10, cols: vec!["Country".into(), "Year".into()], key_output: None };
        let realized = RealizedState { rows: 3, cols: vec!["Country".into(), "Year".into()], key_output: Some("1968".into()) };
        let report = match_state(&pred, &prev, &realized, None);
        let fb = compose_feedback(&[], &pred, &realized, &report, 400);
        assert!(fb.starts_with("[METADATA MISMATCH] expected key_output=\"1964\" but observed key_output=\"1968\"; revise your plan."));
        assert!(fb.contains("\"key_output\":\"1968\""));
        assert!(fb.contains("Output: N/A"));
        assert!(fb.ends_with("Score: 0.67"));
    }

    #[test]
    fn feedback_for_perfect_prediction() {
        let pred = PredictedMetadata { rows: Some(RowsPrediction::Same), ..Default::default() };
        let s = RealizedState { rows: 2, cols: vec!["a".into()], key_output: None };
        let report = match_state(&pred, &s, &s, None);
        let fb = compose_feedback(&[ToolOutput::text("ok")], &pred, &s, &report, 400);
        assert!(!fb.contains("[METADATA MISMATCH]"));
        assert!(fb.contains("Output: ok"));
        assert!(fb.ends_with("Score: 1.00"));
    }
}

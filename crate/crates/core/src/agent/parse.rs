//! Extraction and validation of the model's JSON reply.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::state::PredictedMetadata;
use crate::table::tools::FINAL_ANSWER;
use crate::table::ToolAction;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ParseError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub reasoning: String,
    pub predicted_metadata: PredictedMetadata,
    pub actions: Vec<ToolAction>,
}

/// First JSON object embedded in `raw`, skipping prose, code fences, and
/// brace-delimited fragments that do not parse.
fn first_object(raw: &str) -> Option<Map<String, Value>> {
    for (i, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(m))) = stream.next() {
            return Some(m);
        }
    }
    None
}

fn parse_action(i: usize, v: &Value) -> Result<ToolAction, ParseError> {
    let obj = v.as_object().ok_or_else(|| ParseError(format!("actions[{i}] must be an object")))?;
    let tool_name = match obj.get("tool_name") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
        _ => return Err(ParseError(format!("actions[{i}].tool_name must be a non-empty string"))),
    };
    let tool_args = match obj.get("tool_args") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(ParseError(format!("actions[{i}].tool_args must be an object"))),
    };
    Ok(ToolAction { tool_name, tool_args })
}

/// Parses a reply into an [`AgentResponse`]. Missing `reasoning` becomes
/// empty, missing metadata fields become null, and actions after
/// `f_final_answer` are dropped.
pub fn parse_response(raw: &str) -> Result<AgentResponse, ParseError> {
    let obj = first_object(raw).ok_or_else(|| ParseError("no JSON object found in the reply".into()))?;
    let reasoning = match obj.get("reasoning") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    };
    let predicted_metadata = match obj.get("predicted_metadata") {
        None | Some(Value::Null) => PredictedMetadata::default(),
        Some(v @ Value::Object(_)) => serde_json::from_value(v.clone())
            .map_err(|e| ParseError(format!("invalid predicted_metadata: {e}")))?,
        Some(_) => return Err(ParseError("predicted_metadata must be an object".into())),
    };
    let actions = match obj.get("actions") {
        Some(Value::Array(a)) if !a.is_empty() => a,
        Some(Value::Array(_)) => return Err(ParseError("actions must not be empty".into())),
        Some(_) => return Err(ParseError("actions must be a list".into())),
        None => return Err(ParseError("missing `actions`".into())),
    };
    let mut parsed = Vec::with_capacity(actions.len());
    for (i, v) in actions.iter().enumerate() {
        let action = parse_action(i, v)?;
        let is_final = action.tool_name == FINAL_ANSWER;
        parsed.push(action);
        if is_final {
            break;
        }
    }
    Ok(AgentResponse { reasoning, predicted_metadata, actions: parsed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::RowsPrediction;

    #[test]
    fn plain_object() {
        let r = parse_response(r#"{"reasoning":"r","predicted_metadata":{"rows":"same"},"actions":[{"tool_name":"f_sort_rows","tool_args":{"column":"a"}}]}"#).unwrap();
        assert_eq!(r.reasoning, "r");
        assert_eq!(r.predicted_metadata.rows, Some(RowsPrediction::Same));
        assert_eq!(r.predicted_metadata.cols, None);
        assert_eq!(r.actions.len(), 1);
    }

    #[test]
    fn fenced_json_inside_prose() {
        let raw = "Sure {not json}. Here:\n```json\n{\"reasoning\": \"x\", \"actions\": [{\"tool_name\": \"f_final_answer\", \"tool_args\": {\"answer\": \"7\"}}]}\n```\nDone.";
        let r = parse_response(raw).unwrap();
        assert_eq!(r.actions[0].tool_name, "f_final_answer");
        assert_eq!(r.predicted_metadata, PredictedMetadata::default());
    }

    #[test]
    fn schema_violations() {
        assert!(parse_response(r#"{"reasoning": "x"}"#).is_err());
        assert!(parse_response(r#"{"actions": []}"#).is_err());
        assert!(parse_response(r#"{"actions": [{"tool_args": {}}]}"#).is_err());
        assert!(parse_response(r#"{"actions": [{"tool_name": "f_x"}], "predicted_metadata": {"rows": "fewer|same|more"}}"#).is_err());
        assert!(parse_response("no json here").is_err());
        assert!(parse_response("").is_err());
    }

    #[test]
    fn actions_after_final_answer_are_dropped() {
        let r = parse_response(r#"{"actions":[{"tool_name":"f_final_answer","tool_args":{"answer":"a"}},{"tool_name":"f_sort_rows"}]}"#).unwrap();
        assert_eq!(r.actions.len(), 1);
        assert!(r.actions[0].tool_args.contains_key("answer"));
    }

    #[test]
    fn missing_tool_args_is_empty() {
        let r = parse_response(r#"{"actions":[{"tool_name":"f_retrieve_original_df"}]}"#).unwrap();
        assert!(r.actions[0].tool_args.is_empty());
    }
}

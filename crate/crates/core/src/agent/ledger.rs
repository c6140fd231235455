//! Cross-step record of attempted actions, used to warn about loops.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::table::ToolAction;

/// Deterministic JSON rendering with object keys sorted at every level.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let parts: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&m[k])))
                .collect();
            format!("{{{}}}", parts.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub step: usize,
    pub tool_name: String,
    pub canonical_args: String,
}

impl LedgerEntry {
    pub fn combo(&self) -> String {
        format!("{}({})", self.tool_name, self.canonical_args)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionLedger {
    pub entries: Vec<LedgerEntry>,
    pub counts: BTreeMap<String, usize>,
}

impl ActionLedger {
    pub fn record(&mut self, step: usize, action: &ToolAction) {
        let entry = LedgerEntry {
            step,
            tool_name: action.tool_name.clone(),
            canonical_args: canonical_json(&Value::Object(action.tool_args.clone())),
        };
        *self.counts.entry(entry.combo()).or_insert(0) += 1;
        self.entries.push(entry);
    }

    pub fn count(&self, action: &ToolAction) -> usize {
        let key = format!("{}({})", action.tool_name, canonical_json(&Value::Object(action.tool_args.clone())));
        self.counts.get(&key).copied().unwrap_or(0)
    }

    /// Combos seen at least twice, in order of first appearance.
    pub fn repeated(&self) -> Vec<(String, usize)> {
        let mut seen = Vec::<String>::new();
        for e in &self.entries {
            let combo = e.combo();
            if self.counts[&combo] >= 2 && !seen.contains(&combo) {
                seen.push(combo);
            }
        }
        seen.into_iter().map(|c| {
            let n = self.counts[&c];
            (c, n)
        }).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.entries.is_empty() {
            out.push_str("Prior actions this episode: none\n");
            return out;
        }
        out.push_str("Prior actions this episode:\n");
        for e in &self.entries {
            let combo = e.combo();
            let n = self.counts[&combo];
            let _ = write!(out, "  step{}: {combo}", e.step);
            if n >= 2 {
                let _ = write!(out, "  ← REPEATED {n}×, avoid calling again");
            }
            out.push('\n');
        }
        let repeated = self.repeated();
        if !repeated.is_empty() {
            let list: Vec<String> = repeated.iter().map(|(c, n)| format!("{c} ({n}×)")).collect();
            let _ = writeln!(
                out,
                "[DRIFT WARNING] tool+args combos called 2+ times: {}. You MUST try a different approach or call f_final_answer.",
                list.join("; ")
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn canonical_sorts_nested_keys() {
        let a = json!({"b": 1, "a": {"z": [1, {"y": 2, "x": 3}], "c": "s"}});
        assert_eq!(canonical_json(&a), r#"{"a":{"c":"s","z":[1,{"x":3,"y":2}]},"b":1}"#);
    }

    #[test]
    fn key_order_does_not_matter() {
        let mut ledger = ActionLedger::default();
        ledger.record(1, &ToolAction::new("f_sort_rows", json!({"column": "a", "order": "desc"})));
        ledger.record(2, &ToolAction::new("f_sort_rows", json!({"order": "desc", "column": "a"})));
        assert_eq!(ledger.repeated().len(), 1);
        assert!(ledger.render().contains("REPEATED 2×"));
    }

    #[test]
    fn numeric_spelling_is_distinct() {
        let mut ledger = ActionLedger::default();
        ledger.record(1, &ToolAction::new("f_filter_rows", json!({"value": 2})));
        ledger.record(2, &ToolAction::new("f_filter_rows", json!({"value": 2.0})));
        assert!(ledger.repeated().is_empty());
        assert!(!ledger.render().contains("[DRIFT WARNING]"));
    }

    proptest! {
        #[test]
        fn counts_are_exact(calls in proptest::collection::vec(0usize..4, 0..30)) {
            let mut ledger = ActionLedger::default();
            let action = |i: usize| ToolAction::new("f_sort_rows", json!({"column": format!("c{i}")}));
            for (step, &i) in calls.iter().enumerate() {
                ledger.record(step + 1, &action(i));
            }
            for i in 0..4 {
                let expected = calls.iter().filter(|&&c| c == i).count();
                prop_assert_eq!(ledger.count(&action(i)), expected);
            }
            let any_repeat = (0..4).any(|i| calls.iter().filter(|&&c| c == i).count() >= 2);
            prop_assert_eq!(ledger.render().contains("[DRIFT WARNING]"), any_repeat);
        }
    }
}

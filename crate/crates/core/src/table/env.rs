use serde::{Deserialize, Serialize};

use super::{CellValue, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Table,
    Scalar,
    Text,
}

/// Result of executing one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub kind: OutputKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<CellValue>,
    pub text: String,
}

/// Rows included in the text rendering of a table output.
const TABLE_OUTPUT_ROWS: usize = 30;

impl ToolOutput {
    pub fn table(table: Table) -> Self {
        let text = format!(
            "Table ({} rows x {} cols):\n{}",
            table.n_rows(),
            table.n_cols(),
            crate::observation::serialize_markdown(&table.head(TABLE_OUTPUT_ROWS))
        );
        ToolOutput { kind: OutputKind::Table, table: Some(table), scalar: None, text }
    }

    pub fn scalar(value: CellValue) -> Self {
        let text = value.to_string();
        ToolOutput { kind: OutputKind::Scalar, table: None, scalar: Some(value), text }
    }

    pub fn text(text: impl Into<String>) -> Self {
        ToolOutput { kind: OutputKind::Text, table: None, scalar: None, text: text.into() }
    }

    /// Text rendering cut to at most `max_chars` characters.
    pub fn truncated_text(&self, max_chars: usize) -> String {
        truncate_chars(&self.text, max_chars)
    }
}

pub fn truncate_chars(s: &str, max_chars: usize) -> String {
    match s.char_indices().nth(max_chars) {
        Some((idx, _)) => s[..idx].to_string(),
        None => s.to_string(),
    }
}

/// Per-episode table state: the immutable starting table and the current one.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEnv {
    original: Table,
    pub current: Table,
    pub last_output: Option<ToolOutput>,
    pub last_error: Option<String>,
}

impl TableEnv {
    pub fn new(table: Table) -> Self {
        TableEnv { current: table.clone(), original: table, last_output: None, last_error: None }
    }

    pub fn original(&self) -> &Table {
        &self.original
    }

    /// Restores `current` to the starting snapshot and returns it.
    pub fn retrieve_original(&mut self) -> Table {
        self.current = self.original.clone();
        self.current.clone()
    }
}

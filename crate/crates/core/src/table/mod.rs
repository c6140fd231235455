//! In-memory table model, table operations, and the executable tool catalogue.
//!
//! Tables are immutable values: every operation returns a new [`Table`].
//! A [`TableEnv`] tracks the per-episode state (original snapshot plus the
//! current table).

mod cell;
mod env;
mod expr;
mod ingest;
mod ops;
pub mod tools;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cell::{parse_number_tolerant, CellValue};
pub use env::{truncate_chars, OutputKind, TableEnv, ToolOutput};
pub use expr::Expr;
pub use ingest::{from_csv_path, from_csv_str, from_inline_json, sanitize_headers};
pub use ops::{
    aggregate, compute_column, filter_rows, rename_columns, select_columns, sort_rows, AggFn,
    FilterOp, SortOrder,
};
pub use tools::{apply_tool, ToolAction, ToolSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column name `{0}` collides with an existing column")]
    NameCollision(String),
    #[error("could not parse expression: {0}")]
    ExpressionParse(String),
    #[error("column `{0}` has no numeric cells")]
    EmptyNumericColumn(String),
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("invalid arguments for {tool}: {reason}")]
    InvalidArgs { tool: String, reason: String },
    #[error("failed to read table: {0}")]
    Ingest(String),
}

pub type Result<T, E = TableError> = std::result::Result<T, E>;

/// Rectangular grid of cells under a list of unique, non-empty headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<CellValue>>,
}

#[derive(Deserialize)]
struct RawTable {
    headers: Vec<String>,
    #[serde(default)]
    rows: Vec<Vec<CellValue>>,
}

impl TryFrom<RawTable> for Table {
    type Error = TableError;

    fn try_from(raw: RawTable) -> Result<Self> {
        Table::new(raw.headers, raw.rows)
    }
}

impl Table {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<CellValue>>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(headers.len());
        for h in &headers {
            if h.is_empty() {
                return Err(TableError::InvalidHeader("empty header name".into()));
            }
            if !seen.insert(h.as_str()) {
                return Err(TableError::DuplicateColumn(h.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != headers.len() {
                return Err(TableError::Ragged { row: i, expected: headers.len(), found: row.len() });
            }
        }
        Ok(Table { headers, rows })
    }

    /// Constructor for callers that already guarantee the invariants.
    pub(crate) fn from_parts_unchecked(headers: Vec<String>, rows: Vec<Vec<CellValue>>) -> Self {
        debug_assert!(Table::new(headers.clone(), rows.clone()).is_ok());
        Table { headers, rows }
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<CellValue>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.headers.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TableError::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<impl Iterator<Item = &CellValue> + '_> {
        let idx = self.column_index(name)?;
        Ok(self.rows.iter().map(move |r| &r[idx]))
    }

    /// First `n` rows under the same headers.
    pub fn head(&self, n: usize) -> Table {
        Table::from_parts_unchecked(self.headers.clone(), self.rows.iter().take(n).cloned().collect())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// The writers/episodes table (original order, before sorting).
    pub fn writers() -> Table {
        Table::new(
            vec!["Writer".into(), "Episodes".into()],
            vec![
                vec!["E. Keene".into(), CellValue::Int(2)],
                vec!["P. Norris".into(), CellValue::Int(3)],
                vec!["K. Biller".into(), CellValue::Int(2)],
                vec!["M. Fresco".into(), CellValue::Int(2)],
                vec!["others (11)".into(), CellValue::Int(1)],
            ],
        )
        .unwrap()
    }

    pub fn arb_cell() -> impl proptest::strategy::Strategy<Value = CellValue> {
        use proptest::prelude::*;
        prop_oneof![
            Just(CellValue::Null),
            any::<bool>().prop_map(CellValue::Bool),
            (-1000i64..1000).prop_map(CellValue::Int),
            (-4000i32..4000).prop_map(|x| CellValue::Float(x as f64 / 8.0)),
            "[A-Za-z][a-z ]{0,8}[a-z]".prop_filter("not a keyword", |s| s != "true" && s != "false").prop_map(CellValue::Text),
        ]
    }

    /// Random tables with distinct, delimiter-free headers.
    pub fn arb_table(max_rows: usize, max_cols: usize) -> impl proptest::strategy::Strategy<Value = Table> {
        use proptest::prelude::*;
        (1..=max_cols).prop_flat_map(move |cols| {
            proptest::collection::vec(proptest::collection::vec(arb_cell(), cols), 0..=max_rows).prop_map(move |rows| {
                Table::new((0..cols).map(|j| format!("col {j}")).collect(), rows).unwrap()
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_duplicate_headers() {
        assert!(matches!(
            Table::new(vec!["a".into()], vec![vec![]]),
            Err(TableError::Ragged { .. })
        ));
        assert!(matches!(
            Table::new(vec!["a".into(), "a".into()], vec![]),
            Err(TableError::DuplicateColumn(_))
        ));
        assert!(Table::new(vec!["".into()], vec![]).is_err());
    }

    #[test]
    fn json_form_round_trip() {
        let t = fixtures::writers();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.starts_with(r#"{"headers":["Writer","Episodes"],"rows":[["E. Keene",2]"#));
        let back: Table = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<Table>(r#"{"headers":["a"],"rows":[[1,2]]}"#).is_err());
    }
}

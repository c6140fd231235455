//! CSV and inline-JSON ingestion with cell type inference.

use std::collections::HashSet;
use std::path::Path;

use serde_json::Value;

use super::{CellValue, Result, Table, TableError};

/// Makes raw header names valid: blanks become `col_<n>` and repeats get a
/// numeric suffix.
pub fn sanitize_headers(raw: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    raw.into_iter()
        .enumerate()
        .map(|(i, h)| {
            let base = if h.trim().is_empty() { format!("col_{}", i + 1) } else { h };
            let mut name = base.clone();
            let mut k = 2;
            while !seen.insert(name.clone()) {
                name = format!("{base}_{k}");
                k += 1;
            }
            name
        })
        .collect()
}

pub fn from_csv_str(data: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(data.as_bytes());
    read_csv(&mut reader)
}

pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| TableError::Ingest(format!("{}: {e}", path.display())))?;
    read_csv(&mut reader)
}

fn read_csv<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Table> {
    let headers = reader
        .headers()
        .map_err(|e| TableError::Ingest(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let headers = sanitize_headers(headers);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| TableError::Ingest(e.to_string()))?;
        rows.push(rec.iter().map(CellValue::infer).collect());
    }
    Table::new(headers, rows)
}

fn cell_from_json(v: &Value) -> Result<CellValue> {
    Ok(match v {
        Value::Null => CellValue::Null,
        Value::Bool(b) => CellValue::Bool(*b),
        Value::Number(n) => match n.as_i64() {
            Some(i) => CellValue::Int(i),
            None => CellValue::float(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => CellValue::infer(s),
        other => return Err(TableError::Ingest(format!("unsupported cell value {other}"))),
    })
}

/// Parses `{"headers": [...], "rows": [[...], ...]}`. String cells go
/// through type inference; JSON numbers and booleans keep their type.
pub fn from_inline_json(v: &Value) -> Result<Table> {
    let obj = v.as_object().ok_or_else(|| TableError::Ingest("table must be an object".into()))?;
    let headers = obj
        .get("headers")
        .and_then(Value::as_array)
        .ok_or_else(|| TableError::Ingest("missing `headers` array".into()))?
        .iter()
        .map(|h| match h {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .collect();
    let rows = match obj.get("rows") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(rows)) => rows
            .iter()
            .map(|r| {
                r.as_array()
                    .ok_or_else(|| TableError::Ingest("row must be an array".into()))?
                    .iter()
                    .map(cell_from_json)
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?,
        Some(_) => return Err(TableError::Ingest("`rows` must be an array".into())),
    };
    Table::new(sanitize_headers(headers), rows)
}

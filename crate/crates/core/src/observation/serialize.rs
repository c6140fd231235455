//! Text serializers (Markdown, JSON records, LaTeX tabular) and the
//! Markdown pipe-table parser.

use serde_json::{Map, Value};

use crate::table::{sanitize_headers, CellValue, Table};

use super::ObservationError;

fn escape_pipes(s: &str) -> String {
    s.replace('|', "\\|")
}

fn md_line(cells: impl Iterator<Item = String>) -> String {
    let mut line = String::from("|");
    for c in cells {
        line.push(' ');
        line.push_str(&c);
        line.push_str(" |");
    }
    line
}

/// Pipe table: header line, `| --- |` separator, one line per row.
pub fn serialize_markdown(table: &Table) -> String {
    let mut lines = Vec::with_capacity(table.n_rows() + 2);
    lines.push(md_line(table.headers().iter().map(|h| escape_pipes(h))));
    lines.push(md_line(table.headers().iter().map(|_| "---".to_string())));
    for row in table.rows() {
        lines.push(md_line(row.iter().map(|c| escape_pipes(&c.to_string()))));
    }
    lines.join("\n")
}

fn cell_json(c: &CellValue) -> Value {
    match c {
        CellValue::Null => Value::Null,
        CellValue::Bool(b) => Value::Bool(*b),
        CellValue::Int(i) => Value::from(*i),
        CellValue::Float(f) => serde_json::Number::from_f64(*f).map(Value::Number).unwrap_or(Value::Null),
        CellValue::Text(s) => Value::String(s.clone()),
    }
}

/// Array of row objects, keys in header order, compact.
pub fn serialize_json(table: &Table) -> String {
    let rows: Vec<Value> = table
        .rows()
        .iter()
        .map(|r| {
            let obj: Map<String, Value> =
                table.headers().iter().cloned().zip(r.iter().map(cell_json)).collect();
            Value::Object(obj)
        })
        .collect();
    serde_json::to_string(&rows).expect("json values serialize")
}

/// Rebuilds a table from [`serialize_json`] output. Headers come from
/// `headers` when given, else from the key order of the first record.
pub fn parse_json_records(text: &str, headers: Option<&[String]>) -> Result<Table, ObservationError> {
    let malformed = |m: String| ObservationError::MalformedTable(m);
    let value: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let records = value.as_array().ok_or_else(|| malformed("expected a JSON array".into()))?;
    let headers: Vec<String> = match headers {
        Some(h) => h.to_vec(),
        None => match records.first() {
            Some(Value::Object(m)) => m.keys().cloned().collect(),
            Some(_) => return Err(malformed("records must be objects".into())),
            None => Vec::new(),
        },
    };
    let mut rows = Vec::with_capacity(records.len());
    for rec in records {
        let obj = rec.as_object().ok_or_else(|| malformed("records must be objects".into()))?;
        if obj.len() != headers.len() {
            return Err(malformed(format!("record has {} keys, expected {}", obj.len(), headers.len())));
        }
        let row = headers
            .iter()
            .map(|h| {
                obj.get(h)
                    .ok_or_else(|| malformed(format!("record missing key `{h}`")))
                    .and_then(|v| serde_json::from_value::<CellValue>(v.clone()).map_err(|e| malformed(e.to_string())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Table::new(headers, rows).map_err(|e| malformed(e.to_string()))
}

fn escape_latex(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        if matches!(ch, '&' | '%' | '$' | '#' | '_' | '{' | '}') {
            out.push('\\');
        }
        out.push(ch);
    }
    out
}

/// `\begin{tabular}{l..l}`, header row, data rows, `\end{tabular}`; one row
/// per line.
pub fn serialize_latex(table: &Table) -> String {
    let mut out = format!("\\begin{{tabular}}{{{}}}\n", "l".repeat(table.n_cols()));
    let row_line = |cells: Vec<String>| format!("{} \\\\\n", cells.join(" & "));
    out.push_str(&row_line(table.headers().iter().map(|h| escape_latex(h)).collect()));
    for row in table.rows() {
        out.push_str(&row_line(row.iter().map(|c| escape_latex(&c.to_string())).collect()));
    }
    out.push_str("\\end{tabular}");
    out
}

/// Splits one pipe-table line into unescaped, trimmed cells.
fn split_md_line(line: &str) -> Option<Vec<String>> {
    let line = line.trim();
    let inner = line.strip_prefix('|')?;
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = inner.chars().peekable();
    let mut closed = false;
    while let Some(c) = chars.next() {
        match c {
            '\\' if chars.peek() == Some(&'|') => {
                cur.push('|');
                chars.next();
            }
            '|' => {
                cells.push(cur.trim().to_string());
                cur.clear();
                closed = true;
                continue;
            }
            _ => cur.push(c),
        }
        closed = false;
    }
    if !closed || !cur.trim().is_empty() {
        return None;
    }
    Some(cells)
}

fn is_separator(cells: &[String]) -> bool {
    cells.iter().all(|c| {
        let t = c.trim_matches(':');
        t.len() >= 3 && t.chars().all(|ch| ch == '-')
    })
}

/// Parses a Markdown pipe table; cells are type-inferred like CSV input.
pub fn parse_markdown(text: &str) -> Result<Table, ObservationError> {
    let malformed = |m: &str| ObservationError::MalformedTable(m.to_string());
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| malformed("empty input"))?;
    let headers = split_md_line(header).ok_or_else(|| malformed("header is not a pipe row"))?;
    let sep = lines.next().ok_or_else(|| malformed("missing separator row"))?;
    let sep = split_md_line(sep).ok_or_else(|| malformed("missing separator row"))?;
    if sep.len() != headers.len() || !is_separator(&sep) {
        return Err(malformed("missing separator row"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells = split_md_line(line).ok_or_else(|| malformed(&format!("row {i} is not a pipe row")))?;
        if cells.len() != headers.len() {
            return Err(malformed(&format!("row {i} has {} cells, expected {}", cells.len(), headers.len())));
        }
        rows.push(cells.iter().map(|c| CellValue::infer(c)).collect());
    }
    Table::new(sanitize_headers(headers), rows).map_err(|e| ObservationError::MalformedTable(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::fixtures::writers;

    fn template() -> Table {
        Table::new(
            vec!["Col1".into(), "Col2".into(), "Col3".into()],
            vec![vec!["val1".into(), "val2".into(), "val3".into()]],
        )
        .unwrap()
    }

    #[test]
    fn markdown_templates() {
        let one = Table::new(vec!["A".into()], vec![vec!["x".into()]]).unwrap();
        assert_eq!(serialize_markdown(&one), "| A |\n| --- |\n| x |");
        let md = serialize_markdown(&template());
        assert_eq!(md.lines().next().unwrap(), "| Col1 | Col2 | Col3 |");
        assert_eq!(md.lines().nth(2).unwrap(), "| val1 | val2 | val3 |");
        assert_eq!(serialize_markdown(&writers().head(0)), "| Writer | Episodes |\n| --- | --- |");
    }

    #[test]
    fn json_templates() {
        assert_eq!(serialize_json(&template()), r#"[{"Col1":"val1","Col2":"val2","Col3":"val3"}]"#);
        assert_eq!(serialize_json(&writers().head(0)), "[]");
        assert!(serialize_json(&writers()).contains(r#""Episodes":3"#));
    }

    #[test]
    fn latex_templates() {
        let tex = serialize_latex(&template());
        assert!(tex.starts_with("\\begin{tabular}{lll}\n"));
        assert!(tex.contains("\nval1 & val2 & val3 \\\\\n"));
        let one = Table::new(vec!["H".into()], vec![vec!["x".into()]]).unwrap();
        assert_eq!(serialize_latex(&one), "\\begin{tabular}{l}\nH \\\\\nx \\\\\n\\end{tabular}");
        let amp = Table::new(vec!["H".into()], vec![vec!["A&B".into()]]).unwrap();
        assert!(serialize_latex(&amp).contains("A\\&B"));
    }

    #[test]
    fn markdown_parse_errors() {
        assert!(matches!(parse_markdown("| A |\n| x |"), Err(ObservationError::MalformedTable(_))));
        assert!(parse_markdown("").is_err());
        assert!(parse_markdown("| A | B |\n| --- | --- |\n| 1 |").is_err());
    }

    #[test]
    fn escaped_pipes_round_trip() {
        let t = Table::new(
            vec!["a|b".into(), "c".into()],
            vec![vec!["x|y".into(), "\\|z\\".into()]],
        )
        .unwrap();
        assert_eq!(parse_markdown(&serialize_markdown(&t)).unwrap(), t);
    }

    #[test]
    fn writers_round_trips() {
        assert_eq!(parse_markdown(&serialize_markdown(&writers())).unwrap(), writers());
        assert_eq!(parse_json_records(&serialize_json(&writers()), None).unwrap(), writers());
    }

    proptest::proptest! {
        #[test]
        fn markdown_and_json_round_trip(t in crate::table::fixtures::arb_table(30, 10)) {
            proptest::prop_assert_eq!(parse_markdown(&serialize_markdown(&t)).unwrap(), t.clone());
            proptest::prop_assert_eq!(parse_json_records(&serialize_json(&t), Some(t.headers())).unwrap(), t);
        }
    }
}

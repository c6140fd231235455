use crate::table::{CellValue, Table};

pub const ELLIPSIS: &str = "…";

/// Keeps the first `max_rows` rows and `max_cols` columns. When anything is
/// dropped, a marker row and/or column filled with `…` is appended.
pub fn truncate(table: &Table, max_rows: usize, max_cols: usize) -> (Table, bool) {
    let max_rows = max_rows.max(1);
    let max_cols = max_cols.max(1);
    let rows_cut = table.n_rows() > max_rows;
    let cols_cut = table.n_cols() > max_cols;
    if !rows_cut && !cols_cut {
        return (table.clone(), false);
    }
    let keep_cols = table.n_cols().min(max_cols);
    let mut headers: Vec<String> = table.headers()[..keep_cols].to_vec();
    if cols_cut {
        let mut marker = ELLIPSIS.to_string();
        while headers.contains(&marker) {
            marker.push_str(ELLIPSIS);
        }
        headers.push(marker);
    }
    let width = headers.len();
    let mut rows: Vec<Vec<CellValue>> = table
        .rows()
        .iter()
        .take(max_rows)
        .map(|r| {
            let mut row = r[..keep_cols].to_vec();
            if cols_cut {
                row.push(ELLIPSIS.into());
            }
            row
        })
        .collect();
    if rows_cut {
        rows.push(vec![CellValue::from(ELLIPSIS); width]);
    }
    (Table::from_parts_unchecked(headers, rows), true)
}

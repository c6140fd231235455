use std::cmp::Ordering;
use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::{CellValue, Result, Table, TableError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOp {
    Eq,
    Ne,
    Contains,
    Gt,
    Ge,
    Lt,
    Le,
}

impl FromStr for FilterOp {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "eq" | "=" | "==" => FilterOp::Eq,
            "ne" | "!=" | "<>" => FilterOp::Ne,
            "contains" => FilterOp::Contains,
            "gt" | ">" => FilterOp::Gt,
            "ge" | ">=" => FilterOp::Ge,
            "lt" | "<" => FilterOp::Lt,
            "le" | "<=" => FilterOp::Le,
            other => return Err(format!("unknown filter op `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    Asc,
    Desc,
}

impl FromStr for SortOrder {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asc" | "ascending" => Ok(SortOrder::Asc),
            "desc" | "descending" => Ok(SortOrder::Desc),
            other => Err(format!("unknown sort order `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFn {
    Sum,
    Avg,
    Min,
    Max,
    Count,
    CountDistinct,
}

impl FromStr for AggFn {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "sum" => AggFn::Sum,
            "avg" | "mean" | "average" => AggFn::Avg,
            "min" => AggFn::Min,
            "max" => AggFn::Max,
            "count" => AggFn::Count,
            "count_distinct" | "nunique" => AggFn::CountDistinct,
            other => return Err(format!("unknown aggregate `{other}`")),
        })
    }
}

type Predicate<'a> = Box<dyn Fn(&CellValue) -> bool + 'a>;

fn predicate(op: FilterOp, value: &CellValue) -> Result<Predicate<'_>> {
    Ok(match op {
        FilterOp::Eq => Box::new(move |c| c.compare(value) == Ordering::Equal),
        FilterOp::Ne => Box::new(move |c| c.compare(value) != Ordering::Equal),
        FilterOp::Contains => {
            let needle = value.to_string();
            Box::new(move |c| !c.is_null() && c.to_string().contains(&needle))
        }
        FilterOp::Gt | FilterOp::Ge | FilterOp::Lt | FilterOp::Le => {
            let bound = value.as_number().ok_or_else(|| {
                TableError::TypeMismatch(format!("`{value}` is not numeric"))
            })?;
            Box::new(move |c| match c.as_number() {
                Some(x) => match op {
                    FilterOp::Gt => x > bound,
                    FilterOp::Ge => x >= bound,
                    FilterOp::Lt => x < bound,
                    _ => x <= bound,
                },
                None => false,
            })
        }
    })
}

/// Keeps rows whose `column` cell satisfies `op value`, in original order.
pub fn filter_rows(table: &Table, column: &str, op: FilterOp, value: &CellValue) -> Result<Table> {
    let idx = table.column_index(column)?;
    let keep = predicate(op, value)?;
    let rows = table.rows().iter().filter(|r| keep(&r[idx])).cloned().collect();
    Ok(Table::from_parts_unchecked(table.headers().to_vec(), rows))
}

/// Stable sort on one column.
pub fn sort_rows(table: &Table, column: &str, order: SortOrder) -> Result<Table> {
    let idx = table.column_index(column)?;
    let mut rows = table.rows().to_vec();
    match order {
        SortOrder::Asc => rows.sort_by(|a, b| a[idx].compare(&b[idx])),
        SortOrder::Desc => rows.sort_by(|a, b| b[idx].compare(&a[idx])),
    }
    Ok(Table::from_parts_unchecked(table.headers().to_vec(), rows))
}

pub fn select_columns(table: &Table, columns: &[String]) -> Result<Table> {
    if columns.is_empty() {
        return Err(TableError::InvalidArgs {
            tool: "select_columns".into(),
            reason: "column list is empty".into(),
        });
    }
    let mut seen = HashSet::new();
    let mut idx = Vec::with_capacity(columns.len());
    for c in columns {
        if !seen.insert(c.as_str()) {
            return Err(TableError::DuplicateColumn(c.clone()));
        }
        idx.push(table.column_index(c)?);
    }
    let rows = table
        .rows()
        .iter()
        .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
        .collect();
    Ok(Table::from_parts_unchecked(columns.to_vec(), rows))
}

pub fn rename_columns(table: &Table, mapping: &[(String, String)]) -> Result<Table> {
    let mut headers = table.headers().to_vec();
    let mut renamed = HashSet::new();
    for (old, _) in mapping {
        let i = table.column_index(old)?;
        if !renamed.insert(i) {
            return Err(TableError::DuplicateColumn(old.clone()));
        }
    }
    for (old, new) in mapping {
        if new.is_empty() {
            return Err(TableError::InvalidHeader("empty header name".into()));
        }
        let i = table.column_index(old)?;
        headers[i] = new.clone();
    }
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(TableError::NameCollision(h.clone()));
        }
    }
    Ok(Table::from_parts_unchecked(headers, table.rows().to_vec()))
}

/// Appends a column computed per row from an arithmetic expression.
pub fn compute_column(table: &Table, new_name: &str, expr: &str) -> Result<Table> {
    if new_name.is_empty() {
        return Err(TableError::InvalidHeader("empty header name".into()));
    }
    if table.headers().iter().any(|h| h == new_name) {
        return Err(TableError::NameCollision(new_name.to_string()));
    }
    let expr = Expr::parse(expr)?;
    let bound = expr.bind(table)?;
    let mut headers = table.headers().to_vec();
    headers.push(new_name.to_string());
    let rows = table
        .rows()
        .iter()
        .map(|r| {
            let mut out = r.clone();
            out.push(bound.eval(r));
            out
        })
        .collect();
    Ok(Table::from_parts_unchecked(headers, rows))
}

/// Reduces a column to a scalar. Numeric reductions skip non-numeric cells;
/// `count_distinct` ignores nulls.
pub fn aggregate(table: &Table, column: &str, func: AggFn) -> Result<CellValue> {
    let idx = table.column_index(column)?;
    let cells = || table.rows().iter().map(move |r| &r[idx]);
    match func {
        AggFn::Count => return Ok(CellValue::Int(table.n_rows() as i64)),
        AggFn::CountDistinct => {
            let mut vals: Vec<&CellValue> = cells().filter(|c| !c.is_null()).collect();
            vals.sort_by(|a, b| a.compare(b));
            vals.dedup_by(|a, b| a.compare(b) == Ordering::Equal);
            return Ok(CellValue::Int(vals.len() as i64));
        }
        _ => {}
    }
    let numeric: Vec<(&CellValue, f64)> =
        cells().filter_map(|c| c.as_number().map(|x| (c, x))).collect();
    if numeric.is_empty() {
        return Err(TableError::EmptyNumericColumn(column.to_string()));
    }
    Ok(match func {
        AggFn::Sum => {
            let all_int = numeric.iter().all(|(c, _)| matches!(c, CellValue::Int(_)));
            let int_sum = numeric.iter().try_fold(0i64, |acc, (c, _)| match c {
                CellValue::Int(i) => acc.checked_add(*i),
                _ => None,
            });
            match int_sum {
                Some(s) if all_int => CellValue::Int(s),
                _ => CellValue::float(numeric.iter().map(|(_, x)| x).sum()),
            }
        }
        AggFn::Avg => {
            CellValue::float(numeric.iter().map(|(_, x)| x).sum::<f64>() / numeric.len() as f64)
        }
        AggFn::Min | AggFn::Max => {
            let pick = numeric
                .iter()
                .copied()
                .reduce(|best, cur| {
                    let better = match func {
                        AggFn::Min => cur.1 < best.1,
                        _ => cur.1 > best.1,
                    };
                    if better {
                        cur
                    } else {
                        best
                    }
                })
                .expect("non-empty");
            match pick.0 {
                CellValue::Int(i) => CellValue::Int(*i),
                _ => CellValue::float(pick.1),
            }
        }
        AggFn::Count | AggFn::CountDistinct => unreachable!(),
    })
}

//! Tool catalogue exposed to the agent and dispatch of table tools.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    aggregate, compute_column, filter_rows, rename_columns, select_columns, sort_rows, AggFn,
    CellValue, FilterOp, Result, SortOrder, TableEnv, TableError, ToolOutput,
};

pub const FILTER_ROWS: &str = "f_filter_rows";
pub const SORT_ROWS: &str = "f_sort_rows";
pub const SELECT_COLUMNS: &str = "f_select_columns";
pub const RENAME_COLUMNS: &str = "f_rename_columns";
pub const COMPUTE_COLUMN: &str = "f_compute_column";
pub const AGGREGATE: &str = "f_aggregate";
pub const RETRIEVE_ORIGINAL: &str = "f_retrieve_original_df";
pub const SWITCH_MODALITY: &str = "f_switch_modality";
pub const FINAL_ANSWER: &str = "f_final_answer";

/// One action requested by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolAction {
    pub tool_name: String,
    #[serde(default)]
    pub tool_args: Map<String, Value>,
}

impl ToolAction {
    pub fn new(tool_name: impl Into<String>, tool_args: Value) -> Self {
        let tool_args = match tool_args {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        ToolAction { tool_name: tool_name.into(), tool_args }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: &'static str,
    pub required: bool,
    pub description: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub params: &'static [ParamSpec],
}

const fn p(name: &'static str, kind: &'static str, required: bool, description: &'static str) -> ParamSpec {
    ParamSpec { name, kind, required, description }
}

static CATALOGUE: &[ToolSpec] = &[
    ToolSpec {
        name: FILTER_ROWS,
        description: "Keep rows whose cell in `column` satisfies `op value`. Row order is preserved.",
        params: &[
            p("column", "string", true, "column to test"),
            p("op", "eq|ne|contains|gt|ge|lt|le", true, "comparison; gt/ge/lt/le need a numeric value"),
            p("value", "string|number|boolean", true, "value to compare against"),
        ],
    },
    ToolSpec {
        name: SORT_ROWS,
        description: "Stable sort of all rows by one column.",
        params: &[
            p("column", "string", true, "sort key"),
            p("order", "asc|desc", false, "defaults to asc"),
        ],
    },
    ToolSpec {
        name: SELECT_COLUMNS,
        description: "Keep only the listed columns, in the given order.",
        params: &[p("columns", "[string]", true, "column names")],
    },
    ToolSpec {
        name: RENAME_COLUMNS,
        description: "Rename columns; data is unchanged.",
        params: &[p("mapping", "{old: new}", true, "old name to new name")],
    },
    ToolSpec {
        name: COMPUTE_COLUMN,
        description: "Append a column computed per row with + - * / and parentheses. Quote column names with spaces using backticks.",
        params: &[
            p("new_name", "string", true, "name of the new column"),
            p("expr", "string", true, "arithmetic expression, e.g. `a` / `b`"),
        ],
    },
    ToolSpec {
        name: AGGREGATE,
        description: "Reduce one column to a scalar. The table is not modified.",
        params: &[
            p("column", "string", true, "column to aggregate"),
            p("fn", "sum|avg|min|max|count|count_distinct", true, "aggregate function"),
        ],
    },
    ToolSpec {
        name: RETRIEVE_ORIGINAL,
        description: "Revert to the original table.",
        params: &[],
    },
    ToolSpec {
        name: SWITCH_MODALITY,
        description: "Choose how the table is shown at the next step.",
        params: &[
            p("mode", "text|image|multimodal", true, "observation modality"),
            p("format", "markdown|json|latex", false, "text format when mode is text"),
        ],
    },
    ToolSpec {
        name: FINAL_ANSWER,
        description: "Submit the final answer. Must be the last action.",
        params: &[p("answer", "string", true, "the answer")],
    },
];

pub fn catalogue() -> &'static [ToolSpec] {
    CATALOGUE
}

pub fn is_registered(name: &str) -> bool {
    CATALOGUE.iter().any(|t| t.name == name)
}

fn bad(tool: &str, reason: impl Into<String>) -> TableError {
    TableError::InvalidArgs { tool: tool.to_string(), reason: reason.into() }
}

fn arg<'a>(action: &'a ToolAction, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| action.tool_args.get(*n))
}

fn str_arg(action: &ToolAction, names: &[&str]) -> Result<String> {
    match arg(action, names) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(bad(&action.tool_name, format!("`{}` must be a string, got {other}", names[0]))),
        None => Err(bad(&action.tool_name, format!("missing `{}`", names[0]))),
    }
}

/// Renders a scalar JSON argument as a string (numbers and booleans included).
pub fn value_as_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn cell_arg(action: &ToolAction) -> Result<CellValue> {
    match arg(action, &["value"]) {
        None => Err(bad(&action.tool_name, "missing `value`")),
        Some(Value::Array(_)) | Some(Value::Object(_)) => Err(TableError::TypeMismatch(
            "filter value must be a scalar, not a list or map".into(),
        )),
        Some(v) => Ok(match v {
            Value::Null => CellValue::Null,
            Value::Bool(b) => CellValue::Bool(*b),
            Value::Number(n) => match n.as_i64() {
                Some(i) => CellValue::Int(i),
                None => CellValue::float(n.as_f64().unwrap_or(f64::NAN)),
            },
            Value::String(s) => CellValue::Text(s.clone()),
            _ => unreachable!(),
        }),
    }
}

/// Executes a table tool against `env`. `f_switch_modality` and
/// `f_final_answer` are control actions handled by the agent loop and are
/// rejected here.
pub fn apply_tool(env: &mut TableEnv, action: &ToolAction) -> Result<ToolOutput> {
    let name = action.tool_name.as_str();
    let output = match name {
        FILTER_ROWS => {
            let column = str_arg(action, &["column"])?;
            let op: FilterOp = str_arg(action, &["op"])?.parse().map_err(|e: String| bad(name, e))?;
            let value = cell_arg(action)?;
            let t = filter_rows(&env.current, &column, op, &value)?;
            env.current = t.clone();
            ToolOutput::table(t)
        }
        SORT_ROWS => {
            let column = str_arg(action, &["column"])?;
            let order = match arg(action, &["order"]) {
                None => SortOrder::Asc,
                Some(Value::Bool(asc)) => if *asc { SortOrder::Asc } else { SortOrder::Desc },
                Some(_) => str_arg(action, &["order"])?.parse().map_err(|e: String| bad(name, e))?,
            };
            let t = sort_rows(&env.current, &column, order)?;
            env.current = t.clone();
            ToolOutput::table(t)
        }
        SELECT_COLUMNS => {
            let columns = match arg(action, &["columns"]) {
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| v.as_str().map(str::to_string).ok_or_else(|| bad(name, "columns must be strings")))
                    .collect::<Result<Vec<_>>>()?,
                Some(Value::String(s)) => vec![s.clone()],
                _ => return Err(bad(name, "missing `columns` list")),
            };
            let t = select_columns(&env.current, &columns)?;
            env.current = t.clone();
            ToolOutput::table(t)
        }
        RENAME_COLUMNS => {
            let mapping = match arg(action, &["mapping"]) {
                Some(Value::Object(m)) => m
                    .iter()
                    .map(|(k, v)| {
                        v.as_str()
                            .map(|s| (k.clone(), s.to_string()))
                            .ok_or_else(|| bad(name, "mapping values must be strings"))
                    })
                    .collect::<Result<Vec<_>>>()?,
                _ => return Err(bad(name, "missing `mapping` object")),
            };
            let t = rename_columns(&env.current, &mapping)?;
            env.current = t.clone();
            ToolOutput::table(t)
        }
        COMPUTE_COLUMN => {
            let new_name = str_arg(action, &["new_name", "name"])?;
            let expr = str_arg(action, &["expr", "expression"])?;
            let t = compute_column(&env.current, &new_name, &expr)?;
            env.current = t.clone();
            ToolOutput::table(t)
        }
        AGGREGATE => {
            let column = str_arg(action, &["column"])?;
            let func: AggFn = str_arg(action, &["fn", "func", "agg"])?.parse().map_err(|e: String| bad(name, e))?;
            ToolOutput::scalar(aggregate(&env.current, &column, func)?)
        }
        RETRIEVE_ORIGINAL => ToolOutput::table(env.retrieve_original()),
        SWITCH_MODALITY | FINAL_ANSWER => {
            return Err(bad(name, "control action is handled by the agent loop"))
        }
        other => return Err(TableError::UnknownTool(other.to_string())),
    };
    env.last_output = Some(output.clone());
    Ok(output)
}

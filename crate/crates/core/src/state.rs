//! Low-dimensional table metadata and prediction checking.
//!
//! The realized state of a table is `{rows, cols, key_output}`. After each
//! step the model's predicted metadata is compared against it field by
//! field. The mismatch measure is a *count* of failed fields (0..=3); a
//! predicted field left null is a wildcard and always matches.
//!
//! * `nu` compares the prediction with the state after the step.
//! * `c` compares the prediction with the state before the step, i.e. how
//!   many fields the model expects the step to change.

use std::collections::BTreeSet;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::table::{OutputKind, TableEnv};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizedState {
    pub rows: usize,
    pub cols: Vec<String>,
    pub key_output: Option<String>,
}

/// Extracts the realized state from `env`. `key_output` is the scalar of the
/// last output, or the top-left data cell of a table output, else null.
pub fn extract_state(env: &TableEnv) -> RealizedState {
    let key_output = env.last_output.as_ref().and_then(|out| match out.kind {
        OutputKind::Scalar => out.scalar.as_ref().map(|s| s.to_string()),
        OutputKind::Table => out
            .table
            .as_ref()
            .and_then(|t| t.rows().first())
            .and_then(|r| r.first())
            .map(|c| c.to_string()),
        OutputKind::Text => None,
    });
    RealizedState {
        rows: env.current.n_rows(),
        cols: env.current.headers().to_vec(),
        key_output,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowsPrediction {
    Fewer,
    Same,
    More,
    Exact(u64),
}

impl Serialize for RowsPrediction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            RowsPrediction::Fewer => serializer.serialize_str("fewer"),
            RowsPrediction::Same => serializer.serialize_str("same"),
            RowsPrediction::More => serializer.serialize_str("more"),
            RowsPrediction::Exact(n) => serializer.serialize_u64(*n),
        }
    }
}

struct RowsVisitor;

impl<'de> Visitor<'de> for RowsVisitor {
    type Value = RowsPrediction;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("\"fewer\", \"same\", \"more\" or a non-negative integer")
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<RowsPrediction, E> {
        Ok(RowsPrediction::Exact(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<RowsPrediction, E> {
        u64::try_from(v).map(RowsPrediction::Exact).map_err(|_| E::custom("row count must be >= 0"))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<RowsPrediction, E> {
        if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 {
            Ok(RowsPrediction::Exact(v as u64))
        } else {
            Err(E::custom("row count must be a non-negative integer"))
        }
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<RowsPrediction, E> {
        match v.trim().to_ascii_lowercase().as_str() {
            "fewer" => Ok(RowsPrediction::Fewer),
            "same" => Ok(RowsPrediction::Same),
            "more" => Ok(RowsPrediction::More),
            other => other
                .parse::<u64>()
                .map(RowsPrediction::Exact)
                .map_err(|_| E::custom(format!("invalid rows prediction `{v}`"))),
        }
    }
}

impl<'de> Deserialize<'de> for RowsPrediction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(RowsVisitor)
    }
}

fn de_key_output<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let v = Option::<serde_json::Value>::deserialize(d)?;
    Ok(match v {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s),
        Some(other @ (serde_json::Value::Number(_) | serde_json::Value::Bool(_))) => Some(other.to_string()),
        Some(other) => return Err(de::Error::custom(format!("key_output must be a string, got {other}"))),
    })
}

/// The model's expectation for the state after a step.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PredictedMetadata {
    #[serde(default)]
    pub rows: Option<RowsPrediction>,
    #[serde(default)]
    pub cols: Option<Vec<String>>,
    #[serde(default, deserialize_with = "de_key_output")]
    pub key_output: Option<String>,
}

impl PredictedMetadata {
    pub fn populated(&self) -> u8 {
        self.rows.is_some() as u8 + self.cols.is_some() as u8 + self.key_output.is_some() as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub rows_ok: bool,
    pub cols_ok: bool,
    pub key_ok: bool,
    pub nu: u8,
    pub c: u8,
    pub replan: bool,
    pub score: f64,
}

fn rows_ok(pred: Option<RowsPrediction>, prev_rows: usize, rows: usize) -> bool {
    match pred {
        None => true,
        Some(RowsPrediction::Fewer) => rows < prev_rows,
        Some(RowsPrediction::Same) => rows == prev_rows,
        Some(RowsPrediction::More) => rows > prev_rows,
        Some(RowsPrediction::Exact(n)) => n == rows as u64,
    }
}

fn cols_ok(pred: Option<&Vec<String>>, cols: &[String]) -> bool {
    match pred {
        None => true,
        Some(p) => p.iter().collect::<BTreeSet<_>>() == cols.iter().collect::<BTreeSet<_>>(),
    }
}

fn key_ok(pred: Option<&str>, key: Option<&str>, output_text: Option<&str>) -> bool {
    match pred {
        None => true,
        Some(p) => {
            let needle = p.to_lowercase();
            [key, output_text].into_iter().flatten().any(|hay| hay.to_lowercase().contains(&needle))
        }
    }
}

/// Number of fields the prediction expects to differ from `prev`.
pub fn complexity(pred: &PredictedMetadata, prev: &RealizedState) -> u8 {
    let unchanged = [
        rows_ok(pred.rows, prev.rows, prev.rows),
        cols_ok(pred.cols.as_ref(), &prev.cols),
        key_ok(pred.key_output.as_deref(), prev.key_output.as_deref(), None),
    ];
    unchanged.iter().filter(|ok| !**ok).count() as u8
}

/// Compares the prediction with the realized state after the step.
/// `output_text` is the last tool output's text; `key_output` also matches
/// when it is contained there.
pub fn match_state(
    pred: &PredictedMetadata,
    prev: &RealizedState,
    realized: &RealizedState,
    output_text: Option<&str>,
) -> MatchReport {
    let rows_ok = rows_ok(pred.rows, prev.rows, realized.rows);
    let cols_ok = cols_ok(pred.cols.as_ref(), &realized.cols);
    let key_ok = key_ok(pred.key_output.as_deref(), realized.key_output.as_deref(), output_text);
    let nu = [rows_ok, cols_ok, key_ok].iter().filter(|ok| !**ok).count() as u8;
    let mut report = MatchReport {
        rows_ok,
        cols_ok,
        key_ok,
        nu,
        c: complexity(pred, prev),
        replan: nu > 0,
        score: 0.0,
    };
    report.score = feedback_score(&report, pred.populated());
    report
}

/// Fraction of populated predicted fields that matched; 1.0 when nothing was
/// predicted.
pub fn feedback_score(report: &MatchReport, populated: u8) -> f64 {
    if populated == 0 {
        return 1.0;
    }
    let ok = populated.saturating_sub(report.nu);
    ok as f64 / populated as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{CellValue, Table, ToolOutput};

    fn state(rows: usize, cols: &[&str], key: Option<&str>) -> RealizedState {
        RealizedState {
            rows,
            cols: cols.iter().map(|s| s.to_string()).collect(),
            key_output: key.map(str::to_string),
        }
    }

    fn olympics_pred() -> PredictedMetadata {
        PredictedMetadata {
            rows: Some(RowsPrediction::Fewer),
            cols: Some(vec!["Country".into(), "Year".into()]),
            key_output: Some("1964".into()),
        }
    }

    #[test]
    fn key_output_mismatch_triggers_replan() {
        let realized = state(3, &["Country", "Year"], Some("1968"));
        let r = match_state(&olympics_pred(), &state(17, &["Country", "Year", "Capacity"], None), &realized, None);
        assert!(r.rows_ok && r.cols_ok && !r.key_ok);
        assert_eq!(r.nu, 1);
        assert!(r.replan);
        assert!((r.score - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn wildcards_and_exact_rows() {
        let z = state(3, &["a"], Some("x"));
        let r = match_state(&PredictedMetadata::default(), &z, &z, None);
        assert_eq!((r.nu, r.replan, r.score), (0, false, 1.0));
        let p = PredictedMetadata { rows: Some(RowsPrediction::Exact(3)), ..Default::default() };
        assert_eq!(match_state(&p, &state(9, &["a"], None), &z, None).nu, 0);
    }

    #[test]
    fn all_wrong_scores_zero() {
        let p = PredictedMetadata {
            rows: Some(RowsPrediction::More),
            cols: Some(vec!["b".into()]),
            key_output: Some("zzz".into()),
        };
        let r = match_state(&p, &state(5, &["a"], None), &state(2, &["a"], Some("x")), None);
        assert_eq!(r.nu, 3);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn key_matches_in_output_text_case_insensitively() {
        let p = PredictedMetadata { key_output: Some("algeria".into()), ..Default::default() };
        let z = state(2, &["Country"], Some("Qatar"));
        assert!(match_state(&p, &z, &z, Some("| Algeria |")).key_ok);
        assert!(!match_state(&p, &z, &z, None).key_ok);
    }

    #[test]
    fn complexity_counts_predicted_changes() {
        let prev = state(17, &["Country", "Year"], Some("Algeria"));
        let p = PredictedMetadata {
            rows: Some(RowsPrediction::Fewer),
            cols: Some(vec!["Year".into(), "Country".into()]),
            key_output: None,
        };
        assert_eq!(complexity(&p, &prev), 1);
        assert_eq!(complexity(&PredictedMetadata::default(), &prev), 0);
        let q = PredictedMetadata {
            rows: Some(RowsPrediction::Same),
            cols: Some(vec!["Country".into(), "Year".into()]),
            key_output: Some("alg".into()),
        };
        assert_eq!(complexity(&q, &prev), 0);
    }

    #[test]
    fn extract_rules() {
        let t = Table::new(
            vec!["Country".into(), "Year".into()],
            vec![vec!["Algeria".into(), CellValue::Int(1964)]],
        )
        .unwrap();
        let mut env = TableEnv::new(t.clone());
        assert_eq!(extract_state(&env).key_output, None);
        env.last_output = Some(ToolOutput::table(t));
        assert_eq!(extract_state(&env).key_output.as_deref(), Some("Algeria"));
        env.last_output = Some(ToolOutput::scalar(CellValue::Int(1968)));
        let z = extract_state(&env);
        assert_eq!(z, state(1, &["Country", "Year"], Some("1968")));
    }

    #[test]
    fn prediction_json() {
        let p: PredictedMetadata =
            serde_json::from_str(r#"{"rows": "fewer", "cols": ["Country", "Year"], "key_output": 1964}"#).unwrap();
        assert_eq!(p, olympics_pred());
        let q: PredictedMetadata = serde_json::from_str(r#"{"rows": 3}"#).unwrap();
        assert_eq!(q.rows, Some(RowsPrediction::Exact(3)));
        assert!(serde_json::from_str::<PredictedMetadata>(r#"{"rows": "fewer|same|more"}"#).is_err());
    }

    #[test]
    fn report_json_shape() {
        let z = state(1, &["a"], None);
        let r = match_state(&PredictedMetadata::default(), &z, &z, None);
        let v = serde_json::to_value(r).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["rows_ok", "cols_ok", "key_ok", "nu", "c", "replan", "score"]);
    }
}

//! JSONL datasets and stratified sampling.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::table::{from_csv_path, from_inline_json, Table};

use super::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub id: String,
    pub dataset: String,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtype: Option<String>,
    pub table: Table,
}

impl DatasetItem {
    /// Identifier unique across datasets.
    pub fn uid(&self) -> String {
        format!("{}:{}", self.dataset, self.id)
    }
}

#[derive(Deserialize)]
struct RawItem {
    id: Value,
    question: String,
    #[serde(default)]
    answers: Option<Vec<Value>>,
    #[serde(default)]
    answer: Option<Value>,
    table: Value,
    #[serde(default)]
    qtype: Option<String>,
    #[serde(default)]
    dataset: Option<String>,
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn resolve_table(v: &Value, base: &Path) -> Result<Table, String> {
    if let Some(p) = v.get("csv_path").and_then(Value::as_str) {
        let path = base.join(p);
        return from_csv_path(&path).map_err(|e| format!("{}: {e}", path.display()));
    }
    from_inline_json(v).map_err(|e| e.to_string())
}

/// Parses one dataset line. `base` resolves relative `csv_path` references
/// and `default_dataset` names items without a `dataset` field.
pub fn parse_item(line: &str, base: &Path, default_dataset: &str) -> Result<DatasetItem, String> {
    let raw: RawItem = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let id = scalar_string(&raw.id).ok_or("`id` must be a string or number")?;
    let answers: Vec<String> = match (raw.answers, raw.answer) {
        (Some(list), _) => list.iter().filter_map(scalar_string).collect(),
        (None, Some(a)) => scalar_string(&a).into_iter().collect(),
        (None, None) => Vec::new(),
    };
    if answers.is_empty() {
        return Err(format!("item {id}: `answers` must be a non-empty list"));
    }
    let table = resolve_table(&raw.table, base).map_err(|e| format!("item {id}: {e}"))?;
    Ok(DatasetItem {
        id,
        dataset: raw.dataset.unwrap_or_else(|| default_dataset.to_string()),
        question: raw.question,
        answers,
        qtype: raw.qtype,
        table,
    })
}

/// Loads a JSONL dataset. Items without a `dataset` field are named after
/// the file stem.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetItem>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Dataset(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = parse_item(line, base, stem)
            .map_err(|e| BenchError::Dataset(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if !seen.insert(item.uid()) {
            return Err(BenchError::Dataset(format!("{}:{}: duplicate id {}", path.display(), n + 1, item.uid())));
        }
        items.push(item);
    }
    Ok(items)
}

/// Draws `n` items per dataset (all items when `n` is `None`), datasets in
/// name order. Pure in `(items, n, seed)`; duplicate ids are dropped first.
pub fn stratified_sample(items: &[DatasetItem], n: Option<usize>, seed: u64) -> Result<Vec<DatasetItem>, BenchError> {
    let mut groups: BTreeMap<&str, Vec<&DatasetItem>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for item in items {
        if seen.insert(item.uid()) {
            groups.entry(item.dataset.as_str()).or_default().push(item);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (dataset, mut group) in groups {
        let Some(n) = n else {
            out.extend(group.into_iter().cloned());
            continue;
        };
        if group.len() < n {
            return Err(BenchError::InsufficientItems { dataset: dataset.to_string(), have: group.len(), need: n });
        }
        group.shuffle(&mut rng);
        out.extend(group.into_iter().take(n).cloned());
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::table::CellValue;

    pub fn items(datasets: &[&str], per: usize) -> Vec<DatasetItem> {
        let mut out = Vec::new();
        for d in datasets {
            for i in 0..per {
                let table = Table::new(vec!["k".into(), "v".into()], vec![vec![CellValue::Int(i as i64), CellValue::Int(2 * i as i64)]])
                    .unwrap();
                out.push(DatasetItem {
                    id: format!("{i}"),
                    dataset: d.to_string(),
                    question: format!("How many rows in {d} {i}?"),
                    answers: vec!["1".into()],
                    qtype: None,
                    table,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::items;
    use super::*;
    use std::io::Write;

    #[test]
    fn loads_inline_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t.csv"), "a,b\n1,x\n2,y\n").unwrap();
        let path = dir.path().join("wtq.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, r#"{{"id":"1","question":"q","answers":["1"],"table":{{"headers":["a"],"rows":[[1]]}}}}"#).unwrap();
        writeln!(f).unwrap();
        writeln!(f, r#"{{"id":2,"question":"q2","answer":3,"table":{{"csv_path":"t.csv"}},"qtype":"count"}}"#).unwrap();
        drop(f);
        let items = load_dataset(&path).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].dataset, "wtq");
        assert_eq!(items[1].answers, vec!["3".to_string()]);
        assert_eq!(items[1].table.n_rows(), 2);
        assert_eq!(items[1].qtype.as_deref(), Some("count"));
    }

    #[test]
    fn rejects_bad_items() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, r#"{"id":"1","question":"q","answers":[],"table":{"headers":["a"],"rows":[]}}"#).unwrap();
        assert!(matches!(load_dataset(&path), Err(BenchError::Dataset(_))));
        std::fs::write(&path, r#"{"id":"1","question":"q","answers":["a"],"table":{"csv_path":"missing.csv"}}"#).unwrap();
        assert!(matches!(load_dataset(&path), Err(BenchError::Dataset(_))));
    }

    #[test]
    fn sample_sizes_and_determinism() {
        let all = items(&["a", "b", "c"], 250);
        let s = stratified_sample(&all, Some(200), 1).unwrap();
        assert_eq!(s.len(), 600);
        let ids: HashSet<String> = s.iter().map(DatasetItem::uid).collect();
        assert_eq!(ids.len(), 600);
        assert_eq!(s, stratified_sample(&all, Some(200), 1).unwrap());
        assert_ne!(s, stratified_sample(&all, Some(200), 2).unwrap());
    }

    #[test]
    fn insufficient_items() {
        let all = items(&["a"], 5);
        assert!(matches!(
            stratified_sample(&all, Some(6), 0),
            Err(BenchError::InsufficientItems { have: 5, need: 6, .. })
        ));
    }
}

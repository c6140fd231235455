//! Report files: `summary.json`, `summary.md`, `records.jsonl`,
//! `trajectories.jsonl`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::agent::write_trajectories;

use super::run::{EvalOutput, EvalReport, MetricSummary};
use super::BenchError;

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn table(title: &str, key: &str, rows: &BTreeMap<String, MetricSummary>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(out, "| {key} | n | Accuracy | SD | Turns | Latency (s) | TPS | BLEU | ROUGE-L | Incomplete |");
    let _ = writeln!(out, "| --- | --- | --- | --- | --- | --- | --- | --- | --- | --- |");
    for (k, s) in rows {
        let _ = writeln!(
            out,
            "| {k} | {} | {:.4} | {:.4} | {:.2} | {:.2} | {:.2} | {} | {} | {} |",
            s.n,
            s.accuracy,
            s.accuracy_sd,
            s.mean_turns,
            s.mean_latency_s,
            s.tps,
            opt(s.bleu),
            opt(s.rouge_l),
            s.incomplete
        );
    }
    out
}

pub fn render_markdown(report: &EvalReport) -> String {
    let h = &report.header;
    let mut out = String::from("# Evaluation summary\n\n");
    let seeds: Vec<String> = h.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "- seeds: {}", seeds.join(", "));
    let _ = writeln!(
        out,
        "- items per dataset: {}",
        h.n_per_dataset.map(|n| n.to_string()).unwrap_or_else(|| "all".into())
    );
    let _ = writeln!(out, "- datasets: {}", h.datasets.join(", "));
    let _ = writeln!(out, "- BLEU: {}", h.bleu_variant);
    let _ = writeln!(out, "- episode config: `{}`", serde_json::to_string(&h.episode).expect("json"));
    let _ = writeln!(out, "- backend: `{}`", h.backend);
    let _ = writeln!(out, "\nMetrics are averaged over seeds. Mean turns cover completed episodes only.\n");

    let mut overall = BTreeMap::new();
    overall.insert("all".to_string(), report.averaged.overall.clone());
    out.push_str(&table("Overall", "Scope", &overall));
    out.push('\n');
    out.push_str(&table("By dataset", "Dataset", &report.averaged.by_dataset));
    out.push('\n');
    out.push_str(&table("By question type", "Type", &report.averaged.by_qtype));
    out.push('\n');
    out.push_str(&table("By table size (tokens)", "Bin", &report.averaged.by_size_bin));
    out.push('\n');
    let per_seed: BTreeMap<String, MetricSummary> =
        report.per_seed.iter().map(|s| (format!("seed {}", s.seed), s.breakdown.overall.clone())).collect();
    out.push_str(&table("Per seed", "Seed", &per_seed));
    out
}

pub fn write_reports(dir: &Path, output: &EvalOutput) -> Result<(), BenchError> {
    let io = |e: std::io::Error| BenchError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let json = serde_json::to_string_pretty(&output.report).expect("json");
    std::fs::write(dir.join("summary.json"), json + "\n").map_err(io)?;
    std::fs::write(dir.join("summary.md"), render_markdown(&output.report)).map_err(io)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("records.jsonl")).map_err(io)?);
    for r in &output.records {
        writeln!(f, "{}", serde_json::to_string(r).expect("json")).map_err(io)?;
    }
    f.flush().map_err(io)?;
    write_trajectories(&dir.join("trajectories.jsonl"), &output.trajectories).map_err(|e| BenchError::Io(e.to_string()))
}

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use tabworld::agent::{read_trajectories, run_episode, TerminatedBy, Trajectory};
use tabworld::bench::{
    format_analytics, load_dataset, run_eval, stratified_sample, write_reports, BenchError, DatasetItem, EvalConfig,
    QuestionClassifier,
};
use tabworld::llm::{
    build_http_backend, read_transcript, BackendConfig, ChatBackend, ScriptedBackend, ScriptedReply,
};
use tabworld::observation::{render_image, RenderConfig, TextFormat};
use tabworld::table::{from_csv_path, from_inline_json, Table};

use crate::config::{self, FileConfig};
use crate::{AnalyzeArgs, CliError, EvalArgs, RenderCmd, ReplayArgs, RunArgs, SampleArgs, SerializeArgs};

fn load_table(path: &Path) -> Result<Table, CliError> {
    let err = |e: String| CliError::Dataset(format!("{}: {e}", path.display()));
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("json") => {
            let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
            from_inline_json(&v).map_err(|e| err(e.to_string()))
        }
        _ => from_csv_path(path).map_err(|e| err(e.to_string())),
    }
}

fn bench_err(e: BenchError) -> CliError {
    match e {
        BenchError::Config(m) => CliError::Usage(m),
        BenchError::Io(m) => CliError::Io(m),
        other => CliError::Dataset(other.to_string()),
    }
}

fn load_datasets(paths: &[PathBuf]) -> Result<Vec<DatasetItem>, CliError> {
    let mut items = Vec::new();
    for p in paths {
        items.extend(load_dataset(p).map_err(bench_err)?);
    }
    Ok(items)
}

/// Backend settings safe to write into logs and reports.
fn backend_echo(cfg: &BackendConfig) -> serde_json::Value {
    json!({
        "kind": cfg.kind,
        "base_url": cfg.base_url,
        "model": cfg.model,
        "temperature": cfg.effective_temperature(),
        "max_tokens": cfg.max_tokens,
        "seed": cfg.seed,
    })
}

fn append_jsonl<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    writeln!(f, "{}", serde_json::to_string(value).expect("json")).map_err(io)
}

pub fn run(file: &FileConfig, args: RunArgs) -> Result<(), CliError> {
    let backend_cfg = config::backend_config(file, &args.backend)?;
    let episode = config::episode_config(file, &args.episode, &args.render, args.backend.seed)?;
    let table = load_table(&args.table)?;
    let (backend, model): (Box<dyn ChatBackend>, String) = match &args.script {
        Some(path) => {
            let entries = read_transcript(path).map_err(|e| CliError::Usage(e.to_string()))?;
            let replies = entries.into_iter().map(|e| ScriptedReply {
                text: e.response,
                completion_tokens: e.completion_tokens,
                latency_s: e.latency_s,
                request_sha256: None,
            });
            (Box::new(ScriptedBackend::from_replies(replies)), "scripted".into())
        }
        None => (
            Box::new(build_http_backend(&backend_cfg).map_err(|e| CliError::Usage(e.to_string()))?),
            backend_cfg.model.clone(),
        ),
    };
    let result = run_episode(&args.question, &table, &*backend, &episode);
    let out_dir = args.out_dir.or_else(|| file.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    let traj_path = args.trajectory.unwrap_or_else(|| out_dir.join("trajectory.jsonl"));
    let terminated_by = result.terminated_by;
    let error = result.error.clone();
    println!("answer: {}", result.answer.as_deref().unwrap_or("<none>"));
    println!("terminated_by: {}", serde_json::to_value(terminated_by).expect("json").as_str().unwrap_or(""));
    println!("turns: {}", result.turns);
    println!("latency_s: {:.3}", result.total_latency_s);
    let trajectory = Trajectory {
        id: None,
        question: args.question,
        table,
        config: episode,
        model: Some(model),
        result,
    };
    append_jsonl(&traj_path, &trajectory)?;
    println!("trajectory: {}", traj_path.display());
    match terminated_by {
        TerminatedBy::BackendError => Err(CliError::Backend(error.unwrap_or_default())),
        _ => Ok(()),
    }
}

pub fn eval(file: &FileConfig, args: EvalArgs) -> Result<(), CliError> {
    let backend_cfg = config::backend_config(file, &args.backend)?;
    let episode = config::episode_config(file, &args.episode, &args.render, None)?;
    let items = load_datasets(&args.dataset)?;
    let cfg = EvalConfig {
        seeds: args.seeds.or_else(|| file.seeds.clone()).unwrap_or_else(|| vec![42]),
        n_per_dataset: args.n.or(file.n),
        parallel: args.parallel.or(file.parallel).unwrap_or(4),
        episode,
        size_bins: config::size_bins(file),
    };
    build_http_backend(&backend_cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let factory = |_: &DatasetItem, seed: u64| -> Result<Box<dyn ChatBackend>, tabworld::llm::LlmError> {
        let cfg = BackendConfig { seed: Some(seed), ..backend_cfg.clone() };
        Ok(Box::new(build_http_backend(&cfg)?))
    };
    let mut echo = backend_echo(&backend_cfg);
    echo["seed"] = json!("per eval seed");
    let output = run_eval(&items, &factory, &cfg, &QuestionClassifier::default(), echo).map_err(bench_err)?;
    let out_dir = args.out_dir.or_else(|| file.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs/eval"));
    write_reports(&out_dir, &output).map_err(bench_err)?;
    let o = &output.report.averaged.overall;
    println!(
        "items: {}  accuracy: {:.4} (sd {:.4})  mean turns: {:.2}  mean latency: {:.2}s  tps: {:.2}",
        o.n, o.accuracy, o.accuracy_sd, o.mean_turns, o.mean_latency_s, o.tps
    );
    println!("reports: {}", out_dir.display());
    let backend_failures = output.records.iter().filter(|r| r.terminated_by == Some(TerminatedBy::BackendError)).count();
    if !output.records.is_empty() && backend_failures == output.records.len() {
        return Err(CliError::Backend(format!("all {backend_failures} episodes failed at the backend")));
    }
    Ok(())
}

pub fn render(file: &FileConfig, args: RenderCmd) -> Result<(), CliError> {
    let mut episode = tabworld::agent::EpisodeConfig { render: RenderConfig::default(), ..Default::default() };
    config::render_overrides(&mut episode, file, &args.render);
    let table = load_table(&args.table)?;
    let img = render_image(&table, &episode.render).map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::write(&args.out, &img.bytes).map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    println!(
        "{} ({}x{} px{})",
        args.out.display(),
        img.width_px,
        img.height_px,
        if img.truncated { ", truncated" } else { "" }
    );
    Ok(())
}

pub fn serialize(args: SerializeArgs) -> Result<(), CliError> {
    let format: TextFormat = args.format.parse().map_err(|_| CliError::Usage(format!("unknown format `{}`", args.format)))?;
    let table = load_table(&args.table)?;
    println!("{}", format.serialize(&table));
    Ok(())
}

#[derive(Serialize)]
struct FormatRow {
    format: &'static str,
    tables: usize,
    structural: usize,
    content: usize,
    total: usize,
    overhead_ratio: f64,
    mean_table_ratio: f64,
}

pub fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let mut tables: Vec<Table> = load_datasets(&args.dataset)?.into_iter().map(|i| i.table).collect();
    for p in &args.table {
        tables.push(load_table(p)?);
    }
    if tables.is_empty() {
        return Err(CliError::Usage("give at least one --dataset or --table".into()));
    }
    let rows: Vec<FormatRow> = [TextFormat::Markdown, TextFormat::Json, TextFormat::Latex]
        .into_iter()
        .map(|fmt| {
            let stats: Vec<_> = tables.iter().map(|t| format_analytics(t, fmt)).collect();
            let structural = stats.iter().map(|s| s.structural).sum();
            let total: usize = stats.iter().map(|s| s.total).sum();
            FormatRow {
                format: fmt.as_str(),
                tables: stats.len(),
                structural,
                content: total - structural,
                total,
                overhead_ratio: if total == 0 { 0.0 } else { structural as f64 / total as f64 },
                mean_table_ratio: stats.iter().map(|s| s.overhead_ratio).sum::<f64>() / stats.len() as f64,
            }
        })
        .collect();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("json"));
    } else {
        println!("| Format | Tables | Structural | Content | Total | Overhead | Mean per table |");
        println!("| --- | --- | --- | --- | --- | --- | --- |");
        for r in rows {
            println!(
                "| {} | {} | {} | {} | {} | {:.2}% | {:.2}% |",
                r.format,
                r.tables,
                r.structural,
                r.content,
                r.total,
                100.0 * r.overhead_ratio,
                100.0 * r.mean_table_ratio
            );
        }
    }
    Ok(())
}

pub fn replay(args: ReplayArgs) -> Result<(), CliError> {
    let trajectories = read_trajectories(&args.trajectory).map_err(|e| CliError::Dataset(e.to_string()))?;
    let mut failures = 0;
    for (i, t) in trajectories.iter().enumerate() {
        let backend = ScriptedBackend::replay(&t.result.transcript);
        let replayed = run_episode(&t.question, &t.table, &backend, &t.config);
        let label = t.id.clone().unwrap_or_else(|| format!("#{}", i + 1));
        let answer = replayed.answer.as_deref().unwrap_or("<none>");
        if replayed.terminated_by == TerminatedBy::BackendError {
            failures += 1;
            println!("{label}: replay failed: {}", replayed.error.unwrap_or_default());
        } else if replayed.answer == t.result.answer && replayed.turns == t.result.turns {
            println!("{label}: {answer} (matches log)");
        } else {
            failures += 1;
            println!(
                "{label}: {answer} (log has {})",
                t.result.answer.as_deref().unwrap_or("<none>")
            );
        }
    }
    if failures > 0 {
        return Err(CliError::Backend(format!("{failures} of {} trajectories did not replay", trajectories.len())));
    }
    Ok(())
}

pub fn sample(args: SampleArgs) -> Result<(), CliError> {
    let items = load_datasets(&args.dataset)?;
    let picked = stratified_sample(&items, Some(args.n), args.seed).map_err(bench_err)?;
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", args.out.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&args.out).map_err(io)?);
    for item in &picked {
        writeln!(f, "{}", serde_json::to_string(item).expect("json")).map_err(io)?;
    }
    f.flush().map_err(io)?;
    println!("{} items -> {}", picked.len(), args.out.display());
    Ok(())
}

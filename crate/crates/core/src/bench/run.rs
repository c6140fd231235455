//! Multi-seed evaluation runs and metric aggregation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{run_episode, EpisodeConfig, TerminatedBy, Trajectory};
use crate::llm::{count_tokens_approx, ChatBackend, LlmError};
use crate::observation::{serialize_markdown, Modality};

use super::dataset::{stratified_sample, DatasetItem};
use super::metrics::{accuracy_sd, bleu, exact_match, rouge_l_multi, BLEU_VARIANT};
use super::qtype::QuestionClassifier;
use super::BenchError;

/// Upper bounds (inclusive, in approximate tokens of the markdown table) of
/// all but the last size bin.
pub const DEFAULT_SIZE_BINS: [usize; 5] = [263, 375, 510, 816, 1695];

pub fn table_tokens(item: &DatasetItem) -> usize {
    count_tokens_approx(&serialize_markdown(&item.table))
}

pub fn size_bin_label(tokens: usize, bounds: &[usize]) -> String {
    let mut lower = 0;
    for &upper in bounds {
        if tokens <= upper {
            return format!("{lower}-{upper}");
        }
        lower = upper + 1;
    }
    format!("{lower}+")
}

/// Creates a fresh backend session for one episode.
pub trait BackendFactory: Send + Sync {
    fn session(&self, item: &DatasetItem, seed: u64) -> Result<Box<dyn ChatBackend>, LlmError>;
}

impl<F> BackendFactory for F
where
    F: Fn(&DatasetItem, u64) -> Result<Box<dyn ChatBackend>, LlmError> + Send + Sync,
{
    fn session(&self, item: &DatasetItem, seed: u64) -> Result<Box<dyn ChatBackend>, LlmError> {
        self(item, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    /// Items drawn per dataset; `None` evaluates everything.
    pub n_per_dataset: Option<usize>,
    pub parallel: usize,
    pub episode: EpisodeConfig,
    pub size_bins: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seeds: vec![42],
            n_per_dataset: None,
            parallel: 4,
            episode: EpisodeConfig::default(),
            size_bins: DEFAULT_SIZE_BINS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub item_id: String,
    pub dataset: String,
    pub seed: u64,
    pub qtype: String,
    pub size_bin: String,
    pub question: String,
    pub answers: Vec<String>,
    pub predicted: Option<String>,
    pub correct: bool,
    pub bleu: f64,
    pub rouge_l: f64,
    pub turns: usize,
    pub llm_calls: usize,
    pub latency_s: f64,
    pub output_tokens: u64,
    pub modality_trace: Vec<Modality>,
    pub replans: usize,
    pub terminated_by: Option<TerminatedBy>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.terminated_by == Some(TerminatedBy::FinalAnswer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub accuracy_sd: f64,
    pub completed: usize,
    pub incomplete: usize,
    /// Over completed episodes only.
    pub mean_turns: f64,
    pub mean_latency_s: f64,
    pub tps: f64,
    pub bleu: Option<f64>,
    pub rouge_l: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn summarize(records: &[RunRecord]) -> MetricSummary {
    let n = records.len();
    let n_correct = records.iter().filter(|r| r.correct).count();
    let accuracy = if n == 0 { 0.0 } else { n_correct as f64 / n as f64 };
    let completed: Vec<&RunRecord> = records.iter().filter(|r| r.completed()).collect();
    let tokens: u64 = records.iter().map(|r| r.output_tokens).sum();
    let latency: f64 = records.iter().map(|r| r.latency_s).sum();
    MetricSummary {
        n,
        n_correct,
        accuracy,
        accuracy_sd: accuracy_sd(accuracy, n),
        completed: completed.len(),
        incomplete: n - completed.len(),
        mean_turns: mean(completed.iter().map(|r| r.turns as f64)),
        mean_latency_s: mean(records.iter().map(|r| r.latency_s)),
        tps: if latency > 0.0 { tokens as f64 / latency } else { 0.0 },
        bleu: (n > 0).then(|| mean(records.iter().map(|r| r.bleu))),
        rouge_l: (n > 0).then(|| mean(records.iter().map(|r| r.rouge_l))),
    }
}

/// Field-wise mean of per-seed summaries.
pub fn average_summaries(summaries: &[MetricSummary]) -> MetricSummary {
    let k = summaries.len().max(1);
    let m = |f: fn(&MetricSummary) -> f64| mean(summaries.iter().map(f));
    let mo = |f: fn(&MetricSummary) -> Option<f64>| {
        let vals: Vec<f64> = summaries.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| mean(vals.into_iter()))
    };
    MetricSummary {
        n: summaries.iter().map(|s| s.n).sum::<usize>() / k,
        n_correct: summaries.iter().map(|s| s.n_correct).sum::<usize>() / k,
        accuracy: m(|s| s.accuracy),
        accuracy_sd: m(|s| s.accuracy_sd),
        completed: summaries.iter().map(|s| s.completed).sum::<usize>() / k,
        incomplete: summaries.iter().map(|s| s.incomplete).sum::<usize>() / k,
        mean_turns: m(|s| s.mean_turns),
        mean_latency_s: m(|s| s.mean_latency_s),
        tps: m(|s| s.tps),
        bleu: mo(|s| s.bleu),
        rouge_l: mo(|s| s.rouge_l),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub overall: MetricSummary,
    pub by_dataset: BTreeMap<String, MetricSummary>,
    pub by_qtype: BTreeMap<String, MetricSummary>,
    pub by_size_bin: BTreeMap<String, MetricSummary>,
}

fn group_by(records: &[RunRecord], key: fn(&RunRecord) -> &str) -> BTreeMap<String, MetricSummary> {
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r).to_string()).or_default().push(r.clone());
    }
    groups.into_iter().map(|(k, v)| (k, summarize(&v))).collect()
}

pub fn breakdown(records: &[RunRecord]) -> Breakdown {
    Breakdown {
        overall: summarize(records),
        by_dataset: group_by(records, |r| &r.dataset),
        by_qtype: group_by(records, |r| &r.qtype),
        by_size_bin: group_by(records, |r| &r.size_bin),
    }
}

fn average_maps(maps: Vec<&BTreeMap<String, MetricSummary>>) -> BTreeMap<String, MetricSummary> {
    let mut keys: BTreeMap<String, Vec<MetricSummary>> = BTreeMap::new();
    for m in maps {
        for (k, v) in m {
            keys.entry(k.clone()).or_default().push(v.clone());
        }
    }
    keys.into_iter().map(|(k, v)| (k, average_summaries(&v))).collect()
}

pub fn average_breakdowns(per_seed: &[Breakdown]) -> Breakdown {
    Breakdown {
        overall: average_summaries(&per_seed.iter().map(|b| b.overall.clone()).collect::<Vec<_>>()),
        by_dataset: average_maps(per_seed.iter().map(|b| &b.by_dataset).collect()),
        by_qtype: average_maps(per_seed.iter().map(|b| &b.by_qtype).collect()),
        by_size_bin: average_maps(per_seed.iter().map(|b| &b.by_size_bin).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    #[serde(flatten)]
    pub breakdown: Breakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub seeds: Vec<u64>,
    pub n_per_dataset: Option<usize>,
    pub datasets: Vec<String>,
    pub bleu_variant: String,
    pub episode: EpisodeConfig,
    pub size_bins: Vec<usize>,
    /// Backend settings echoed by the caller (never credentials).
    pub backend: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub header: ReportHeader,
    pub per_seed: Vec<SeedReport>,
    pub averaged: Breakdown,
}

pub struct EvalOutput {
    pub report: EvalReport,
    pub records: Vec<RunRecord>,
    pub trajectories: Vec<Trajectory>,
}

fn score_item(
    item: &DatasetItem,
    factory: &dyn BackendFactory,
    cfg: &EvalConfig,
    classifier: &QuestionClassifier,
    seed: u64,
) -> (RunRecord, Option<Trajectory>) {
    let qtype = item.qtype.clone().unwrap_or_else(|| classifier.classify(&item.question));
    let mut record = RunRecord {
        item_id: item.uid(),
        dataset: item.dataset.clone(),
        seed,
        qtype,
        size_bin: size_bin_label(table_tokens(item), &cfg.size_bins),
        question: item.question.clone(),
        answers: item.answers.clone(),
        predicted: None,
        correct: false,
        bleu: 0.0,
        rouge_l: 0.0,
        turns: 0,
        llm_calls: 0,
        latency_s: 0.0,
        output_tokens: 0,
        modality_trace: Vec::new(),
        replans: 0,
        terminated_by: None,
        error: None,
    };
    let backend = match factory.session(item, seed) {
        Ok(b) => b,
        Err(e) => {
            record.error = Some(e.to_string());
            return (record, None);
        }
    };
    let episode = EpisodeConfig { seed, ..cfg.episode.clone() };
    let result = run_episode(&item.question, &item.table, &*backend, &episode);
    if let Some(pred) = &result.answer {
        record.correct = exact_match(pred, &item.answers);
        record.bleu = bleu(pred, &item.answers);
        record.rouge_l = rouge_l_multi(pred, &item.answers);
    }
    record.predicted = result.answer.clone();
    record.turns = result.turns;
    record.llm_calls = result.llm_calls;
    record.latency_s = result.total_latency_s;
    record.output_tokens = result.total_output_tokens;
    record.modality_trace = result.modality_trace.clone();
    record.replans = result.replans;
    record.terminated_by = Some(result.terminated_by);
    record.error = result.error.clone();
    let trajectory = Trajectory {
        id: Some(item.uid()),
        question: item.question.clone(),
        table: item.table.clone(),
        config: episode,
        model: None,
        result,
    };
    (record, Some(trajectory))
}

/// Runs every seed: sample, run episodes with at most `cfg.parallel` in
/// flight, then aggregate. Item failures score as incorrect.
pub fn run_eval(
    items: &[DatasetItem],
    factory: &dyn BackendFactory,
    cfg: &EvalConfig,
    classifier: &QuestionClassifier,
    backend_echo: serde_json::Value,
) -> Result<EvalOutput, BenchError> {
    if cfg.seeds.is_empty() {
        return Err(BenchError::Config("at least one seed is required".into()));
    }
    cfg.episode.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel.max(1))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let mut records = Vec::new();
    let mut trajectories = Vec::new();
    let mut per_seed = Vec::new();
    for &seed in &cfg.seeds {
        let sample = stratified_sample(items, cfg.n_per_dataset, seed)?;
        let results: Vec<(RunRecord, Option<Trajectory>)> =
            pool.install(|| sample.par_iter().map(|item| score_item(item, factory, cfg, classifier, seed)).collect());
        let seed_records: Vec<RunRecord> = results.iter().map(|(r, _)| r.clone()).collect();
        log::info!(
            "seed {seed}: {} items, accuracy {:.4}",
            seed_records.len(),
            summarize(&seed_records).accuracy
        );
        per_seed.push(SeedReport { seed, breakdown: breakdown(&seed_records) });
        trajectories.extend(results.into_iter().filter_map(|(_, t)| t));
        records.extend(seed_records);
    }
    let mut datasets: Vec<String> = items.iter().map(|i| i.dataset.clone()).collect();
    datasets.sort();
    datasets.dedup();
    let averaged = average_breakdowns(&per_seed.iter().map(|s| s.breakdown.clone()).collect::<Vec<_>>());
    let report = EvalReport {
        header: ReportHeader {
            seeds: cfg.seeds.clone(),
            n_per_dataset: cfg.n_per_dataset,
            datasets,
            bleu_variant: BLEU_VARIANT.to_string(),
            episode: cfg.episode.clone(),
            size_bins: cfg.size_bins.clone(),
            backend: backend_echo,
        },
        per_seed,
        averaged,
    };
    Ok(EvalOutput { report, records, trajectories })
}

//! Layered settings: built-in defaults, then the TOML config file, then
//! `TABWORLD_BASE_URL`, then command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use tabworld::agent::EpisodeConfig;
use tabworld::bench::DEFAULT_SIZE_BINS;
use tabworld::llm::{BackendConfig, BackendKind};
use tabworld::observation::Modality;

use crate::CliError;

pub const BASE_URL_ENV: &str = "TABWORLD_BASE_URL";

/// Flat config file. Keys mirror the backend, episode and render settings.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<String>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
    pub api_key_env: Option<String>,
    pub request_timeout_s: Option<f64>,
    pub transport_retries: Option<u32>,
    pub retry_base_delay_s: Option<f64>,

    pub max_steps: Option<usize>,
    pub parse_retries: Option<usize>,
    pub attempts: Option<usize>,
    pub initial_modality: Option<String>,
    pub preview_rows: Option<usize>,
    pub output_truncate_chars: Option<usize>,

    pub max_rows: Option<usize>,
    pub max_cols: Option<usize>,
    pub font_size_pt: Option<u32>,
    pub row_scale: Option<f64>,
    pub dpi: Option<u32>,
    pub jpeg_quality: Option<u8>,

    pub seeds: Option<Vec<u64>>,
    pub n: Option<usize>,
    pub parallel: Option<usize>,
    pub size_bins: Option<Vec<usize>>,
    pub output_dir: Option<PathBuf>,
}

const SECRET_KEYS: &[&str] = &["api_key", "apikey", "key", "token", "secret", "password"];

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        if let Ok(t) = text.parse::<toml::Table>() {
            if let Some(k) = t.keys().find(|k| SECRET_KEYS.contains(&k.to_ascii_lowercase().as_str())) {
                return Err(CliError::Usage(format!(
                    "config key `{k}` is not accepted: credentials are read only from the environment variable named by api_key_env"
                )));
            }
        }
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct BackendArgs {
    /// Backend wire format: openai_compatible or ollama
    #[arg(long)]
    pub backend: Option<String>,
    /// Server base URL (also read from TABWORLD_BASE_URL)
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Generation seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Name of the environment variable that holds the API key
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub request_timeout_s: Option<f64>,
    #[arg(long)]
    pub transport_retries: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EpisodeArgs {
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub parse_retries: Option<usize>,
    #[arg(long)]
    pub attempts: Option<usize>,
    /// text, text:json, text:latex, image or multimodal
    #[arg(long)]
    pub modality: Option<String>,
    #[arg(long)]
    pub preview_rows: Option<usize>,
    #[arg(long)]
    pub output_truncate_chars: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub max_rows: Option<usize>,
    #[arg(long)]
    pub max_cols: Option<usize>,
    #[arg(long)]
    pub font_size_pt: Option<u32>,
    #[arg(long)]
    pub row_scale: Option<f64>,
    #[arg(long)]
    pub dpi: Option<u32>,
    #[arg(long)]
    pub jpeg_quality: Option<u8>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

pub fn backend_config(file: &FileConfig, args: &BackendArgs) -> Result<BackendConfig, CliError> {
    let mut cfg = BackendConfig::default();
    let kind = |s: &str| s.parse::<BackendKind>().map_err(|e| CliError::Usage(e.to_string()));
    if let Some(k) = &file.backend {
        cfg.kind = kind(k)?;
    }
    set(&mut cfg.base_url, file.base_url.clone());
    set(&mut cfg.model, file.model.clone());
    set(&mut cfg.temperature, file.temperature);
    set(&mut cfg.max_tokens, file.max_tokens);
    if file.seed.is_some() {
        cfg.seed = file.seed;
    }
    set(&mut cfg.api_key_env, file.api_key_env.clone());
    set(&mut cfg.request_timeout_s, file.request_timeout_s);
    set(&mut cfg.transport_retries, file.transport_retries);
    set(&mut cfg.retry_base_delay_s, file.retry_base_delay_s);

    if let Ok(url) = std::env::var(BASE_URL_ENV) {
        if !url.is_empty() {
            cfg.base_url = url;
        }
    }

    if let Some(k) = &args.backend {
        cfg.kind = kind(k)?;
    }
    set(&mut cfg.base_url, args.base_url.clone());
    set(&mut cfg.model, args.model.clone());
    set(&mut cfg.temperature, args.temperature);
    set(&mut cfg.max_tokens, args.max_tokens);
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    set(&mut cfg.api_key_env, args.api_key_env.clone());
    set(&mut cfg.request_timeout_s, args.request_timeout_s);
    set(&mut cfg.transport_retries, args.transport_retries);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn modality(s: &str) -> Result<Modality, CliError> {
    s.parse().map_err(|e: tabworld::observation::ObservationError| CliError::Usage(e.to_string()))
}

pub fn render_overrides(cfg: &mut EpisodeConfig, file: &FileConfig, args: &RenderArgs) {
    let r = &mut cfg.render;
    set(&mut r.max_rows, file.max_rows);
    set(&mut r.max_cols, file.max_cols);
    set(&mut r.font_size_pt, file.font_size_pt);
    set(&mut r.row_scale, file.row_scale);
    set(&mut r.dpi, file.dpi);
    set(&mut r.jpeg_quality, file.jpeg_quality);
    set(&mut r.max_rows, args.max_rows);
    set(&mut r.max_cols, args.max_cols);
    set(&mut r.font_size_pt, args.font_size_pt);
    set(&mut r.row_scale, args.row_scale);
    set(&mut r.dpi, args.dpi);
    set(&mut r.jpeg_quality, args.jpeg_quality);
}

pub fn episode_config(
    file: &FileConfig,
    args: &EpisodeArgs,
    render: &RenderArgs,
    seed: Option<u64>,
) -> Result<EpisodeConfig, CliError> {
    let mut cfg = EpisodeConfig::default();
    set(&mut cfg.max_steps, file.max_steps);
    set(&mut cfg.parse_retries, file.parse_retries);
    set(&mut cfg.attempts, file.attempts);
    if let Some(m) = &file.initial_modality {
        cfg.initial_modality = modality(m)?;
    }
    set(&mut cfg.preview_rows, file.preview_rows);
    set(&mut cfg.output_truncate_chars, file.output_truncate_chars);
    set(&mut cfg.seed, file.seed);

    set(&mut cfg.max_steps, args.max_steps);
    set(&mut cfg.parse_retries, args.parse_retries);
    set(&mut cfg.attempts, args.attempts);
    if let Some(m) = &args.modality {
        cfg.initial_modality = modality(m)?;
    }
    set(&mut cfg.preview_rows, args.preview_rows);
    set(&mut cfg.output_truncate_chars, args.output_truncate_chars);
    set(&mut cfg.seed, seed);
    render_overrides(&mut cfg, file, render);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn size_bins(file: &FileConfig) -> Vec<usize> {
    file.size_bins.clone().unwrap_or_else(|| DEFAULT_SIZE_BINS.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let file: FileConfig = toml::from_str("model = \"from-file\"\nmax_steps = 5\ndpi = 100\ntemperature = 0.2").unwrap();
        let args = BackendArgs { model: Some("from-flag".into()), ..Default::default() };
        let b = backend_config(&file, &args).unwrap();
        assert_eq!(b.model, "from-flag");
        assert_eq!(b.temperature, 0.2);
        assert_eq!(b.max_tokens, 8192);

        let e = episode_config(&file, &EpisodeArgs { max_steps: Some(7), ..Default::default() }, &RenderArgs::default(), None)
            .unwrap();
        assert_eq!(e.max_steps, 7);
        assert_eq!(e.render.dpi, 100);
        assert_eq!(e.parse_retries, 2);
    }

    #[test]
    fn secrets_in_file_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "api_key = \"sk-123\"\n").unwrap();
        let err = FileConfig::load(&p).unwrap_err();
        assert!(err.to_string().contains("environment variable"));
        std::fs::write(&p, "bogus = 1\n").unwrap();
        assert!(FileConfig::load(&p).is_err());
    }

    #[test]
    fn bad_modality_is_usage_error() {
        let args = EpisodeArgs { modality: Some("smell".into()), ..Default::default() };
        assert!(matches!(
            episode_config(&FileConfig::default(), &args, &RenderArgs::default(), None),
            Err(CliError::Usage(_))
        ));
    }
}

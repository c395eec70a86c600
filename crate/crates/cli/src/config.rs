//! `--config` file: one optional table per subcommand, keys spelled like
//! the flags. Flags win over the file, the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub verbose: Option<u8>,
    pub json_logs: Option<bool>,
    pub api_key_env: Option<String>,
    /// Reserved; every stage is deterministic.
    pub seed: Option<u64>,
    pub curate: CurateConfig,
    pub generate: GenerateConfig,
    pub evaluate: EvaluateConfig,
    pub report: ReportConfig,
    pub classify: ClassifyConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CurateConfig {
    pub input: Option<PathBuf>,
    pub column: Option<String>,
    pub output: Option<PathBuf>,
    pub label_endpoint: Option<String>,
    pub label_model: Option<String>,
    pub label_instruction: Option<String>,
    pub template: Option<PathBuf>,
    pub concurrency: Option<usize>,
    pub normalize_dedup: Option<bool>,
    pub system_prompt: Option<String>,
    pub instruction: Option<String>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GenerateConfig {
    pub problems: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub num_samples: Option<u32>,
    pub max_new_tokens: Option<u32>,
    pub out: Option<PathBuf>,
    pub resume: Option<bool>,
    pub retry_empty: Option<bool>,
    pub concurrency: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub system_prompt: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateConfig {
    pub problems: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub compile_cmd: Option<String>,
    pub run_cmd: Option<String>,
    pub jobs: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub grace_secs: Option<u64>,
    pub out: Option<PathBuf>,
    pub keep_artifacts: Option<bool>,
    pub work_dir: Option<PathBuf>,
    pub fail_pattern: Option<String>,
    pub pass_on_match: Option<bool>,
    pub no_durations: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReportConfig {
    pub results: Option<Vec<PathBuf>>,
    pub label: Option<Vec<String>>,
    pub k: Option<Vec<u64>>,
    pub by_type: Option<PathBuf>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ClassifyConfig {
    pub samples: Option<PathBuf>,
    pub results: Option<PathBuf>,
    pub problems: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub rules: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag, then config value, then default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// A boolean switch: set by the flag, or by `true` in the config.
pub fn switch(flag: bool, config: Option<bool>) -> bool {
    flag || config.unwrap_or(false)
}

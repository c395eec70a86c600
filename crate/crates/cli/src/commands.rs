use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use rtleval::client::{
    generate_samples, ClientError, GenerationConfig, HttpChat, LabelConfig, ModelLabeler, RawSample, RetryPolicy,
    DEFAULT_LABEL_INSTRUCTION,
};
use rtleval::curation::{
    annotate, assemble_prompt, clean, export_jsonl, ingest_csv, CleanOptions, CurationError, DatasetRecord,
    DEFAULT_INSTRUCTION, DEFAULT_SYSTEM_PROMPT,
};
use rtleval::harness::{
    run_suite_with, CommandTemplate, JudgeConfig, Polarity, Problem, ResultRow, SampleResult, SimConfig, SimKind,
    DEFAULT_FAILURE_PATTERN,
};
use rtleval::metrics::{render_report, EvalReport, ReportFormat, RunReport};
use rtleval::scan::extract_completion;
use rtleval::taxonomy::{classify as classify_sample, taxonomy_summary, ClassifiedRow, TaxonomyRules};
use rtleval::{read_jsonl, write_jsonl, JsonlAppender, TemperatureKey};

use crate::config::{pick, switch, ClassifyConfig, CurateConfig, EvaluateConfig, GenerateConfig, ReportConfig};
use crate::{usage, ClassifyArgs, CurateArgs, EvaluateArgs, GenerateArgs, ReportArgs};

pub const DEFAULT_PROMPT_TEMPLATE: &str = "## System Prompt: {system_prompt}\n{instruction}\n{description}";

fn required<T>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T> {
    flag.or(config).ok_or_else(|| usage(format!("missing required option {name}")))
}

fn positive(value: usize, name: &str) -> Result<usize> {
    if value == 0 {
        return Err(usage(format!("{name} must be positive")));
    }
    Ok(value)
}

fn http_backend(endpoint: &str, timeout_secs: u64, api_key_env: &str) -> Result<HttpChat> {
    HttpChat::from_env(endpoint, Duration::from_secs(timeout_secs), api_key_env).map_err(|e| match e {
        ClientError::Config(m) => usage(m),
        other => other.into(),
    })
}

fn load<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<Vec<T>> {
    read_jsonl(path).with_context(|| format!("reading {what} from {}", path.display()))
}

pub fn curate(a: CurateArgs, c: &CurateConfig, api_key_env: &str) -> Result<()> {
    let input = required(a.input, c.input.clone(), "--input")?;
    let output = required(a.output, c.output.clone(), "--output")?;
    let endpoint = required(a.label_endpoint, c.label_endpoint.clone(), "--label-endpoint")?;
    let model = required(a.label_model, c.label_model.clone(), "--label-model")?;
    let column = pick(a.column, c.column.clone(), "code".to_string());
    let concurrency = positive(pick(a.concurrency, c.concurrency, 8), "--concurrency")?;
    let template = match a.template.or(c.template.clone()) {
        Some(path) => std::fs::read_to_string(&path).with_context(|| format!("reading template {}", path.display()))?,
        None => DEFAULT_PROMPT_TEMPLATE.to_string(),
    };
    // Reject bad placeholders before spending any labeling requests.
    let mut probe = DatasetRecord {
        system_prompt: String::new(),
        instruction: String::new(),
        module: String::new(),
        description: String::new(),
        output: String::new(),
        prompt: String::new(),
        module_name: String::new(),
    };
    if let Err(CurationError::UnknownPlaceholder(p)) = assemble_prompt(&mut probe, &template) {
        return Err(usage(format!("template uses unknown placeholder {{{p}}}")));
    }
    let options = CleanOptions {
        normalize_dedup: switch(a.normalize_dedup, c.normalize_dedup),
        system_prompt: pick(a.system_prompt, c.system_prompt.clone(), DEFAULT_SYSTEM_PROMPT.to_string()),
        instruction: pick(a.instruction, c.instruction.clone(), DEFAULT_INSTRUCTION.to_string()),
    };
    let backend = http_backend(&endpoint, pick(a.timeout_secs, c.timeout_secs, 60), api_key_env)?;
    let labeler = ModelLabeler {
        backend,
        config: LabelConfig {
            model_name: model,
            instruction: pick(a.label_instruction, c.label_instruction.clone(), DEFAULT_LABEL_INSTRUCTION.to_string()),
            retry: RetryPolicy { retries: pick(a.retries, c.retries, 3), ..RetryPolicy::default() },
            ..LabelConfig::default()
        },
    };

    let ingested = ingest_csv(&input, &column).with_context(|| format!("reading {}", input.display()))?;
    log::info!("read {} rows ({} malformed rows skipped)", ingested.records.len(), ingested.skipped);
    let cleaned = clean(&ingested.records, &options);
    log::info!(
        "{} modules kept; {} rows without modules, {} duplicates, {} unnamed modules dropped",
        cleaned.records.len(),
        cleaned.dropped_rows,
        cleaned.duplicates,
        cleaned.unnamed
    );
    let annotated = annotate(cleaned.records, &labeler, concurrency)?;
    let mut records: Vec<DatasetRecord> =
        annotated.records.into_iter().filter(|r| !r.description.trim().is_empty()).collect();
    if annotated.failures > 0 {
        log::warn!("{} modules could not be labeled and were left out", annotated.failures);
    }
    for r in &mut records {
        assemble_prompt(r, &template)?;
    }
    let written = export_jsonl(&records, &output)?;
    log::info!("wrote {written} records to {}", output.display());
    Ok(())
}

pub fn generate(a: GenerateArgs, c: &GenerateConfig, api_key_env: &str) -> Result<()> {
    let problems_path = required(a.problems, c.problems.clone(), "--problems")?;
    let endpoint = required(a.endpoint, c.endpoint.clone(), "--endpoint")?;
    let model = required(a.model, c.model.clone(), "--model")?;
    let out = required(a.out, c.out.clone(), "--out")?;
    let resume = switch(a.resume, c.resume);
    let retry_empty = switch(a.retry_empty, c.retry_empty);
    let timeout_secs = pick(a.timeout_secs, c.timeout_secs, 120);
    let config = GenerationConfig {
        temperature: pick(a.temperature, c.temperature, 0.2),
        num_samples_per_problem: pick(a.num_samples, c.num_samples, 20),
        max_new_tokens: pick(a.max_new_tokens, c.max_new_tokens, 500),
        model_name: model,
        endpoint_url: endpoint.clone(),
        timeout: Duration::from_secs(timeout_secs),
        retry: RetryPolicy { retries: pick(a.retries, c.retries, 3), ..RetryPolicy::default() },
        concurrency: pick(a.concurrency, c.concurrency, 4),
        system_prompt: a.system_prompt.or(c.system_prompt.clone()),
    };
    if let Err(ClientError::Config(m)) = config.validate() {
        return Err(usage(m));
    }
    let backend = http_backend(&endpoint, timeout_secs, api_key_env)?;
    let problems: Vec<Problem> = load(&problems_path, "problems")?;

    let mut existing: Vec<RawSample> = if resume && out.exists() { load(&out, "samples")? } else { Vec::new() };
    if retry_empty {
        let t = TemperatureKey::new(config.temperature);
        let before = existing.len();
        existing.retain(|s| TemperatureKey::new(s.temperature) != t || !s.completion.is_empty());
        log::info!("{} empty samples will be requested again", before - existing.len());
    }
    let mut journal = JsonlAppender::open(&out, !resume).with_context(|| format!("opening {}", out.display()))?;
    let summary = generate_samples(&problems, &config, &backend, existing, |s| journal.append(s))?;
    drop(journal);
    write_jsonl(&out, &summary.samples).with_context(|| format!("writing {}", out.display()))?;
    log::info!(
        "{} new samples requested, {} already present; {} total in {}",
        summary.requested,
        summary.skipped_existing,
        summary.samples.len(),
        out.display()
    );
    if !summary.failures.is_empty() {
        log::warn!("{} requests failed after retries; stored with empty completions", summary.failures.len());
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs, c: &EvaluateConfig) -> Result<()> {
    let problems_path = required(a.problems, c.problems.clone(), "--problems")?;
    let samples_path = required(a.samples, c.samples.clone(), "--samples")?;
    let out = required(a.out, c.out.clone(), "--out")?;
    let defaults = SimConfig::default();
    let template = |flag: Option<String>, cfg: &Option<String>, default: &CommandTemplate| -> Result<CommandTemplate> {
        match flag.or(cfg.clone()) {
            Some(t) => CommandTemplate::parse(&t).map_err(|e| usage(e.to_string())),
            None => Ok(default.clone()),
        }
    };
    let polarity = if switch(a.pass_on_match, c.pass_on_match) { Polarity::PassOnMatch } else { Polarity::FailOnMatch };
    let pattern = pick(a.fail_pattern, c.fail_pattern.clone(), DEFAULT_FAILURE_PATTERN.to_string());
    let sim = SimConfig {
        compile_cmd: template(a.compile_cmd, &c.compile_cmd, &defaults.compile_cmd)?,
        run_cmd: template(a.run_cmd, &c.run_cmd, &defaults.run_cmd)?,
        timeout: Duration::from_secs(pick(a.timeout_secs, c.timeout_secs, 30)),
        grace: Duration::from_secs(pick(a.grace_secs, c.grace_secs, 5)),
        judge: JudgeConfig::new(&pattern, polarity).map_err(|e| usage(e.to_string()))?,
        keep_artifacts: switch(a.keep_artifacts, c.keep_artifacts),
        work_root: a.work_dir.or(c.work_dir.clone()),
        record_durations: !switch(a.no_durations, c.no_durations),
        ..defaults
    };
    let default_jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let jobs = positive(pick(a.jobs, c.jobs, default_jobs), "--jobs")?;

    let problems: Vec<Problem> = load(&problems_path, "problems")?;
    let samples: Vec<RawSample> = load(&samples_path, "samples")?;
    log::info!("evaluating {} samples for {} problems with {jobs} workers", samples.len(), problems.len());

    let mut journal = JsonlAppender::open(&out, true).with_context(|| format!("opening {}", out.display()))?;
    let results = run_suite_with(&problems, &samples, &sim, jobs, |r| journal.append(&ResultRow::from(r)))?;
    drop(journal);
    let rows: Vec<ResultRow> = results.iter().map(ResultRow::from).collect();
    write_jsonl(&out, &rows).with_context(|| format!("writing {}", out.display()))?;

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *counts.entry(sim_name(r.sim)).or_default() += 1;
    }
    let tally: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    log::info!("wrote {} results to {} ({})", rows.len(), out.display(), tally.join(", "));
    Ok(())
}

fn sim_name(kind: SimKind) -> &'static str {
    match kind {
        SimKind::Pass => "pass",
        SimKind::CompileError => "compile_error",
        SimKind::RuntimeMismatch => "runtime_mismatch",
        SimKind::Timeout => "timeout",
        SimKind::NotAttempted => "not_attempted",
    }
}

fn load_results(path: &Path) -> Result<Vec<SampleResult>> {
    let rows: Vec<ResultRow> = load(path, "results")?;
    Ok(rows.into_iter().map(SampleResult::from).collect())
}

fn read_type_map(path: &Path) -> Result<HashMap<String, String>> {
    #[derive(serde::Deserialize)]
    struct Row {
        task_id: String,
        circuit_type: String,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut map = HashMap::new();
    for row in rdr.deserialize() {
        let row: Row = row.with_context(|| format!("parsing {}", path.display()))?;
        map.insert(row.task_id, row.circuit_type);
    }
    Ok(map)
}

/// Pairs labels with the last `labels.len()` result files; the rest are
/// named after their file.
fn run_labels(results: &[PathBuf], labels: &[String]) -> Result<Vec<String>> {
    if labels.len() > results.len() {
        return Err(usage(format!("{} labels given for {} result files", labels.len(), results.len())));
    }
    let unlabeled = results.len() - labels.len();
    Ok(results
        .iter()
        .enumerate()
        .map(|(i, path)| {
            if i >= unlabeled {
                labels[i - unlabeled].clone()
            } else {
                path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
            }
        })
        .collect())
}

pub fn report(a: ReportArgs, c: &ReportConfig) -> Result<()> {
    let results = if a.results.is_empty() { c.results.clone().unwrap_or_default() } else { a.results };
    if results.is_empty() {
        return Err(usage("missing required option --results"));
    }
    let labels = if a.label.is_empty() { c.label.clone().unwrap_or_default() } else { a.label };
    let ks = if a.k.is_empty() { c.k.clone().unwrap_or_else(|| vec![1, 5, 10]) } else { a.k };
    if ks.contains(&0) {
        return Err(usage("k values must be positive"));
    }
    let format: ReportFormat =
        pick(a.format, c.format.clone(), "markdown".to_string()).parse().map_err(|e: String| usage(e))?;
    let type_map = a.by_type.or(c.by_type.clone()).map(|p| read_type_map(&p)).transpose()?;

    let mut runs = Vec::new();
    for (path, label) in results.iter().zip(run_labels(&results, &labels)?) {
        let rows = load_results(path)?;
        if rows.is_empty() {
            bail!("{} contains no results", path.display());
        }
        runs.push(RunReport::from_results(label, &rows, &ks, type_map.as_ref())?);
    }
    let text = render_report(&EvalReport::new(&ks, runs), format);
    match a.out.or(c.out.clone()) {
        Some(path) => {
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            log::info!("report written to {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn classify(a: ClassifyArgs, c: &ClassifyConfig) -> Result<()> {
    let samples_path = required(a.samples, c.samples.clone(), "--samples")?;
    let results_path = required(a.results, c.results.clone(), "--results")?;
    let problems_path = required(a.problems, c.problems.clone(), "--problems")?;
    let out = required(a.out, c.out.clone(), "--out")?;
    let rules = match a.rules.or(c.rules.clone()) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            TaxonomyRules::from_toml_overrides(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => TaxonomyRules::default(),
    };

    let problems: HashMap<String, Problem> =
        load::<Problem>(&problems_path, "problems")?.into_iter().map(|p| (p.task_id.clone(), p)).collect();
    let samples: HashMap<(String, TemperatureKey, u32), RawSample> = load::<RawSample>(&samples_path, "samples")?
        .into_iter()
        .map(|s| ((s.task_id.clone(), TemperatureKey::new(s.temperature), s.sample_index), s))
        .collect();
    let results = load_results(&results_path)?;

    let mut rows = Vec::with_capacity(results.len());
    for r in &results {
        let key = (r.task_id.clone(), TemperatureKey::new(r.temperature), r.sample_index);
        let sample = samples.get(&key).with_context(|| {
            format!(
                "no sample for {} #{} at t={} in {}",
                r.task_id,
                r.sample_index,
                r.temperature,
                samples_path.display()
            )
        })?;
        let problem = problems
            .get(&r.task_id)
            .with_context(|| format!("unknown task_id `{}` in {}", r.task_id, results_path.display()))?;
        let extraction = extract_completion(&sample.completion);
        if extraction.kind() != r.extraction {
            log::warn!(
                "{} #{}: results say {}, re-extraction gives {}",
                r.task_id,
                r.sample_index,
                r.extraction,
                extraction.kind()
            );
        }
        rows.push(ClassifiedRow {
            task_id: r.task_id.clone(),
            sample_index: r.sample_index,
            temperature: r.temperature,
            error_class: classify_sample(sample, &extraction, &r.sim, problem, &rules),
        });
    }
    write_jsonl(&out, &rows).with_context(|| format!("writing {}", out.display()))?;
    let summary = taxonomy_summary(&rows);
    log::info!("classified {} samples ({} failed) into {}", rows.len(), summary.overall.failed, out.display());
    if let Some(path) = a.summary.or(c.summary.clone()) {
        std::fs::write(&path, summary.to_markdown()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_align_to_the_last_files() {
        let files: Vec<PathBuf> = ["runs/proposed.jsonl", "runs/base.jsonl"].iter().map(PathBuf::from).collect();
        assert_eq!(run_labels(&files, &["baseline".into()]).unwrap(), ["proposed", "baseline"]);
        assert_eq!(run_labels(&files, &[]).unwrap(), ["proposed", "base"]);
        assert_eq!(run_labels(&files, &["a".into(), "b".into()]).unwrap(), ["a", "b"]);
        assert!(run_labels(&files, &["a".into(), "b".into(), "c".into()]).is_err());
    }

    #[test]
    fn missing_values_are_usage_errors() {
        let err = required::<u32>(None, None, "--out").unwrap_err();
        assert!(err.is::<crate::UsageError>());
        assert_eq!(required(None, Some(3), "--x").unwrap(), 3);
        assert_eq!(required(Some(1), Some(3), "--x").unwrap(), 1);
    }
}

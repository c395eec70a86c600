//! Raw code corpus (CSV) to a cleaned, deduplicated, labeled JSONL dataset.

use std::collections::HashSet;
use std::io::{self, Read};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::ClientError;
use crate::scan::{extract_module_name, extract_modules, tokenize};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),
    #[error("unknown template placeholder `{{{0}}}`")]
    UnknownPlaceholder(String),
    #[error("record {index} is invalid: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("labeler configuration: {0}")]
    Labeler(ClientError),
    #[error("concurrency must be positive")]
    ZeroConcurrency,
}

/// One CSV row's code cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub row_index: usize,
    pub text: String,
}

/// One dataset row. Field order is the output column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub system_prompt: String,
    pub instruction: String,
    pub module: String,
    pub description: String,
    pub output: String,
    pub prompt: String,
    pub module_name: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<RawRecord>,
    /// Rows that could not be parsed and were skipped.
    pub skipped: usize,
}

pub fn ingest_csv(path: &Path, column: &str) -> Result<Ingested, CurationError> {
    ingest_csv_reader(std::fs::File::open(path)?, column)
}

pub fn ingest_csv_reader(reader: impl Read, column: &str) -> Result<Ingested, CurationError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| CurationError::MissingColumn(column.to_string()))?;
    let mut out = Ingested::default();
    for (row_index, rec) in rdr.records().enumerate() {
        match rec {
            Ok(rec) => match rec.get(col) {
                Some(text) => out.records.push(RawRecord { row_index, text: text.to_string() }),
                None => {
                    log::warn!("row {row_index}: missing column `{column}`; skipped");
                    out.skipped += 1;
                }
            },
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                log::warn!("row {row_index}: {e}; skipped");
                out.skipped += 1;
            }
        }
    }
    Ok(out)
}

pub const DEFAULT_SYSTEM_PROMPT: &str =
    "I want you to act as an IC designer, and implement the following description in Verilog.";
pub const DEFAULT_INSTRUCTION: &str = "Generate a Verilog module with the following description.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanOptions {
    /// Collapse internal whitespace before comparing modules for duplicates.
    pub normalize_dedup: bool,
    pub system_prompt: String,
    pub instruction: String,
}

impl Default for CleanOptions {
    fn default() -> Self {
        CleanOptions {
            normalize_dedup: false,
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_string(),
            instruction: DEFAULT_INSTRUCTION.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Cleaned {
    pub records: Vec<DatasetRecord>,
    /// Rows with no complete module.
    pub dropped_rows: usize,
    pub duplicates: usize,
    /// Modules whose header carries no name.
    pub unnamed: usize,
}

fn dedup_key(module: &str, normalize: bool) -> String {
    if normalize {
        module.split_whitespace().collect::<Vec<_>>().join(" ")
    } else {
        module.trim().to_string()
    }
}

/// Splits rows into one candidate per module, drops rows without modules
/// and exact duplicates (first occurrence wins), and fills `module_name`.
/// Descriptions and prompts are left empty.
pub fn clean(records: &[RawRecord], options: &CleanOptions) -> Cleaned {
    let mut out = Cleaned::default();
    let mut seen = HashSet::new();
    for rec in records {
        let modules = extract_modules(&rec.text);
        if modules.is_empty() {
            out.dropped_rows += 1;
            continue;
        }
        for m in modules {
            if !seen.insert(dedup_key(&m.full_text, options.normalize_dedup)) {
                out.duplicates += 1;
                continue;
            }
            let Some(name) = m.name else {
                log::warn!("row {}: module without a name at byte {}; skipped", rec.row_index, m.span.start);
                out.unnamed += 1;
                continue;
            };
            out.records.push(DatasetRecord {
                system_prompt: options.system_prompt.clone(),
                instruction: options.instruction.clone(),
                module: m.full_text.clone(),
                description: String::new(),
                output: m.full_text,
                prompt: String::new(),
                module_name: name,
            });
        }
    }
    out
}

/// Source of short natural-language module descriptions.
pub trait Labeler: Sync {
    fn describe(&self, module_text: &str) -> Result<String, ClientError>;
}

impl<F> Labeler for F
where
    F: Fn(&str) -> Result<String, ClientError> + Sync,
{
    fn describe(&self, module_text: &str) -> Result<String, ClientError> {
        self(module_text)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Annotated {
    pub records: Vec<DatasetRecord>,
    /// Records whose description could not be obtained.
    pub failures: usize,
}

/// Fills descriptions with up to `concurrency` labeling calls in flight.
/// Output order equals input order. Per-record failures leave the
/// description empty; only configuration errors abort.
pub fn annotate(
    mut records: Vec<DatasetRecord>,
    labeler: &dyn Labeler,
    concurrency: usize,
) -> Result<Annotated, CurationError> {
    if concurrency == 0 {
        return Err(CurationError::ZeroConcurrency);
    }
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut failures = 0;
    let modules: Vec<&str> = records.iter().map(|r| r.module.as_str()).collect();
    let mut labels: Vec<Option<String>> = vec![None; records.len()];

    thread::scope(|scope| -> Result<(), CurationError> {
        let (tx, rx) = mpsc::channel();
        for _ in 0..concurrency.min(modules.len().max(1)) {
            let tx = tx.clone();
            let (modules, next, stop) = (&modules, &next, &stop);
            scope.spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(text) = modules.get(i) else { break };
                    if tx.send((i, labeler.describe(text))).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        for (i, res) in rx {
            match res {
                Ok(desc) => labels[i] = Some(desc),
                Err(e @ ClientError::Config(_)) => {
                    stop.store(true, Ordering::Relaxed);
                    return Err(CurationError::Labeler(e));
                }
                Err(e) => {
                    log::warn!("labeling record {i} failed: {e}");
                    failures += 1;
                }
            }
        }
        Ok(())
    })?;

    for (rec, label) in records.iter_mut().zip(labels) {
        if let Some(desc) = label {
            rec.description = desc;
        }
    }
    Ok(Annotated { records, failures })
}

/// Substitutes `{system_prompt}`, `{instruction}`, `{description}` and
/// `{module_name}` in `template`, stores the result in `record.prompt` and
/// returns it. `{{` and `}}` produce literal braces.
pub fn assemble_prompt(record: &mut DatasetRecord, template: &str) -> Result<String, CurationError> {
    let mut out = String::with_capacity(template.len() + record.description.len());
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            out.push_str(&tail[..1]);
            rest = &tail[2..];
            continue;
        }
        if let Some(after) = tail.strip_prefix('}') {
            out.push('}');
            rest = after;
            continue;
        }
        let Some(close) = tail.find('}') else {
            out.push_str(tail);
            rest = "";
            break;
        };
        let name = &tail[1..close];
        let value = match name {
            "system_prompt" => &record.system_prompt,
            "instruction" => &record.instruction,
            "description" => &record.description,
            "module_name" => &record.module_name,
            _ => return Err(CurationError::UnknownPlaceholder(name.to_string())),
        };
        out.push_str(value);
        rest = &tail[close + 1..];
    }
    out.push_str(rest);
    record.prompt = out.clone();
    Ok(out)
}

fn check_record(rec: &DatasetRecord) -> Result<(), String> {
    let toks = tokenize(&rec.module);
    let mut sig = toks.iter().filter(|t| !t.is_trivia());
    if !sig.next().is_some_and(|t| t.is_keyword("module") || t.is_keyword("macromodule")) {
        return Err("module does not start with `module`".into());
    }
    if !sig.next_back().is_some_and(|t| t.is_keyword("endmodule")) {
        return Err("module does not end with `endmodule`".into());
    }
    match extract_module_name(&rec.module) {
        Ok(name) if name == rec.module_name => {}
        Ok(name) => return Err(format!("module_name `{}` != declared name `{name}`", rec.module_name)),
        Err(e) => return Err(e.to_string()),
    }
    if rec.description.trim().is_empty() {
        return Err("description is empty".into());
    }
    Ok(())
}

/// Validates every record, then writes one JSON object per line.
pub fn export_jsonl(records: &[DatasetRecord], path: &Path) -> Result<usize, CurationError> {
    for (index, rec) in records.iter().enumerate() {
        check_record(rec).map_err(|reason| CurationError::InvalidRecord { index, reason })?;
    }
    Ok(crate::write_jsonl(path, records)?)
}

pub fn read_dataset(path: &Path) -> io::Result<Vec<DatasetRecord>> {
    crate::read_jsonl(path)
}

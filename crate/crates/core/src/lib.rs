//! Curation of labeled Verilog datasets and end-to-end evaluation of
//! model-generated Verilog: module extraction, simulator-backed checking,
//! pass@k scoring, circuit-type breakdowns and failure classification.

pub mod client;
pub mod curation;
pub mod harness;
pub mod metrics;
pub mod scan;
pub mod taxonomy;

#[cfg(feature = "stub-server")]
pub mod stub;

use std::cmp::Ordering;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// A sampling temperature usable as an ordered map key.
#[derive(Debug, Clone, Copy)]
pub struct TemperatureKey(f64);

impl TemperatureKey {
    pub fn new(t: f64) -> Self {
        // fold -0.0 into 0.0 so both compare equal
        TemperatureKey(if t == 0.0 { 0.0 } else { t })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl PartialEq for TemperatureKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for TemperatureKey {}

impl PartialOrd for TemperatureKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TemperatureKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl std::hash::Hash for TemperatureKey {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

fn invalid_data(path: &Path, line: usize, err: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("{}:{line}: {err}", path.display()))
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| invalid_data(path, i + 1, e))?);
    }
    Ok(out)
}

/// Writes `items` as JSONL through a temporary sibling file, so readers never
/// observe a half-written file.
pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> io::Result<usize> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut w = BufWriter::new(File::create(&tmp)?);
    let mut count = 0;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
        count += 1;
    }
    w.into_inner().map_err(io::IntoInnerError::into_error)?.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(count)
}

/// Append-only JSONL journal, flushed after every record.
pub struct JsonlAppender {
    file: File,
}

impl JsonlAppender {
    pub fn open(path: &Path, truncate: bool) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(!truncate).write(true).truncate(truncate).open(path)?;
        Ok(JsonlAppender { file })
    }

    pub fn append<T: Serialize>(&mut self, item: &T) -> io::Result<()> {
        let mut line = serde_json::to_vec(item)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

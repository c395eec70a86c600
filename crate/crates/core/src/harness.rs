//! Simulator-backed functional checking of extracted modules.
//!
//! Each sample is compiled and run in its own temporary directory through
//! two configurable command templates (iverilog/vvp by default). A child
//! process group that outlives its deadline is killed.

use std::collections::HashMap;
use std::io::{self, Read};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::client::RawSample;
use crate::scan::{extract_completion, ExtractionKind, VerilogModule};
use crate::taxonomy::ErrorClass;
use crate::TemperatureKey;

/// A benchmark task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub task_id: String,
    pub description: String,
    /// Declaration of the target module, prepended to extracted bodies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module_header: Option<String>,
    pub test: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimOutcome {
    Pass,
    CompileError(String),
    RuntimeMismatch(String),
    Timeout,
    NotAttempted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    Pass,
    CompileError,
    RuntimeMismatch,
    Timeout,
    NotAttempted,
}

impl SimOutcome {
    pub fn kind(&self) -> SimKind {
        match self {
            SimOutcome::Pass => SimKind::Pass,
            SimOutcome::CompileError(_) => SimKind::CompileError,
            SimOutcome::RuntimeMismatch(_) => SimKind::RuntimeMismatch,
            SimOutcome::Timeout => SimKind::Timeout,
            SimOutcome::NotAttempted => SimKind::NotAttempted,
        }
    }

    pub fn message(&self) -> Option<&str> {
        match self {
            SimOutcome::CompileError(m) | SimOutcome::RuntimeMismatch(m) => Some(m),
            _ => None,
        }
    }

    pub fn from_parts(kind: SimKind, message: Option<String>) -> Self {
        let message = message.unwrap_or_default();
        match kind {
            SimKind::Pass => SimOutcome::Pass,
            SimKind::CompileError => SimOutcome::CompileError(message),
            SimKind::RuntimeMismatch => SimOutcome::RuntimeMismatch(message),
            SimKind::Timeout => SimOutcome::Timeout,
            SimKind::NotAttempted => SimOutcome::NotAttempted,
        }
    }
}

/// Evaluation of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub task_id: String,
    pub sample_index: u32,
    pub temperature: f64,
    pub extraction: ExtractionKind,
    pub sim: SimOutcome,
    pub error_class: Option<ErrorClass>,
    /// Wall-clock seconds.
    pub duration: f64,
}

impl SampleResult {
    pub fn sort_key(&self) -> (&str, TemperatureKey, u32) {
        (&self.task_id, TemperatureKey::new(self.temperature), self.sample_index)
    }
}

/// Serialized form of [`SampleResult`]: one line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task_id: String,
    pub sample_index: u32,
    pub temperature: f64,
    pub extraction_outcome: ExtractionKind,
    pub sim: SimKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub duration_s: f64,
}

impl From<&SampleResult> for ResultRow {
    fn from(r: &SampleResult) -> Self {
        ResultRow {
            task_id: r.task_id.clone(),
            sample_index: r.sample_index,
            temperature: r.temperature,
            extraction_outcome: r.extraction,
            sim: r.sim.kind(),
            message: r.sim.message().map(str::to_string),
            duration_s: r.duration,
        }
    }
}

impl From<ResultRow> for SampleResult {
    fn from(row: ResultRow) -> Self {
        SampleResult {
            task_id: row.task_id,
            sample_index: row.sample_index,
            temperature: row.temperature,
            extraction: row.extraction_outcome,
            sim: SimOutcome::from_parts(row.sim, row.message),
            error_class: None,
            duration: row.duration_s,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("simulator executable `{0}` not found")]
    SimulatorNotFound(String),
    #[error("invalid command template `{0}`")]
    BadTemplate(String),
    #[error("sample references unknown task_id `{0}`")]
    UnknownTaskId(String),
    #[error("invalid judge pattern: {0}")]
    BadPattern(#[from] regex::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Any stdout line matching the pattern fails the sample.
    FailOnMatch,
    /// Some stdout line must match the pattern for the sample to pass.
    PassOnMatch,
}

/// How testbench output is turned into pass / mismatch.
#[derive(Debug, Clone)]
pub struct JudgeConfig {
    pub pattern: Regex,
    pub polarity: Polarity,
}

/// Matches a reported mismatch count greater than zero.
pub const DEFAULT_FAILURE_PATTERN: &str = r"Mismatches:\s*0*[1-9][0-9]*";

impl JudgeConfig {
    pub fn new(pattern: &str, polarity: Polarity) -> Result<Self, HarnessError> {
        Ok(JudgeConfig { pattern: Regex::new(pattern)?, polarity })
    }
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig::new(DEFAULT_FAILURE_PATTERN, Polarity::FailOnMatch).expect("valid default")
    }
}

/// Decides pass vs mismatch for a simulation that compiled and ran to
/// completion.
pub fn judge(run_succeeded: bool, stdout: &str, config: &JudgeConfig) -> SimOutcome {
    if !run_succeeded {
        return SimOutcome::RuntimeMismatch("simulation exited with a failure status".to_string());
    }
    let hit = stdout.lines().find(|l| config.pattern.is_match(l));
    match (config.polarity, hit) {
        (Polarity::FailOnMatch, None) | (Polarity::PassOnMatch, Some(_)) => SimOutcome::Pass,
        (Polarity::FailOnMatch, Some(line)) => SimOutcome::RuntimeMismatch(line.trim().to_string()),
        (Polarity::PassOnMatch, None) => {
            SimOutcome::RuntimeMismatch("pass pattern not found in simulator output".to_string())
        }
    }
}

/// A command line with `{sources}` and `{output}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandTemplate {
    raw: String,
    words: Vec<String>,
}

impl CommandTemplate {
    pub fn parse(template: &str) -> Result<Self, HarnessError> {
        match shlex::split(template) {
            Some(words) if !words.is_empty() => Ok(CommandTemplate { raw: template.to_string(), words }),
            _ => Err(HarnessError::BadTemplate(template.to_string())),
        }
    }

    pub fn render(&self, sources: &[PathBuf], output: &Path) -> Vec<String> {
        let joined = sources.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(" ");
        let mut argv = Vec::new();
        for word in &self.words {
            if word == "{sources}" {
                argv.extend(sources.iter().map(|p| p.display().to_string()));
            } else {
                argv.push(word.replace("{sources}", &joined).replace("{output}", &output.display().to_string()));
            }
        }
        argv
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub compile_cmd: CommandTemplate,
    pub run_cmd: CommandTemplate,
    /// Wall-clock budget for compile + run together.
    pub timeout: Duration,
    /// Extra time allowed to reap a killed process and drain its output.
    pub grace: Duration,
    pub judge: JudgeConfig,
    pub keep_artifacts: bool,
    /// Parent for per-sample work directories; the system temp dir if unset.
    pub work_root: Option<PathBuf>,
    /// When false, durations are stored as zero so result files are
    /// byte-reproducible.
    pub record_durations: bool,
    /// Stored compiler / mismatch messages are cut to this many bytes.
    pub message_limit: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            compile_cmd: CommandTemplate::parse("iverilog -o {output} {sources}").expect("valid"),
            run_cmd: CommandTemplate::parse("vvp {output}").expect("valid"),
            timeout: Duration::from_secs(30),
            grace: Duration::from_secs(5),
            judge: JudgeConfig::default(),
            keep_artifacts: false,
            work_root: None,
            record_durations: true,
            message_limit: 4096,
        }
    }
}

fn truncate_utf8(mut s: String, limit: usize) -> String {
    if s.len() > limit {
        let mut cut = limit;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

struct ProcessOutput {
    status: Option<ExitStatus>,
    stdout: String,
    stderr: String,
}

impl ProcessOutput {
    fn timed_out(&self) -> bool {
        self.status.is_none()
    }

    fn succeeded(&self) -> bool {
        self.status.is_some_and(|s| s.success())
    }
}

// Captured output beyond this is drained and dropped.
const CAPTURE_LIMIT: usize = 1 << 20;

fn spawn_reader(mut pipe: impl Read + Send + 'static) -> mpsc::Receiver<Vec<u8>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = CAPTURE_LIMIT.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        let _ = tx.send(kept);
    });
    rx
}

fn kill_group(child: &Child) {
    // The child leads its own process group, so this also reaches anything
    // it spawned (e.g. a shell wrapper's grandchildren).
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
}

fn run_process(argv: &[String], cwd: &Path, deadline: Instant, grace: Duration) -> Result<ProcessOutput, HarnessError> {
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => HarnessError::SimulatorNotFound(argv[0].clone()),
            _ => HarnessError::Io(e),
        })?;
    let out_rx = spawn_reader(child.stdout.take().expect("piped stdout"));
    let err_rx = spawn_reader(child.stderr.take().expect("piped stderr"));

    let budget = deadline.saturating_duration_since(Instant::now());
    let status = child.wait_timeout(budget)?;
    kill_group(&child);
    if status.is_none() {
        child.wait()?;
    }

    let drain_by = Instant::now() + grace;
    let collect = |rx: mpsc::Receiver<Vec<u8>>| {
        let left = drain_by.saturating_duration_since(Instant::now());
        String::from_utf8_lossy(&rx.recv_timeout(left).unwrap_or_default()).into_owned()
    };
    let stdout = collect(out_rx);
    let stderr = collect(err_rx);
    Ok(ProcessOutput { status, stdout, stderr })
}

fn design_source(problem: &Problem, module: &VerilogModule) -> String {
    match &problem.module_header {
        Some(header) => format!("{}\n{}\n", header.trim_end(), module.body),
        None => format!("{}\n", module.full_text),
    }
}

fn simulate(problem: &Problem, module: &VerilogModule, config: &SimConfig) -> Result<SimOutcome, HarnessError> {
    let mut builder = tempfile::Builder::new();
    builder.prefix("rtleval-");
    let dir = match &config.work_root {
        Some(root) => builder.tempdir_in(root)?,
        None => builder.tempdir()?,
    };
    let design = dir.path().join("design.v");
    let testbench = dir.path().join("testbench.v");
    let output = dir.path().join("sim.out");
    std::fs::write(&design, design_source(problem, module))?;
    std::fs::write(&testbench, &problem.test)?;
    let sources = [design, testbench];
    let deadline = Instant::now() + config.timeout;

    let outcome = (|| {
        let compile = run_process(&config.compile_cmd.render(&sources, &output), dir.path(), deadline, config.grace)?;
        if compile.timed_out() {
            return Ok(SimOutcome::Timeout);
        }
        if !compile.succeeded() {
            let mut msg = compile.stderr;
            if !compile.stdout.trim().is_empty() {
                if !msg.is_empty() && !msg.ends_with('\n') {
                    msg.push('\n');
                }
                msg.push_str(&compile.stdout);
            }
            return Ok(SimOutcome::CompileError(truncate_utf8(msg, config.message_limit)));
        }
        let run = run_process(&config.run_cmd.render(&sources, &output), dir.path(), deadline, config.grace)?;
        if run.timed_out() {
            return Ok(SimOutcome::Timeout);
        }
        Ok(match judge(run.succeeded(), &run.stdout, &config.judge) {
            SimOutcome::RuntimeMismatch(m) => SimOutcome::RuntimeMismatch(truncate_utf8(m, config.message_limit)),
            other => other,
        })
    })();

    if config.keep_artifacts {
        let kept = dir.keep();
        log::info!("kept artifacts for {} in {}", problem.task_id, kept.display());
    }
    outcome
}

/// Extracts, compiles, runs and judges one sample. Only configuration
/// problems (a missing simulator) are errors; everything else is recorded
/// in the returned result.
pub fn evaluate_sample(
    problem: &Problem,
    sample: &RawSample,
    config: &SimConfig,
) -> Result<SampleResult, HarnessError> {
    let started = Instant::now();
    let extraction = extract_completion(&sample.completion);
    let sim = match extraction.module() {
        Some(module) => simulate(problem, module, config)?,
        None => SimOutcome::NotAttempted,
    };
    let duration = if config.record_durations { started.elapsed().as_secs_f64() } else { 0.0 };
    Ok(SampleResult {
        task_id: sample.task_id.clone(),
        sample_index: sample.sample_index,
        temperature: sample.temperature,
        extraction: extraction.kind(),
        sim,
        error_class: None,
        duration,
    })
}

pub fn run_suite(
    problems: &[Problem],
    samples: &[RawSample],
    config: &SimConfig,
    workers: usize,
) -> Result<Vec<SampleResult>, HarnessError> {
    run_suite_with(problems, samples, config, workers, |_| Ok(()))
}

/// Evaluates every sample with `workers` threads. `on_result` sees results
/// in completion order (for incremental persistence); the returned list is
/// sorted by (task_id, temperature, sample_index).
pub fn run_suite_with(
    problems: &[Problem],
    samples: &[RawSample],
    config: &SimConfig,
    workers: usize,
    mut on_result: impl FnMut(&SampleResult) -> io::Result<()>,
) -> Result<Vec<SampleResult>, HarnessError> {
    let by_id: HashMap<&str, &Problem> = problems.iter().map(|p| (p.task_id.as_str(), p)).collect();
    let mut jobs: Vec<(&Problem, &RawSample)> = Vec::with_capacity(samples.len());
    for s in samples {
        let p = by_id.get(s.task_id.as_str()).ok_or_else(|| HarnessError::UnknownTaskId(s.task_id.clone()))?;
        jobs.push((p, s));
    }
    jobs.sort_by(|a, b| a.1.sort_key().cmp(&b.1.sort_key()));

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut slots: Vec<Option<SampleResult>> = vec![None; jobs.len()];

    thread::scope(|scope| -> Result<(), HarnessError> {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers.max(1) {
            let tx = tx.clone();
            let (jobs, next, stop) = (&jobs, &next, &stop);
            scope.spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some((problem, sample)) = jobs.get(i) else { break };
                    let res = evaluate_sample(problem, sample, config);
                    if tx.send((i, res)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        for (i, res) in rx {
            let result = match res {
                Ok(r) => r,
                Err(e) => {
                    stop.store(true, Ordering::Relaxed);
                    return Err(e);
                }
            };
            if let Err(e) = on_result(&result) {
                stop.store(true, Ordering::Relaxed);
                return Err(e.into());
            }
            slots[i] = Some(result);
        }
        Ok(())
    })?;

    Ok(slots.into_iter().map(|s| s.expect("every job produced a result")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judge_default_pattern() {
        let cfg = JudgeConfig::default();
        assert_eq!(judge(true, "Mismatches: 0 in 100 samples", &cfg), SimOutcome::Pass);
        assert_eq!(
            judge(true, "Hint: x\nMismatches: 12 in 100 samples\n", &cfg),
            SimOutcome::RuntimeMismatch("Mismatches: 12 in 100 samples".into())
        );
        assert_eq!(judge(false, "", &cfg).kind(), SimKind::RuntimeMismatch);
        assert_eq!(judge(true, "Mismatches: 010 in 100 samples", &cfg).kind(), SimKind::RuntimeMismatch);
    }

    #[test]
    fn judge_pass_polarity() {
        let cfg = JudgeConfig::new(r"^ALL TESTS PASSED", Polarity::PassOnMatch).unwrap();
        assert_eq!(judge(true, "ALL TESTS PASSED\n", &cfg), SimOutcome::Pass);
        assert_eq!(judge(true, "some failure\n", &cfg).kind(), SimKind::RuntimeMismatch);
    }

    #[test]
    fn template_rendering() {
        let t = CommandTemplate::parse("iverilog -o {output} {sources}").unwrap();
        let argv = t.render(&[PathBuf::from("/d/a.v"), PathBuf::from("/d/b.v")], Path::new("/d/o"));
        assert_eq!(argv, ["iverilog", "-o", "/d/o", "/d/a.v", "/d/b.v"]);

        let t = CommandTemplate::parse("sh -c 'cat {sources} > {output}'").unwrap();
        let argv = t.render(&[PathBuf::from("a.v"), PathBuf::from("b.v")], Path::new("o"));
        assert_eq!(argv, ["sh", "-c", "cat a.v b.v > o"]);

        assert!(CommandTemplate::parse("").is_err());
        assert!(CommandTemplate::parse("'unbalanced").is_err());
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        assert_eq!(truncate_utf8("héllo".into(), 2), "h");
        assert_eq!(truncate_utf8("abc".into(), 10), "abc");
    }

    #[test]
    fn result_row_round_trip() {
        let r = SampleResult {
            task_id: "t".into(),
            sample_index: 3,
            temperature: 0.2,
            extraction: ExtractionKind::Extracted,
            sim: SimOutcome::CompileError("syntax error".into()),
            error_class: None,
            duration: 0.5,
        };
        let row = ResultRow::from(&r);
        let json = serde_json::to_string(&row).unwrap();
        assert!(json.contains(r#""sim":"compile_error""#));
        assert!(json.contains(r#""extraction_outcome":"extracted""#));
        let back: ResultRow = serde_json::from_str(&json).unwrap();
        assert_eq!(SampleResult::from(back), r);
    }

    #[test]
    fn design_uses_header_when_present() {
        let m = crate::scan::extract_modules("module top (a); assign a = 1; endmodule").remove(0);
        let mut p = Problem {
            task_id: "t".into(),
            description: String::new(),
            module_header: None,
            test: "tb".into(),
            circuit_type: None,
        };
        assert_eq!(design_source(&p, &m), "module top (a); assign a = 1; endmodule\n");
        p.module_header = Some("module top_module(output a);\n".into());
        assert_eq!(design_source(&p, &m), "module top_module(output a);\nassign a = 1; endmodule\n");
    }
}

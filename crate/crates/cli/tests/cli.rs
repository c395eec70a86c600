mod common;

use std::path::Path;

use rtleval::client::RawSample;
use rtleval::harness::ResultRow;
use rtleval::stub::{StubReply, StubServer};

use common::{cli, compile_cmd, core_fixture, fixture, naming_labeler, p, run_cmd};

#[test]
fn exit_statuses() {
    assert_eq!(cli(["--help"]), 0);
    assert_eq!(cli(["report", "--help"]), 0);
    assert_eq!(cli(["--version"]), 0);
    assert_eq!(cli(["no-such-command"]), 2);
    assert_eq!(cli(["evaluate"]), 2);
    assert_eq!(cli(["generate", "--num-samples", "many"]), 2);
    assert_eq!(cli(["report", "--results", "/nonexistent/results.jsonl"]), 1);
    assert_eq!(cli(["--config", "/nonexistent/config.toml", "report"]), 2);
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    p(&path)
}

fn evaluate_echo(dir: &Path) -> String {
    let server = StubServer::echo().unwrap();
    let problems = p(&fixture("echo_problems.jsonl"));
    let samples = p(&dir.join("samples.jsonl"));
    let gen = [
        "generate",
        "--problems",
        &problems,
        "--endpoint",
        &server.url(),
        "--model",
        "m",
        "--num-samples",
        "2",
        "--out",
        &samples,
    ];
    assert_eq!(cli(gen), 0);
    let results = p(&dir.join("results.jsonl"));
    let eval = [
        "evaluate",
        "--problems",
        &problems,
        "--samples",
        &samples,
        "--compile-cmd",
        &compile_cmd(),
        "--run-cmd",
        &run_cmd(),
        "--no-durations",
        "--out",
        &results,
    ];
    assert_eq!(cli(eval), 0);
    results
}

#[test]
fn report_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let results = evaluate_echo(dir.path());
    assert_eq!(cli(["report", "--results", &results, "--format", "html"]), 2);
    assert_eq!(cli(["report", "--results", &results, "--k", "0"]), 2);
    assert_eq!(cli(["report", "--results", &results, "--label", "a", "--label", "b"]), 2);
    let types = write(dir.path(), "types.csv", "task_id,circuit_type\ne_and,gates\n");
    assert_eq!(cli(["report", "--results", &results, "--by-type", &types]), 1, "unmapped task ids");
    let out = p(&dir.path().join("r.txt"));
    assert_eq!(cli(["report", "--results", &results, "--format", "plain", "--k", "1", "--out", &out]), 0);
    assert!(std::fs::read_to_string(&out).unwrap().contains("60.00%"));
}

#[test]
fn config_supplies_options_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let results = evaluate_echo(dir.path());
    let out = p(&dir.path().join("report.md"));
    let config = write(
        dir.path(),
        "rtleval.toml",
        &format!("[report]\nresults = [{results:?}]\nk = [1]\nformat = \"json\"\nout = {out:?}\n"),
    );
    assert_eq!(cli(["--config", &config, "report"]), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.trim_start().starts_with('{'), "config format used: {text}");

    assert_eq!(cli(["--config", &config, "report", "--format", "markdown"]), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# Evaluation report"), "flag wins: {text}");

    let bad = write(dir.path(), "bad.toml", "[report]\nbogus = 1\n");
    assert_eq!(cli(["--config", &bad, "report"]), 2);
}

#[test]
fn curate_rejects_unknown_template_placeholders() {
    let dir = tempfile::tempdir().unwrap();
    let labeler = naming_labeler();
    let template = write(dir.path(), "t.txt", "{description} {colour}");
    let args = [
        "curate",
        "--input",
        &p(&core_fixture("corpus.csv")),
        "--output",
        &p(&dir.path().join("o.jsonl")),
        "--label-endpoint",
        &labeler.url(),
        "--label-model",
        "m",
        "--template",
        &template,
    ];
    assert_eq!(cli(args), 2);
    assert_eq!(labeler.requests(), 0);
}

#[test]
fn curate_leaves_out_unlabeled_modules() {
    let dir = tempfile::tempdir().unwrap();
    let labeler = StubServer::start(|req| {
        if req.messages.last().unwrap().content.contains("module maj") {
            StubReply::Status(400, "refused".into())
        } else {
            StubReply::Text("Some circuit.".into())
        }
    })
    .unwrap();
    let out = dir.path().join("o.jsonl");
    let args = [
        "curate",
        "--input",
        &p(&core_fixture("corpus.csv")),
        "--output",
        &p(&out),
        "--label-endpoint",
        &labeler.url(),
        "--label-model",
        "m",
        "--retries",
        "0",
    ];
    assert_eq!(cli(args), 0);
    let records = rtleval::curation::read_dataset(&out).unwrap();
    assert_eq!(records.len(), 7);
    assert!(records.iter().all(|r| r.module_name != "maj"));
    assert!(records[0].prompt.starts_with("## System Prompt: "));
}

#[test]
fn generate_retry_empty_refills_failed_samples() {
    let dir = tempfile::tempdir().unwrap();
    let problems = p(&fixture("echo_problems.jsonl"));
    let out = p(&dir.path().join("samples.jsonl"));
    let down = StubServer::start(|req| {
        if req.messages.last().unwrap().content.contains("counter") {
            StubReply::Status(503, "busy".into())
        } else {
            StubReply::Text("ok".into())
        }
    })
    .unwrap();
    let gen = |url: &str, extra: &[&str]| {
        let mut a = vec!["generate", "--problems", &problems, "--endpoint", url, "--model", "m"];
        a.extend(["--num-samples", "3", "--retries", "0", "--out", &out]);
        a.extend(extra);
        a.into_iter().map(String::from).collect::<Vec<_>>()
    };
    assert_eq!(cli(gen(&down.url(), &[])), 0, "failed requests are stored, not fatal");
    let samples: Vec<RawSample> = rtleval::read_jsonl(Path::new(&out)).unwrap();
    assert_eq!(samples.len(), 15);
    assert_eq!(samples.iter().filter(|s| s.completion.is_empty()).count(), 3);

    let up = StubServer::echo().unwrap();
    assert_eq!(cli(gen(&up.url(), &["--resume"])), 0);
    assert_eq!(up.requests(), 0, "plain resume keeps every stored pair");
    assert_eq!(cli(gen(&up.url(), &["--resume", "--retry-empty"])), 0);
    assert_eq!(up.requests(), 3);
    let samples: Vec<RawSample> = rtleval::read_jsonl(Path::new(&out)).unwrap();
    assert_eq!(samples.len(), 15);
    assert!(samples.iter().all(|s| !s.completion.is_empty()));
}

#[test]
fn evaluate_is_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let results = evaluate_echo(dir.path());
    let problems = p(&fixture("echo_problems.jsonl"));
    let samples = p(&dir.path().join("samples.jsonl"));
    let again = p(&dir.path().join("again.jsonl"));
    let eval = [
        "evaluate",
        "--problems",
        &problems,
        "--samples",
        &samples,
        "--compile-cmd",
        &compile_cmd(),
        "--run-cmd",
        &run_cmd(),
        "--no-durations",
        "--jobs",
        "8",
        "--out",
        &again,
    ];
    assert_eq!(cli(eval), 0);
    assert_eq!(std::fs::read(&results).unwrap(), std::fs::read(&again).unwrap());
    let rows: Vec<ResultRow> = rtleval::read_jsonl(Path::new(&results)).unwrap();
    assert_eq!(rows.len(), 10);

    let bad_jobs = ["evaluate", "--problems", &problems, "--samples", &samples, "--jobs", "0", "--out", &again];
    assert_eq!(cli(bad_jobs), 2);
    let bad_template =
        ["evaluate", "--problems", &problems, "--samples", &samples, "--compile-cmd", "sim \"open", "--out", &again];
    assert_eq!(cli(bad_template), 2);
}

#[test]
fn classify_rejects_bad_rules_and_missing_samples() {
    let dir = tempfile::tempdir().unwrap();
    let results = evaluate_echo(dir.path());
    let problems = p(&fixture("echo_problems.jsonl"));
    let samples = p(&dir.path().join("samples.jsonl"));
    let out = p(&dir.path().join("tax.jsonl"));
    let rules = write(dir.path(), "rules.toml", "echo_coverage = 2.0\n");
    let args = [
        "classify",
        "--samples",
        &samples,
        "--results",
        &results,
        "--problems",
        &problems,
        "--out",
        &out,
        "--rules",
        &rules,
    ];
    assert_eq!(cli(args), 2);
    let empty = write(dir.path(), "empty.jsonl", "");
    let args = ["classify", "--samples", &empty, "--results", &results, "--problems", &problems, "--out", &out];
    assert_eq!(cli(args), 1);
}

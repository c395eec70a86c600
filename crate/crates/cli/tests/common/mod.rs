#![allow(dead_code)]

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rtleval::scan::extract_modules;
use rtleval::stub::{StubReply, StubServer};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn compile_cmd() -> String {
    format!("sh {} -o {{output}} {{sources}}", core_fixture("stub_sim/compile.sh").display())
}

pub fn run_cmd() -> String {
    format!("sh {} {{output}}", core_fixture("stub_sim/run.sh").display())
}

/// Runs the command line in-process and returns its exit status.
pub fn cli<S: Into<OsString>>(args: impl IntoIterator<Item = S>) -> i32 {
    let mut argv: Vec<OsString> = vec!["rtleval".into()];
    argv.extend(args.into_iter().map(Into::into));
    rtleval_cli::run(argv)
}

pub fn p(path: &Path) -> String {
    path.display().to_string()
}

/// Answers each task description with the next entry of its scripted reply
/// list, so per-task pass counts are fixed whatever the request order.
pub fn scripted_stub() -> StubServer {
    let replies: HashMap<String, Vec<String>> =
        serde_json::from_str(&std::fs::read_to_string(fixture("scripted_replies.json")).unwrap()).unwrap();
    let served: Mutex<HashMap<String, usize>> = Mutex::new(HashMap::new());
    StubServer::start(move |req| {
        let prompt = req.messages.last().map(|m| m.content.clone()).unwrap_or_default();
        let Some(list) = replies.get(&prompt) else {
            return StubReply::Status(404, format!("no script for {prompt:?}"));
        };
        let mut served = served.lock().unwrap();
        let i = served.entry(prompt).or_default();
        let reply = list[*i % list.len()].clone();
        *i += 1;
        StubReply::Text(reply)
    })
    .unwrap()
}

/// Labels a module with its own name, e.g. `Implements e0.`
pub fn naming_labeler() -> StubServer {
    StubServer::start(|req| {
        let text = req.messages.last().map(|m| m.content.as_str()).unwrap_or_default();
        match extract_modules(text).first().and_then(|m| m.name.clone()) {
            Some(name) => StubReply::Text(format!("Implements {name}.")),
            None => StubReply::Status(400, "no module in request".into()),
        }
    })
    .unwrap()
}

pub fn count_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

//! `rtleval` command line: curate, generate, evaluate, report, classify.

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::config::ConfigFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rtleval", version, about = "Verilog dataset curation and completion evaluation")]
struct Cli {
    /// TOML file with defaults for any flag, one table per subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Emit log lines as JSON objects.
    #[arg(long, global = true)]
    json_logs: bool,

    /// Environment variable holding the API bearer token.
    #[arg(long, global = true, value_name = "VAR")]
    api_key_env: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a labeled JSONL dataset from a CSV code corpus.
    Curate(CurateArgs),
    /// Sample completions for each problem from a chat endpoint.
    Generate(GenerateArgs),
    /// Compile and simulate samples against problem testbenches.
    Evaluate(EvaluateArgs),
    /// Aggregate result files into pass@k and per-type tables.
    Report(ReportArgs),
    /// Assign a failure class to every evaluated sample.
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
pub(crate) struct CurateArgs {
    #[arg(long, value_name = "CSV")]
    pub input: Option<PathBuf>,
    /// CSV column holding the code [default: code]
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long, value_name = "JSONL")]
    pub output: Option<PathBuf>,
    #[arg(long, value_name = "URL")]
    pub label_endpoint: Option<String>,
    #[arg(long, value_name = "NAME")]
    pub label_model: Option<String>,
    /// Instruction sent to the labeler ahead of each module.
    #[arg(long)]
    pub label_instruction: Option<String>,
    /// Prompt template file using {system_prompt}, {instruction},
    /// {description} and {module_name}.
    #[arg(long, value_name = "FILE")]
    pub template: Option<PathBuf>,
    /// Labeling requests in flight [default: 8]
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Collapse internal whitespace when looking for duplicates.
    #[arg(long)]
    pub normalize_dedup: bool,
    #[arg(long)]
    pub system_prompt: Option<String>,
    #[arg(long)]
    pub instruction: Option<String>,
    /// Per-request timeout [default: 60]
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Retries per labeling request [default: 3]
    #[arg(long)]
    pub retries: Option<u32>,
}

#[derive(Debug, Args)]
pub(crate) struct GenerateArgs {
    #[arg(long, value_name = "JSONL")]
    pub problems: Option<PathBuf>,
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    #[arg(long, value_name = "NAME")]
    pub model: Option<String>,
    /// [default: 0.2]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Samples per problem [default: 20]
    #[arg(long)]
    pub num_samples: Option<u32>,
    /// [default: 500]
    #[arg(long)]
    pub max_new_tokens: Option<u32>,
    #[arg(long, value_name = "JSONL")]
    pub out: Option<PathBuf>,
    /// Keep samples already in --out and request only the missing ones.
    #[arg(long)]
    pub resume: bool,
    /// With --resume, also re-request samples whose completion is empty
    /// (failed requests are stored that way).
    #[arg(long)]
    pub retry_empty: bool,
    /// Requests in flight [default: 4]
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Per-request timeout [default: 120]
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// [default: 3]
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub system_prompt: Option<String>,
}

#[derive(Debug, Args)]
pub(crate) struct EvaluateArgs {
    #[arg(long, value_name = "JSONL")]
    pub problems: Option<PathBuf>,
    #[arg(long, value_name = "JSONL")]
    pub samples: Option<PathBuf>,
    /// [default: "iverilog -o {output} {sources}"]
    #[arg(long)]
    pub compile_cmd: Option<String>,
    /// [default: "vvp {output}"]
    #[arg(long)]
    pub run_cmd: Option<String>,
    /// Parallel evaluations [default: available CPUs]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Budget for compile + run of one sample [default: 30]
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Extra time to reap a killed simulator [default: 5]
    #[arg(long)]
    pub grace_secs: Option<u64>,
    #[arg(long, value_name = "JSONL")]
    pub out: Option<PathBuf>,
    /// Keep each sample's work directory.
    #[arg(long)]
    pub keep_artifacts: bool,
    /// Where work directories are created [default: system temp dir]
    #[arg(long, value_name = "DIR")]
    pub work_dir: Option<PathBuf>,
    /// Regex matched against each stdout line [default: mismatch count > 0]
    #[arg(long)]
    pub fail_pattern: Option<String>,
    /// Treat --fail-pattern as a pattern that must match for a pass.
    #[arg(long)]
    pub pass_on_match: bool,
    /// Store zero durations so result files are byte-reproducible.
    #[arg(long)]
    pub no_durations: bool,
}

#[derive(Debug, Args)]
pub(crate) struct ReportArgs {
    /// Result file; repeat for several runs. The first is the primary run.
    #[arg(long, value_name = "JSONL")]
    pub results: Vec<PathBuf>,
    /// Run label; labels pair with the last --results files, unlabeled runs
    /// use the file name.
    #[arg(long)]
    pub label: Vec<String>,
    /// Comma-separated k values [default: 1,5,10]
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<u64>,
    /// CSV with columns task_id,circuit_type.
    #[arg(long, value_name = "CSV")]
    pub by_type: Option<PathBuf>,
    /// plain, markdown or json [default: markdown]
    #[arg(long)]
    pub format: Option<String>,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct ClassifyArgs {
    #[arg(long, value_name = "JSONL")]
    pub samples: Option<PathBuf>,
    #[arg(long, value_name = "JSONL")]
    pub results: Option<PathBuf>,
    #[arg(long, value_name = "JSONL")]
    pub problems: Option<PathBuf>,
    #[arg(long, value_name = "JSONL")]
    pub out: Option<PathBuf>,
    /// Markdown summary of class counts.
    #[arg(long, value_name = "MD")]
    pub summary: Option<PathBuf>,
    /// TOML overriding any of the default classification rules.
    #[arg(long, value_name = "TOML")]
    pub rules: Option<PathBuf>,
}

/// A problem with how the command was invoked (exit status 2).
#[derive(Debug)]
pub(crate) struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn init_logging(verbosity: u8, json: bool) {
    let level = match verbosity {
        0 => log::LevelFilter::Info,
        1 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let mut builder = env_logger::Builder::new();
    builder.filter_level(level).parse_default_env().target(env_logger::Target::Stderr);
    if json {
        builder.format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    } else {
        builder.format(|buf, record| writeln!(buf, "[{}] {}", record.level(), record.args()));
    }
    // A second initialization (e.g. several runs in one test process) keeps
    // the first logger.
    let _ = builder.try_init();
}

/// Runs the command line and returns the process exit status:
/// 0 success, 1 operational failure, 2 usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let config = match &cli.config {
        Some(path) => match ConfigFile::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return EXIT_USAGE;
            }
        },
        None => ConfigFile::default(),
    };
    init_logging(cli.verbose.max(config.verbose.unwrap_or(0)), cli.json_logs || config.json_logs.unwrap_or(false));
    let api_key_env = config::pick(cli.api_key_env.clone(), config.api_key_env.clone(), "MODEL_API_KEY".to_string());

    let subcommand = match &cli.command {
        Command::Curate(_) => "curate",
        Command::Generate(_) => "generate",
        Command::Evaluate(_) => "evaluate",
        Command::Report(_) => "report",
        Command::Classify(_) => "classify",
    };
    let result = match cli.command {
        Command::Curate(a) => commands::curate(a, &config.curate, &api_key_env),
        Command::Generate(a) => commands::generate(a, &config.generate, &api_key_env),
        Command::Evaluate(a) => commands::evaluate(a, &config.evaluate),
        Command::Report(a) => commands::report(a, &config.report),
        Command::Classify(a) => commands::classify(a, &config.classify),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) if e.is::<UsageError>() => {
            let mut cmd = Cli::command();
            cmd.build();
            let help = cmd.find_subcommand_mut(subcommand).map(|c| c.render_help().to_string()).unwrap_or_default();
            eprintln!("error: {e}\n\n{help}");
            EXIT_USAGE
        }
        Err(e) => {
            log::error!("{e:#}");
            EXIT_FAILURE
        }
    }
}

mod compare;
mod model;
mod output;
mod theory;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sessa_core::Error;

use output::Output;

#[derive(Parser, Debug)]
#[command(name = "sessa-lab", version, about = "Decay-law checks, baseline comparisons and training for the Sessa mixer")]
struct Cli {
    /// Seed for every random draw; 0 unless a training config file sets one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Checks a decay law of the feedback recursion.
    Theory(theory::TheoryArgs),
    /// Measures the influence decay of a baseline mixer.
    Compare(compare::CompareArgs),
    /// Trains a model on a synthetic task.
    Train(model::TrainArgs),
    /// Evaluates a checkpoint.
    Eval(model::EvalArgs),
    /// Probes the end-to-end Jacobian of a uniform-feedback block.
    Jacobian(model::JacobianArgs),
}

/// What a command found: whether its assertions hold, plus a JSON summary.
pub struct Verdict {
    pub passed: bool,
    pub summary: serde_json::Value,
    pub failure: Option<String>,
}

impl Verdict {
    pub fn check(passed: bool, summary: serde_json::Value, failure: impl FnOnce() -> String) -> Self {
        let failure = if passed { None } else { Some(failure()) };
        Self { passed, summary, failure }
    }
}

fn configure_threads() -> Result<usize, Error> {
    let threads = match std::env::var("SESSA_LAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Config(format!("SESSA_LAB_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(threads)
}

fn run(cli: &Cli, out: &mut Output) -> Result<Verdict, Error> {
    match &cli.command {
        Command::Theory(a) => theory::run(a, out),
        Command::Compare(a) => compare::run(a, cli.seed.unwrap_or(0), out),
        Command::Train(a) => model::train(a, cli.seed, out),
        Command::Eval(a) => model::eval(a, out),
        Command::Jacobian(a) => model::jacobian(a, cli.seed.unwrap_or(0), out),
    }
}

fn exit_code(err: &Error) -> u8 {
    if err.is_usage() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match configure_threads() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let mut out = match Output::create(&cli.out, cli.format) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = run(&cli, &mut out);
    let (code, status) = match &result {
        Ok(v) if v.passed => (0, "pass".to_string()),
        Ok(v) => {
            eprintln!("FAIL: {}", v.failure.as_deref().unwrap_or("assertion failed"));
            (1, "fail".to_string())
        }
        Err(e) => {
            eprintln!("error: {e}");
            (exit_code(e), format!("error: {e}"))
        }
    };
    if let Ok(v) = &result {
        println!("{}", serde_json::to_string_pretty(&v.summary).unwrap_or_default());
        if let Err(e) = out.json("summary", &v.summary) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let seed = result
        .as_ref()
        .ok()
        .and_then(|v| v.summary.get("seed").and_then(|s| s.as_u64()))
        .or(cli.seed)
        .unwrap_or(0);
    let manifest = serde_json::json!({
        "argv": std::env::args().collect::<Vec<_>>(),
        "config": &cli.command,
        "seed": seed,
        "format": cli.format,
        "threads": threads,
        "versions": { "sessa-lab": env!("CARGO_PKG_VERSION"), "sessa-core": sessa_core::VERSION },
        "status": status,
        "outputs": out.files(),
    });
    if let Err(e) = out.manifest(&manifest) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}

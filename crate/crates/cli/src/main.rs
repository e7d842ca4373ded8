use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hardgen_core::{evaluate, generate, run_batch, sample_ru, BatchConfig, Error, Instance, Method, ProblemKind};

/// Generate, harden and evaluate min-max robust instances.
#[derive(Parser)]
#[command(name = "hardgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an RU instance or harden one.
    Generate(GenerateArgs),
    /// Solve an instance exactly and print the result as JSON.
    Evaluate(EvaluateArgs),
    /// Run a batch experiment described by a TOML config.
    Batch(BatchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Selection,
    Tsp,
}

#[derive(Args)]
struct GenerateArgs {
    /// Start from this instance instead of sampling one.
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    problem: Option<Problem>,
    /// Items (selection).
    #[arg(long)]
    n: Option<usize>,
    /// Items to choose (selection); defaults to n/2.
    #[arg(long)]
    p: Option<usize>,
    /// Nodes (tsp).
    #[arg(long)]
    m: Option<usize>,
    /// Defaults to n for selection and m for tsp.
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long, default_value_t = 100.0)]
    maxcost: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ru (or none), mro-ex, mro-cg, mro-heu, mro-lsheu, mro-ldr, mid.
    #[arg(long, default_value = "none")]
    method: String,
    #[arg(long, default_value_t = 0.0)]
    budget: f64,
    /// Seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    /// Output instance; the run log goes to `<out>.log.json`. Defaults to
    /// stdout, with the log on stderr.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// JSON report; the aligned table is always printed to stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Leave wall-time fields out of the JSON report.
    #[arg(long)]
    no_timing: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Batch(a) => cmd_batch(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hardgen: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::TimeLimitNoIncumbent => 3,
        Error::Parse { .. }
        | Error::Invariant(_)
        | Error::EmptyBox { .. }
        | Error::Scale(_)
        | Error::Unsupported(_)
        | Error::Io(_) => 2,
        _ => 1,
    }
}

fn time_limit(secs: f64) -> Result<Duration, Error> {
    Duration::try_from_secs_f64(secs).map_err(|_| Error::Invariant(format!("invalid time limit {secs}")))
}

fn sampled(a: &GenerateArgs) -> Result<Instance, Error> {
    let missing = |flag: &str| Error::Invariant(format!("--{flag} is required without --in"));
    let kind = match a.problem.ok_or_else(|| missing("problem"))? {
        Problem::Selection => {
            let n = a.n.ok_or_else(|| missing("n"))?;
            ProblemKind::Selection { n, p: a.p.unwrap_or(n / 2) }
        }
        Problem::Tsp => ProblemKind::Tsp { m: a.m.ok_or_else(|| missing("m"))? },
    };
    let scenarios = a.scenarios.unwrap_or(match kind {
        ProblemKind::Selection { n, .. } => n,
        ProblemKind::Tsp { m } => m,
    });
    sample_ru(kind, scenarios, a.maxcost, a.seed, false)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Error> {
    let method: Method = a.method.parse()?;
    let limit = time_limit(a.time_limit)?;
    let base = match &a.input {
        Some(path) => Instance::read(path)?,
        None => sampled(&a)?,
    };
    let (inst, log) = generate(&base, method, a.budget, Some(limit))?;
    write_or_print(a.out.as_deref(), &inst.to_text())?;
    if method != Method::Ru {
        let log = serde_json::to_string_pretty(&log)?;
        match &a.out {
            Some(path) => {
                let mut side = path.clone().into_os_string();
                side.push(".log.json");
                std::fs::write(side, log + "\n")?;
            }
            None => eprintln!("{log}"),
        }
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), Error> {
    let inst = Instance::read(&a.input)?;
    let eval = evaluate(&inst, Some(time_limit(a.time_limit)?))?;
    write_or_print(a.out.as_deref(), &(serde_json::to_string_pretty(&eval)? + "\n"))?;
    if eval.value.is_none() {
        return Err(Error::TimeLimitNoIncumbent);
    }
    Ok(())
}

fn cmd_batch(a: BatchArgs) -> Result<(), Error> {
    let cfg = BatchConfig::read(&a.config)?;
    let report = run_batch(&cfg, a.jobs)?;
    if let Some(path) = &a.out {
        std::fs::write(path, report.to_json(!a.no_timing) + "\n")?;
    }
    print!("{}", report.table());
    Ok(())
}

//! `ipwlab`: run simulation studies and variance oracles from a flat config.
//!
//! Exit status: 0 on success, 1 on a configuration error, 2 on a runtime
//! failure. Diagnostics go to stderr; CSV goes to `--out` or stdout.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Output;
use crate::config::{ConfigError, Settings};

#[derive(Parser, Debug)]
#[command(name = "ipwlab", version, about = "Inverse-propensity weighting simulation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Write CSV here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads [default: available cores].
    #[arg(long, global = true, value_name = "K")]
    workers: Option<usize>,

    /// Master seed; overrides the `seed` key.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Replicated study over approaches and labeled sample sizes.
    #[command(after_help = commands::STUDY_HELP)]
    Study,
    /// Standard deviations of the three weightings on the two-binary process.
    #[command(after_help = commands::TABLE1_HELP)]
    Table1,
    /// The four inclusion/confounding cases of the linear process.
    #[command(after_help = commands::MISSPEC_HELP)]
    Misspec,
    /// Exact variance and inequality tables.
    #[command(after_help = commands::ORACLE_HELP)]
    Oracle,
}

enum Failure {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<ipwlab::Error> for Failure {
    fn from(e: ipwlab::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn settings(cli: &Cli) -> Result<Settings, ConfigError> {
    let mut s = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    for o in &cli.set {
        s.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        s.set("seed", &seed.to_string());
    }
    Ok(s)
}

fn execute(cli: &Cli) -> Result<Output, Failure> {
    let s = settings(cli)?;
    if cli.workers == Some(0) {
        return Err(ConfigError::Invalid {
            key: "workers".into(),
            message: "must be >= 1".into(),
        }
        .into());
    }
    // Parse everything before doing any work.
    enum Plan {
        Study(commands::StudyPlan),
        Table1(ipwlab::Table1Config),
        Misspec(ipwlab::MisspecConfig),
        Oracle(commands::OraclePlan),
    }
    let plan = match cli.command {
        Command::Study => Plan::Study(commands::study_plan(&s)?),
        Command::Table1 => Plan::Table1(commands::table1_config(&s)?),
        Command::Misspec => Plan::Misspec(commands::misspec_config(&s)?),
        Command::Oracle => Plan::Oracle(commands::oracle_plan(&s)?),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.workers {
        pool = pool.num_threads(k);
    }
    let pool = pool.build().map_err(|e| Failure::Runtime(e.to_string()))?;
    let out = pool.install(|| match &plan {
        Plan::Study(p) => commands::run_study(p),
        Plan::Table1(c) => commands::run_table1(c),
        Plan::Misspec(c) => commands::run_misspec(c),
        Plan::Oracle(p) => commands::run_oracle(p),
    })?;
    Ok(out)
}

fn emit(cli: &Cli, out: &Output) -> std::io::Result<()> {
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &out.csv)?;
            let mut stdout = std::io::stdout().lock();
            for line in &out.summaries {
                writeln!(stdout, "{line}")?;
            }
        }
        None => {
            std::io::stdout().lock().write_all(&out.csv)?;
            let mut stderr = std::io::stderr().lock();
            for line in &out.summaries {
                writeln!(stderr, "{line}")?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(out) => match emit(&cli, &out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: writing output: {e}");
                ExitCode::from(2)
            }
        },
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(#[from] antiresonance::Error),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "antires", version, about = "Cavity transmission antiresonances of coupled emitter arrays")]
struct Cli {
    /// Directory for every artifact.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Worker threads for parallel scans; defaults to all cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Accepted for compatibility; every computation is deterministic.
    #[arg(long, global = true, hide = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct ConfigArg {
    /// JSON run configuration.
    #[arg(long = "config", value_name = "PATH")]
    flag: Option<PathBuf>,
    #[arg(value_name = "CONFIG", conflicts_with = "flag")]
    positional: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<config::LoadedConfig, CliError> {
        let path = self
            .flag
            .as_ref()
            .or(self.positional.as_ref())
            .ok_or_else(|| CliError::Config("no configuration given (use --config PATH)".into()))?;
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        config::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("in {}: {msg}", path.display())),
            other => other,
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every stage the configuration describes.
    Run(ConfigArg),
    /// Transmission scan with summary and plot files.
    Spectrum(ConfigArg),
    /// Solve for the cavity tuning only.
    Tune(ConfigArg),
    /// Effective cooperativity against spacing or TEM order.
    Cooperativity(ConfigArg),
    /// Lorentzian fit of an existing spectrum table.
    Fit {
        #[arg(value_name = "CSV")]
        table: PathBuf,
    },
    /// Exact master-equation transmission against the linear theory.
    Oracle(ConfigArg),
    /// Reproduce a bundled figure: 1, 2, 3, 4 or a1.
    Figure {
        #[arg(value_name = "ID")]
        id: String,
    },
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Run(c) => commands::run(&c.load()?, out),
        Command::Spectrum(c) => {
            let s = commands::spectrum(&c.load()?, out)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
            Ok(())
        }
        Command::Tune(c) => {
            let t = commands::tune_only(&c.load()?, out)?;
            println!("{}", serde_json::to_string_pretty(&t).expect("tuning serializes"));
            Ok(())
        }
        Command::Cooperativity(c) => commands::cooperativity(&c.load()?, out).map(|_| ()),
        Command::Oracle(c) => {
            let s = commands::oracle(&c.load()?, out)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("oracle summary serializes"));
            Ok(())
        }
        Command::Fit { table } => {
            let fit = commands::fit_table(table, Some(out))?;
            println!("{}", serde_json::to_string_pretty(&fit).expect("fit serializes"));
            Ok(())
        }
        Command::Figure { id } => commands::figure(id, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("antires: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status 0 ok, 1 data error, 2 usage error.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "aumann", version, about = "Aumann-Shapley attribution for multi-agent panels")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for synthetic data and randomised estimators.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory that receives every output and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (defaults to all cores, or 1 for bench).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic panel.
    Generate(commands::GenerateArgs),
    /// Build a panel from a JSONL event stream.
    Ingest(commands::IngestArgs),
    /// Attribute a macro indicator to the agents of a panel.
    Attribute(commands::AttributeArgs),
    /// Run a flip / rescale / dose-response / convergence study from a config file.
    Study(commands::StudyArgs),
    /// Time the attribution methods across panel sizes.
    Bench(commands::BenchArgs),
    /// Check the three-agent counterexample and the axiom suite.
    Verify(commands::VerifyArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<aumann::Error>() {
            return match e {
                aumann::Error::InvalidInput(_) | aumann::Error::NonZeroBaseline(_) | aumann::Error::NoClosedForm(_) => 2,
                aumann::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            if code == 2 {
                eprintln!("Run `aumann --help` for usage.");
            }
            ExitCode::from(code)
        }
    }
}

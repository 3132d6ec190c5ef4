//! `netbench`: generate benchmark queries, run agents on them and report
//! grouped success rates.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 generation
//! failure, 3 agent transport failure, 4 internal failure.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netbench::eval::GroupBy;

use commands::{cmd_generate, cmd_report, cmd_run, GenerateArgs, ReportArgs, RunArgs};

#[derive(Parser)]
#[command(name = "netbench", version, about = "Network-operations agent benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate queries with ground truth as JSON lines.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Run an agent over a query file. Rerunning resumes where it stopped.
    Run {
        #[arg(long)]
        queries: PathBuf,
        /// oracle, noop, random[:SEED], adversarial, exec:<path> or http:<url>.
        #[arg(long, env = "NETBENCH_AGENT")]
        agent: Option<String>,
        /// Output directory for records, transcripts and the manifest.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        max_turns: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Aggregate metric records into the CSV report.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = "none")]
        group_by: GroupBy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Cmd::Generate {
            config,
            out,
            seed,
            queries,
            parallelism,
        } => cmd_generate(GenerateArgs {
            config,
            out,
            seed,
            queries,
            parallelism,
        }),
        Cmd::Run {
            queries,
            agent,
            out,
            config,
            parallelism,
            max_turns,
            seed,
        } => cmd_run(RunArgs {
            queries,
            out,
            agent,
            config,
            parallelism,
            max_turns,
            seed,
        }),
        Cmd::Report { records, group_by, out } => cmd_report(ReportArgs { records, group_by, out }),
    };
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

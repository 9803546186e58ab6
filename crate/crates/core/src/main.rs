use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use netalloc::cli::{cmd_compare, cmd_simulate, CliError};
use netalloc::PolicyKind;

#[derive(Parser)]
#[command(name = "netalloc", version, about = "Controller-aware network allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one allocation policy over a scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = parse_policy)]
        policy: PolicyKind,
        /// Defaults to the scenario's master_seed (0 unless set).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run all four policies on the same scenario and plot the residuals.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse().map_err(|e: netalloc::Error| e.to_string())
}

fn report(err: &CliError) -> ExitCode {
    for line in err.diagnostics() {
        eprintln!("error: {line}");
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command_line = std::env::args().collect::<Vec<_>>().join(" ");
    match cli.command {
        Command::Simulate {
            scenario,
            policy,
            seed,
            out,
        } => match cmd_simulate(&scenario, policy, seed, &out, &command_line) {
            Ok(m) => {
                let s = &m.summary[0];
                println!(
                    "{}: mean residual {:.4}, reallocations {} -> {}",
                    s.policy,
                    s.mean_residual_after_prefix,
                    s.reallocations,
                    out.display()
                );
                ExitCode::SUCCESS
            }
            Err(e) => report(&e),
        },
        Command::Compare { scenario, seed, out } => match cmd_compare(&scenario, seed, &out, &command_line) {
            Ok((_, summary)) => {
                print!("{summary}");
                ExitCode::SUCCESS
            }
            Err(e) => report(&e),
        },
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowsim::{list_checks, simulate, verify, Invocation, SEED_ENV};

#[derive(Parser)]
#[command(
    name = "flowsim",
    version,
    about = "Simulate and verify flows of CBI-processes and Fleming-Viot flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write sample paths (replica, time, label, value) as CSV.
    Simulate(RunArgs),
    /// Run the check suites named in the scenario and write the report.
    Verify(RunArgs),
    /// Print the available check suites.
    ListChecks,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Override a scenario key (repeatable); replaces every occurrence.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output CSV path (defaults to the scenario `out` key, then stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replicas; results do not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
}

impl RunArgs {
    fn invocation(self) -> Invocation {
        Invocation {
            scenario: self.scenario,
            sets: self.sets,
            out: self.out,
            workers: self.workers.map(usize::from),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_seed = std::env::var(SEED_ENV).ok();
    let result = match cli.command {
        Command::ListChecks => {
            print!("{}", list_checks());
            return ExitCode::SUCCESS;
        }
        Command::Simulate(args) => simulate(&args.invocation(), env_seed.as_deref()).map(|()| true),
        Command::Verify(args) => verify(&args.invocation(), env_seed.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("flowsim: {e}");
            ExitCode::from(2)
        }
    }
}

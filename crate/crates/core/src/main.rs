use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ucsim::cli::{self, Criterion, RunConfig};
use ucsim::history::DEFAULT_SEARCH_BOUND;
use ucsim::{Comparator, ReplicaMode, SimConfig};

#[derive(Parser)]
#[command(name = "ucsim", version, about = "Simulate update-consistent replicas and check histories")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file and write the recorded history.
    Run {
        scenario: PathBuf,
        /// Output history file (standard output when absent).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// uc | ignore-updates
        #[arg(long, default_value = "uc")]
        mode: ReplicaMode,
        /// lamport-pid | pid-seq | pid-seq:<pid>,<pid>,...
        #[arg(long, default_value = "lamport-pid")]
        comparator: Comparator,
    },
    /// Classify a history as eventually and/or update consistent.
    Check {
        history: PathBuf,
        /// ec | uc | both
        #[arg(long, default_value = "both")]
        criterion: Criterion,
        /// Largest number of updates the update-consistency search accepts.
        #[arg(long, default_value_t = DEFAULT_SEARCH_BOUND)]
        bound: usize,
    },
    /// Classify the three bundled two-process set histories.
    DemoFigures,
    /// Run randomized scenarios and check every produced history.
    Batch {
        #[arg(long, default_value_t = 200)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        start_seed: u64,
        #[arg(long, default_value = "uc")]
        mode: ReplicaMode,
        #[arg(long, default_value = "lamport-pid")]
        comparator: Comparator,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut out = io::stdout().lock();
    let mut err = io::stderr().lock();
    let code = match args.command {
        Command::Run {
            scenario,
            output,
            seed,
            mode,
            comparator,
        } => {
            let cfg = RunConfig {
                scenario,
                output,
                seed,
                mode,
                comparator,
            };
            cli::cmd_run(&cfg, &mut out, &mut err)
        }
        Command::Check {
            history,
            criterion,
            bound,
        } => cli::cmd_check(&history, criterion, bound, &mut out, &mut err),
        Command::DemoFigures => cli::cmd_demo_figures(&mut out),
        Command::Batch {
            count,
            start_seed,
            mode,
            comparator,
        } => cli::cmd_batch(count, start_seed, &SimConfig { comparator, mode }, &mut out),
    };
    ExitCode::from(code)
}

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use simflash::config::ExperimentConfig;
use simflash::experiment::{run_experiment, sweep, SweepGrid};
use simflash::host::Mode;
use simflash::verify::{all_passed, run_suite, Suite};

#[derive(Parser)]
#[command(name = "simflash", version, about = "Flash search-offload simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment and print its report as JSON.
    Run {
        /// Experiment config, JSON.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's execution mode.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Override the workload seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for report, per-op, and event files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of seed-matched mode pairs and print one CSV row per cell.
    Sweep {
        /// Sweep grid, JSON.
        #[arg(long)]
        grid: PathBuf,
        /// Directory for the sweep CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-derive the pinned reference numbers and print each check.
    Oracle {
        /// Which suite to run.
        #[arg(long, value_enum)]
        check: Suite,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, mode, seed, out } => run_command(config, mode, seed, out),
        Command::Sweep { grid, out } => sweep_command(grid, out),
        Command::Oracle { check } => oracle_command(check),
    }
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}

fn run_command(
    path: PathBuf,
    mode: Option<Mode>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> ExitCode {
    let mut config = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit(2);
        }
    };
    if let Some(mode) = mode {
        config.mode = mode;
    }
    if let Some(seed) = seed {
        config.workload.seed = seed;
    }
    if let Some(out) = out {
        config.output = Some(out);
    }
    match run_experiment(&config) {
        Ok(report) => {
            println!("{}", report.to_json());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code())
        }
    }
}

fn sweep_command(path: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let grid = match SweepGrid::load(&path) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return exit(2);
        }
    };
    match sweep(&grid) {
        Ok(csv) => {
            if let Some(dir) = out {
                if let Err(e) = fs::create_dir_all(&dir)
                    .and_then(|()| fs::write(dir.join("sweep.csv"), &csv))
                {
                    eprintln!("error: could not persist outputs: {e}");
                    return exit(3);
                }
            }
            print!("{csv}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code())
        }
    }
}

fn oracle_command(suite: Suite) -> ExitCode {
    let checks = run_suite(suite);
    for c in &checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {}", c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} failed", checks.len(), failed);
    if all_passed(&checks) {
        ExitCode::SUCCESS
    } else {
        exit(3)
    }
}

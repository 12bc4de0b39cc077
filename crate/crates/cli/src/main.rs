use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levy_scale_cli::{load, run, Command, RunOptions};

#[derive(Parser)]
#[command(name = "scale", version, about = "Scale functions of spectrally negative Lévy processes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Compare against oracles (compute) or plug in true parameters (estimate).
    #[arg(long)]
    oracle: bool,
    /// Output directory; overrides output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Series approximations of W and Z on the x grid.
    Compute(Common),
    /// Simulate one observation set.
    Simulate(Common),
    /// Estimate from observation files.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Directory holding grid.csv, jumps.csv and obs.json.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Monte Carlo study over replications.
    Mc(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common, data) = match cli.command {
        Cmd::Compute(c) => (Command::Compute, c, None),
        Cmd::Simulate(c) => (Command::Simulate, c, None),
        Cmd::Estimate { common, data } => (Command::Estimate, common, data),
        Cmd::Mc(c) => (Command::Mc, c, None),
    };
    let opts = RunOptions { oracle: common.oracle, out: common.out, data };
    let outcome = load(&common.config).and_then(|loaded| run(cmd, &loaded, &opts));
    match outcome {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("scale {}: {e}", cmd.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

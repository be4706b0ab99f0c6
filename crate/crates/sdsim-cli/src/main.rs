use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use sdsim_cli::config::{resolve, RawArgs};
use sdsim_cli::{commands, CliError};

#[derive(Parser)]
#[command(
    name = "sdsim",
    version,
    about = "Analytical simulator and planner for a systolic-array diffusion accelerator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// MAC, parameter, and footprint breakdown plus the depth cost table
    Workload(CommonArgs),
    /// Search sampling plans and rank the feasible set by MAC reduction
    Plan(CommonArgs),
    /// Simulate one configuration, optionally under a sampling plan
    Simulate(CommonArgs),
    /// Simulate the optimization ladder and emit speedup tables
    Ablate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Built-in model: sd14, sd21base, or sdxl
    #[arg(long)]
    model: Option<String>,
    /// Topology JSON file (alternative to --model)
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Shift-score trace CSV; derives d_star and outliers
    #[arg(long)]
    trace: Option<PathBuf>,
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed echoed into reports for provenance
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override a config key, e.g. --set hardware.sa_h=16 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl CommonArgs {
    fn raw(&self) -> RawArgs {
        RawArgs {
            model: self.model.clone(),
            topology: self.topology.clone(),
            trace: self.trace.clone(),
            config: self.config.clone(),
            out: self.out.clone(),
            seed: self.seed,
            set: self.set.clone(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Workload(args) => commands::cmd_workload(&resolve(&args.raw())?),
        Command::Plan(args) => commands::cmd_plan(&resolve(&args.raw())?),
        Command::Simulate(args) => commands::cmd_simulate(&resolve(&args.raw())?),
        Command::Ablate(args) => commands::cmd_ablate(&resolve(&args.raw())?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

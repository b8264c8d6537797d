use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meg_core::config::{load_scenario, parse_protocol_list, ScenarioConfig};
use meg_core::report::{cmd_run, cmd_sweep, cmd_table, cmd_validate, SweepParam};
use meg_core::Result;

/// Mobile edge generation simulator.
#[derive(Parser)]
#[command(name = "meg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated protocol list, e.g. CENTRAL,CIAG.
    #[arg(long)]
    protocols: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial and write metrics.csv, overhead.csv and transcript.json.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Repeat the scenario over a list of parameter values and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// One of snr_db, es_count, d, k, seed_bits.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Print the per-protocol overhead table; with --out also write table.csv.
    Table {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file and list the resolved plans.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut config = load_scenario(&common.scenario)?.config;
    for applied in config.apply_env(std::env::vars())? {
        log::info!("environment override: {applied}");
    }
    if let Some(seed) = common.seed {
        config.reseed(seed);
    }
    if let Some(list) = &common.protocols {
        config.protocols = parse_protocol_list(list)?;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, out } => {
            for path in cmd_run(&load(&common)?, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Sweep {
            common,
            out,
            param,
            values,
        } => {
            for path in cmd_sweep(&load(&common)?, param, &values, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Table { common, out } => {
            let (text, written) = cmd_table(&load(&common)?, out.as_deref())?;
            print!("{text}");
            for path in written {
                println!("{}", path.display());
            }
        }
        Command::Validate { common } => print!("{}", cmd_validate(&load(&common)?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

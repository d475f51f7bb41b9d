//! `plantmf`: batch experiments for the plant-growth mean-field model.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for
//! numerical failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{parse_grid, parse_n_list, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<plantmf::Error> for CliError {
    fn from(e: plantmf::Error) -> Self {
        use plantmf::Error as E;
        match e {
            E::InvalidParams(_) | E::TooFewIndividuals { .. } | E::Serialization(_) | E::TooLarge { .. } | E::Empty(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "plantmf", version, about = "Plant growth with competition: populations, mean-field flow, convergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a finite population and write its trajectory.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Population size.
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the piecewise-constant potential model of the mean-field flow.
    TrainMeanfield {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distances between finite populations and the mean-field model.
    Converge {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated, strictly increasing population sizes.
        #[arg(long)]
        n_list: Option<String>,
        /// Compare each population with itself instead of a model.
        #[arg(long)]
        self_compare: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Final-time mean-field flow of the mean plant on a position grid.
    PotentialDump {
        #[arg(long)]
        model: PathBuf,
        /// `x1min,x1max,x2min,x2max,steps`.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Simulate { config, n, seed, out } => {
            commands::simulate(ExperimentConfig::load(config.as_deref())?, n, seed, &out)
        }
        Command::TrainMeanfield { config, out } => {
            commands::train_meanfield(ExperimentConfig::load(config.as_deref())?, &out)
        }
        Command::Converge {
            config,
            model,
            n_list,
            self_compare,
            out,
        } => {
            let cfg = ExperimentConfig::load(config.as_deref())?;
            let n_list = n_list.as_deref().map(parse_n_list).transpose()?;
            commands::converge(cfg, model.as_deref(), self_compare, n_list, &out)
        }
        Command::PotentialDump { model, grid, out } => commands::potential_dump(&model, &parse_grid(&grid)?, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

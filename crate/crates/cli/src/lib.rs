//! Command implementations behind the `coevgan` binary.

pub mod compare;
pub mod inspect;
pub mod train;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "coevgan", version, about = "Spatially distributed coevolutionary GAN training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a population and write metrics, checkpoint and mixture to a directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's execution mode.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Tabulate timing and quality of finished runs; the first run is the reference.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
    },
    /// Print the contents of a checkpoint file.
    InspectCheckpoint { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Seq,
    Async,
}

impl From<Mode> for coevgan::ExecutionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Seq => coevgan::ExecutionMode::SequentialDeterministic,
            Mode::Async => coevgan::ExecutionMode::ParallelAsync,
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, out, seed, mode } => {
            let summary = train::cmd_train(&config, &out, seed, mode.map(Into::into))?;
            println!(
                "run {} finished {} generations on {} in {:.1}s; best cell {} (mixture fitness {:.4})",
                summary.run_id,
                summary.generations,
                summary.topology,
                summary.total_wall_ms as f64 / 1000.0,
                summary.best_cell,
                summary.mixture_fitness
            );
            println!("outputs written to {}", out.display());
        }
        Command::Compare { runs } => {
            let report = compare::cmd_compare(&runs)?;
            print!("{}", report.render());
        }
        Command::InspectCheckpoint { file } => {
            print!("{}", inspect::cmd_inspect(&file)?);
        }
    }
    Ok(())
}

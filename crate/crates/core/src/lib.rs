//! Spatially distributed coevolutionary GAN training.
//!
//! Cells on a ring or toroidal grid each hold a generator/discriminator pair.
//! Every generation a cell copies its neighbors' centers, coevolves the
//! resulting sub-population and keeps the best pair. After training, mixture
//! weights over each neighborhood's generators are tuned with a (1+1)-ES.

pub mod checkpoint;
pub mod coevolution;
pub mod config;
pub mod data;
pub mod error;
pub mod gan;
pub mod matrix;
pub mod metrics;
pub mod mixture;
pub mod nn;
pub mod orchestrator;
pub mod records;
pub mod seed;
pub mod topology;

pub use checkpoint::{checkpoint_load, checkpoint_save};
pub use config::{parse_config, ExecutionMode, ExperimentConfig, StopCondition};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use orchestrator::{copy_neighbours, genome_l2_matrix, run_training, Experiment, Population};
pub use records::MetricsRecord;
pub use topology::{CellId, Topology};

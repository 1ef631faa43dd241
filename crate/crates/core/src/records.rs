//! Per-cell, per-generation metrics records.

use serde::{Deserialize, Serialize};

/// Bumped whenever a field is added, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// One line of a run's metrics log.
///
/// Generation 0 holds the records of the initialized population; generation
/// `k` holds the centers after the k-th coevolution step. `wall_clock_ms` is
/// milliseconds since the run started and is only recorded in parallel mode,
/// so that sequential logs stay byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub schema: u32,
    pub run_id: String,
    pub generation: u64,
    pub cell: usize,
    pub wall_clock_ms: Option<u64>,
    /// Mean fitness of the center generator against its neighborhood's discriminators.
    pub best_fitness: f64,
    /// Fréchet score of the center generator against a held-out real sample.
    pub frechet: Option<f64>,
    /// TVD of the center generator's mode histogram against the uniform one.
    pub tvd: Option<f64>,
    /// Mean pairwise L2 distance between all cells' generators.
    pub mean_l2_diversity: f64,
    /// Learning rate of the center generator.
    pub learning_rate: f64,
}

impl MetricsRecord {
    pub fn to_json_line(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }
}

#![allow(dead_code)]

use std::sync::Arc;

use coevgan::coevolution::{FitnessMatrix, PairEvaluator};
use coevgan::config::parse_config_str;
use coevgan::gan::{Genome, LossConfig};
use coevgan::matrix::Matrix;
use coevgan::{Experiment, ExperimentConfig, Population, Topology};

pub const DESK_TOML: &str = include_str!("../../../../configs/desk.toml");

/// The desk benchmark config with the given seed; the environment is ignored.
pub fn desk_config(seed: u64) -> ExperimentConfig {
    let mut cfg = parse_config_str(DESK_TOML, std::iter::empty()).expect("desk config parses");
    cfg.seed = seed;
    cfg
}

/// A config small enough to train in milliseconds.
pub fn tiny_config(topology: Topology, generations: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { seed: 21, generations, topology, ..Default::default() };
    cfg.network.latent_dim = 2;
    cfg.network.generator_hidden = vec![4];
    cfg.network.discriminator_hidden = vec![4];
    cfg.data.train_samples = 40;
    cfg.data.batch_size = 20;
    cfg.metrics.probe_samples = 40;
    cfg.mixture.iterations = 5;
    cfg.mixture.samples = 40;
    cfg
}

/// Learning rate that tags the marker genome. Learning rates are frozen in
/// marker runs, so the tag survives training and copying.
pub const MARKER_LR: f64 = 7.77e-4;

pub fn is_marker(g: &Genome) -> bool {
    g.learning_rate == MARKER_LR
}

/// Scores marker generators lowest and marker discriminators highest, so a
/// marker always wins selection and replacement.
pub struct MarkerEvaluator;

impl PairEvaluator for MarkerEvaluator {
    fn evaluate(
        &self,
        generators: &[Genome],
        discriminators: &[Genome],
        _real: &Matrix,
        _latent: &Matrix,
        _cfg: &LossConfig,
    ) -> coevgan::Result<FitnessMatrix> {
        Ok(FitnessMatrix::from_fn(generators.len(), discriminators.len(), |g, d| {
            let gv = if is_marker(&generators[g]) { -1.0 } else { 0.0 };
            let dv = if is_marker(&discriminators[d]) { 1.0 } else { 0.0 };
            gv + dv
        }))
    }
}

pub fn marker_experiment(topology: Topology) -> Experiment {
    let mut cfg = tiny_config(topology, 0);
    cfg.coev.mutation_probability = 0.0;
    Experiment::new(cfg).expect("valid config").with_evaluator(Arc::new(MarkerEvaluator))
}

pub fn plant_marker(pop: &mut Population, cell: usize) {
    let center = &mut pop.cells[cell].center;
    center.generator.learning_rate = MARKER_LR;
    center.discriminator.learning_rate = MARKER_LR;
}

pub fn marked_cells(pop: &Population) -> Vec<usize> {
    (0..pop.cells.len()).filter(|&c| is_marker(&pop.cells[c].center.generator)).collect()
}

/// Sequential generations until every center carries the marker planted at
/// `origin`, or `None` if that does not happen within `limit` generations.
pub fn takeover_generations(topology: Topology, origin: usize, limit: usize) -> Option<usize> {
    let exp = marker_experiment(topology);
    let mut pop = exp.initialize().expect("initialize");
    plant_marker(&mut pop, origin);
    for g in 1..=limit {
        pop = exp.run_generation(pop).expect("generation").0;
        if marked_cells(&pop).len() == pop.cells.len() {
            return Some(g);
        }
    }
    None
}

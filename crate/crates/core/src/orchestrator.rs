//! Spatial population lifecycle: initialization, migration, per-cell training
//! in sequential or parallel mode, and the terminal mixture step.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::seq::index;
use sha2::{Digest, Sha256};

use crate::coevolution::{coev_generation, CellOptimizers, GanEvaluator, GenerationData, Neighborhood, PairEvaluator};
use crate::config::{ExecutionMode, ExperimentConfig};
use crate::data::{batch_iterator, sample_latent, sample_real, LatentSpec, Target};
use crate::error::{Error, Result};
use crate::gan::{evaluate_pair, GanPair, Genome};
use crate::matrix::Matrix;
use crate::metrics::{frechet_score, mode_histogram, DiversityMatrix};
use crate::mixture::{es_one_plus_one, FrechetMixtureFitness, MixtureModel};
use crate::nn::Network;
use crate::records::{MetricsRecord, SCHEMA_VERSION};
use crate::seed::{self, Stream};
use crate::topology::{CellId, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub center: GanPair,
    pub optimizers: CellOptimizers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub topology: Topology,
    pub cells: Vec<Cell>,
    /// Completed generations.
    pub generation: u64,
}

impl Population {
    pub fn generators(&self) -> impl Iterator<Item = &Genome> {
        self.cells.iter().map(|c| &c.center.generator)
    }
}

/// Neighborhood of `c` built from value copies of the current centers:
/// entry 0 is `c` itself, the rest follow the topology's neighbor order.
pub fn copy_neighbours(pop: &Population, topology: &Topology, c: CellId) -> Result<Neighborhood> {
    let ids = topology.neighbors(c)?;
    if topology.population_size() != pop.cells.len() {
        return Err(Error::Topology("population does not match the topology".into()));
    }
    let pairs: Vec<&GanPair> = ids.iter().map(|id| &pop.cells[id.0].center).collect();
    Neighborhood::new(
        pairs.iter().map(|p| p.generator.clone()).collect(),
        pairs.iter().map(|p| p.discriminator.clone()).collect(),
    )
}

/// Pairwise L2 distances between the cells' generators.
pub fn genome_l2_matrix(pop: &Population) -> Result<DiversityMatrix> {
    let params: Vec<&[f64]> = pop.generators().map(|g| g.network.params()).collect();
    DiversityMatrix::from_params(&params)
}

/// The best cell's mixture, chosen by mixture fitness over all cells.
#[derive(Debug, Clone)]
pub struct MixtureSelection {
    pub best_cell: usize,
    pub model: MixtureModel,
    pub fitness: f64,
    /// Optimized mixture fitness of every cell's neighborhood.
    pub cell_fitness: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub population: Population,
    pub mixture: MixtureSelection,
    pub records: Vec<MetricsRecord>,
    pub elapsed: Duration,
}

/// Everything a run needs that stays fixed across generations.
pub struct Experiment {
    cfg: ExperimentConfig,
    target: Target,
    train_set: Matrix,
    probe_latent: Matrix,
    probe_real: Matrix,
    run_id: String,
    evaluator: Arc<dyn PairEvaluator>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let target = cfg.data.load()?;
        let train_set = match &target {
            Target::Mixture { .. } => {
                sample_real(&target, cfg.data.train_samples, &mut seed::rng(cfg.seed, Stream::Dataset, 0, 0))?
            }
            Target::Empirical(data) => data.clone(),
        };
        let latent = LatentSpec { dim: cfg.network.latent_dim };
        let n = cfg.metrics.probe_samples;
        let probe_latent = sample_latent(latent, n, &mut seed::rng(cfg.seed, Stream::MetricsProbe, 0, 0));
        let probe_real = sample_real(&target, n, &mut seed::rng(cfg.seed, Stream::MetricsProbe, 1, 0))?;
        let digest = Sha256::digest(cfg.to_toml()?.as_bytes());
        let run_id = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { cfg, target, train_set, probe_latent, probe_real, run_id, evaluator: Arc::new(GanEvaluator) })
    }

    /// Replaces the pair evaluator used for selection and replacement.
    pub fn with_evaluator(mut self, evaluator: Arc<dyn PairEvaluator>) -> Self {
        self.evaluator = evaluator;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn initialize(&self) -> Result<Population> {
        let cfg = &self.cfg;
        let dim = self.target.dim();
        let g_specs = cfg.network.generator_specs(dim);
        let d_specs = cfg.network.discriminator_specs(dim);
        let lr = cfg.coev.initial_learning_rate;
        let cells = cfg
            .topology
            .cells()
            .map(|c| {
                let cs = seed::cell_seed(cfg.seed, c.0);
                let g = Network::init_with_rng(g_specs.clone(), &mut seed::rng(cs, Stream::GeneratorInit, 0, 0))?;
                let d = Network::init_with_rng(d_specs.clone(), &mut seed::rng(cs, Stream::DiscriminatorInit, 0, 0))?;
                let optimizers = CellOptimizers::new(g.param_count(), d.param_count());
                let center = GanPair::new(Genome::new(g, lr)?, Genome::new(d, lr)?)?;
                Ok(Cell { center, optimizers })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Population { topology: cfg.topology, cells, generation: 0 })
    }

    /// One coevolution step of cell `c` reading the given neighborhood.
    fn step_cell(&self, n: Neighborhood, c: usize, generation: u64, optimizers: &mut CellOptimizers) -> Result<(GanPair, f64)> {
        let mut rng = seed::rng(self.cfg.seed, Stream::Generation, c as u64, generation);
        let rows = self.train_set.rows();
        let idx = index::sample(&mut rng, rows, self.cfg.data.batch_size.min(rows)).into_vec();
        let eval_batch = self.train_set.select_rows(&idx);
        let batches: Vec<Matrix> = batch_iterator(&self.train_set, self.cfg.data.batch_size, &mut rng)?.collect();
        let data = GenerationData { eval_batch: &eval_batch, batches: &batches };
        let (next, report) =
            coev_generation(n, data, &self.cfg.coev, &self.cfg.loss, optimizers, self.evaluator.as_ref(), &mut rng)?;
        let Neighborhood { mut generators, mut discriminators } = next;
        let center = GanPair::new(generators.swap_remove(0), discriminators.swap_remove(0))?;
        Ok((center, report.best_generator_fitness))
    }

    /// One synchronous generation: every cell reads the generation-start
    /// snapshot, cells run in index order. Returns each new center's fitness.
    pub fn run_generation(&self, pop: Population) -> Result<(Population, Vec<f64>)> {
        let generation = pop.generation + 1;
        let mut cells = Vec::with_capacity(pop.cells.len());
        let mut fitness = Vec::with_capacity(pop.cells.len());
        for c in pop.topology.cells() {
            let n = copy_neighbours(&pop, &pop.topology, c)?;
            let mut optimizers = pop.cells[c.0].optimizers.clone();
            let (center, f) = self.step_cell(n, c.0, generation, &mut optimizers)?;
            cells.push(Cell { center, optimizers });
            fitness.push(f);
        }
        Ok((Population { topology: pop.topology, cells, generation }, fitness))
    }

    fn record(&self, generation: u64, cell: usize, g: &Genome, fitness: f64, diversity: f64, wall: Option<Duration>) -> Result<MetricsRecord> {
        let samples = g.network.forward_batch(&self.probe_latent)?;
        let frechet = if samples.rows() > samples.cols() {
            match frechet_score(&samples, &self.probe_real) {
                Ok(v) => Some(v),
                Err(Error::DegenerateCovariance(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let tvd = match (self.target.modes(), self.target.sigma()) {
            (Some(modes), Some(sigma)) => {
                let h = mode_histogram(&samples, modes, self.cfg.metrics.quality_threshold_sigmas * sigma)?;
                Some(h.tvd_to_uniform()?)
            }
            _ => None,
        };
        Ok(MetricsRecord {
            schema: SCHEMA_VERSION,
            run_id: self.run_id.clone(),
            generation,
            cell,
            wall_clock_ms: wall.map(|d| d.as_millis() as u64),
            best_fitness: fitness,
            frechet,
            tvd,
            mean_l2_diversity: diversity,
            learning_rate: g.learning_rate,
        })
    }

    /// Records of the freshly initialized population (generation 0).
    pub fn initial_records(&self, pop: &Population, wall: Option<Duration>) -> Result<Vec<MetricsRecord>> {
        let diversity = genome_l2_matrix(pop)?.mean_pairwise();
        pop.cells
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let p = &cell.center;
                let f = evaluate_pair(&p.generator, &p.discriminator, &self.probe_real, &self.probe_latent, &self.cfg.loss)?;
                self.record(0, c, &p.generator, f, diversity, wall)
            })
            .collect()
    }

    fn should_continue(&self, completed: u64, start: Instant) -> bool {
        if completed >= self.cfg.generations {
            return false;
        }
        match self.cfg.stop.budget() {
            Some(budget) => start.elapsed() < budget,
            None => true,
        }
    }

    /// Trains `pop` until the stop condition, streaming one record per cell
    /// per generation into `sink`. A fresh population also gets its
    /// generation-0 records.
    pub fn train(&self, pop: Population, sink: &mut dyn FnMut(MetricsRecord) -> Result<()>) -> Result<Population> {
        if pop.cells.len() != self.cfg.topology.population_size() || pop.topology != self.cfg.topology {
            return Err(Error::Topology("population does not match the configured topology".into()));
        }
        let start = Instant::now();
        let timed = self.cfg.mode == ExecutionMode::ParallelAsync;
        if pop.generation == 0 {
            for r in self.initial_records(&pop, timed.then(|| start.elapsed()))? {
                sink(r)?;
            }
        }
        match self.cfg.mode {
            ExecutionMode::SequentialDeterministic => self.train_sequential(pop, start, sink),
            ExecutionMode::ParallelAsync => self.train_parallel(pop, start, sink),
        }
    }

    fn train_sequential(&self, mut pop: Population, start: Instant, sink: &mut dyn FnMut(MetricsRecord) -> Result<()>) -> Result<Population> {
        while self.should_continue(pop.generation, start) {
            let (next, fitness) = self.run_generation(pop)?;
            pop = next;
            let diversity = genome_l2_matrix(&pop)?.mean_pairwise();
            for (c, cell) in pop.cells.iter().enumerate() {
                sink(self.record(pop.generation, c, &cell.center.generator, fitness[c], diversity, None)?)?;
            }
        }
        Ok(pop)
    }

    /// One worker per cell. Workers publish immutable center snapshots into
    /// per-cell mailboxes and read whatever their neighbors last published.
    fn train_parallel(&self, pop: Population, start: Instant, sink: &mut dyn FnMut(MetricsRecord) -> Result<()>) -> Result<Population> {
        let topology = pop.topology;
        let first = pop.generation;
        let mailboxes: Vec<Mutex<Arc<GanPair>>> =
            pop.cells.iter().map(|c| Mutex::new(Arc::new(c.center.clone()))).collect();
        let neighbor_ids: Vec<Vec<CellId>> = topology.cells().map(|c| topology.neighbors(c)).collect::<Result<_>>()?;
        let abort = AtomicBool::new(false);
        let (tx, rx) = mpsc::channel::<MetricsRecord>();

        let boxes = &mailboxes;
        let snapshot = |id: usize| -> Arc<GanPair> { Arc::clone(&boxes[id].lock().expect("mailbox poisoned")) };

        let results: Vec<Result<(CellOptimizers, u64)>> = std::thread::scope(|s| {
            let handles: Vec<_> = pop
                .cells
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    let tx = tx.clone();
                    let mut optimizers = cell.optimizers.clone();
                    let (ids, abort, snapshot) = (&neighbor_ids[c], &abort, &snapshot);
                    s.spawn(move || -> Result<(CellOptimizers, u64)> {
                        let mut completed = first;
                        let outcome = (|| {
                            while !abort.load(Ordering::Relaxed) && self.should_continue(completed, start) {
                                let generation = completed + 1;
                                let pairs: Vec<Arc<GanPair>> = ids.iter().map(|id| snapshot(id.0)).collect();
                                let n = Neighborhood::new(
                                    pairs.iter().map(|p| p.generator.clone()).collect(),
                                    pairs.iter().map(|p| p.discriminator.clone()).collect(),
                                )?;
                                drop(pairs);
                                let (center, fitness) = self.step_cell(n, c, generation, &mut optimizers)?;
                                let center = Arc::new(center);
                                *boxes[c].lock().expect("mailbox poisoned") = Arc::clone(&center);
                                completed = generation;
                                let all: Vec<Arc<GanPair>> = (0..boxes.len()).map(snapshot).collect();
                                let params: Vec<&[f64]> = all.iter().map(|p| p.generator.network.params()).collect();
                                let diversity = DiversityMatrix::from_params(&params)?.mean_pairwise();
                                let wall = Some(start.elapsed());
                                let r = self.record(generation, c, &center.generator, fitness, diversity, wall)?;
                                // the receiver only hangs up after an error elsewhere
                                let _ = tx.send(r);
                            }
                            Ok(())
                        })();
                        if outcome.is_err() {
                            abort.store(true, Ordering::Relaxed);
                        }
                        outcome.map(|()| (optimizers, completed))
                    })
                })
                .collect();
            drop(tx);
            let mut sink_error = None;
            for r in rx {
                if sink_error.is_none() {
                    if let Err(e) = sink(r) {
                        abort.store(true, Ordering::Relaxed);
                        sink_error = Some(e);
                    }
                }
            }
            let mut results: Vec<_> = handles.into_iter().map(|h| h.join().expect("cell worker panicked")).collect();
            if let Some(e) = sink_error {
                results.push(Err(e));
            }
            results
        });

        let mut optimizers = Vec::with_capacity(results.len());
        let mut generation = u64::MAX;
        for r in results {
            let (o, g) = r?;
            generation = generation.min(g);
            optimizers.push(o);
        }
        let cells = mailboxes
            .into_iter()
            .zip(optimizers)
            .map(|(m, optimizers)| {
                let center = Arc::unwrap_or_clone(m.into_inner().expect("mailbox poisoned"));
                Cell { center, optimizers }
            })
            .collect();
        // cells may finish a different number of generations under a wall-clock stop
        Ok(Population { topology, cells, generation })
    }

    /// Optimizes mixture weights over every cell's final neighborhood and
    /// returns the cell with the lowest mixture fitness.
    pub fn select_mixture(&self, pop: &Population) -> Result<MixtureSelection> {
        let m = &self.cfg.mixture;
        let reference = sample_real(&self.target, m.samples, &mut seed::rng(self.cfg.seed, Stream::HeldOut, 0, 0))?;
        let mut best: Option<(usize, MixtureModel, f64)> = None;
        let mut cell_fitness = Vec::with_capacity(pop.cells.len());
        for c in pop.topology.cells() {
            let n = copy_neighbours(pop, &pop.topology, c)?;
            let fit = FrechetMixtureFitness::new(
                &n.generators,
                reference.clone(),
                m.samples,
                &mut seed::rng(self.cfg.seed, Stream::Mixture, c.0 as u64, 0),
            )?;
            let model = MixtureModel::uniform(n.generators)?;
            let out = es_one_plus_one(
                model,
                |w| fit.score(w),
                m.iterations,
                m.initial_sigma,
                &mut seed::rng(self.cfg.seed, Stream::Mixture, c.0 as u64, 1),
            )?;
            cell_fitness.push(out.fitness);
            if best.as_ref().is_none_or(|b| out.fitness < b.2) {
                best = Some((c.0, out.model, out.fitness));
            }
        }
        let (best_cell, model, fitness) = best.expect("populations have at least one cell");
        Ok(MixtureSelection { best_cell, model, fitness, cell_fitness })
    }

    /// Initializes, trains and selects the mixture.
    pub fn run(&self, sink: &mut dyn FnMut(MetricsRecord) -> Result<()>) -> Result<(Population, MixtureSelection)> {
        let pop = self.initialize()?;
        self.resume(pop, sink)
    }

    /// Continues training from `pop` (e.g. a loaded checkpoint) and selects the mixture.
    pub fn resume(&self, pop: Population, sink: &mut dyn FnMut(MetricsRecord) -> Result<()>) -> Result<(Population, MixtureSelection)> {
        let pop = self.train(pop, sink)?;
        let mixture = self.select_mixture(&pop)?;
        Ok((pop, mixture))
    }
}

/// Runs a whole experiment, keeping the metrics log in memory.
pub fn run_training(cfg: ExperimentConfig) -> Result<TrainingOutcome> {
    let start = Instant::now();
    let exp = Experiment::new(cfg)?;
    let mut records = Vec::new();
    let (population, mixture) = exp.run(&mut |r| {
        records.push(r);
        Ok(())
    })?;
    Ok(TrainingOutcome { population, mixture, records, elapsed: start.elapsed() })
}

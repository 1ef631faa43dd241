//! One generation of coevolutionary GAN training inside a single cell.
//!
//! A neighborhood holds `s` generators and `s` discriminators with the
//! cell's own center at index 0. A generation evaluates every pairing,
//! picks parents by tournament, trains them with gradient steps against
//! random opponents while mutating their learning rates, inserts the
//! offspring, drops the worst generator and the worst discriminator, and
//! moves the best of each population to the center.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{sample_latent, LatentSpec};
use crate::error::{Error, Result};
use crate::gan::{self, Genome, LossConfig};
use crate::matrix::Matrix;
use crate::nn::AdamState;

pub const MIN_LEARNING_RATE: f64 = 1e-8;
pub const MAX_LEARNING_RATE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub generators: Vec<Genome>,
    pub discriminators: Vec<Genome>,
}

impl Neighborhood {
    pub fn new(generators: Vec<Genome>, discriminators: Vec<Genome>) -> Result<Self> {
        if generators.is_empty() || generators.len() != discriminators.len() {
            return Err(Error::InvalidArgument(format!(
                "neighborhood needs equal, nonzero population sizes ({} generators, {} discriminators)",
                generators.len(),
                discriminators.len()
            )));
        }
        Ok(Self { generators, discriminators })
    }

    pub fn size(&self) -> usize {
        self.generators.len()
    }

    pub fn center_generator(&self) -> &Genome {
        &self.generators[0]
    }

    pub fn center_discriminator(&self) -> &Genome {
        &self.discriminators[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoevParams {
    pub tournament_size: usize,
    pub mutation_probability: f64,
    /// Standard deviation of the additive Gaussian learning-rate mutation.
    pub mutation_scale: f64,
    /// Train the discriminator on every `disc_skip`-th batch.
    pub disc_skip: usize,
    pub initial_learning_rate: f64,
}

impl Default for CoevParams {
    fn default() -> Self {
        Self {
            tournament_size: 2,
            mutation_probability: 0.5,
            mutation_scale: 0.0001,
            disc_skip: 1,
            initial_learning_rate: 0.0002,
        }
    }
}

impl CoevParams {
    pub fn validate(&self, subpopulation_size: usize) -> Result<()> {
        if self.tournament_size == 0 {
            return Err(Error::Config("coev.tournament_size must be >= 1".into()));
        }
        if self.tournament_size > subpopulation_size {
            return Err(Error::Config(format!(
                "coev.tournament_size {} exceeds the sub-population size s = {subpopulation_size}",
                self.tournament_size
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_probability) {
            return Err(Error::Config(format!(
                "coev.mutation_probability must lie in [0, 1], got {}",
                self.mutation_probability
            )));
        }
        if !(self.mutation_scale >= 0.0 && self.mutation_scale.is_finite()) {
            return Err(Error::Config("coev.mutation_scale must be finite and >= 0".into()));
        }
        if self.disc_skip == 0 {
            return Err(Error::Config("coev.disc_skip must be >= 1".into()));
        }
        if !(MIN_LEARNING_RATE..=MAX_LEARNING_RATE).contains(&self.initial_learning_rate) {
            return Err(Error::Config(format!(
                "coev.initial_learning_rate must lie in [{MIN_LEARNING_RATE}, {MAX_LEARNING_RATE}]"
            )));
        }
        Ok(())
    }
}

/// All-vs-all fitness table: entry `(i, j)` is `L(g_i, d_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessMatrix {
    generators: usize,
    discriminators: usize,
    values: Vec<f64>,
}

impl FitnessMatrix {
    pub fn from_fn(generators: usize, discriminators: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(generators * discriminators);
        for i in 0..generators {
            for j in 0..discriminators {
                values.push(f(i, j));
            }
        }
        Self { generators, discriminators, values }
    }

    pub fn get(&self, g: usize, d: usize) -> f64 {
        self.values[g * self.discriminators + d]
    }

    pub fn generators(&self) -> usize {
        self.generators
    }

    pub fn discriminators(&self) -> usize {
        self.discriminators
    }

    /// Row means: a generator's aggregate fitness, lower is better.
    pub fn generator_scores(&self) -> Vec<f64> {
        (0..self.generators)
            .map(|i| (0..self.discriminators).map(|j| self.get(i, j)).sum::<f64>() / self.discriminators as f64)
            .collect()
    }

    /// Column means: a discriminator's aggregate fitness, higher is better.
    pub fn discriminator_scores(&self) -> Vec<f64> {
        (0..self.discriminators)
            .map(|j| (0..self.generators).map(|i| self.get(i, j)).sum::<f64>() / self.generators as f64)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Produces the all-vs-all fitness table of a neighborhood.
pub trait PairEvaluator: Send + Sync {
    fn evaluate(
        &self,
        generators: &[Genome],
        discriminators: &[Genome],
        real: &Matrix,
        latent: &Matrix,
        cfg: &LossConfig,
    ) -> Result<FitnessMatrix>;
}

/// Evaluates pairs with the GAN objective, reusing each generator's fake
/// batch and each discriminator's verdict on the real batch across pairings.
#[derive(Debug, Clone, Copy, Default)]
pub struct GanEvaluator;

impl PairEvaluator for GanEvaluator {
    fn evaluate(
        &self,
        generators: &[Genome],
        discriminators: &[Genome],
        real: &Matrix,
        latent: &Matrix,
        cfg: &LossConfig,
    ) -> Result<FitnessMatrix> {
        if real.rows() == 0 || latent.rows() == 0 {
            return Err(Error::InvalidArgument("evaluation batches must be nonempty".into()));
        }
        for g in generators {
            for d in discriminators {
                if g.network.output_dim() != d.network.input_dim() {
                    return Err(Error::Dimension("generator/discriminator data dims differ".into()));
                }
            }
        }
        let fakes = generators
            .iter()
            .map(|g| g.network.forward_batch(latent))
            .collect::<Result<Vec<_>>>()?;
        let on_real = discriminators
            .iter()
            .map(|d| d.network.forward_batch(real))
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(generators.len() * discriminators.len());
        for fake in &fakes {
            for (d, r) in discriminators.iter().zip(&on_real) {
                let on_fake = d.network.forward_batch(fake)?;
                values.push(gan::gan_loss(r.as_slice(), on_fake.as_slice(), cfg)?);
            }
        }
        let f = FitnessMatrix { generators: generators.len(), discriminators: discriminators.len(), values };
        if !f.is_finite() {
            return Err(Error::NonFinite("fitness matrix"));
        }
        Ok(f)
    }
}

pub fn evaluate_all_pairs(n: &Neighborhood, real: &Matrix, latent: &Matrix, cfg: &LossConfig) -> Result<FitnessMatrix> {
    GanEvaluator.evaluate(&n.generators, &n.discriminators, real, latent, cfg)
}

fn tournament<R: Rng + ?Sized>(scores: &[f64], tau: usize, better: impl Fn(f64, f64) -> bool, rng: &mut R) -> usize {
    let mut picks = index::sample(rng, scores.len(), tau).into_vec();
    picks.sort_unstable();
    let mut best = picks[0];
    for &i in &picks[1..] {
        if better(scores[i], scores[best]) {
            best = i;
        }
    }
    best
}

/// Independent size-`tau` tournaments over generators (lowest row mean wins)
/// and discriminators (highest column mean wins). Ties go to the lowest index.
pub fn tournament_select<R: Rng + ?Sized>(f: &FitnessMatrix, tau: usize, rng: &mut R) -> Result<(usize, usize)> {
    if tau == 0 || tau > f.generators() || tau > f.discriminators() {
        return Err(Error::InvalidArgument(format!(
            "tournament size {tau} must lie in [1, {}]",
            f.generators().min(f.discriminators())
        )));
    }
    let g = tournament(&f.generator_scores(), tau, |a, b| a < b, rng);
    let d = tournament(&f.discriminator_scores(), tau, |a, b| a > b, rng);
    Ok((g, d))
}

/// With probability `beta`, adds `N(0, scale^2)` and clamps into the valid range.
pub fn mutate_learning_rate<R: Rng + ?Sized>(lr: f64, beta: f64, scale: f64, rng: &mut R) -> f64 {
    if beta <= 0.0 || !rng.random_bool(beta.min(1.0)) {
        return lr;
    }
    if scale == 0.0 {
        return lr;
    }
    let noise = Normal::new(0.0, scale).expect("scale is finite and positive").sample(rng);
    (lr + noise).clamp(MIN_LEARNING_RATE, MAX_LEARNING_RATE)
}

/// Adam moments owned by a cell and applied to whichever parents it trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOptimizers {
    pub generator: AdamState,
    pub discriminator: AdamState,
}

impl CellOptimizers {
    pub fn new(generator_params: usize, discriminator_params: usize) -> Self {
        Self { generator: AdamState::new(generator_params), discriminator: AdamState::new(discriminator_params) }
    }
}

/// Data consumed by one generation: the evaluation batch and the training
/// batches of one pass over the dataset.
#[derive(Debug, Clone, Copy)]
pub struct GenerationData<'a> {
    pub eval_batch: &'a Matrix,
    pub batches: &'a [Matrix],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    /// Row mean of the new center generator in the final evaluation.
    pub best_generator_fitness: f64,
    /// Column mean of the new center discriminator in the final evaluation.
    pub best_discriminator_fitness: f64,
    pub selected: (usize, usize),
    pub final_fitness: FitnessMatrix,
}

fn argbest(scores: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if better(scores[i], scores[best]) {
            best = i;
        }
    }
    best
}

/// Index of the worst score; ties resolve to the highest index.
fn argworst(scores: &[f64], worse: impl Fn(f64, f64) -> bool) -> usize {
    let mut worst = scores.len() - 1;
    for i in (0..scores.len() - 1).rev() {
        if worse(scores[i], scores[worst]) {
            worst = i;
        }
    }
    worst
}

/// Removes `drop`, then moves `center` (an index into the original list) to the front.
fn reorder<T>(mut items: Vec<T>, drop: usize, center: usize) -> Vec<T> {
    items.remove(drop);
    let center = if center > drop { center - 1 } else { center };
    let c = items.remove(center);
    items.insert(0, c);
    items
}

pub fn coev_generation<R: Rng + ?Sized>(
    n: Neighborhood,
    data: GenerationData<'_>,
    params: &CoevParams,
    cfg: &LossConfig,
    optimizers: &mut CellOptimizers,
    evaluator: &dyn PairEvaluator,
    rng: &mut R,
) -> Result<(Neighborhood, GenerationReport)> {
    let s = n.size();
    if s == 0 {
        return Err(Error::InvalidArgument("empty neighborhood".into()));
    }
    if data.eval_batch.rows() == 0 {
        return Err(Error::InvalidArgument("empty evaluation batch".into()));
    }
    let latent = LatentSpec { dim: n.generators[0].network.input_dim() };
    let eval_latent = sample_latent(latent, data.eval_batch.rows(), rng);

    let fitness = evaluator.evaluate(&n.generators, &n.discriminators, data.eval_batch, &eval_latent, cfg)?;
    let tau = params.tournament_size.min(s);
    let selected = tournament_select(&fitness, tau, rng)?;
    let mut g_b = n.generators[selected.0].clone();
    let mut d_b = n.discriminators[selected.1].clone();

    for (k, batch) in data.batches.iter().enumerate() {
        g_b.learning_rate = mutate_learning_rate(g_b.learning_rate, params.mutation_probability, params.mutation_scale, rng);
        d_b.learning_rate = mutate_learning_rate(d_b.learning_rate, params.mutation_probability, params.mutation_scale, rng);

        // The selected parents' slots hold the offspring being trained, so the
        // pair also learns against each other, not only against frozen copies.
        let r = rng.random_range(0..s);
        let opponent = if r == selected.1 { &d_b } else { &n.discriminators[r] };
        let z = sample_latent(latent, batch.rows(), rng);
        gan::train_generator_step(&mut g_b, &mut optimizers.generator, opponent, &z, cfg)?;

        let r = rng.random_range(0..s);
        let opponent = if r == selected.0 { &g_b } else { &n.generators[r] };
        if k % params.disc_skip == 0 {
            let z = sample_latent(latent, batch.rows(), rng);
            gan::train_discriminator_step(&mut d_b, &mut optimizers.discriminator, opponent, batch, &z, cfg)?;
        }
    }

    let Neighborhood { mut generators, mut discriminators } = n;
    generators.push(g_b);
    discriminators.push(d_b);

    let fitness = evaluator.evaluate(&generators, &discriminators, data.eval_batch, &eval_latent, cfg)?;
    let g_scores = fitness.generator_scores();
    let d_scores = fitness.discriminator_scores();
    let g_worst = argworst(&g_scores, |a, b| a > b);
    let d_worst = argworst(&d_scores, |a, b| a < b);
    let g_best = argbest(&g_scores, |a, b| a < b);
    let d_best = argbest(&d_scores, |a, b| a > b);

    let report = GenerationReport {
        best_generator_fitness: g_scores[g_best],
        best_discriminator_fitness: d_scores[d_best],
        selected,
        final_fitness: fitness,
    };
    let next = Neighborhood {
        generators: reorder(generators, g_worst, g_best),
        discriminators: reorder(discriminators, d_worst, d_best),
    };
    Ok((next, report))
}

//! Weighted generator ensembles and the (1+1)-ES that tunes their weights.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{sample_latent, LatentSpec};
use crate::error::{Error, Result};
use crate::gan::Genome;
use crate::matrix::Matrix;
use crate::metrics::frechet_score;

/// Step-size factor of the one-fifth success rule.
pub const STEP_ADAPTATION: f64 = 1.22;
/// Iterations per success-rate window.
pub const ADAPTATION_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureConfig {
    pub iterations: usize,
    pub initial_sigma: f64,
    /// Samples per mixture fitness evaluation.
    pub samples: usize,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self { iterations: 200, initial_sigma: 0.05, samples: 1000 }
    }
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_sigma >= 0.0 && self.initial_sigma.is_finite()) {
            return Err(Error::Config("mixture.initial_sigma must be finite and >= 0".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("mixture.samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Scales a nonnegative vector onto the probability simplex.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("cannot normalize an all-zero weight vector".into()));
    }
    Ok(raw.iter().map(|w| w / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub generators: Vec<Genome>,
    pub weights: Vec<f64>,
}

impl MixtureModel {
    pub fn uniform(generators: Vec<Genome>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidArgument("a mixture needs at least one generator".into()));
        }
        let w = 1.0 / generators.len() as f64;
        let weights = vec![w; generators.len()];
        Ok(Self { generators, weights })
    }

    pub fn with_weights(generators: Vec<Genome>, weights: Vec<f64>) -> Result<Self> {
        if generators.len() != weights.len() || generators.is_empty() {
            return Err(Error::Dimension("one weight per generator required".into()));
        }
        let weights = normalize_weights(&weights)?;
        Ok(Self { generators, weights })
    }

    pub fn latent_dim(&self) -> usize {
        self.generators[0].network.input_dim()
    }

    /// Generator index whose cumulative weight first exceeds `u` in `[0, 1)`.
    fn pick(weights: &[f64], u: f64) -> usize {
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                last_positive = i;
                acc += w;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

/// Draws `count` samples: generator `i` with probability `w_i`, then `G_i(z)`
/// with `z` uniform in `[-1, 1]^latent_dim`.
pub fn sample_mixture<R: Rng + ?Sized>(m: &MixtureModel, count: usize, rng: &mut R) -> Result<Matrix> {
    let latent = sample_latent(LatentSpec { dim: m.latent_dim() }, count, rng);
    let picks: Vec<usize> = (0..count).map(|_| MixtureModel::pick(&m.weights, rng.random::<f64>())).collect();
    let dim = m.generators[0].network.output_dim();
    let mut out = Matrix::zeros(count, dim);
    for (gi, g) in m.generators.iter().enumerate() {
        let rows: Vec<usize> = (0..count).filter(|&k| picks[k] == gi).collect();
        if rows.is_empty() {
            continue;
        }
        let produced = g.network.forward_batch(&latent.select_rows(&rows))?;
        for (r, &k) in rows.iter().enumerate() {
            out.row_mut(k).copy_from_slice(produced.row(r));
        }
    }
    Ok(out)
}

/// Common-random-numbers fitness for mixture weights.
///
/// Every generator's output on one fixed latent batch is computed once. A
/// weight vector then selects, per sample slot, the generator given by a fixed
/// uniform draw, so the score is a deterministic function of the weights.
pub struct FrechetMixtureFitness {
    outputs: Vec<Matrix>,
    uniforms: Vec<f64>,
    reference: Matrix,
}

impl FrechetMixtureFitness {
    pub fn new<R: Rng + ?Sized>(generators: &[Genome], reference: Matrix, samples: usize, rng: &mut R) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidArgument("no generators".into()));
        }
        let latent = sample_latent(LatentSpec { dim: generators[0].network.input_dim() }, samples, rng);
        let uniforms = (0..samples).map(|_| rng.random::<f64>()).collect();
        let outputs = generators.iter().map(|g| g.network.forward_batch(&latent)).collect::<Result<_>>()?;
        Ok(Self { outputs, uniforms, reference })
    }

    pub fn samples(&self, weights: &[f64]) -> Matrix {
        let dim = self.outputs[0].cols();
        let mut out = Matrix::zeros(self.uniforms.len(), dim);
        for (k, &u) in self.uniforms.iter().enumerate() {
            let i = MixtureModel::pick(weights, u);
            out.row_mut(k).copy_from_slice(self.outputs[i].row(k));
        }
        out
    }

    pub fn score(&self, weights: &[f64]) -> Result<f64> {
        frechet_score(&self.samples(weights), &self.reference)
    }
}

#[derive(Debug, Clone)]
pub struct EsOutcome {
    pub model: MixtureModel,
    pub fitness: f64,
    /// Best-so-far fitness, starting with the initial weights, one entry per iteration after.
    pub history: Vec<f64>,
    pub final_sigma: f64,
}

/// Elitist (1+1)-ES over the simplex with the one-fifth success rule.
///
/// Children add `N(0, sigma^2)` per weight, clamp at zero, and renormalize;
/// a child replaces the parent when its fitness is not worse. After every
/// window of ten iterations sigma grows by 1.22 if more than a fifth of them
/// succeeded and shrinks by the same factor otherwise.
pub fn es_one_plus_one<R, F>(
    m: MixtureModel,
    mut fitness: F,
    iterations: usize,
    step_sigma: f64,
    rng: &mut R,
) -> Result<EsOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut weights = m.weights.clone();
    let mut best = fitness(&weights)?;
    let mut history = Vec::with_capacity(iterations + 1);
    history.push(best);
    let mut sigma = step_sigma;
    let mut successes = 0;
    for it in 1..=iterations {
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("sigma is positive and finite");
            let raw: Vec<f64> = weights.iter().map(|w| (w + noise.sample(rng)).max(0.0)).collect();
            if let Ok(child) = normalize_weights(&raw) {
                let f = fitness(&child)?;
                if f <= best {
                    best = f;
                    weights = child;
                    successes += 1;
                }
            }
        }
        if it % ADAPTATION_WINDOW == 0 {
            if successes as f64 / ADAPTATION_WINDOW as f64 > 0.2 {
                sigma *= STEP_ADAPTATION;
            } else {
                sigma /= STEP_ADAPTATION;
            }
            successes = 0;
        }
        history.push(best);
    }
    Ok(EsOutcome {
        model: MixtureModel { generators: m.generators, weights },
        fitness: best,
        history,
        final_sigma: sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec, Network};
    use crate::seed;
    use proptest::prelude::*;

    /// Generator that ignores its input and emits a constant.
    fn constant(value: f64) -> Genome {
        let net = Network::from_params(vec![LayerSpec::new(2, 1, Activation::Identity)], vec![0.0, 0.0, value]).unwrap();
        Genome::new(net, 1e-3).unwrap()
    }

    fn quadratic(target: &[f64]) -> impl Fn(&[f64]) -> Result<f64> + '_ {
        move |w: &[f64]| Ok(w.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum())
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_weights(&[1.0]).unwrap(), vec![1.0]);
        assert_eq!(normalize_weights(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize_weights(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert!(normalize_weights(&[0.0, 0.0]).is_err());
        assert!(normalize_weights(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn degenerate_weights_pick_one_generator() {
        let m = MixtureModel::with_weights(vec![constant(1.0), constant(-1.0)], vec![1.0, 0.0]).unwrap();
        let s = sample_mixture(&m, 500, &mut seed::rng_from(1)).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn balanced_weights_split_binomially() {
        let m = MixtureModel::uniform(vec![constant(1.0), constant(-1.0)]).unwrap();
        let n = 10_000;
        let s = sample_mixture(&m, n, &mut seed::rng_from(2)).unwrap();
        let ones = s.as_slice().iter().filter(|&&v| v == 1.0).count() as f64;
        let sd = (n as f64 * 0.25).sqrt();
        assert!((ones - n as f64 / 2.0).abs() <= 3.0 * sd);
    }

    #[test]
    fn single_generator_mixture_is_the_generator() {
        let g = Genome::new(
            Network::init(vec![LayerSpec::new(2, 2, Activation::Tanh)], 3).unwrap(),
            1e-3,
        )
        .unwrap();
        let m = MixtureModel::uniform(vec![g.clone()]).unwrap();
        let mut rng = seed::rng_from(4);
        let s = sample_mixture(&m, 50, &mut rng).unwrap();
        let mut rng = seed::rng_from(4);
        let z = sample_latent(LatentSpec { dim: 2 }, 50, &mut rng);
        assert_eq!(s, g.network.forward_batch(&z).unwrap());
    }

    #[test]
    fn zero_iterations_returns_input() {
        let m = MixtureModel::with_weights(vec![constant(0.0), constant(1.0)], vec![0.3, 0.7]).unwrap();
        let out = es_one_plus_one(m.clone(), quadratic(&[0.5, 0.5]), 0, 0.05, &mut seed::rng_from(0)).unwrap();
        assert_eq!(out.model, m);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn converges_on_known_quadratic() {
        let m = MixtureModel::uniform(vec![constant(0.0), constant(1.0)]).unwrap();
        let out = es_one_plus_one(m, quadratic(&[0.7, 0.3]), 500, 0.05, &mut seed::rng_from(5)).unwrap();
        assert!(out.fitness < 1e-3, "{}", out.fitness);
    }

    #[test]
    fn constant_fitness_never_increases() {
        let m = MixtureModel::uniform(vec![constant(0.0), constant(1.0), constant(2.0)]).unwrap();
        let out = es_one_plus_one(m, |_: &[f64]| Ok(1.0), 100, 0.1, &mut seed::rng_from(6)).unwrap();
        assert!(out.history.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn crn_fitness_is_deterministic_in_weights() {
        let gens = vec![constant(0.0), constant(3.0)];
        let reference = Matrix::from_vec(4, 1, vec![0.0, 0.1, -0.1, 0.05]).unwrap();
        let f = FrechetMixtureFitness::new(&gens, reference, 200, &mut seed::rng_from(7)).unwrap();
        let a = f.score(&[0.6, 0.4]).unwrap();
        assert_eq!(a, f.score(&[0.6, 0.4]).unwrap());
        assert!(f.score(&[1.0, 0.0]).unwrap() < a);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn stays_on_simplex_and_is_elitist(seed in any::<u64>(), tx in 0.0f64..1.0, sigma in 0.01f64..0.5) {
            let m = MixtureModel::uniform(vec![constant(0.0), constant(1.0), constant(2.0)]).unwrap();
            let target = [tx, (1.0 - tx) / 2.0, (1.0 - tx) / 2.0];
            let mut seen = Vec::new();
            let f = |w: &[f64]| {
                seen.push(w.to_vec());
                quadratic(&target)(w)
            };
            let out = es_one_plus_one(m, f, 60, sigma, &mut seed::rng_from(seed)).unwrap();
            for w in &seen {
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(w.iter().all(|&x| x >= 0.0));
            }
            prop_assert!(out.history.windows(2).all(|p| p[1] <= p[0]));
        }
    }
}

//! GAN objective and the gradient steps used as coevolutionary mutation.
//!
//! The objective is `L(g, d) = E[log D(x)] + E[log(1 - D(G(z)))]` with
//! probabilities clamped to `[eps, 1 - eps]`. The discriminator ascends `L`,
//! the generator descends it in its saturating form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{AdamState, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub network: Network,
    pub learning_rate: f64,
}

impl Genome {
    pub fn new(network: Network, learning_rate: f64) -> Result<Self> {
        check_learning_rate(learning_rate)?;
        Ok(Self { network, learning_rate })
    }
}

fn check_learning_rate(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("learning rate must be positive and finite, got {lr}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanPair {
    pub generator: Genome,
    pub discriminator: Genome,
}

impl GanPair {
    pub fn new(generator: Genome, discriminator: Genome) -> Result<Self> {
        check_compatible(&generator, &discriminator)?;
        Ok(Self { generator, discriminator })
    }
}

fn check_compatible(g: &Genome, d: &Genome) -> Result<()> {
    if g.network.output_dim() != d.network.input_dim() {
        return Err(Error::Dimension(format!(
            "generator emits {} values, discriminator reads {}",
            g.network.output_dim(),
            d.network.input_dim()
        )));
    }
    if d.network.output_dim() != 1 {
        return Err(Error::Dimension("discriminator must produce one probability".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MeasuringFunction {
    #[default]
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub measuring_function: MeasuringFunction,
    pub clamp_epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { measuring_function: MeasuringFunction::Log, clamp_epsilon: 1e-7 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clamp_epsilon > 0.0 && self.clamp_epsilon < 0.5) {
            return Err(Error::Config(format!(
                "loss.clamp_epsilon must satisfy 0 < eps < 0.5, got {}",
                self.clamp_epsilon
            )));
        }
        Ok(())
    }

    #[inline]
    fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.clamp_epsilon, 1.0 - self.clamp_epsilon)
    }

    #[inline]
    fn phi(&self, p: f64) -> f64 {
        match self.measuring_function {
            MeasuringFunction::Log => self.clamp(p).ln(),
        }
    }

    /// d/dp of `phi(clamp(p))`; zero where the clamp is active.
    #[inline]
    fn phi_grad(&self, p: f64) -> f64 {
        if p <= self.clamp_epsilon || p >= 1.0 - self.clamp_epsilon {
            0.0
        } else {
            match self.measuring_function {
                MeasuringFunction::Log => 1.0 / p,
            }
        }
    }
}

/// `mean(phi(d_on_real)) + mean(phi(1 - d_on_fake))`.
pub fn gan_loss(d_on_real: &[f64], d_on_fake: &[f64], cfg: &LossConfig) -> Result<f64> {
    if d_on_real.is_empty() || d_on_fake.is_empty() {
        return Err(Error::InvalidArgument("gan_loss needs nonempty batches".into()));
    }
    if d_on_real.len() != d_on_fake.len() {
        return Err(Error::Dimension(format!(
            "{} real vs {} fake probabilities",
            d_on_real.len(),
            d_on_fake.len()
        )));
    }
    let real = d_on_real.iter().map(|&p| cfg.phi(p)).sum::<f64>() / d_on_real.len() as f64;
    let fake = d_on_fake.iter().map(|&p| cfg.phi(1.0 - p)).sum::<f64>() / d_on_fake.len() as f64;
    Ok(real + fake)
}

/// `E[phi(1 - D(G(z)))]` on the given latent batch; the quantity the generator descends.
pub fn generator_objective(g: &Genome, d: &Genome, latent: &Matrix, cfg: &LossConfig) -> Result<f64> {
    check_compatible(g, d)?;
    let fake = g.network.forward_batch(latent)?;
    let p = d.network.forward_batch(&fake)?;
    Ok(p.as_slice().iter().map(|&v| cfg.phi(1.0 - v)).sum::<f64>() / p.rows() as f64)
}

/// One Adam step of the generator on the saturating objective. `d` is read only.
pub fn train_generator_step(
    g: &mut Genome,
    adam: &mut AdamState,
    d: &Genome,
    latent: &Matrix,
    cfg: &LossConfig,
) -> Result<()> {
    check_learning_rate(g.learning_rate)?;
    check_compatible(g, d)?;
    if latent.rows() == 0 {
        return Err(Error::InvalidArgument("empty latent batch".into()));
    }
    let g_trace = g.network.forward_trace(latent)?;
    let d_trace = d.network.forward_trace(g_trace.output())?;
    let n = latent.rows() as f64;
    let mut d_out_grad = Matrix::zeros(latent.rows(), 1);
    for (i, &p) in d_trace.output().as_slice().iter().enumerate() {
        // d/dp phi(1 - p) = -phi'(1 - p)
        d_out_grad.set(i, 0, -cfg.phi_grad(1.0 - p) / n);
    }
    let through_d = d.network.backward_batch(&d_trace, &d_out_grad)?;
    let grads = g.network.backward_batch(&g_trace, &through_d.input)?;
    adam.step(&mut g.network, &grads.params, g.learning_rate)
}

/// One Adam step of the discriminator ascending the objective. `g` is read only.
pub fn train_discriminator_step(
    d: &mut Genome,
    adam: &mut AdamState,
    g: &Genome,
    real: &Matrix,
    latent: &Matrix,
    cfg: &LossConfig,
) -> Result<()> {
    check_learning_rate(d.learning_rate)?;
    check_compatible(g, d)?;
    if real.rows() == 0 || latent.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let fake = g.network.forward_batch(latent)?;
    let n_real = real.rows() as f64;
    let n_fake = fake.rows() as f64;

    let real_trace = d.network.forward_trace(real)?;
    let mut real_grad = Matrix::zeros(real.rows(), 1);
    for (i, &p) in real_trace.output().as_slice().iter().enumerate() {
        // descend -L
        real_grad.set(i, 0, -cfg.phi_grad(p) / n_real);
    }
    let fake_trace = d.network.forward_trace(&fake)?;
    let mut fake_grad = Matrix::zeros(fake.rows(), 1);
    for (i, &p) in fake_trace.output().as_slice().iter().enumerate() {
        fake_grad.set(i, 0, cfg.phi_grad(1.0 - p) / n_fake);
    }
    let mut grads = d.network.backward_batch(&real_trace, &real_grad)?.params;
    let fake_params = d.network.backward_batch(&fake_trace, &fake_grad)?.params;
    for (a, b) in grads.iter_mut().zip(fake_params) {
        *a += b;
    }
    adam.step(&mut d.network, &grads, d.learning_rate)
}

/// Fitness `L(g, d)` of one pair on a real batch and a latent batch.
pub fn evaluate_pair(g: &Genome, d: &Genome, real: &Matrix, latent: &Matrix, cfg: &LossConfig) -> Result<f64> {
    check_compatible(g, d)?;
    if real.rows() == 0 || latent.rows() == 0 {
        return Err(Error::InvalidArgument("evaluate_pair needs nonempty batches".into()));
    }
    let on_real = d.network.forward_batch(real)?;
    let fake = g.network.forward_batch(latent)?;
    let on_fake = d.network.forward_batch(&fake)?;
    gan_loss(on_real.as_slice(), on_fake.as_slice(), cfg)
}

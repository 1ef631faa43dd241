//! Experiment configuration.
//!
//! Configs are TOML. Every key has a default, unknown keys are rejected, and
//! any key can be overridden from the environment with the `COEVGAN_` prefix
//! and `__` between nesting levels, e.g. `COEVGAN_COEV__TOURNAMENT_SIZE=3`.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::coevolution::CoevParams;
use crate::data::DataSpec;
use crate::error::{Error, Result};
use crate::gan::LossConfig;
use crate::mixture::MixtureConfig;
use crate::nn::{Activation, LayerSpec};
use crate::topology::Topology;

pub const ENV_PREFIX: &str = "COEVGAN_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ExecutionMode {
    /// One thread of control, fixed cell order, generation barrier.
    #[default]
    #[serde(rename = "seq", alias = "sequential")]
    SequentialDeterministic,
    /// One worker per cell reading whatever neighbor centers are published.
    #[serde(rename = "async", alias = "parallel")]
    ParallelAsync,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopCondition {
    /// Run `generations` generations.
    #[default]
    Epochs,
    /// Stop starting new generations once the budget is spent; `generations`
    /// still caps the run.
    WallClock { seconds: f64 },
}

impl StopCondition {
    pub fn budget(&self) -> Option<Duration> {
        match *self {
            StopCondition::Epochs => None,
            StopCondition::WallClock { seconds } => Some(Duration::from_secs_f64(seconds)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub generator_output: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            generator_hidden: vec![32, 32],
            discriminator_hidden: vec![32, 32],
            hidden_activation: Activation::Tanh,
            generator_output: Activation::Identity,
        }
    }
}

fn chain(input: usize, hidden: &[usize], output: usize, hidden_act: Activation, out_act: Activation) -> Vec<LayerSpec> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec::new(w[0], w[1], if i + 2 == dims.len() { out_act } else { hidden_act }))
        .collect()
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("network.latent_dim must be >= 1".into()));
        }
        if self.generator_hidden.iter().chain(&self.discriminator_hidden).any(|&h| h == 0) {
            return Err(Error::Config("network hidden layer widths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn generator_specs(&self, data_dim: usize) -> Vec<LayerSpec> {
        chain(self.latent_dim, &self.generator_hidden, data_dim, self.hidden_activation, self.generator_output)
    }

    pub fn discriminator_specs(&self, data_dim: usize) -> Vec<LayerSpec> {
        chain(data_dim, &self.discriminator_hidden, 1, self.hidden_activation, Activation::Sigmoid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Generator samples per cell drawn for per-generation quality metrics.
    pub probe_samples: usize,
    /// High-quality radius in units of the target's mode sigma.
    pub quality_threshold_sigmas: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { probe_samples: 500, quality_threshold_sigmas: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub generations: u64,
    pub mode: ExecutionMode,
    pub stop: StopCondition,
    pub topology: Topology,
    pub coev: CoevParams,
    pub loss: LossConfig,
    pub data: DataSpec,
    pub network: NetworkConfig,
    pub mixture: MixtureConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            generations: 200,
            mode: ExecutionMode::default(),
            stop: StopCondition::default(),
            topology: Topology::Ring { size: 6, radius: 1 },
            coev: CoevParams::default(),
            loss: LossConfig::default(),
            data: DataSpec::default(),
            network: NetworkConfig::default(),
            mixture: MixtureConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.coev.validate(self.topology.subpopulation_size())?;
        self.loss.validate()?;
        self.data.validate()?;
        self.network.validate()?;
        self.mixture.validate()?;
        if self.metrics.probe_samples < 2 {
            return Err(Error::Config("metrics.probe_samples must be >= 2".into()));
        }
        if !(self.metrics.quality_threshold_sigmas > 0.0) {
            return Err(Error::Config("metrics.quality_threshold_sigmas must be > 0".into()));
        }
        if let StopCondition::WallClock { seconds } = self.stop {
            if !(seconds >= 0.0 && seconds.is_finite()) {
                return Err(Error::Config("stop.seconds must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    /// Effective config as TOML; parsing it back yields an equal config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("override path is nonempty");
    let mut cur = table;
    for key in parents {
        let entry = cur.entry(key.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("environment override descends into non-table key `{key}`")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Parses TOML text, applying `COEVGAN_*` overrides from `env`, and validates.
pub fn parse_config_str<I>(text: &str, env: I) -> Result<ExperimentConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let mut overridden = false;
    for (key, raw) in env {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
        let path: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
        if path.iter().any(String::is_empty) {
            return Err(Error::Config(format!("malformed override variable {key}")));
        }
        apply_override(&mut table, &path, env_value(&raw))?;
        overridden = true;
    }
    let cfg: ExperimentConfig = if overridden {
        table.try_into().map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?
    } else {
        // straight from the text so errors carry line numbers
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, std::env::vars())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataSource;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config_str(text, std::iter::empty())
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.coev.initial_learning_rate, 0.0002);
        assert_eq!(cfg.coev.mutation_probability, 0.5);
        assert_eq!(cfg.coev.mutation_scale, 0.0001);
        assert_eq!(cfg.coev.tournament_size, 2);
        assert_eq!(cfg.coev.disc_skip, 1);
        assert_eq!(cfg.data.batch_size, 100);
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn ring_radius_constraint_is_named() {
        let err = parse("[topology]\nkind = \"ring\"\nsize = 6\nradius = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("r <= floor((Z-1)/2)"), "{msg}");
    }

    #[test]
    fn unknown_keys_and_syntax_errors_report_lines() {
        let err = parse("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse(_)));
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse("seed = \n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn tournament_larger_than_subpopulation_is_rejected() {
        let err = parse("[coev]\ntournament_size = 4\n").unwrap_err();
        assert!(err.to_string().contains("sub-population size s = 3"), "{err}");
    }

    #[test]
    fn roundtrip_through_emitted_toml() {
        let mut cfg = ExperimentConfig {
            seed: 17,
            generations: 42,
            mode: ExecutionMode::ParallelAsync,
            stop: StopCondition::WallClock { seconds: 1.5 },
            topology: Topology::Grid { rows: 3, cols: 4 },
            ..Default::default()
        };
        cfg.coev.mutation_scale = 1.2345678901234e-4;
        cfg.data.source = DataSource::GaussianMixture { centers: vec![vec![0.1, 0.2]], sigma: 0.3 };
        let text = cfg.to_toml().unwrap();
        assert_eq!(parse(&text).unwrap(), cfg);
        let idx = ExperimentConfig {
            data: DataSpec { source: DataSource::Idx { path: "train.idx".into() }, ..Default::default() },
            ..Default::default()
        };
        assert_eq!(parse(&idx.to_toml().unwrap()).unwrap(), idx);
    }

    #[test]
    fn environment_overrides() {
        let env = vec![
            ("COEVGAN_SEED".to_string(), "99".to_string()),
            ("COEVGAN_COEV__TOURNAMENT_SIZE".to_string(), "3".to_string()),
            ("COEVGAN_MODE".to_string(), "async".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let cfg = parse_config_str("seed = 1\n", env).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.coev.tournament_size, 3);
        assert_eq!(cfg.mode, ExecutionMode::ParallelAsync);

        let bad = vec![("COEVGAN_COEV__NOPE".to_string(), "1".to_string())];
        assert!(parse_config_str("", bad).is_err());
    }

    #[test]
    fn network_specs_chain() {
        let n = NetworkConfig::default();
        let g = n.generator_specs(2);
        assert_eq!(g.first().unwrap().input_dim, 8);
        assert_eq!(g.last().unwrap().output_dim, 2);
        assert_eq!(g.last().unwrap().activation, Activation::Identity);
        let d = n.discriminator_specs(2);
        assert_eq!(d.last().unwrap().activation, Activation::Sigmoid);
        assert!(crate::nn::validate_specs(&g).is_ok() && crate::nn::validate_specs(&d).is_ok());
    }
}

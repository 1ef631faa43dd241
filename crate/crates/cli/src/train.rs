//! `train`: run an experiment and write its artifacts.
//!
//! Output directory layout:
//!
//! - `config.toml`: the effective configuration
//! - `metrics.jsonl`: one [`MetricsRecord`] per line
//! - `frechet_median.csv`: per-generation median and best Fréchet score over cells
//! - `checkpoint.bin`: the final population
//! - `mixture.json`: the best cell's mixture model
//! - `summary.json`: run-level facts, including wall-clock timing
//!
//! Metrics are streamed to `metrics.jsonl.partial` one whole line per write
//! and renamed once the run succeeds. A failed run leaves the `.partial` file
//! and a `FAILED` file with the error.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use coevgan::config::parse_config_str;
use coevgan::{checkpoint_save, ExecutionMode, Experiment, MetricsRecord};
use serde::{Deserialize, Serialize};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MIXTURE_FILE: &str = "mixture.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const FRECHET_CSV: &str = "frechet_median.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const FAILED_FILE: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: u32,
    pub run_id: String,
    pub seed: u64,
    pub mode: ExecutionMode,
    pub topology: String,
    pub cells: usize,
    pub subpopulation_size: usize,
    pub generations: u64,
    pub total_wall_ms: u64,
    /// Wall-clock duration of each completed generation, measured by the
    /// metrics consumer. Empty in parallel mode, where generations overlap.
    pub generation_ms: Vec<f64>,
    pub best_cell: usize,
    pub mixture_fitness: f64,
}

#[derive(Debug, Serialize)]
struct MixtureFile<'a> {
    best_cell: usize,
    fitness: f64,
    cell_fitness: &'a [f64],
    weights: &'a [f64],
    generators: Vec<GeneratorFile<'a>>,
}

#[derive(Debug, Serialize)]
struct GeneratorFile<'a> {
    learning_rate: f64,
    layers: &'a [coevgan::nn::LayerSpec],
    params: &'a [f64],
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `generation,median_frechet,best_frechet`; generations without any
/// Fréchet value are skipped.
pub fn frechet_csv(records: &[MetricsRecord]) -> String {
    let mut by_gen: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(f) = r.frechet {
            by_gen.entry(r.generation).or_default().push(f);
        }
    }
    let mut out = String::from("generation,median_frechet,best_frechet\n");
    for (g, mut v) in by_gen {
        let best = v.iter().copied().fold(f64::INFINITY, f64::min);
        out.push_str(&format!("{g},{},{best}\n", median(&mut v)));
    }
    out
}

/// Reads a config, applying `COEVGAN_*` overrides and then the flags.
pub fn load_config(path: &Path, seed: Option<u64>, mode: Option<ExecutionMode>) -> Result<coevgan::ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = parse_config_str(&text, std::env::vars()).with_context(|| format!("in config {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_train(config: &Path, out: &Path, seed: Option<u64>, mode: Option<ExecutionMode>) -> Result<RunSummary> {
    let cfg = load_config(config, seed, mode)?;
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
    let _ = fs::remove_file(out.join(FAILED_FILE));
    let result = train_into(cfg, out);
    if let Err(e) = &result {
        let _ = fs::write(out.join(FAILED_FILE), format!("{e:#}\n"));
    }
    result
}

fn train_into(cfg: coevgan::ExperimentConfig, out: &Path) -> Result<RunSummary> {
    write_atomic(&out.join(CONFIG_FILE), cfg.to_toml()?.as_bytes())?;
    let partial: PathBuf = out.join(format!("{METRICS_FILE}.partial"));
    let mut writer = BufWriter::new(File::create(&partial).with_context(|| format!("creating {}", partial.display()))?);

    let exp = Experiment::new(cfg.clone())?;
    let start = Instant::now();
    let cells = cfg.topology.population_size();
    let mut records = Vec::new();
    let mut generation_ms = Vec::new();
    let mut last_mark = start;
    let mut seen_in_gen = 0;
    let sequential = cfg.mode == ExecutionMode::SequentialDeterministic;

    let (pop, mixture) = exp.run(&mut |r: MetricsRecord| {
        let line = r.to_json_line()?;
        writer.write_all(line.as_bytes())?;
        writer.flush()?;
        if sequential && r.generation > 0 {
            seen_in_gen += 1;
            if seen_in_gen == cells {
                let now = Instant::now();
                generation_ms.push((now - last_mark).as_secs_f64() * 1000.0);
                last_mark = now;
                seen_in_gen = 0;
            }
        } else if sequential {
            last_mark = Instant::now();
        }
        records.push(r);
        Ok(())
    })?;
    let total_wall_ms = start.elapsed().as_millis() as u64;
    writer.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    fs::rename(&partial, out.join(METRICS_FILE))?;

    write_atomic(&out.join(FRECHET_CSV), frechet_csv(&records).as_bytes())?;
    checkpoint_save(&pop, &cfg, out.join(CHECKPOINT_FILE))?;

    let model = &mixture.model;
    let mixture_file = MixtureFile {
        best_cell: mixture.best_cell,
        fitness: mixture.fitness,
        cell_fitness: &mixture.cell_fitness,
        weights: &model.weights,
        generators: model
            .generators
            .iter()
            .map(|g| GeneratorFile { learning_rate: g.learning_rate, layers: g.network.layers(), params: g.network.params() })
            .collect(),
    };
    write_atomic(&out.join(MIXTURE_FILE), serde_json::to_string_pretty(&mixture_file)?.as_bytes())?;

    let summary = RunSummary {
        schema: coevgan::records::SCHEMA_VERSION,
        run_id: exp.run_id().to_string(),
        seed: cfg.seed,
        mode: cfg.mode,
        topology: cfg.topology.to_string(),
        cells,
        subpopulation_size: cfg.topology.subpopulation_size(),
        generations: pop.generation,
        total_wall_ms,
        generation_ms,
        best_cell: mixture.best_cell,
        mixture_fitness: mixture.fitness,
    };
    write_atomic(&out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(generation: u64, cell: usize, frechet: Option<f64>) -> MetricsRecord {
        MetricsRecord {
            schema: 1,
            run_id: "r".into(),
            generation,
            cell,
            wall_clock_ms: None,
            best_fitness: 0.0,
            frechet,
            tvd: None,
            mean_l2_diversity: 0.0,
            learning_rate: 1e-3,
        }
    }

    #[test]
    fn csv_medians() {
        let rs = vec![rec(0, 0, Some(3.0)), rec(0, 1, Some(1.0)), rec(0, 2, Some(2.0)), rec(1, 0, Some(4.0)), rec(1, 1, Some(2.0)), rec(2, 0, None)];
        assert_eq!(frechet_csv(&rs), "generation,median_frechet,best_frechet\n0,2,1\n1,3,2\n");
    }
}

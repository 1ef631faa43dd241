//! Trains the 8-Gaussian desk benchmark (`configs/desk.toml`) and reports mode
//! coverage of the best cell's mixture.
//!
//! Usage: cargo run --release --example desk_benchmark -- [seed] [generations]
//!
//! `COEVGAN_*` variables override config keys. `TRACE=1` prints cell 0's
//! records every 25 generations and `CELLS=1` reports every cell's center
//! generator on its own.

use coevgan::config::parse_config_str;
use coevgan::data::DataSource;
use coevgan::matrix::Matrix;
use coevgan::metrics::mode_histogram;
use coevgan::mixture::{sample_mixture, MixtureModel};
use coevgan::run_training;
use coevgan::seed::{self, Stream};

const DESK: &str = include_str!("../../../configs/desk.toml");

fn main() -> coevgan::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = parse_config_str(DESK, std::env::vars())?;
    if let Some(s) = args.next() {
        cfg.seed = s.parse().expect("seed must be an integer");
    }
    if let Some(g) = args.next() {
        cfg.generations = g.parse().expect("generations must be an integer");
    }
    let DataSource::GaussianMixture { centers, sigma } = &cfg.data.source else {
        panic!("the desk benchmark needs a Gaussian mixture target");
    };
    let modes = Matrix::from_rows(centers)?;
    let threshold = cfg.metrics.quality_threshold_sigmas * sigma;
    let seed = cfg.seed;

    let out = run_training(cfg.clone())?;
    if std::env::var_os("TRACE").is_some() {
        for r in out.records.iter().filter(|r| r.generation % 25 == 0 && r.cell == 0) {
            println!(
                "gen {} fitness {:.3} frechet {:?} tvd {:?} l2 {:.3} lr {:.5}",
                r.generation, r.best_fitness, r.frechet, r.tvd, r.mean_l2_diversity, r.learning_rate
            );
        }
    }
    let samples = sample_mixture(&out.mixture.model, 2000, &mut seed::rng(seed, Stream::HeldOut, 1, 0))?;
    let h = mode_histogram(&samples, &modes, threshold)?;
    println!(
        "seed {seed}: covered {} hq {:.3} tvd {:.3} weights {:?} time {:.1}s",
        h.covered_modes(),
        h.high_quality_fraction(),
        h.tvd_to_uniform()?,
        out.mixture.model.weights.iter().map(|w| (w * 100.0).round() / 100.0).collect::<Vec<_>>(),
        out.elapsed.as_secs_f64()
    );
    if std::env::var_os("CELLS").is_some() {
        for (c, g) in out.population.generators().enumerate() {
            let m = MixtureModel::uniform(vec![g.clone()])?;
            let s = sample_mixture(&m, 2000, &mut seed::rng(seed, Stream::HeldOut, 1, 0))?;
            let h = mode_histogram(&s, &modes, threshold)?;
            println!(
                "cell {c}: covered {} hq {:.3} tvd {:.3} mixture fitness {:.4}",
                h.covered_modes(),
                h.high_quality_fraction(),
                h.tvd_to_uniform()?,
                out.mixture.cell_fitness[c]
            );
        }
    }
    Ok(())
}

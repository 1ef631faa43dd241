//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! `ACCEPTANCE_ONLY=1,2,9` restricts the run to the listed criteria.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use coevgan::checkpoint::encode;
use coevgan::data::DataSource;
use coevgan::gan::{gan_loss, LossConfig};
use coevgan::matrix::Matrix;
use coevgan::metrics::{frechet_score, mode_histogram, tvd};
use coevgan::mixture::{es_one_plus_one, sample_mixture, MixtureModel};
use coevgan::nn::{Activation, LayerSpec, Network};
use coevgan::orchestrator::TrainingOutcome;
use coevgan::seed::{self, Stream};
use coevgan::{checkpoint_load, checkpoint_save, genome_l2_matrix, run_training, CellId, Error, ExecutionMode, Experiment, Topology};
use common::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const SEEDS: u64 = 10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// What the trend criteria need from one desk run.
#[derive(Debug, Clone)]
struct DeskRun {
    l2_by_generation: BTreeMap<u64, f64>,
    mixture_frechet: f64,
    covered: usize,
    high_quality: f64,
    tvd: f64,
    elapsed: Duration,
}

#[derive(Default)]
struct DeskRuns {
    cache: BTreeMap<(String, u64), DeskRun>,
}

impl DeskRuns {
    fn get(&mut self, topology: Topology, seed: u64) -> DeskRun {
        let key = (topology.to_string(), seed);
        if let Some(r) = self.cache.get(&key) {
            return r.clone();
        }
        let mut cfg = desk_config(seed);
        cfg.topology = topology;
        let run = summarize(&cfg, run_training(cfg.clone()).expect("desk run"));
        eprintln!(
            "  [{topology} seed {seed}] modes {} hq {:.3} tvd {:.3} frechet {:.4} in {:.0}s",
            run.covered,
            run.high_quality,
            run.tvd,
            run.mixture_frechet,
            run.elapsed.as_secs_f64()
        );
        self.cache.insert(key, run.clone());
        run
    }
}

fn summarize(cfg: &coevgan::ExperimentConfig, out: TrainingOutcome) -> DeskRun {
    let l2_by_generation = out.records.iter().map(|r| (r.generation, r.mean_l2_diversity)).collect();
    let (centers, sigma) = match &cfg.data.source {
        DataSource::GaussianMixture { centers, sigma } => (Matrix::from_rows(centers).unwrap(), *sigma),
        DataSource::Idx { .. } => unreachable!("the desk benchmark is synthetic"),
    };
    let samples = sample_mixture(&out.mixture.model, 2000, &mut seed::rng(cfg.seed, Stream::HeldOut, 1, 0)).unwrap();
    let h = mode_histogram(&samples, &centers, cfg.metrics.quality_threshold_sigmas * sigma).unwrap();
    DeskRun {
        l2_by_generation,
        mixture_frechet: out.mixture.fitness,
        covered: h.covered_modes(),
        high_quality: h.high_quality_fraction(),
        tvd: h.tvd_to_uniform().unwrap(),
        elapsed: out.elapsed,
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let ids = |t: Topology, c: usize| -> Vec<usize> { t.neighbors(CellId(c)).unwrap().into_iter().map(|c| c.0).collect() };
    let grid = Topology::grid(4, 4).unwrap();
    let mut g = ids(grid, grid.grid_cell(1, 1).0);
    g.remove(0);
    let expected: Vec<usize> = [(0, 1), (2, 1), (1, 0), (1, 2)].iter().map(|&(r, c)| grid.grid_cell(r, c).0).collect();
    let cases = [
        g == expected,
        ids(Topology::ring(6, 1).unwrap(), 0) == vec![0, 5, 1],
        ids(Topology::ring(6, 2).unwrap(), 0) == vec![0, 5, 1, 4, 2],
        Topology::ring(6, 1).unwrap().subpopulation_size() == 3,
        Topology::ring(6, 2).unwrap().subpopulation_size() == 5,
        [(3, 3), (4, 4), (5, 7)].iter().all(|&(r, c)| Topology::grid(r, c).unwrap().subpopulation_size() == 5),
    ];
    let elapsed = start.elapsed();
    let ok = cases.iter().filter(|&&c| c).count();
    verdict(ok == cases.len() && elapsed < Duration::from_secs(1), format!("{ok}/{} exact cases, {elapsed:?}", cases.len()))
}

fn objective(net: &Network, input: &[f64], output_grad: &[f64]) -> f64 {
    net.forward(input).unwrap().iter().zip(output_grad).map(|(y, g)| y * g).sum()
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = seed::rng_from(2024);
    let activations = [Activation::Tanh, Activation::Sigmoid, Activation::Identity];
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let depth = rng.random_range(1..=3);
        let mut dims = vec![rng.random_range(1..=4)];
        let mut specs = Vec::new();
        for _ in 0..depth {
            let out = rng.random_range(1..=4);
            specs.push(LayerSpec::new(*dims.last().unwrap(), out, activations[rng.random_range(0..3)]));
            dims.push(out);
        }
        let mut net = Network::init_with_rng(specs, &mut rng).unwrap();
        for p in net.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let output_grad: Vec<f64> = (0..*dims.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic = net.backward(&input, &output_grad).unwrap();
        let h = 1e-5;
        for (i, a) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let n = (objective(&plus, &input, &output_grad) - objective(&minus, &input, &output_grad)) / (2.0 * h);
            // gradients below 1e-6 are compared absolutely
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    let half = vec![0.5; 16];
    let loss = gan_loss(&half, &half, &LossConfig::default()).unwrap();
    let loss_err = (loss + 2.0 * std::f64::consts::LN_2).abs();
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-4 && loss_err < 1e-9 && elapsed < Duration::from_secs(30),
        format!("max relative error {worst:.2e}, |loss + 2 ln 2| = {loss_err:.1e}, {elapsed:?}"),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let cases = [(Topology::ring(6, 1).unwrap(), 3), (Topology::ring(6, 2).unwrap(), 2), (Topology::grid(3, 3).unwrap(), 2)];
    let mut parts = Vec::new();
    let mut ok = true;
    for (t, expected) in cases {
        let hops = t.takeover_time(CellId(0));
        let measured = takeover_generations(t, 0, 10);
        ok &= hops == expected && measured == Some(expected);
        parts.push(format!("{t}: {measured:?} generations (hops {hops})"));
    }
    let elapsed = start.elapsed();
    verdict(ok && elapsed < Duration::from_secs(60), format!("{}, {elapsed:?}", parts.join("; ")))
}

fn criterion_4(desk: &mut DeskRuns) -> Verdict {
    let ring = Topology::ring(6, 1).unwrap();
    let mut good = 0;
    let mut slowest = Duration::ZERO;
    let mut tvds = Vec::new();
    for s in 0..SEEDS {
        let r = desk.get(ring, s);
        if r.covered >= 6 && r.high_quality >= 0.7 && r.tvd < 0.3 {
            good += 1;
        }
        tvds.push(r.tvd);
        slowest = slowest.max(r.elapsed);
    }
    verdict(
        good >= 8 && slowest < Duration::from_secs(600),
        format!(
            "{good}/{SEEDS} seeds with >= 6 modes, high-quality >= 0.7 and TVD < 0.3 (median TVD {:.3}); slowest seed {:.0}s",
            median(&tvds),
            slowest.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let time = |topology: Topology, run: u64| -> f64 {
        let mut cfg = desk_config(100 + run);
        cfg.topology = topology;
        cfg.generations = 30;
        cfg.mode = ExecutionMode::ParallelAsync;
        cfg.mixture.iterations = 0;
        let out = run_training(cfg).expect("timing run");
        out.records.iter().filter_map(|r| r.wall_clock_ms).max().unwrap() as f64
    };
    let (mut grid, mut ring) = (Vec::new(), Vec::new());
    for run in 0..5 {
        grid.push(time(Topology::grid(3, 3).unwrap(), run));
        ring.push(time(Topology::ring(9, 1).unwrap(), run));
    }
    let (g, r) = (median(&grid), median(&ring));
    let longer = 100.0 * (g - r) / r;
    let elapsed = start.elapsed();
    verdict(
        longer >= 10.0 && elapsed < Duration::from_secs(1800),
        format!("grid 3x3 median {g:.0} ms vs ring Z=9 r=1 {r:.0} ms: {longer:+.1}%, {elapsed:.0?}"),
    )
}

fn criterion_6(desk: &mut DeskRuns) -> Verdict {
    let (r1, r2) = (Topology::ring(6, 1).unwrap(), Topology::ring(6, 2).unwrap());
    let (mut shrinking, mut wider) = (0, 0);
    for s in 0..SEEDS {
        let a = desk.get(r1, s);
        let b = desk.get(r2, s);
        if a.l2_by_generation[&300] < a.l2_by_generation[&150] {
            shrinking += 1;
        }
        if a.l2_by_generation[&300] >= b.l2_by_generation[&300] {
            wider += 1;
        }
    }
    verdict(
        shrinking >= 7 && wider >= 7,
        format!("L2(300) < L2(150) in {shrinking}/{SEEDS} seeds; r=1 L2(300) >= r=2 L2(300) in {wider}/{SEEDS}"),
    )
}

fn criterion_7(desk: &mut DeskRuns) -> Verdict {
    let mut medians = Vec::new();
    for z in [2, 4, 6, 9] {
        let t = Topology::ring(z, 1).unwrap();
        let scores: Vec<f64> = (0..SEEDS).map(|s| desk.get(t, s).mixture_frechet).collect();
        medians.push((z, median(&scores)));
    }
    let ok = medians.windows(2).all(|w| w[1].1 <= 1.05 * w[0].1);
    let text: Vec<String> = medians.iter().map(|(z, m)| format!("Z={z}: {m:.4}")).collect();
    verdict(ok, format!("median final mixture Frechet {}", text.join(", ")))
}

fn criterion_8() -> Verdict {
    let gens: Vec<_> = (0..2)
        .map(|_| {
            let net = Network::zeros(vec![LayerSpec::new(1, 1, Activation::Identity)]).unwrap();
            coevgan::gan::Genome::new(net, 1e-3).unwrap()
        })
        .collect();
    let mut solved = 0;
    let mut elitist = true;
    let mut worst: f64 = 0.0;
    for s in 0..20 {
        let m = MixtureModel::uniform(gens.clone()).unwrap();
        let mut evaluated = Vec::new();
        let out = es_one_plus_one(
            m,
            |w: &[f64]| {
                let f = (w[0] - 0.7).powi(2) + (w[1] - 0.3).powi(2);
                evaluated.push(f);
                Ok(f)
            },
            500,
            0.05,
            &mut seed::rng(s, Stream::Mixture, 0, 0),
        )
        .unwrap();
        // the reported best is never lost: it is the minimum of every evaluation,
        // each best-so-far entry was actually evaluated, and the sequence never rises
        let min = evaluated.iter().copied().fold(f64::INFINITY, f64::min);
        elitist &= out.fitness == min && out.history.last() == Some(&out.fitness);
        elitist &= out.history.windows(2).all(|w| w[1] <= w[0]) && out.history.iter().all(|h| evaluated.contains(h));
        elitist &= (out.model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12 && out.model.weights.iter().all(|&w| w >= 0.0);
        worst = worst.max(out.fitness);
        if out.fitness < 1e-3 {
            solved += 1;
        }
    }
    verdict(
        solved == 20 && elitist,
        format!("{solved}/20 seeds below 1e-3 (worst {worst:.2e}), elitism {}", if elitist { "held" } else { "violated" }),
    )
}

fn criterion_9() -> Verdict {
    let mut checks = Vec::new();
    checks.push(("tvd p=q", tvd(&[2.0, 5.0, 1.0], &[2.0, 5.0, 1.0]).unwrap() == 0.0));
    checks.push(("tvd disjoint", tvd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() == 1.0));
    checks.push(("tvd [3,1] [1,3]", (tvd(&[3.0, 1.0], &[1.0, 3.0]).unwrap() - 0.5).abs() < 1e-12));

    let mut rng = seed::rng_from(99);
    let a = Matrix::from_vec(500, 3, (0..1500).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
    checks.push(("frechet identical", frechet_score(&a, &a).unwrap().abs() < 1e-9));

    let raw: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let sd = (raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (raw.len() - 1) as f64).sqrt();
    let std: Vec<f64> = raw.iter().map(|x| (x - mean) / sd).collect();
    let x = Matrix::from_vec(1000, 1, std.clone()).unwrap();
    let y = Matrix::from_vec(1000, 1, std.iter().map(|v| v + 1.0).collect()).unwrap();
    checks.push(("frechet 1D unit shift", (frechet_score(&x, &y).unwrap() - 1.0).abs() < 1e-9));

    let n = 100_000;
    let p = Matrix::from_vec(n, 2, (0..2 * n).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
    let q_data: Vec<f64> = (0..n)
        .flat_map(|_| {
            let (u, v): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            [u + 3.0, v + 4.0]
        })
        .collect();
    let q = Matrix::from_vec(n, 2, q_data).unwrap();
    let f = frechet_score(&p, &q).unwrap();
    // the cross term 2Δμ·noise has standard deviation near 0.045 at this sample size
    checks.push(("frechet 2D shift (3,4)", (f - 25.0).abs() < 0.2));

    let exp = Experiment::new(tiny_config(Topology::ring(4, 1).unwrap(), 0)).unwrap();
    let pop = exp.initialize().unwrap();
    let m = genome_l2_matrix(&pop).unwrap();
    let gens: Vec<_> = pop.generators().collect();
    let exact = (0..4).all(|i| {
        (0..4).all(|j| {
            let brute = gens[i].network.params().iter().zip(gens[j].network.params()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            m.get(i, j) == brute
        })
    });
    checks.push(("genome L2 brute force", exact));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} oracle checks exact or within tolerance (2D shift gave {f:.4})", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(Topology::ring(6, 1).unwrap(), 5);
    let bytes = |out: &TrainingOutcome| -> Vec<u8> {
        let mut b: Vec<u8> = out.records.iter().flat_map(|r| r.to_json_line().unwrap().into_bytes()).collect();
        b.extend(encode(&out.population, &cfg).unwrap());
        b
    };
    let a = run_training(cfg.clone()).unwrap();
    let b = run_training(cfg.clone()).unwrap();
    let identical = bytes(&a) == bytes(&b);

    let mut first = cfg.clone();
    first.generations = 2;
    let head = run_training(first).unwrap();
    let path = dir.path().join("ckpt.bin");
    checkpoint_save(&head.population, &cfg, &path).unwrap();
    let (pop, loaded) = checkpoint_load(&path).unwrap();
    let mut tail = Vec::new();
    let (pop, mixture) = Experiment::new(loaded)
        .unwrap()
        .resume(pop, &mut |r| {
            tail.push(r);
            Ok(())
        })
        .unwrap();
    let expected: Vec<_> = a.records.iter().filter(|r| r.generation > 2).cloned().collect();
    let resumed = pop == a.population && tail == expected && mixture.model.weights == a.mixture.model.weights;

    let full = std::fs::read(&path).unwrap();
    let truncated_rejected = (0..full.len()).step_by(97).all(|len| {
        std::fs::write(&path, &full[..len]).unwrap();
        matches!(checkpoint_load(&path), Err(Error::Checkpoint { .. }))
    });

    let idx = dir.path().join("bad.idx");
    std::fs::write(&idx, [0u8, 0, 8, 3, 0, 0, 0, 5, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3]).unwrap();
    let mut bad = cfg.clone();
    bad.data.source = DataSource::Idx { path: idx };
    let idx_rejected = matches!(Experiment::new(bad), Err(Error::IdxFormat { .. }));

    verdict(
        identical && resumed && truncated_rejected && idx_rejected,
        format!(
            "byte-identical {identical}, resume equivalent {resumed}, truncation rejected {truncated_rejected}, malformed IDX rejected {idx_rejected}"
        ),
    )
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let names = [
        "topology fidelity",
        "numeric core",
        "propagation law",
        "desk training quality",
        "time-saving direction",
        "diversity trend",
        "scaling trend",
        "mixture ES",
        "metrics unit oracles",
        "determinism and persistence",
    ];
    let mut desk = DeskRuns::default();
    let mut failed = 0;
    for (i, name) in names.iter().enumerate() {
        let k = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&k)) {
            continue;
        }
        let start = Instant::now();
        let v = match k {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(&mut desk),
            5 => criterion_5(),
            6 => criterion_6(&mut desk),
            7 => criterion_7(&mut desk),
            8 => criterion_8(),
            9 => criterion_9(),
            _ => criterion_10(),
        };
        if !v.pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {k} ({name}): {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}

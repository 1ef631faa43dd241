//! `compare`: timing and quality table across finished runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use coevgan::records::SCHEMA_VERSION;
use coevgan::MetricsRecord;

use crate::train::{RunSummary, METRICS_FILE, SUMMARY_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub name: String,
    pub cells: usize,
    pub generations: u64,
    /// Total wall-clock milliseconds of the run.
    pub total_ms: f64,
    /// Mean and standard deviation of per-generation wall-clock milliseconds.
    pub generation_ms: Option<(f64, f64)>,
    pub final_median_frechet: Option<f64>,
    pub final_best_frechet: Option<f64>,
    pub final_median_tvd: Option<f64>,
    pub final_mean_l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub runs: Vec<RunStats>,
}

/// `(other - reference) / reference`, in percent.
pub fn relative_time_difference(reference_ms: f64, other_ms: f64) -> f64 {
    100.0 * (other_ms - reference_ms) / reference_ms
}

pub fn describe_difference(pct: f64) -> String {
    if pct >= 0.0 {
        format!("+{pct:.1}% longer")
    } else {
        format!("{:.1}% shorter", -pct)
    }
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some((mean, var.sqrt()))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn read_metrics(dir: &Path) -> Result<Vec<MetricsRecord>> {
    let path = dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path)
        .with_context(|| format!("run {}: cannot read metrics file {}", dir.display(), path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let r: MetricsRecord = serde_json::from_str(line).map_err(|e| {
                anyhow!("run {}: line {} does not match metrics schema v{SCHEMA_VERSION}: {e}", dir.display(), i + 1)
            })?;
            if r.schema != SCHEMA_VERSION {
                bail!("run {}: metrics schema v{} is incompatible with v{SCHEMA_VERSION}", dir.display(), r.schema);
            }
            Ok(r)
        })
        .collect()
}

fn read_summary(dir: &Path) -> Option<RunSummary> {
    let text = fs::read_to_string(dir.join(SUMMARY_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Completion time of each generation (latest record of that generation),
/// from which per-generation durations follow.
fn generation_durations(records: &[MetricsRecord]) -> Vec<f64> {
    let mut done: BTreeMap<u64, u64> = BTreeMap::new();
    for r in records {
        if let Some(t) = r.wall_clock_ms {
            let e = done.entry(r.generation).or_insert(0);
            *e = (*e).max(t);
        }
    }
    let times: Vec<u64> = done.values().copied().collect();
    times.windows(2).map(|w| w[1].saturating_sub(w[0]) as f64).collect()
}

pub fn run_stats(dir: &Path) -> Result<RunStats> {
    let records = read_metrics(dir)?;
    if records.is_empty() {
        bail!("run {}: metrics file is empty", dir.display());
    }
    let summary = read_summary(dir);
    let last = records.iter().map(|r| r.generation).max().expect("nonempty");
    let finals: Vec<&MetricsRecord> = records.iter().filter(|r| r.generation == last).collect();
    let cells = records.iter().map(|r| r.cell).max().expect("nonempty") + 1;

    let record_total = records.iter().filter_map(|r| r.wall_clock_ms).max();
    let total_ms = match (record_total, &summary) {
        (Some(t), _) => t as f64,
        (None, Some(s)) => s.total_wall_ms as f64,
        (None, None) => bail!("run {}: no wall-clock data in metrics and no {SUMMARY_FILE}", dir.display()),
    };
    let mut durations = generation_durations(&records);
    if durations.is_empty() {
        durations = summary.as_ref().map(|s| s.generation_ms.clone()).unwrap_or_default();
    }
    let final_mean_l2 = finals.iter().map(|r| r.mean_l2_diversity).sum::<f64>() / finals.len() as f64;
    Ok(RunStats {
        name: dir.display().to_string(),
        cells,
        generations: last,
        total_ms,
        generation_ms: mean_std(&durations),
        final_median_frechet: median(finals.iter().filter_map(|r| r.frechet).collect()),
        final_best_frechet: finals.iter().filter_map(|r| r.frechet).min_by(f64::total_cmp),
        final_median_tvd: median(finals.iter().filter_map(|r| r.tvd).collect()),
        final_mean_l2,
    })
}

pub fn cmd_compare(dirs: &[PathBuf]) -> Result<CompareReport> {
    if dirs.len() < 2 {
        bail!("compare needs at least two runs");
    }
    let runs = dirs.iter().map(|d| run_stats(d)).collect::<Result<Vec<_>>>()?;
    Ok(CompareReport { runs })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl CompareReport {
    /// Time difference of each run relative to the first, in percent.
    pub fn time_differences(&self) -> Vec<f64> {
        let reference = self.runs[0].total_ms;
        self.runs.iter().map(|r| relative_time_difference(reference, r.total_ms)).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<32} {:>5} {:>5} {:>20} {:>11} {:>10} {:>10} {:>8} {:>9}  time vs first",
            "run", "cells", "gens", "ms/gen (mean±std)", "total ms", "med frech", "best frech", "med tvd", "mean L2"
        );
        for (r, pct) in self.runs.iter().zip(self.time_differences()) {
            let per_gen = r.generation_ms.map_or_else(|| "-".to_string(), |(m, sd)| format!("{m:.1}±{sd:.1}"));
            let _ = writeln!(
                s,
                "{:<32} {:>5} {:>5} {:>20} {:>11.0} {:>10} {:>10} {:>8} {:>9.4}  {}",
                r.name,
                r.cells,
                r.generations,
                per_gen,
                r.total_ms,
                opt(r.final_median_frechet),
                opt(r.final_best_frechet),
                opt(r.final_median_tvd),
                r.final_mean_l2,
                describe_difference(pct)
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentages() {
        assert_eq!(describe_difference(relative_time_difference(100.0, 120.0)), "+20.0% longer");
        assert_eq!(describe_difference(relative_time_difference(100.0, 100.0)), "+0.0% longer");
        assert_eq!(describe_difference(relative_time_difference(120.0, 90.0)), "25.0% shorter");
        let pct = relative_time_difference(65.83, 87.86);
        assert!((pct - 33.46).abs() < 0.01, "{pct}");
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, sd) = mean_std(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[]), None);
    }
}

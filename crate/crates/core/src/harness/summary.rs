use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::Mode;
use super::run::{MetricsRecord, RunOutput};
use crate::learner::ArchKind;

/// Sample mean and standard deviation with the `n - 1` denominator.
/// A single sample has standard deviation 0 by convention.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: Mode,
    pub arch: ArchKind,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

impl SummaryRow {
    /// True when the standard deviation is the single-run convention rather than an estimate.
    pub fn std_is_conventional(&self) -> bool {
        self.runs == 1
    }
}

/// Mean and standard deviation over runs of the final test accuracy, per
/// (mode, architecture). Agents sharing an architecture are averaged within a
/// run first, so every run contributes one sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

fn arch_order(a: ArchKind) -> usize {
    ArchKind::ALL.iter().position(|&k| k == a).unwrap_or(usize::MAX)
}

impl SummaryTable {
    pub fn from_runs(runs: &[RunOutput]) -> Self {
        let mut sorted: Vec<&RunOutput> = runs.iter().collect();
        sorted.sort_by_key(|r| r.run);
        let mut samples: BTreeMap<(Mode, usize, ArchKind), Vec<f64>> = BTreeMap::new();
        for r in sorted {
            let mut per_arch: BTreeMap<ArchKind, Vec<f64>> = BTreeMap::new();
            for (arch, acc) in r.architectures.iter().zip(r.final_accuracy()) {
                per_arch.entry(*arch).or_default().push(acc);
            }
            for (arch, accs) in per_arch {
                samples.entry((r.mode, arch_order(arch), arch)).or_default().push(mean_std(&accs).0);
            }
        }
        let rows = samples
            .into_iter()
            .map(|((mode, _, arch), xs)| {
                let (mean, std) = mean_std(&xs);
                SummaryRow { mode, arch, mean, std, runs: xs.len() }
            })
            .collect();
        Self { rows }
    }

    pub fn get(&self, mode: Mode, arch: ArchKind) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.mode == mode && r.arch == arch)
    }

    /// Mean over architectures of the per-architecture means for `mode`.
    pub fn overall_mean(&self, mode: Mode) -> f64 {
        let means: Vec<f64> = self.rows.iter().filter(|r| r.mode == mode).map(|r| r.mean).collect();
        mean_std(&means).0
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<5} {:<5} {:>8} {:>8} {:>5}", "mode", "arch", "mean", "std", "runs")?;
        for r in &self.rows {
            let note = if r.std_is_conventional() { "  (single run: std set to 0)" } else { "" };
            writeln!(f, "{:<5} {:<5} {:>8.4} {:>8.4} {:>5}{note}", r.mode.as_str(), r.arch.as_str(), r.mean, r.std, r.runs)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: u64,
    pub mean: f64,
    pub std: f64,
}

/// Accuracy over iterations for one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub arch: ArchKind,
    pub points: Vec<TracePoint>,
}

/// Test-accuracy traces per architecture: agents sharing an architecture are
/// averaged within a run, then mean and standard deviation are taken over runs.
pub fn traces(records: &[MetricsRecord], label: &str) -> Vec<Series> {
    let mut by_run: BTreeMap<(usize, ArchKind, u64, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        by_run.entry((arch_order(r.arch), r.arch, r.iter, r.run)).or_default().push(r.test_acc);
    }
    let mut by_iter: BTreeMap<(usize, ArchKind), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for ((order, arch, iter, _run), accs) in by_run {
        by_iter.entry((order, arch)).or_default().entry(iter).or_default().push(mean_std(&accs).0);
    }
    by_iter
        .into_iter()
        .map(|((_, arch), iters)| Series {
            label: label.to_string(),
            arch,
            points: iters
                .into_iter()
                .map(|(iter, xs)| {
                    let (mean, std) = mean_std(&xs);
                    TracePoint { iter, mean, std }
                })
                .collect(),
        })
        .collect()
}

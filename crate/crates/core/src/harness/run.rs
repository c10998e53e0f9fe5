use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataConfig, ExperimentConfig, Mode, Precision};
use super::summary::{traces, SummaryTable};
use super::{emit_csv, emit_plot, HarnessError};
use crate::collective::{
    run_collective, self_train, AgentState, CollectiveData, CollectiveError, CollectiveStats, Observer,
};
use crate::data::{make_partition, synth_blobs, Dataset, FashionMnistFiles, PartitionManifest, ProxyLabelAudit};
use crate::graph::AgentId;
use crate::learner::{ArchKind, Architecture, Learner, LearnerError};
use crate::scalar::Scalar;
use crate::seed;

/// One evaluation of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run: usize,
    /// Collective iteration; 0 is the state after self-training (or the only
    /// point in ST and FS modes).
    pub iter: u64,
    pub agent: usize,
    pub arch: ArchKind,
    pub test_acc: f64,
    pub val_acc: f64,
    /// Fraction of this agent's proxy labels since the previous record that
    /// matched the withheld true labels. CL only.
    pub proxy_correct: Option<f64>,
}

/// The labeled corpus agents draw from and the held-out test set.
#[derive(Debug, Clone)]
pub struct Corpus<T> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
}

impl<T: Scalar> Corpus<T> {
    pub fn load(data: &DataConfig, master_seed: u64) -> Result<Self, HarnessError> {
        match data {
            DataConfig::FashionMnist { dir } => {
                let files = FashionMnistFiles::in_dir(dir);
                if !files.exist() {
                    return Err(HarnessError::config(
                        "data.dir",
                        format!("{} does not contain the four Fashion-MNIST IDX files", dir.display()),
                    ));
                }
                let (train, test) = files.load()?;
                Ok(Self { train, test })
            }
            DataConfig::Synth { classes, dim, separation, train_per_class, test_per_class } => {
                let s = |i| seed::derive(master_seed, &[seed::tag::DATA, i]);
                Ok(Self {
                    train: synth_blobs(*train_per_class, *classes, *dim, *separation, s(0))?,
                    test: synth_blobs(*test_per_class, *classes, *dim, *separation, s(1))?,
                })
            }
        }
    }
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run: usize,
    pub seed: u64,
    pub mode: Mode,
    pub architectures: Vec<ArchKind>,
    pub records: Vec<MetricsRecord>,
    pub stats: Option<CollectiveStats>,
    pub partition: PartitionManifest,
}

impl RunOutput {
    /// Last test accuracy of each agent.
    pub fn final_accuracy(&self) -> Vec<f64> {
        let mut acc = vec![f64::NAN; self.architectures.len()];
        let mut at = vec![0; self.architectures.len()];
        for r in &self.records {
            if r.iter >= at[r.agent] {
                at[r.agent] = r.iter;
                acc[r.agent] = r.test_acc;
            }
        }
        acc
    }
}

struct Recorder<'a, T> {
    run: usize,
    archs: &'a [ArchKind],
    test: &'a Dataset<T>,
    validation: Vec<&'a Dataset<T>>,
    audit: Option<ProxyLabelAudit<'a>>,
    correct: Vec<usize>,
    seen: Vec<usize>,
    records: Vec<MetricsRecord>,
}

impl<'a, T: Scalar> Recorder<'a, T> {
    fn record(&mut self, k: u64, agents: &[AgentState<T>]) -> Result<(), CollectiveError> {
        let evals: Vec<(f64, f64)> = agents
            .par_iter()
            .zip(&self.validation)
            .map(|(a, v)| {
                let eval = || -> Result<_, LearnerError> { Ok((a.learner.accuracy(self.test)?, a.learner.accuracy(v)?)) };
                eval().map_err(|source| CollectiveError::Agent { agent: a.id, iteration: k, source })
            })
            .collect::<Result<_, _>>()?;
        for (i, (test_acc, val_acc)) in evals.into_iter().enumerate() {
            let proxy_correct = (self.seen[i] > 0).then(|| self.correct[i] as f64 / self.seen[i] as f64);
            self.records.push(MetricsRecord {
                run: self.run,
                iter: k,
                agent: i,
                arch: self.archs[i],
                test_acc,
                val_acc,
                proxy_correct,
            });
        }
        self.correct.iter_mut().for_each(|c| *c = 0);
        self.seen.iter_mut().for_each(|c| *c = 0);
        Ok(())
    }
}

impl<T: Scalar> Observer<T> for Recorder<'_, T> {
    fn on_round(&mut self, _k: u64, rows: &[usize], labels: &[Vec<usize>]) {
        if let Some(audit) = &self.audit {
            for (i, y) in labels.iter().enumerate() {
                self.correct[i] += audit.count_correct(rows, y);
                self.seen[i] += rows.len();
            }
        }
    }

    fn on_metrics(&mut self, k: u64, agents: &[AgentState<T>]) -> Result<(), CollectiveError> {
        self.record(k, agents)
    }
}

fn build_agents<T: Scalar>(
    cfg: &ExperimentConfig,
    archs: &[ArchKind],
    input_dim: usize,
    classes: usize,
    run_seed: u64,
) -> Result<Vec<AgentState<T>>, HarnessError> {
    archs
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let arch = Architecture::new(kind, input_dim, classes)?;
            let mut rng = seed::rng(seed::derive(run_seed, &[seed::tag::INIT, i as u64]));
            let learner = Learner::init(Arc::new(arch), cfg.optimizer, &mut rng)?;
            Ok(AgentState::new(AgentId(i), learner))
        })
        .collect()
}

/// Run `run` of `cfg` in its configured mode.
///
/// CL self-trains and then runs the collective phase, recording metrics every
/// `metric_stride` iterations. ST self-trains on the same private sets. FS
/// trains every agent on the whole labeled corpus for `fs_epochs` epochs.
pub fn run_mode<T: Scalar>(cfg: &ExperimentConfig, corpus: &Corpus<T>, run: usize) -> Result<RunOutput, HarnessError> {
    let run_seed = cfg.run_seed(run);
    let partition = make_partition(&corpus.train, cfg.partition_spec(), seed::derive(run_seed, &[seed::tag::PARTITION]))?;
    let archs = cfg.agents.assign(run_seed);
    let mut agents = build_agents::<T>(cfg, &archs, corpus.train.dim(), corpus.train.num_classes(), run_seed)?;
    let data = CollectiveData::from(&partition);
    let sched = &cfg.schedule;

    let mut recorder = Recorder {
        run,
        archs: &archs,
        test: &corpus.test,
        validation: data.validation.clone(),
        audit: (cfg.mode == Mode::Cl).then(|| partition.shared.audit()),
        correct: vec![0; archs.len()],
        seen: vec![0; archs.len()],
        records: Vec::new(),
    };

    let mut stats = None;
    match cfg.mode {
        Mode::Cl => {
            self_train(&mut agents, &data.train, sched.batch_size, sched.self_train_epochs, run_seed)?;
            let graphs = cfg.graph.schedule(agents.len(), run_seed)?;
            stats = Some(run_collective(&mut agents, &data, &graphs, sched, run_seed, &mut recorder)?);
        }
        Mode::St => {
            self_train(&mut agents, &data.train, sched.batch_size, sched.self_train_epochs, run_seed)?;
            recorder.record(0, &agents)?;
        }
        Mode::Fs => {
            agents.par_iter_mut().try_for_each(|a| {
                let s = seed::derive(run_seed, &[seed::tag::SELF_TRAIN, a.id.0 as u64]);
                a.learner.train_epochs(&corpus.train, sched.batch_size, cfg.fs_epochs, s)
            })?;
            recorder.record(0, &agents)?;
        }
    }

    Ok(RunOutput {
        run,
        seed: run_seed,
        mode: cfg.mode,
        records: recorder.records,
        architectures: archs,
        stats,
        partition: partition.manifest(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct MonteCarloOptions {
    /// Report each finished run on stderr.
    pub progress: bool,
}

/// Outcome of `runs` independent runs, ordered by run index.
#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunOutput>,
    pub summary: SummaryTable,
}

impl MonteCarloResult {
    pub fn records(&self) -> impl Iterator<Item = &MetricsRecord> {
        self.runs.iter().flat_map(|r| &r.records)
    }
}

/// Loads the configured corpus and runs the Monte Carlo set in the configured precision.
pub fn montecarlo(cfg: &ExperimentConfig, opts: &MonteCarloOptions) -> Result<MonteCarloResult, HarnessError> {
    let all: Vec<usize> = (0..cfg.runs).collect();
    match cfg.precision {
        Precision::F32 => run_indices(cfg, &Corpus::<f32>::load(&cfg.data, cfg.seed)?, &all, opts),
        Precision::F64 => run_indices(cfg, &Corpus::<f64>::load(&cfg.data, cfg.seed)?, &all, opts),
    }
}

/// Only run `run` of the Monte Carlo set, with the same seed it gets there.
pub fn run_single(cfg: &ExperimentConfig, run: usize, opts: &MonteCarloOptions) -> Result<MonteCarloResult, HarnessError> {
    match cfg.precision {
        Precision::F32 => run_indices(cfg, &Corpus::<f32>::load(&cfg.data, cfg.seed)?, &[run], opts),
        Precision::F64 => run_indices(cfg, &Corpus::<f64>::load(&cfg.data, cfg.seed)?, &[run], opts),
    }
}

/// `cfg.runs` runs on an already loaded corpus. Each run derives its seed from
/// the master seed and its index, so results do not depend on execution order.
pub fn montecarlo_with<T: Scalar>(
    cfg: &ExperimentConfig,
    corpus: &Corpus<T>,
    opts: &MonteCarloOptions,
) -> Result<MonteCarloResult, HarnessError> {
    let all: Vec<usize> = (0..cfg.runs).collect();
    run_indices(cfg, corpus, &all, opts)
}

fn run_indices<T: Scalar>(
    cfg: &ExperimentConfig,
    corpus: &Corpus<T>,
    indices: &[usize],
    opts: &MonteCarloOptions,
) -> Result<MonteCarloResult, HarnessError> {
    cfg.validate()?;
    let one = |&run: &usize| {
        let out = run_mode(cfg, corpus, run).map_err(|e| HarnessError::Run {
            run,
            seed: cfg.run_seed(run),
            source: Box::new(e),
        });
        if opts.progress {
            if let Ok(o) = &out {
                let acc: Vec<String> = o.final_accuracy().iter().map(|a| format!("{a:.4}")).collect();
                eprintln!("{} run {}/{}: final test accuracy [{}]", cfg.mode, run + 1, cfg.runs, acc.join(", "));
            }
        }
        out
    };
    let runs: Vec<RunOutput> = if cfg.parallel {
        let mut results: Vec<Result<RunOutput, HarnessError>> = indices.par_iter().map(one).collect();
        match results.iter().position(Result::is_err) {
            Some(i) => return Err(results.swap_remove(i).unwrap_err()),
            None => results.into_iter().map(Result::unwrap).collect(),
        }
    } else {
        indices.iter().map(one).collect::<Result<_, _>>()?
    };
    let summary = SummaryTable::from_runs(&runs);
    Ok(MonteCarloResult { config: cfg.clone(), runs, summary })
}

/// Writes `metrics.csv`, `summary.txt`, `summary.json`, `accuracy.svg`,
/// `config.toml` and one partition manifest per run into `dir`.
pub fn write_artifacts(result: &MonteCarloResult, dir: &Path) -> Result<(), HarnessError> {
    let manifests = dir.join("partitions");
    fs::create_dir_all(&manifests).map_err(|e| HarnessError::io(&manifests, e))?;
    let write = |name: &str, text: String| -> Result<(), HarnessError> {
        let path: PathBuf = dir.join(name);
        fs::write(&path, text).map_err(|e| HarnessError::io(path, e))
    };
    let records: Vec<MetricsRecord> = result.records().cloned().collect();
    emit_csv(&records, dir.join("metrics.csv"))?;
    write("summary.txt", result.summary.to_string())?;
    write("summary.json", serde_json::to_string_pretty(&result.summary).expect("summary serializes") + "\n")?;
    write("config.toml", result.config.to_toml())?;
    emit_plot(&traces(&records, result.config.mode.as_str()), dir.join("accuracy.svg"))?;
    for r in &result.runs {
        let path = manifests.join(format!("run-{:04}.json", r.run));
        let text = serde_json::to_string_pretty(&r.partition).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(())
}

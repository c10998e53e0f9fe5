//! Experiment configuration files.
//!
//! ```toml
//! mode = "cl"            # cl | st | fs
//! runs = 5
//! seed = 1
//!
//! [data]
//! source = "fashion-mnist"
//! dir = "data/fashion-mnist"
//!
//! [agents]
//! architectures = ["HL2", "HL1", "SHL", "HL1"]
//! train_size = 500
//! val_size = 100
//!
//! [schedule]
//! refresh_period = 100
//! review_period = 300
//! gamma = 100.0
//!
//! [graph]
//! kind = "complete"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::collective::ScheduleConfig;
use crate::data::{PartitionSpec, ValidationMode};
use crate::graph::{DirectedGraph, GraphSchedule};
use crate::learner::{ArchKind, UpdateRule};
use crate::seed;

/// The three compared protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Self-training followed by collective training.
    Cl,
    /// Self-training only, on a private set of the same size.
    St,
    /// Supervised training on the whole labeled corpus.
    Fs,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cl => "CL",
            Mode::St => "ST",
            Mode::Fs => "FS",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cl" => Ok(Mode::Cl),
            "st" => Ok(Mode::St),
            "fs" => Ok(Mode::Fs),
            _ => Err(format!("unknown mode {s:?} (expected cl, st or fs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    /// IDX files with the standard Fashion-MNIST names. Relative paths are
    /// resolved against the config file's directory.
    FashionMnist { dir: PathBuf },
    /// Gaussian blobs; the labeled corpus and test set are drawn from the master seed.
    Synth {
        classes: usize,
        dim: usize,
        separation: f64,
        train_per_class: usize,
        test_per_class: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    /// Explicit architecture of each agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architectures: Option<Vec<ArchKind>>,
    /// Architecture counts; agents get a random permutation of the multiset each run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<BTreeMap<ArchKind, usize>>,
    pub train_size: usize,
    pub val_size: usize,
    #[serde(default)]
    pub validation: ValidationMode,
}

impl AgentsConfig {
    pub fn n_agents(&self) -> usize {
        match (&self.architectures, &self.mix) {
            (Some(a), _) => a.len(),
            (None, Some(m)) => m.values().sum(),
            (None, None) => 0,
        }
    }

    /// Architectures for run seed `run_seed`.
    pub fn assign(&self, run_seed: u64) -> Vec<ArchKind> {
        use rand::seq::SliceRandom;
        match (&self.architectures, &self.mix) {
            (Some(a), _) => a.clone(),
            (None, Some(m)) => {
                let mut v: Vec<ArchKind> = m.iter().flat_map(|(&k, &c)| std::iter::repeat_n(k, c)).collect();
                v.shuffle(&mut seed::rng(seed::derive(run_seed, &[seed::tag::ARCH_MIX])));
                v
            }
            (None, None) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphConfig {
    Complete,
    Cycle,
    /// Fixed directed edges `[from, to]`.
    Static { edges: Vec<[usize; 2]> },
    /// Directed Erdős–Rényi graph redrawn every `period` iterations.
    ErdosRenyi { p: f64, period: u64 },
}

impl GraphConfig {
    pub fn schedule(&self, n: usize, run_seed: u64) -> Result<GraphSchedule, HarnessError> {
        let field = |e: crate::graph::GraphError| HarnessError::config("graph", e.to_string());
        Ok(match self {
            GraphConfig::Complete => GraphSchedule::Static(DirectedGraph::complete(n)),
            GraphConfig::Cycle => GraphSchedule::Static(DirectedGraph::cycle(n)),
            GraphConfig::Static { edges } => {
                GraphSchedule::Static(DirectedGraph::from_edges(n, edges.iter().map(|e| (e[0], e[1]))).map_err(field)?)
            }
            GraphConfig::ErdosRenyi { p, period } => GraphSchedule::periodic_random(n, *p, *period, run_seed).map_err(field)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    /// Run Monte Carlo replicas in parallel.
    #[serde(default)]
    pub parallel: bool,
    /// Epochs over the full corpus in FS mode.
    #[serde(default = "fs_epochs")]
    pub fs_epochs: usize,
    pub data: DataConfig,
    pub agents: AgentsConfig,
    #[serde(default)]
    pub optimizer: UpdateRule,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "complete")]
    pub graph: GraphConfig,
}

fn one() -> usize {
    1
}

fn fs_epochs() -> usize {
    3
}

fn complete() -> GraphConfig {
    GraphConfig::Complete
}

/// Short names accepted by [`ExperimentConfig::set_param`].
const ALIASES: &[(&str, &str)] = &[
    ("gamma", "schedule.gamma"),
    ("refresh_period", "schedule.refresh_period"),
    ("review_period", "schedule.review_period"),
    ("self_train_epochs", "schedule.self_train_epochs"),
    ("shared_epochs", "schedule.shared_epochs"),
    ("max_iterations", "schedule.max_iterations"),
    ("metric_stride", "schedule.metric_stride"),
    ("collective_batch", "schedule.collective_batch"),
    ("batch_size", "schedule.batch_size"),
    ("train_size", "agents.train_size"),
    ("val_size", "agents.val_size"),
    ("lr", "optimizer.lr"),
    ("p", "graph.p"),
    ("period", "graph.period"),
];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; a relative Fashion-MNIST directory
    /// is resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config { field, message } => {
                HarnessError::Config { field, message: format!("{message} (in {})", path.display()) }
            }
            other => other,
        })?;
        if let DataConfig::FashionMnist { dir } = &mut cfg.data {
            if dir.is_relative() {
                if let Some(parent) = path.parent() {
                    *dir = parent.join(&*dir);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_agents(&self) -> usize {
        self.agents.n_agents()
    }

    pub fn partition_spec(&self) -> PartitionSpec {
        PartitionSpec {
            validation: self.agents.validation,
            ..PartitionSpec::new(self.n_agents(), self.agents.train_size, self.agents.val_size)
        }
    }

    /// Seed of run `run`.
    pub fn run_seed(&self, run: usize) -> u64 {
        seed::derive(self.seed, &[run as u64])
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = HarnessError::config;
        if self.runs == 0 {
            return Err(err("runs", "must be >= 1".into()));
        }
        match (&self.agents.architectures, &self.agents.mix) {
            (Some(_), Some(_)) => return Err(err("agents", "give either `architectures` or `mix`, not both".into())),
            (None, None) => return Err(err("agents", "missing `architectures` or `mix`".into())),
            _ => {}
        }
        let n = self.n_agents();
        if n == 0 {
            return Err(err("agents", "at least one agent is required".into()));
        }
        if self.agents.train_size == 0 {
            return Err(err("agents.train_size", "must be >= 1".into()));
        }
        if self.agents.val_size == 0 {
            return Err(err("agents.val_size", "must be >= 1".into()));
        }
        if self.fs_epochs == 0 && self.mode == Mode::Fs {
            return Err(err("fs_epochs", "must be >= 1 in FS mode".into()));
        }
        self.optimizer.validate().map_err(|e| err("optimizer", e.to_string()))?;
        self.schedule.validate(n).map_err(|e| err("schedule", e.to_string()))?;
        match &self.data {
            DataConfig::FashionMnist { .. } => {}
            DataConfig::Synth { classes, dim, separation, train_per_class, test_per_class } => {
                if *classes < 2 || *dim == 0 || *train_per_class == 0 || *test_per_class == 0 {
                    return Err(err("data", "synth sizes must be positive with at least 2 classes".into()));
                }
                if !(separation.is_finite() && *separation > 0.0) {
                    return Err(err("data.separation", format!("must be positive, got {separation}")));
                }
                let labeled = classes * train_per_class;
                let needed = self.partition_spec().labeled_needed();
                if needed >= labeled {
                    return Err(err(
                        "agents",
                        format!("{n} agents need {needed} labeled samples but the synth corpus has {labeled}"),
                    ));
                }
            }
        }
        match &self.graph {
            GraphConfig::Static { edges } => {
                if let Some(e) = edges.iter().find(|e| e[0] >= n || e[1] >= n) {
                    return Err(err("graph.edges", format!("edge {e:?} references an agent >= {n}")));
                }
            }
            GraphConfig::ErdosRenyi { p, period } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(err("graph.p", format!("must be in [0, 1], got {p}")));
                }
                if *period == 0 {
                    return Err(err("graph.period", "must be >= 1".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Returns a copy with `name` (a dotted path such as `schedule.gamma`, or a
    /// short alias such as `gamma`) set to `value`, parsed as a TOML value.
    pub fn set_param(&self, name: &str, value: &str) -> Result<Self, HarnessError> {
        let path = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, p)| *p);
        let mut root = toml::Value::try_from(self).expect("config serializes");
        let new = parse_value(value);

        let mut parts: Vec<&str> = path.split('.').collect();
        let leaf = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| HarnessError::config(name, "empty name".into()))?;
        let mut table = root.as_table_mut().expect("config is a table");
        for part in parts {
            table = table
                .get_mut(part)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| HarnessError::config(name, format!("unknown section {part:?}")))?;
        }
        let coerced = match (table.get(leaf), new) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(leaf.to_string(), coerced);

        let cfg: Self = root.try_into().map_err(|e: toml::de::Error| HarnessError::config(name, e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_value(text: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    toml::from_str::<Wrap>(&format!("v = {text}"))
        .map(|w| w.v)
        .unwrap_or_else(|_| toml::Value::String(text.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collective::Period;

    const BASE: &str = r#"
        mode = "cl"
        runs = 2
        seed = 7

        [data]
        source = "synth"
        classes = 5
        dim = 20
        separation = 2.0
        train_per_class = 100
        test_per_class = 20

        [agents]
        mix = { SHL = 2, HL1 = 2 }
        train_size = 30
        val_size = 30

        [schedule]
        refresh_period = 100
        review_period = 300
        gamma = 100.0
    "#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(c.n_agents(), 4);
        assert_eq!(c.graph, GraphConfig::Complete);
        assert_eq!(c.optimizer, UpdateRule::adam(1e-3));
        assert_eq!(c.fs_epochs, 3);
        assert_eq!(c.schedule.collective_batch, 10);
        assert_eq!(c.schedule.metric_stride, 100);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn mix_assignment_is_seeded_permutation() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        let a = c.agents.assign(c.run_seed(0));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, vec![ArchKind::Shl, ArchKind::Shl, ArchKind::Hl1, ArchKind::Hl1]);
        assert_eq!(a, c.agents.assign(c.run_seed(0)));
    }

    #[test]
    fn field_level_errors() {
        let bad = BASE.replace("runs = 2", "runs = 0");
        match ExperimentConfig::from_toml(&bad) {
            Err(HarnessError::Config { field, .. }) => assert_eq!(field, "runs"),
            other => panic!("{other:?}"),
        }
        let bad = BASE.replace("train_size = 30", "train_size = 200");
        match ExperimentConfig::from_toml(&bad) {
            Err(HarnessError::Config { field, message }) => {
                assert_eq!(field, "agents");
                assert!(message.contains("labeled samples"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let bad = BASE.replace("gamma = 100.0", "gamma = 100.0\nbogus = 1");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(HarnessError::Config { .. })));
    }

    #[test]
    fn set_param_paths_and_aliases() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(c.set_param("gamma", "1000").unwrap().schedule.gamma, 1000.0);
        assert_eq!(c.set_param("schedule.review_period", "5000").unwrap().schedule.review_period, Period::Uniform(5000));
        assert_eq!(c.set_param("train_size", "20").unwrap().agents.train_size, 20);
        assert_eq!(c.set_param("mode", "st").unwrap().mode, Mode::St);
        assert_eq!(c.set_param("lr", "0.01").unwrap().optimizer, UpdateRule::adam(0.01));
        assert!(matches!(c.set_param("nope.gamma", "1"), Err(HarnessError::Config { .. })));
        assert!(matches!(c.set_param("runs", "0"), Err(HarnessError::Config { .. })));
    }

    #[test]
    fn graph_configs() {
        let text = BASE.to_string() + "\n[graph]\nkind = \"erdos-renyi\"\np = 0.5\nperiod = 10\n";
        let c = ExperimentConfig::from_toml(&text).unwrap();
        let s = c.graph.schedule(4, 1).unwrap();
        assert_eq!(s.round_of(25), 2);
        let text = BASE.to_string() + "\n[graph]\nkind = \"static\"\nedges = [[0, 9]]\n";
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::scalar::Scalar;
use crate::seed;

/// How validation sets are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMode {
    /// A private validation set per agent, disjoint across agents.
    #[default]
    PerAgent,
    /// One validation set shared by every agent.
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionSpec {
    pub n_agents: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub validation: ValidationMode,
}

impl PartitionSpec {
    pub fn new(n_agents: usize, train_size: usize, val_size: usize) -> Self {
        Self { n_agents, train_size, val_size, validation: ValidationMode::PerAgent }
    }

    /// Number of source samples the labeled sets consume.
    pub fn labeled_needed(&self) -> usize {
        match self.validation {
            ValidationMode::PerAgent => self.n_agents * (self.train_size + self.val_size),
            ValidationMode::Common => self.n_agents * self.train_size + self.val_size,
        }
    }
}

/// An agent's private labeled data.
#[derive(Debug, Clone)]
pub struct AgentData<T> {
    pub train: Dataset<T>,
    pub validation: Dataset<T>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// The shared unlabeled pool. True labels are kept only for auditing proxy labels.
#[derive(Debug, Clone)]
pub struct SharedPool<T> {
    data: Dataset<T>,
    indices: Vec<usize>,
    withheld: Vec<usize>,
}

impl<T: Scalar> SharedPool<T> {
    /// Unlabeled features; row `r` is source sample `indices()[r]`.
    pub fn data(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Read-only audit channel for measuring proxy-label correctness.
    pub fn audit(&self) -> ProxyLabelAudit<'_> {
        ProxyLabelAudit { withheld: &self.withheld }
    }
}

/// Compares proxy labels against the withheld true labels of the shared pool.
#[derive(Debug, Clone, Copy)]
pub struct ProxyLabelAudit<'a> {
    withheld: &'a [usize],
}

impl ProxyLabelAudit<'_> {
    /// How many of `proxy[t]` equal the true label of pool row `rows[t]`.
    pub fn count_correct(&self, rows: &[usize], proxy: &[usize]) -> usize {
        rows.iter().zip(proxy).filter(|(&r, &y)| self.withheld[r] == y).count()
    }
}

#[derive(Debug, Clone)]
pub struct Partition<T> {
    pub agents: Vec<AgentData<T>>,
    pub shared: SharedPool<T>,
    pub seed: u64,
    pub source_len: usize,
}

/// Sorted index lists per agent, for reproducing a run's data split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub seed: u64,
    pub source_len: usize,
    pub shared_len: usize,
    pub agents: Vec<AgentManifest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentManifest {
    pub agent: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl<T: Scalar> Partition<T> {
    pub fn manifest(&self) -> PartitionManifest {
        let sorted = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            v
        };
        PartitionManifest {
            seed: self.seed,
            source_len: self.source_len,
            shared_len: self.shared.len(),
            agents: self
                .agents
                .iter()
                .enumerate()
                .map(|(agent, a)| AgentManifest {
                    agent,
                    train: sorted(&a.train_indices),
                    validation: sorted(&a.validation_indices),
                })
                .collect(),
        }
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|source| DataError::Io { path: path.to_owned(), source })
    }
}

/// Uniformly samples (without replacement) each agent's training and validation
/// sets from `source`; every remaining sample goes, unlabeled, to the shared pool.
pub fn make_partition<T: Scalar>(source: &Dataset<T>, spec: PartitionSpec, seed: u64) -> Result<Partition<T>, DataError> {
    source.require_labels()?;
    if spec.n_agents == 0 || spec.train_size == 0 || spec.val_size == 0 {
        return Err(DataError::InvalidArgument("agents, train size and validation size must be positive".into()));
    }
    let needed = spec.labeled_needed();
    if needed > source.len() {
        return Err(DataError::Insufficient { needed, available: source.len() });
    }
    let mut perm: Vec<usize> = (0..source.len()).collect();
    perm.shuffle(&mut seed::rng(seed));

    let mut cursor = 0;
    let mut take = |n: usize| {
        let s = perm[cursor..cursor + n].to_vec();
        cursor += n;
        s
    };
    let common = (spec.validation == ValidationMode::Common).then(|| take(spec.val_size));
    let agents = (0..spec.n_agents)
        .map(|_| {
            let train_indices = take(spec.train_size);
            let validation_indices = common.clone().unwrap_or_else(|| take(spec.val_size));
            AgentData {
                train: source.select(&train_indices),
                validation: source.select(&validation_indices),
                train_indices,
                validation_indices,
            }
        })
        .collect();

    let mut rest = perm[needed..].to_vec();
    rest.sort_unstable();
    let (data, withheld) = source.select(&rest).into_unlabeled();
    Ok(Partition {
        agents,
        shared: SharedPool { data, indices: rest, withheld: withheld.unwrap_or_default() },
        seed,
        source_len: source.len(),
    })
}

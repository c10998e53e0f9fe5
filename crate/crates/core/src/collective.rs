//! Round-synchronous collective training.
//!
//! Each iteration draws a batch from the shared unlabeled pool. Every agent
//! predicts on it with its pre-round parameters and broadcasts the predictions.
//! It then fuses the in-neighborhood's predictions with its row of the mixing
//! matrix, labels the batch with the arg-max of the fused vectors, and takes
//! one update step on those proxy labels. Scores (and hence the mixing matrix)
//! are refreshed every `T_E` iterations. Every `T_R` iterations an agent
//! reviews its private training set for one epoch.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{batch_order, DataError, Dataset, Partition};
use crate::graph::{build_weight_matrix_from_log_scores, AgentId, DirectedGraph, GraphError, GraphSchedule, WeightMatrix};
use crate::learner::{argmax, Learner, LearnerError};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Error)]
pub enum CollectiveError {
    #[error("agent {agent} at iteration {iteration}: {source}")]
    Agent {
        agent: AgentId,
        iteration: u64,
        #[source]
        source: LearnerError,
    },
    #[error("cannot label fused vector: {0}")]
    Label(String),
    #[error("agents disagree on the number of classes ({0:?})")]
    ClassMismatch(Vec<usize>),
    #[error("invalid round input: {0}")]
    InvalidInput(String),
    #[error("invalid schedule: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A per-agent period: one value for everyone or one per agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Period {
    Uniform(u64),
    PerAgent(Vec<u64>),
}

impl Period {
    pub fn for_agent(&self, i: usize) -> u64 {
        match self {
            Period::Uniform(p) => *p,
            Period::PerAgent(v) => v[i],
        }
    }

    fn validate(&self, name: &str, n_agents: usize) -> Result<(), CollectiveError> {
        let ok = match self {
            Period::Uniform(p) => *p >= 1,
            Period::PerAgent(v) => v.len() == n_agents && v.iter().all(|&p| p >= 1),
        };
        if ok {
            Ok(())
        } else {
            Err(CollectiveError::Config(format!("{name} must be >= 1 (one value or one per agent), got {self:?}")))
        }
    }
}

impl From<u64> for Period {
    fn from(p: u64) -> Self {
        Period::Uniform(p)
    }
}

/// Timing and size parameters of the collective phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Score refresh period `T_E`.
    pub refresh_period: Period,
    /// Review period `T_R`.
    pub review_period: Period,
    /// Exponent sharpening score differences.
    pub gamma: f64,
    /// Shared samples per collective iteration.
    #[serde(default = "defaults::batch")]
    pub collective_batch: usize,
    /// Batch size for self-training and review epochs.
    #[serde(default = "defaults::batch")]
    pub batch_size: usize,
    /// Self-training epochs before the collective phase.
    #[serde(default = "defaults::self_train_epochs")]
    pub self_train_epochs: usize,
    /// Passes over the shared pool.
    #[serde(default = "defaults::shared_epochs")]
    pub shared_epochs: usize,
    /// Optional cap on collective iterations (for smoke runs).
    #[serde(default)]
    pub max_iterations: Option<u64>,
    /// Metrics are reported every this many iterations (and at the start and end).
    #[serde(default = "defaults::stride")]
    pub metric_stride: u64,
}

mod defaults {
    pub fn batch() -> usize {
        10
    }
    pub fn self_train_epochs() -> usize {
        20
    }
    pub fn shared_epochs() -> usize {
        3
    }
    pub fn stride() -> u64 {
        100
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            refresh_period: Period::Uniform(100),
            review_period: Period::Uniform(300),
            gamma: 100.0,
            collective_batch: defaults::batch(),
            batch_size: defaults::batch(),
            self_train_epochs: defaults::self_train_epochs(),
            shared_epochs: defaults::shared_epochs(),
            max_iterations: None,
            metric_stride: defaults::stride(),
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self, n_agents: usize) -> Result<(), CollectiveError> {
        self.refresh_period.validate("refresh_period", n_agents)?;
        self.review_period.validate("review_period", n_agents)?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(CollectiveError::Config(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.collective_batch == 0 || self.batch_size == 0 {
            return Err(CollectiveError::Config("batch sizes must be >= 1".into()));
        }
        if self.shared_epochs == 0 {
            return Err(CollectiveError::Config("shared_epochs must be >= 1".into()));
        }
        if self.metric_stride == 0 {
            return Err(CollectiveError::Config("metric_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Total collective iterations over a pool of `shared_len` samples.
    pub fn total_iterations(&self, shared_len: usize) -> u64 {
        let full = (self.shared_epochs * shared_len.div_ceil(self.collective_batch)) as u64;
        self.max_iterations.map_or(full, |cap| cap.min(full))
    }
}

/// An agent: its learner plus its latest validation accuracy and score.
#[derive(Debug, Clone)]
pub struct AgentState<T: Scalar> {
    pub id: AgentId,
    pub learner: Learner<T>,
    accuracy: f64,
    log_score: T,
}

impl<T: Scalar> AgentState<T> {
    pub fn new(id: AgentId, learner: Learner<T>) -> Self {
        Self { id, learner, accuracy: 0.0, log_score: T::zero() }
    }

    /// Validation accuracy `a_i` at the last refresh.
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    /// `ln(score) = gamma * a_i`.
    pub fn log_score(&self) -> T {
        self.log_score
    }

    /// `score = exp(gamma * a_i)`; may overflow to infinity for large `gamma`,
    /// which is why the weights are built from [`AgentState::log_score`].
    pub fn score(&self) -> f64 {
        self.log_score.as_f64().exp()
    }

    fn set_accuracy(&mut self, accuracy: f64, gamma: f64) {
        self.accuracy = accuracy;
        self.log_score = T::lit(gamma * accuracy);
    }
}

/// Predictions one agent broadcasts in a round: one row per batch sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMessage<T> {
    pub sender: AgentId,
    pub predictions: Array2<T>,
}

/// Label of a fused prediction vector: the arg-max, lowest index on ties.
/// For two classes this is a 0.5 threshold on the second entry, with the exact
/// tie `[0.5, 0.5]` going to class 0.
pub fn lbl<T: Scalar>(fused: ArrayView1<'_, T>) -> Result<usize, CollectiveError> {
    if fused.is_empty() {
        return Err(CollectiveError::Label("empty vector".into()));
    }
    if fused.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(CollectiveError::Label(format!("entries must be finite and non-negative: {fused}")));
    }
    if fused.iter().all(|v| v.is_zero()) {
        return Err(CollectiveError::Label("all-zero vector".into()));
    }
    Ok(argmax(fused.iter().copied()))
}

/// Weighted average `sum_j w_ij z_j` of the messages in `inbox`, accumulated in
/// ascending sender order. `inbox` must hold exactly the receiver's in-neighbors.
pub fn fuse<T: Scalar>(weights: ArrayView1<'_, T>, inbox: &[&RoundMessage<T>]) -> Result<Array2<T>, CollectiveError> {
    let first = inbox.first().ok_or_else(|| CollectiveError::InvalidInput("empty inbox".into()))?;
    let mut ordered: Vec<&RoundMessage<T>> = inbox.to_vec();
    ordered.sort_by_key(|m| m.sender);
    let mut fused = Array2::zeros(first.predictions.raw_dim());
    for m in ordered {
        if m.predictions.raw_dim() != fused.raw_dim() {
            return Err(CollectiveError::InvalidInput(format!("message from agent {} has a different shape", m.sender)));
        }
        let w = *weights
            .get(m.sender.0)
            .ok_or_else(|| CollectiveError::InvalidInput(format!("no weight for agent {}", m.sender)))?;
        fused.scaled_add(w, &m.predictions);
    }
    Ok(fused)
}

/// Proxy labels for one receiver: `lbl` of each fused row.
pub fn proxy_labels<T: Scalar>(weights: ArrayView1<'_, T>, inbox: &[&RoundMessage<T>]) -> Result<Vec<usize>, CollectiveError> {
    let fused = fuse(weights, inbox)?;
    fused.rows().into_iter().map(lbl).collect()
}

/// Recomputes `a_i` on each selected agent's validation set and sets
/// `score_i = exp(gamma * a_i)`. Agents with `selected[i] == false` keep their score.
pub fn refresh_scores<T: Scalar>(
    agents: &mut [AgentState<T>],
    validation: &[&Dataset<T>],
    gamma: f64,
    selected: &[bool],
) -> Result<(), CollectiveError> {
    if validation.len() != agents.len() || selected.len() != agents.len() {
        return Err(CollectiveError::InvalidInput("one validation set and flag per agent required".into()));
    }
    for ((agent, set), _) in agents.iter_mut().zip(validation).zip(selected).filter(|(_, &s)| s) {
        let acc = agent
            .learner
            .accuracy(set)
            .map_err(|source| CollectiveError::Agent { agent: agent.id, iteration: 0, source })?;
        agent.set_accuracy(acc, gamma);
    }
    Ok(())
}

fn check_classes<T: Scalar>(agents: &[AgentState<T>]) -> Result<usize, CollectiveError> {
    let classes: Vec<usize> = agents.iter().map(|a| a.learner.model().num_classes()).collect();
    match classes.first() {
        None => Err(CollectiveError::InvalidInput("no agents".into())),
        Some(&c) if classes.iter().all(|&x| x == c) => Ok(c),
        Some(_) => Err(CollectiveError::ClassMismatch(classes)),
    }
}

/// One collective iteration on `batch`. Returns each agent's proxy labels.
///
/// All predictions are made with pre-round parameters before any agent updates.
pub fn collective_round<T: Scalar>(
    agents: &mut [AgentState<T>],
    graph: &DirectedGraph,
    weights: &WeightMatrix<T>,
    batch: ArrayView2<'_, T>,
    iteration: u64,
) -> Result<Vec<Vec<usize>>, CollectiveError> {
    check_classes(agents)?;
    let n = agents.len();
    if graph.node_count() != n || weights.node_count() != n {
        return Err(CollectiveError::InvalidInput(format!(
            "{n} agents but graph has {} nodes and weights {}",
            graph.node_count(),
            weights.node_count()
        )));
    }
    if batch.nrows() == 0 {
        return Err(DataError::Empty.into());
    }
    let agent_err = |agent: AgentId| move |source| CollectiveError::Agent { agent, iteration, source };

    // (a) predict and broadcast
    let messages: Vec<RoundMessage<T>> = agents
        .par_iter_mut()
        .map(|a| {
            let predictions = a.learner.forward_for_update(batch).map_err(agent_err(a.id))?.to_owned();
            Ok(RoundMessage { sender: a.id, predictions })
        })
        .collect::<Result<_, CollectiveError>>()?;

    // (b) fuse in-neighbor predictions
    let labels: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let inbox: Vec<&RoundMessage<T>> = graph
                .in_neighbors(AgentId(i))?
                .into_iter()
                .map(|j| &messages[j.0])
                .collect();
            proxy_labels(weights.row(i), &inbox)
        })
        .collect::<Result<_, _>>()?;

    // (c) local update on proxy labels
    agents
        .par_iter_mut()
        .zip(&labels)
        .try_for_each(|(a, y)| a.learner.update_from_last_forward(y).map(|_| ()).map_err(agent_err(a.id)))?;
    Ok(labels)
}

/// One epoch over the agent's private training set, continuing its update-rule state.
pub fn review_step<T: Scalar>(
    agent: &mut AgentState<T>,
    train: &Dataset<T>,
    batch_size: usize,
    seed: u64,
) -> Result<(), LearnerError> {
    agent.learner.train_epochs(train, batch_size, 1, seed)
}

/// The data the collective phase may touch: unlabeled shared features and
/// each agent's private labeled sets.
#[derive(Debug, Clone)]
pub struct CollectiveData<'a, T> {
    pub shared: &'a Dataset<T>,
    pub train: Vec<&'a Dataset<T>>,
    pub validation: Vec<&'a Dataset<T>>,
}

impl<'a, T: Scalar> From<&'a Partition<T>> for CollectiveData<'a, T> {
    fn from(p: &'a Partition<T>) -> Self {
        Self {
            shared: p.shared.data(),
            train: p.agents.iter().map(|a| &a.train).collect(),
            validation: p.agents.iter().map(|a| &a.validation).collect(),
        }
    }
}

/// Hooks called by [`run_collective`]. All methods default to no-ops.
pub trait Observer<T: Scalar> {
    /// After a (re)build of the mixing matrix used from iteration `k` on.
    fn on_weights(&mut self, _k: u64, _weights: &WeightMatrix<T>) {}

    /// After iteration `k`; `rows` are the shared-pool rows of the batch.
    fn on_round(&mut self, _k: u64, _rows: &[usize], _labels: &[Vec<usize>]) {}

    fn on_review(&mut self, _k: u64, _agent: AgentId) {}

    /// At `k = 0`, every `metric_stride` iterations and after the last iteration.
    fn on_metrics(&mut self, _k: u64, _agents: &[AgentState<T>]) -> Result<(), CollectiveError> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl<T: Scalar> Observer<T> for NoObserver {}

/// Counters describing a finished collective phase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollectiveStats {
    pub iterations: u64,
    pub weight_rebuilds: u64,
    pub reviews: Vec<u64>,
}

/// Self-training: `epochs` epochs of each agent on its private training set.
pub fn self_train<T: Scalar>(
    agents: &mut [AgentState<T>],
    train: &[&Dataset<T>],
    batch_size: usize,
    epochs: usize,
    seed: u64,
) -> Result<(), CollectiveError> {
    agents.par_iter_mut().zip(train).try_for_each(|(a, set)| {
        let s = seed::derive(seed, &[seed::tag::SELF_TRAIN, a.id.0 as u64]);
        a.learner
            .train_epochs(set, batch_size, epochs, s)
            .map_err(|source| CollectiveError::Agent { agent: a.id, iteration: 0, source })
    })
}

/// Runs the collective phase.
///
/// Iterations are numbered `k = 1, 2, ...`. Before iteration `k`, agent `i`
/// refreshes its score when `(k - 1) mod T_E,i = 0` (so the first refresh
/// uses the self-trained parameters), and the mixing matrix is rebuilt when
/// any score changed or the graph moved to a new round. Iteration `k` uses
/// the graph `G^(k-1)`. After the round, agent `i` reviews when `k mod T_R,i = 0`.
pub fn run_collective<T: Scalar>(
    agents: &mut [AgentState<T>],
    data: &CollectiveData<'_, T>,
    schedule: &GraphSchedule,
    config: &ScheduleConfig,
    seed: u64,
    observer: &mut dyn Observer<T>,
) -> Result<CollectiveStats, CollectiveError> {
    let n = agents.len();
    config.validate(n)?;
    check_classes(agents)?;
    if schedule.node_count() != n || data.train.len() != n || data.validation.len() != n {
        return Err(CollectiveError::InvalidInput(format!(
            "{n} agents, {} graph nodes, {} training sets, {} validation sets",
            schedule.node_count(),
            data.train.len(),
            data.validation.len()
        )));
    }
    if let Some((i, a)) = agents.iter().enumerate().find(|(i, a)| a.id.0 != *i) {
        return Err(CollectiveError::InvalidInput(format!("agent at position {i} has id {}", a.id)));
    }
    if data.shared.is_empty() {
        return Err(DataError::Empty.into());
    }

    let total = config.total_iterations(data.shared.len());
    let mut stats = CollectiveStats { reviews: vec![0; n], ..Default::default() };
    observer.on_metrics(0, agents)?;

    let mut weights: Option<WeightMatrix<T>> = None;
    let mut graph_round = None;
    let mut graph = schedule.graph_at(0).into_owned();
    let mut k = 0u64;

    'epochs: for epoch in 0..config.shared_epochs {
        let order = batch_order(
            data.shared.len(),
            config.collective_batch,
            seed::derive(seed, &[seed::tag::SHARED_SHUFFLE, epoch as u64]),
        )?;
        for rows in order.iter() {
            if k >= total {
                break 'epochs;
            }
            k += 1;

            let refresh: Vec<bool> = (0..n).map(|i| (k - 1).is_multiple_of(config.refresh_period.for_agent(i))).collect();
            if refresh.iter().any(|&r| r) {
                refresh_scores(agents, &data.validation, config.gamma, &refresh).map_err(|e| match e {
                    CollectiveError::Agent { agent, source, .. } => CollectiveError::Agent { agent, iteration: k, source },
                    other => other,
                })?;
            }
            let round = schedule.round_of(k - 1);
            let graph_changed = graph_round != Some(round);
            if graph_changed {
                graph = schedule.graph_at(k - 1).into_owned();
                graph_round = Some(round);
            }
            if weights.is_none() || graph_changed || refresh.iter().any(|&r| r) {
                let logs: Vec<T> = agents.iter().map(|a| a.log_score).collect();
                let w = build_weight_matrix_from_log_scores(&graph, &logs)?;
                stats.weight_rebuilds += 1;
                observer.on_weights(k, &w);
                weights = Some(w);
            }

            let batch = data.shared.features().select(Axis(0), rows);
            let labels = collective_round(agents, &graph, weights.as_ref().expect("built above"), batch.view(), k)?;
            observer.on_round(k, rows, &labels);

            for (i, agent) in agents.iter_mut().enumerate() {
                if k.is_multiple_of(config.review_period.for_agent(i)) {
                    let s = seed::derive(seed, &[seed::tag::REVIEW, i as u64, k]);
                    review_step(agent, data.train[i], config.batch_size, s)
                        .map_err(|source| CollectiveError::Agent { agent: agent.id, iteration: k, source })?;
                    stats.reviews[i] += 1;
                    observer.on_review(k, agent.id);
                }
            }

            if k.is_multiple_of(config.metric_stride) || k == total {
                observer.on_metrics(k, agents)?;
            }
        }
    }
    stats.iterations = k;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_weight_matrix;
    use ndarray::{array, Array1};

    fn msg(sender: usize, rows: Array2<f64>) -> RoundMessage<f64> {
        RoundMessage { sender: AgentId(sender), predictions: rows }
    }

    #[test]
    fn lbl_examples() {
        assert_eq!(lbl(array![0.3, 0.7].view()).unwrap(), 1);
        assert_eq!(lbl(array![0.0, 0.0, 0.0, 1.0, 0.0].view()).unwrap(), 3);
        assert_eq!(lbl(array![0.5, 0.5].view()).unwrap(), 0);
        assert!(lbl(array![0.0, 0.0].view()).is_err());
        assert!(lbl(array![f64::NAN, 0.2].view()).is_err());
        assert!(lbl(Array1::<f64>::zeros(0).view()).is_err());
    }

    #[test]
    fn binary_threshold_agrees_off_the_tie() {
        for i in (0..=100).filter(|&i| i != 50) {
            let x = i as f64 / 100.0;
            let expected = usize::from(x >= 0.5);
            assert_eq!(lbl(array![1.0 - x, x].view()).unwrap(), expected, "x = {x}");
        }
        assert_eq!(lbl(array![0.5, 0.5].view()).unwrap(), 0);
    }

    #[test]
    fn two_agent_fusion() {
        // 0.5 * [0.9, 0.1] + 0.5 * [0.2, 0.8] = [0.55, 0.45]
        let g = DirectedGraph::complete(2);
        let w = build_weight_matrix(&g, &[1.0, 1.0]).unwrap();
        let m0 = msg(0, array![[0.9, 0.1]]);
        let m1 = msg(1, array![[0.2, 0.8]]);
        for i in 0..2 {
            let fused = fuse(w.row(i), &[&m1, &m0]).unwrap();
            assert!((fused[(0, 0)] - 0.55).abs() < 1e-15);
            assert!((fused[(0, 1)] - 0.45).abs() < 1e-15);
            assert_eq!(proxy_labels(w.row(i), &[&m0, &m1]).unwrap(), vec![0]);
        }
    }

    #[test]
    fn fusion_rejects_mismatched_messages() {
        let w = array![0.5, 0.5];
        let a = msg(0, array![[0.9, 0.1]]);
        let b = msg(1, array![[0.2, 0.8], [0.5, 0.5]]);
        assert!(fuse(w.view(), &[&a, &b]).is_err());
        assert!(fuse::<f64>(w.view(), &[]).is_err());
        let c = msg(5, array![[0.2, 0.8]]);
        assert!(fuse(w.view(), &[&a, &c]).is_err());
    }

    #[test]
    fn review_schedule_counts() {
        let fires: Vec<u64> = (1..=900u64).filter(|k| k % 300 == 0).collect();
        assert_eq!(fires, vec![300, 600, 900]);
    }

    #[test]
    fn schedule_validation() {
        let mut c = ScheduleConfig::default();
        assert!(c.validate(4).is_ok());
        c.review_period = Period::PerAgent(vec![1, 2, 3]);
        assert!(c.validate(4).is_err());
        c.review_period = Period::PerAgent(vec![1, 2, 3, 4]);
        assert!(c.validate(4).is_ok());
        c.gamma = -1.0;
        assert!(c.validate(4).is_err());
        c.gamma = 1.0;
        c.refresh_period = Period::Uniform(0);
        assert!(c.validate(4).is_err());
    }

    #[test]
    fn total_iterations() {
        let c = ScheduleConfig { shared_epochs: 3, collective_batch: 10, ..Default::default() };
        assert_eq!(c.total_iterations(57_600), 17_280);
        assert_eq!(c.total_iterations(25), 9);
        let capped = ScheduleConfig { max_iterations: Some(200), ..c };
        assert_eq!(capped.total_iterations(57_600), 200);
    }

    #[test]
    fn period_from_toml() {
        #[derive(Deserialize)]
        struct W {
            a: Period,
            b: Period,
        }
        let w: W = toml::from_str("a = 5\nb = [1, 2]\n").unwrap();
        assert_eq!(w.a, Period::Uniform(5));
        assert_eq!(w.b, Period::PerAgent(vec![1, 2]));
    }
}

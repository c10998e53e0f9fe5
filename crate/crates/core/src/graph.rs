//! Time-varying directed communication graphs and their mixing weights.
//!
//! Self-loops are implicit: every node is always its own in-neighbor and no
//! explicit `(i, i)` edge is ever stored.

use std::borrow::Cow;
use std::collections::VecDeque;
use std::fmt;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("agent {index} is out of range for a graph with {n} nodes")]
    AgentOutOfRange { index: usize, n: usize },
    #[error("graphs have different node counts ({left} vs {right})")]
    NodeCountMismatch { left: usize, right: usize },
    #[error("expected {expected} scores, got {got}")]
    ScoreCount { expected: usize, got: usize },
    #[error("score of agent {agent} must be finite and positive, got {value}")]
    InvalidScore { agent: usize, value: f64 },
    #[error("invalid graph schedule: {0}")]
    InvalidSchedule(String),
}

/// Dense agent index in `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl AgentId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed graph over `n` nodes. An edge `(j, i)` means `j` sends to `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    /// Sorted, deduplicated sources of edges into each node (self excluded).
    sources: Vec<Vec<usize>>,
}

impl DirectedGraph {
    /// Graph with `n` nodes and only the implicit self-loops.
    pub fn empty(n: usize) -> Self {
        Self { sources: vec![Vec::new(); n] }
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n);
        for (from, to) in edges {
            g.add_edge(from, to)?;
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let sources = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
        Self { sources }
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn cycle(n: usize) -> Self {
        let mut g = Self::empty(n);
        if n > 1 {
            for i in 0..n {
                g.insert((i + n - 1) % n, i);
            }
        }
        g
    }

    /// Adds `from -> to`. Returns whether the edge was new; self-loops are
    /// always present and never stored.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<bool, GraphError> {
        let n = self.node_count();
        for index in [from, to] {
            if index >= n {
                return Err(GraphError::AgentOutOfRange { index, n });
            }
        }
        if from == to {
            return Ok(false);
        }
        Ok(self.insert(from, to))
    }

    fn insert(&mut self, from: usize, to: usize) -> bool {
        let list = &mut self.sources[to];
        match list.binary_search(&from) {
            Ok(_) => false,
            Err(pos) => {
                list.insert(pos, from);
                true
            }
        }
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.sources.len()
    }

    /// Number of explicit (non-self) edges.
    pub fn edge_count(&self) -> usize {
        self.sources.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        from == to && to < self.node_count()
            || self.sources.get(to).is_some_and(|s| s.binary_search(&from).is_ok())
    }

    /// Explicit edges `(from, to)` sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self
            .sources
            .iter()
            .enumerate()
            .flat_map(|(to, s)| s.iter().map(move |&from| (from, to)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Sources of explicit edges into `i` (excluding `i`), ascending.
    ///
    /// Panics if `i` is out of range.
    #[inline]
    pub fn sources(&self, i: usize) -> &[usize] {
        &self.sources[i]
    }

    /// In-neighborhood of `i`, including `i` itself, in ascending order.
    pub fn in_neighbors(&self, i: AgentId) -> Result<Vec<AgentId>, GraphError> {
        let n = self.node_count();
        if i.0 >= n {
            return Err(GraphError::AgentOutOfRange { index: i.0, n });
        }
        let src = &self.sources[i.0];
        let pos = src.partition_point(|&j| j < i.0);
        let mut out = Vec::with_capacity(src.len() + 1);
        out.extend(src[..pos].iter().map(|&j| AgentId(j)));
        out.push(i);
        out.extend(src[pos..].iter().map(|&j| AgentId(j)));
        Ok(out)
    }

    /// Edge union of two graphs over the same node set.
    pub fn union(&self, other: &Self) -> Result<Self, GraphError> {
        if self.node_count() != other.node_count() {
            return Err(GraphError::NodeCountMismatch {
                left: self.node_count(),
                right: other.node_count(),
            });
        }
        let mut g = self.clone();
        g.union_in_place(other);
        Ok(g)
    }

    fn union_in_place(&mut self, other: &Self) {
        for (to, s) in other.sources.iter().enumerate() {
            for &from in s {
                self.insert(from, to);
            }
        }
    }

    /// True iff every node reaches every other node along directed edges.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.node_count();
        if n <= 1 {
            return true;
        }
        let mut forward = vec![Vec::new(); n];
        for (to, s) in self.sources.iter().enumerate() {
            for &from in s {
                forward[from].push(to);
            }
        }
        reaches_all(&forward) && reaches_all(&self.sources)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == adj.len()
}

/// Directed Erdős–Rényi graph: each ordered pair `(j, i)`, `j != i`, is an edge
/// independently with probability `p`.
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> DirectedGraph {
    let mut g = DirectedGraph::empty(n);
    for to in 0..n {
        for from in 0..n {
            if from != to && rng.random_bool(p) {
                g.sources[to].push(from);
            }
        }
    }
    g
}

/// Generator of the per-iteration communication graph `G^k`.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSchedule {
    Static(DirectedGraph),
    /// A fresh Erdős–Rényi graph every `period` iterations, derived from
    /// `(seed, k / period)` so any round can be produced without replay.
    PeriodicRandom { n: usize, p: f64, period: u64, seed: u64 },
}

impl GraphSchedule {
    pub fn periodic_random(n: usize, p: f64, period: u64, seed: u64) -> Result<Self, GraphError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(GraphError::InvalidSchedule(format!("p must lie in [0, 1], got {p}")));
        }
        if period == 0 {
            return Err(GraphError::InvalidSchedule("period must be at least 1".into()));
        }
        Ok(Self::PeriodicRandom { n, p, period, seed })
    }

    pub fn node_count(&self) -> usize {
        match self {
            Self::Static(g) => g.node_count(),
            Self::PeriodicRandom { n, .. } => *n,
        }
    }

    /// Index of the graph draw used at iteration `k` (always 0 for static schedules).
    pub fn round_of(&self, k: u64) -> u64 {
        match self {
            Self::Static(_) => 0,
            Self::PeriodicRandom { period, .. } => k / period,
        }
    }

    pub fn graph_at(&self, k: u64) -> Cow<'_, DirectedGraph> {
        match self {
            Self::Static(g) => Cow::Borrowed(g),
            Self::PeriodicRandom { n, p, period, seed } => {
                let mut rng = seed::stream_rng(seed::derive(*seed, &[seed::tag::GRAPH]), k / period);
                Cow::Owned(erdos_renyi(*n, *p, &mut rng))
            }
        }
    }

    /// Whether the union of `G^{k0}, ..., G^{k0+window}` (inclusive) is strongly connected.
    pub fn is_jointly_strongly_connected(&self, k0: u64, window: u64) -> bool {
        match self {
            Self::Static(g) => g.is_strongly_connected(),
            Self::PeriodicRandom { .. } => {
                let first = self.round_of(k0);
                let last = self.round_of(k0 + window);
                let mut union = self.graph_at(k0).into_owned();
                for round in first + 1..=last {
                    let k = match self {
                        Self::PeriodicRandom { period, .. } => round * period,
                        Self::Static(_) => unreachable!(),
                    };
                    union.union_in_place(&self.graph_at(k));
                }
                union.is_strongly_connected()
            }
        }
    }
}

/// Row-stochastic mixing matrix `W^k`; row `i` holds the weights agent `i`
/// assigns to its in-neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    w: Array2<T>,
}

impl<T: Scalar> WeightMatrix<T> {
    pub fn node_count(&self) -> usize {
        self.w.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.w[(i, j)]
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.w.row(i)
    }

    pub fn as_array(&self) -> &Array2<T> {
        &self.w
    }

    /// Checks the mixing-matrix properties against `g`: positive diagonal,
    /// support equal to the in-neighborhoods, rows summing to one within `tol`.
    pub fn check(&self, g: &DirectedGraph, tol: f64) -> Result<(), String> {
        let n = g.node_count();
        if self.w.dim() != (n, n) {
            return Err(format!("shape {:?} does not match {n} nodes", self.w.dim()));
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let v = self.w[(i, j)].as_f64();
                if v.is_nan() || v < 0.0 {
                    return Err(format!("w[{i}][{j}] = {v} is negative or NaN"));
                }
                if (v > 0.0) != g.has_edge(j, i) {
                    return Err(format!("w[{i}][{j}] = {v} disagrees with the edge pattern"));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > tol {
                return Err(format!("row {i} sums to {sum}"));
            }
        }
        Ok(())
    }
}

fn check_scores<T: Scalar>(g: &DirectedGraph, scores: &[T]) -> Result<(), GraphError> {
    if scores.len() != g.node_count() {
        return Err(GraphError::ScoreCount { expected: g.node_count(), got: scores.len() });
    }
    Ok(())
}

/// `w_ij = s_j / sum_{m in N_i} s_m` for in-neighbors `j` of `i`, zero elsewhere.
///
/// Scores must be finite and strictly positive.
pub fn build_weight_matrix<T: Scalar>(
    g: &DirectedGraph,
    scores: &[T],
) -> Result<WeightMatrix<T>, GraphError> {
    check_scores(g, scores)?;
    if let Some((agent, &s)) = scores.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > T::zero())) {
        return Err(GraphError::InvalidScore { agent, value: s.as_f64() });
    }
    let n = g.node_count();
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        let nbrs = g.in_neighbors(AgentId(i))?;
        let d: T = nbrs.iter().map(|j| scores[j.0]).fold(T::zero(), |a, b| a + b);
        for j in nbrs {
            w[(i, j.0)] = scores[j.0] / d;
        }
    }
    Ok(WeightMatrix { w })
}

/// Same weights as [`build_weight_matrix`] with `s_j = exp(log_scores[j])`,
/// evaluated with per-row max subtraction so large exponents (e.g. `gamma = 1000`)
/// cannot overflow.
pub fn build_weight_matrix_from_log_scores<T: Scalar>(
    g: &DirectedGraph,
    log_scores: &[T],
) -> Result<WeightMatrix<T>, GraphError> {
    check_scores(g, log_scores)?;
    if let Some((agent, &s)) = log_scores.iter().enumerate().find(|(_, s)| !s.is_finite()) {
        return Err(GraphError::InvalidScore { agent, value: s.as_f64() });
    }
    let n = g.node_count();
    let mut w = Array2::zeros((n, n));
    let mut row = Vec::with_capacity(n);
    for i in 0..n {
        let nbrs = g.in_neighbors(AgentId(i))?;
        let max = nbrs.iter().map(|j| log_scores[j.0]).fold(T::neg_infinity(), T::max);
        row.clear();
        row.extend(nbrs.iter().map(|j| (log_scores[j.0] - max).exp()));
        let d = row.iter().fold(T::zero(), |a, &b| a + b);
        for (j, &e) in nbrs.iter().zip(&row) {
            // exp underflows for large gamma gaps; a neighbour's weight stays positive.
            w[(i, j.0)] = (e / d).max(T::min_positive_value());
        }
    }
    Ok(WeightMatrix { w })
}

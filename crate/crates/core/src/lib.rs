//! Collective learning: agents that train on small private labeled sets and
//! then improve together by exchanging predictions on a shared unlabeled pool.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for the common cases.

pub mod collective;
pub mod data;
pub mod graph;
pub mod harness;
pub mod learner;
pub mod scalar;
pub mod seed;

pub use collective::{
    collective_round, fuse, lbl, proxy_labels, refresh_scores, review_step, run_collective, self_train, AgentState,
    CollectiveData, CollectiveError, CollectiveStats, NoObserver, Observer, Period, RoundMessage, ScheduleConfig,
};
pub use data::{make_partition, DataError, Dataset, Partition, PartitionSpec, ValidationMode};
pub use graph::{
    build_weight_matrix, build_weight_matrix_from_log_scores, erdos_renyi, AgentId, DirectedGraph, GraphError,
    GraphSchedule, WeightMatrix,
};
pub use learner::{ArchKind, Architecture, Learner, LearnerError, Model, Optimizer, Params, UpdateRule};
pub use scalar::Scalar;

pub type Dataset32 = Dataset<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Learner32 = Learner<f32>;
pub type Learner64 = Learner<f64>;
pub type AgentState32 = AgentState<f32>;
pub type AgentState64 = AgentState<f64>;
pub type WeightMatrix32 = WeightMatrix<f32>;
pub type WeightMatrix64 = WeightMatrix<f64>;
pub type Partition32 = Partition<f32>;
pub type Partition64 = Partition<f64>;

use std::fmt;

use ndarray::{Array2, ArrayView2};
use rand::RngCore;

use super::{LearnerError, Params};
use crate::scalar::Scalar;

/// Intermediate values of a forward pass, kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    /// Model-defined activations; the last entry is the `b x C` probability matrix.
    pub activations: Vec<Array2<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn probabilities(&self) -> Option<ArrayView2<'_, T>> {
        self.activations.last().map(|a| a.view())
    }
}

/// A differentiable classifier `f(theta; x)` producing class probabilities.
///
/// The multilayer perceptrons in this crate implement it; other families
/// (e.g. convolutional networks) can plug in through the same surface.
pub trait Model<T: Scalar>: fmt::Debug + Send + Sync {
    /// Short label used in metrics, e.g. `HL1`.
    fn label(&self) -> String;

    fn input_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn num_params(&self) -> usize;

    fn init_params(&self, rng: &mut dyn RngCore) -> Params<T>;

    /// Forward pass over the rows of `x`, filling `tape`.
    fn forward(&self, params: &Params<T>, x: ArrayView2<'_, T>, tape: &mut Tape<T>) -> Result<(), LearnerError>;

    /// Mean cross-entropy of the taped forward pass against `labels`; writes
    /// its exact gradient into `grad` (overwriting it).
    fn backward(&self, params: &Params<T>, tape: &Tape<T>, labels: &[usize], grad: &mut [T]) -> Result<T, LearnerError>;
}

/// Probability floor applied before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean of `-ln max(p[r, y_r], 1e-12)` over rows.
pub fn cross_entropy<T: Scalar>(probs: ArrayView2<'_, T>, labels: &[usize]) -> T {
    let floor = T::lit(PROB_FLOOR);
    let total = labels
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (r, &y)| acc - probs[(r, y)].max(floor).ln());
    total / T::lit(labels.len() as f64)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> usize {
    let mut best = 0;
    let mut best_v = T::neg_infinity();
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

pub(crate) fn check_labels(labels: &[usize], num_classes: usize) -> Result<(), LearnerError> {
    match labels.iter().find(|&&y| y >= num_classes) {
        Some(&label) => Err(LearnerError::Label { label, num_classes }),
        None => Ok(()),
    }
}

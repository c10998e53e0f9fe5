use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;

use super::{DataError, Dataset};
use crate::scalar::Scalar;
use crate::seed;

/// Features with their (true or proxy) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    features: Array2<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(features: Array2<T>, labels: Vec<usize>) -> Result<Self, DataError> {
        if features.nrows() == 0 {
            return Err(DataError::Empty);
        }
        if features.nrows() != labels.len() {
            return Err(DataError::ShapeMismatch { rows: features.nrows(), labels: labels.len() });
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> ArrayView2<'_, T> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// One shuffled pass over `len` indices, cut into batches (the last one may be short).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchOrder {
    order: Vec<usize>,
    batch_size: usize,
}

impl BatchOrder {
    pub fn iter(&self) -> std::slice::Chunks<'_, usize> {
        self.order.chunks(self.batch_size)
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

pub fn batch_order(len: usize, batch_size: usize, epoch_seed: u64) -> Result<BatchOrder, DataError> {
    if batch_size == 0 {
        return Err(DataError::InvalidArgument("batch size must be at least 1".into()));
    }
    if len == 0 {
        return Err(DataError::Empty);
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut seed::rng(epoch_seed));
    Ok(BatchOrder { order, batch_size })
}

/// Shuffled labeled batches covering `set` exactly once.
pub fn batches<T: Scalar>(set: &Dataset<T>, batch_size: usize, epoch_seed: u64) -> Result<Vec<Batch<T>>, DataError> {
    set.require_labels()?;
    let order = batch_order(set.len(), batch_size, epoch_seed)?;
    order.iter().map(|idx| set.batch(idx)).collect()
}

//! Datasets, IDX loading, synthetic data and per-agent partitioning.

mod batch;
mod idx;
mod partition;
mod synth;

use std::path::PathBuf;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

use crate::scalar::Scalar;

pub use batch::{batch_order, batches, Batch, BatchOrder};
pub use idx::{
    load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, FashionMnistFiles,
    IdxImages, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use partition::{
    make_partition, AgentData, Partition, PartitionManifest, PartitionSpec, ProxyLabelAudit, SharedPool,
    ValidationMode,
};
pub use synth::synth_blobs;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: bad magic number 0x{found:08x} (expected 0x{expected:08x})", path.display())]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{}: truncated file, expected {expected} bytes but found {actual}", path.display())]
    Truncated { path: PathBuf, expected: usize, actual: usize },
    #[error("{}: {extra} unexpected trailing bytes", path.display())]
    TrailingBytes { path: PathBuf, extra: usize },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{rows} feature rows but {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("label {label} at row {row} is outside [0, {num_classes})")]
    LabelOutOfRange { row: usize, label: usize, num_classes: usize },
    #[error("non-finite feature in row {row}")]
    NonFinite { row: usize },
    #[error("need {needed} samples but only {available} are available")]
    Insufficient { needed: usize, available: usize },
    #[error("the set is empty")]
    Empty,
    #[error("the set has no labels")]
    Unlabeled,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Feature matrix (one sample per row) with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Array2<T>,
    labels: Option<Vec<usize>>,
    num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Array2<T>, labels: Option<Vec<usize>>, num_classes: usize) -> Result<Self, DataError> {
        if num_classes == 0 {
            return Err(DataError::InvalidArgument("num_classes must be positive".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != features.nrows() {
                return Err(DataError::ShapeMismatch { rows: features.nrows(), labels: labels.len() });
            }
            if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
                return Err(DataError::LabelOutOfRange { row, label, num_classes });
            }
        }
        if let Some((row, _)) = features
            .axis_iter(Axis(0))
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(DataError::NonFinite { row });
        }
        Ok(Self { features, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> ArrayView2<'_, T> {
        self.features.view()
    }

    pub fn row(&self, r: usize) -> ArrayView1<'_, T> {
        self.features.row(r)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or [`DataError::Unlabeled`].
    pub fn require_labels(&self) -> Result<&[usize], DataError> {
        self.labels.as_deref().ok_or(DataError::Unlabeled)
    }

    /// Rows `indices` (in that order) as a new dataset.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            num_classes: self.num_classes,
        }
    }

    /// Labeled batch made of rows `indices`.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch<T>, DataError> {
        let labels = self.require_labels()?;
        Batch::new(
            self.features.select(Axis(0), indices),
            indices.iter().map(|&i| labels[i]).collect(),
        )
    }

    /// Splits off the labels, leaving an unlabeled dataset.
    pub fn into_unlabeled(self) -> (Self, Option<Vec<usize>>) {
        let Self { features, labels, num_classes } = self;
        (Self { features, labels: None, num_classes }, labels)
    }

    /// Element-type conversion.
    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            features: self.features.mapv(|v| U::lit(v.as_f64())),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        }
    }
}

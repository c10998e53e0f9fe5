//! Agent-local classifiers: architectures, parameters, update rules and training.

mod arch;
mod mlp;
mod model;
mod optim;
mod params;

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::RngCore;
use thiserror::Error;

use crate::data::{batch_order, Batch, DataError, Dataset};
use crate::scalar::Scalar;
use crate::seed;

pub use arch::{ArchKind, Architecture};
pub use model::{argmax, cross_entropy, Model, Tape, PROB_FLOOR};
pub use optim::{Optimizer, UpdateRule};
pub use params::Params;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("input has {got} features, the model expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("label {label} is outside [0, {num_classes})")]
    Label { label: usize, num_classes: usize },
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLen { expected: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("backward pass without a matching forward pass")]
    EmptyTape,
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid update rule: {0}")]
    InvalidRule(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] DataError),
}

const EVAL_CHUNK: usize = 2048;

/// Class-probability vector for a single input.
pub fn forward<T: Scalar, M: Model<T> + ?Sized>(
    model: &M,
    params: &Params<T>,
    x: ArrayView1<'_, T>,
) -> Result<Array1<T>, LearnerError> {
    let mut tape = Tape::default();
    model.forward(params, x.insert_axis(Axis(0)), &mut tape)?;
    Ok(tape.probabilities().expect("forward fills the tape").row(0).to_owned())
}

/// Class probabilities for every row of `x`.
pub fn predict<T: Scalar, M: Model<T> + ?Sized>(
    model: &M,
    params: &Params<T>,
    x: ArrayView2<'_, T>,
) -> Result<Array2<T>, LearnerError> {
    let mut out = Array2::zeros((x.nrows(), model.num_classes()));
    let mut tape = Tape::default();
    for (chunk, mut dst) in x.axis_chunks_iter(Axis(0), EVAL_CHUNK).zip(out.axis_chunks_iter_mut(Axis(0), EVAL_CHUNK)) {
        model.forward(params, chunk, &mut tape)?;
        dst.assign(&tape.probabilities().expect("forward fills the tape"));
    }
    Ok(out)
}

/// Mean cross-entropy over the batch.
pub fn loss<T: Scalar, M: Model<T> + ?Sized>(model: &M, params: &Params<T>, batch: &Batch<T>) -> Result<T, LearnerError> {
    model::check_labels(batch.labels(), model.num_classes())?;
    let probs = predict(model, params, batch.features())?;
    Ok(cross_entropy(probs.view(), batch.labels()))
}

/// Exact gradient of [`loss`] with respect to the flat parameter vector.
pub fn grad<T: Scalar, M: Model<T> + ?Sized>(model: &M, params: &Params<T>, batch: &Batch<T>) -> Result<Vec<T>, LearnerError> {
    let mut tape = Tape::default();
    model.forward(params, batch.features(), &mut tape)?;
    let mut g = vec![T::zero(); params.len()];
    model.backward(params, &tape, batch.labels(), &mut g)?;
    Ok(g)
}

/// Fraction of rows whose arg-max prediction (lowest index on ties) equals the label.
pub fn accuracy<T: Scalar, M: Model<T> + ?Sized>(model: &M, params: &Params<T>, set: &Dataset<T>) -> Result<f64, LearnerError> {
    let labels = set.require_labels()?;
    if set.is_empty() {
        return Err(DataError::Empty.into());
    }
    let probs = predict(model, params, set.features())?;
    let correct = probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row.iter().copied()) == y)
        .count();
    Ok(correct as f64 / set.len() as f64)
}

/// `epochs` shuffled passes of mini-batch updates over `set`; the shuffle of
/// epoch `e` derives from `(seed, e)`.
pub fn train_epochs<T: Scalar, M: Model<T> + ?Sized>(
    model: &M,
    params: &mut Params<T>,
    optimizer: &mut Optimizer<T>,
    set: &Dataset<T>,
    batch_size: usize,
    epochs: usize,
    seed: u64,
) -> Result<(), LearnerError> {
    let labels = set.require_labels()?;
    if set.is_empty() {
        return Err(DataError::Empty.into());
    }
    let mut tape = Tape::default();
    let mut g = vec![T::zero(); params.len()];
    for epoch in 0..epochs {
        let order = batch_order(set.len(), batch_size, seed::derive(seed, &[seed::tag::EPOCH, epoch as u64]))?;
        for idx in order.iter() {
            let x = set.features().select(Axis(0), idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            model.forward(params, x.view(), &mut tape)?;
            model.backward(params, &tape, &y, &mut g)?;
            optimizer.apply_update(params, &g)?;
        }
    }
    Ok(())
}

/// A classifier owned by one agent: model, parameters and update-rule state.
#[derive(Debug, Clone)]
pub struct Learner<T: Scalar> {
    model: Arc<dyn Model<T>>,
    params: Params<T>,
    optimizer: Optimizer<T>,
    tape: Tape<T>,
    grad: Vec<T>,
}

impl<T: Scalar> Learner<T> {
    pub fn new(model: Arc<dyn Model<T>>, params: Params<T>, rule: UpdateRule) -> Result<Self, LearnerError> {
        if params.len() != model.num_params() {
            return Err(LearnerError::ParamLen { expected: model.num_params(), got: params.len() });
        }
        let optimizer = Optimizer::new(rule, params.len())?;
        let grad = vec![T::zero(); params.len()];
        Ok(Self { model, params, optimizer, tape: Tape::default(), grad })
    }

    /// Freshly initialised learner.
    pub fn init(model: Arc<dyn Model<T>>, rule: UpdateRule, rng: &mut dyn RngCore) -> Result<Self, LearnerError> {
        let params = model.init_params(rng);
        Self::new(model, params, rule)
    }

    pub fn model(&self) -> &dyn Model<T> {
        &*self.model
    }

    pub fn label(&self) -> String {
        self.model.label()
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn optimizer(&self) -> &Optimizer<T> {
        &self.optimizer
    }

    pub fn predict(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>, LearnerError> {
        predict(&*self.model, &self.params, x)
    }

    /// Forward pass whose intermediate values are kept for a following
    /// [`Learner::update_from_last_forward`].
    pub fn forward_for_update(&mut self, x: ArrayView2<'_, T>) -> Result<ArrayView2<'_, T>, LearnerError> {
        self.model.forward(&self.params, x, &mut self.tape)?;
        Ok(self.tape.probabilities().expect("forward fills the tape"))
    }

    /// One update on the inputs of the last [`Learner::forward_for_update`]
    /// with the given labels. Returns the batch loss before the update.
    pub fn update_from_last_forward(&mut self, labels: &[usize]) -> Result<T, LearnerError> {
        let loss = self.model.backward(&self.params, &self.tape, labels, &mut self.grad)?;
        self.tape.activations.clear();
        self.optimizer.apply_update(&mut self.params, &self.grad)?;
        Ok(loss)
    }

    pub fn train_step(&mut self, x: ArrayView2<'_, T>, labels: &[usize]) -> Result<T, LearnerError> {
        self.forward_for_update(x)?;
        self.update_from_last_forward(labels)
    }

    pub fn train_epochs(&mut self, set: &Dataset<T>, batch_size: usize, epochs: usize, seed: u64) -> Result<(), LearnerError> {
        train_epochs(&*self.model, &mut self.params, &mut self.optimizer, set, batch_size, epochs, seed)
    }

    pub fn accuracy(&self, set: &Dataset<T>) -> Result<f64, LearnerError> {
        accuracy(&*self.model, &self.params, set)
    }

    pub fn loss(&self, batch: &Batch<T>) -> Result<T, LearnerError> {
        loss(&*self.model, &self.params, batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use ndarray::{array, Array2};

    fn arch(kind: ArchKind, d: usize, c: usize) -> Architecture {
        Architecture::new(kind, d, c).unwrap()
    }

    #[test]
    fn zero_shl_is_uniform() {
        let a = arch(ArchKind::Shl, 784, 10);
        let p = Params::<f64>::zeros(a.num_params());
        let x = Array1::from_elem(784, 0.7);
        let z = forward(&a, &p, x.view()).unwrap();
        for &v in z.iter() {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn dead_hidden_layer_outputs_softmax_of_bias() {
        let a = Architecture::with_hidden(ArchKind::Hl1, 5, vec![4], 3).unwrap();
        let mut p = Params::<f64>::zeros(a.num_params());
        let bias = [0.5, -1.0, 2.0];
        let n = p.len();
        p.as_mut_slice()[n - 3..].copy_from_slice(&bias);
        let e: Vec<f64> = bias.iter().map(|b: &f64| b.exp()).collect();
        let s: f64 = e.iter().sum();
        for x in [array![1.0, 2.0, 3.0, 4.0, 5.0], array![-3.0, 0.0, 9.0, 1.0, 0.1]] {
            let z = forward(&a, &p, x.view()).unwrap();
            for c in 0..3 {
                assert!((z[c] - e[c] / s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn wrong_input_dim() {
        let a = arch(ArchKind::Shl, 4, 2);
        let p = Params::<f32>::zeros(a.num_params());
        assert!(matches!(
            forward(&a, &p, Array1::zeros(3).view()),
            Err(LearnerError::InputDim { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn loss_values() {
        let a = arch(ArchKind::Shl, 3, 10);
        let p = Params::<f64>::zeros(a.num_params());
        let b = Batch::new(Array2::ones((2, 3)), vec![3, 7]).unwrap();
        assert!((loss(&a, &p, &b).unwrap() - 10f64.ln()).abs() < 1e-12);

        // A very confident correct prediction has loss ~ 0.
        let a = arch(ArchKind::Shl, 1, 2);
        let p = Params::from_vec(vec![0.0, 0.0, -40.0, 40.0]);
        let b = Batch::new(Array2::ones((1, 1)), vec![1]).unwrap();
        assert!(loss(&a, &p, &b).unwrap() < 1e-30);
        // ...and a confidently wrong one is capped by the floor.
        let b = Batch::new(Array2::ones((1, 1)), vec![0]).unwrap();
        assert!((loss(&a, &p, &b).unwrap() - (1e12f64).ln()).abs() < 1e-9);

        let b = Batch::new(Array2::ones((1, 1)), vec![2]).unwrap();
        assert!(matches!(loss(&a, &p, &b), Err(LearnerError::Label { label: 2, .. })));
    }

    #[test]
    fn zero_epochs_is_identity() {
        let set: Dataset<f64> = synth_blobs(5, 2, 3, 3.0, 1).unwrap();
        let a = arch(ArchKind::Shl, 3, 2);
        let mut p = Params::init(&a, &mut seed::rng(0));
        let before = p.clone();
        let mut o = Optimizer::new(UpdateRule::sgd(0.1), p.len()).unwrap();
        train_epochs(&a, &mut p, &mut o, &set, 2, 0, 1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn accuracy_tie_break_counts_class_zero() {
        let a = arch(ArchKind::Shl, 2, 10);
        let p = Params::<f64>::zeros(a.num_params());
        let labels: Vec<usize> = (0..50).map(|r| r % 10).collect();
        let set = Dataset::new(Array2::ones((50, 2)), Some(labels), 10).unwrap();
        assert_eq!(accuracy(&a, &p, &set).unwrap(), 0.1);
        let empty = Dataset::new(Array2::<f64>::zeros((0, 2)), Some(vec![]), 10).unwrap();
        assert!(accuracy(&a, &p, &empty).is_err());
    }

    #[test]
    fn learner_forward_then_update_equals_train_step() {
        let a: Arc<dyn Model<f64>> = Arc::new(arch(ArchKind::Hl1, 6, 3));
        let set: Dataset<f64> = synth_blobs(4, 3, 6, 2.0, 2).unwrap();
        let mut l1 = Learner::init(a.clone(), UpdateRule::default(), &mut seed::rng(5)).unwrap();
        let mut l2 = l1.clone();
        let y = set.labels().unwrap().to_vec();
        l1.train_step(set.features(), &y).unwrap();
        l2.forward_for_update(set.features()).unwrap();
        l2.update_from_last_forward(&y).unwrap();
        assert_eq!(l1.params(), l2.params());
        assert!(l2.update_from_last_forward(&y).is_err());
    }
}

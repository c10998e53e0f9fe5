//! Dense ReLU networks with a softmax output and exact backpropagation.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::RngCore;

use super::model::check_labels;
use super::{cross_entropy, Architecture, LearnerError, Model, Params, Tape};
use crate::scalar::Scalar;

struct LayerSlices {
    w: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
    fan_in: usize,
    fan_out: usize,
}

fn layer_slices(arch: &Architecture) -> Vec<LayerSlices> {
    let mut off = 0;
    arch.layers()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let w = off..off + fan_in * fan_out;
            let b = w.end..w.end + fan_out;
            off = b.end;
            LayerSlices { w, b, fan_in, fan_out }
        })
        .collect()
}

fn softmax_rows_in_place<T: Scalar>(z: &mut Array2<T>) {
    for mut row in z.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

impl<T: Scalar> Model<T> for Architecture {
    fn label(&self) -> String {
        self.kind().to_string()
    }

    fn input_dim(&self) -> usize {
        Architecture::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        Architecture::num_classes(self)
    }

    fn num_params(&self) -> usize {
        Architecture::num_params(self)
    }

    fn init_params(&self, rng: &mut dyn RngCore) -> Params<T> {
        Params::init(self, rng)
    }

    fn forward(&self, params: &Params<T>, x: ArrayView2<'_, T>, tape: &mut Tape<T>) -> Result<(), LearnerError> {
        if x.ncols() != self.input_dim() {
            return Err(LearnerError::InputDim { expected: self.input_dim(), got: x.ncols() });
        }
        if params.len() != self.num_params() {
            return Err(LearnerError::ParamLen { expected: self.num_params(), got: params.len() });
        }
        let theta = params.as_slice();
        let layers = layer_slices(self);
        tape.activations.clear();
        tape.activations.push(x.to_owned());
        for (l, layer) in layers.iter().enumerate() {
            let w = ArrayView2::from_shape((layer.fan_in, layer.fan_out), &theta[layer.w.clone()]).expect("layout");
            let b = ArrayView1::from(&theta[layer.b.clone()]);
            let input = tape.activations.last().expect("input pushed");
            let mut z = input.dot(&w);
            z += &b;
            if l + 1 < layers.len() {
                z.mapv_inplace(|v| v.max(T::zero()));
            } else {
                softmax_rows_in_place(&mut z);
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(LearnerError::NonFinite("activations"));
                }
            }
            tape.activations.push(z);
        }
        Ok(())
    }

    fn backward(&self, params: &Params<T>, tape: &Tape<T>, labels: &[usize], grad: &mut [T]) -> Result<T, LearnerError> {
        let layers = layer_slices(self);
        let probs = tape.probabilities().ok_or(LearnerError::EmptyTape)?;
        if tape.activations.len() != layers.len() + 1 || probs.nrows() != labels.len() {
            return Err(LearnerError::EmptyTape);
        }
        if labels.is_empty() {
            return Err(LearnerError::Data(crate::data::DataError::Empty));
        }
        check_labels(labels, Architecture::num_classes(self))?;
        if grad.len() != params.len() {
            return Err(LearnerError::ParamLen { expected: params.len(), got: grad.len() });
        }
        let theta = params.as_slice();
        let loss = cross_entropy(probs, labels);

        // dL/dz at the output: (P - onehot(y)) / b.
        let inv_b = T::lit(1.0 / labels.len() as f64);
        let mut delta = probs.to_owned();
        for (r, &y) in labels.iter().enumerate() {
            delta[(r, y)] -= T::one();
        }
        delta.mapv_inplace(|v| v * inv_b);

        for (l, layer) in layers.iter().enumerate().rev() {
            let input = &tape.activations[l];
            {
                let (gw, gb) = grad[layer.w.start..layer.b.end].split_at_mut(layer.fan_in * layer.fan_out);
                let mut gw = ArrayViewMut2::from_shape((layer.fan_in, layer.fan_out), gw).expect("layout");
                general_mat_mul(T::one(), &input.t(), &delta, T::zero(), &mut gw);
                let mut gb = ArrayViewMut1::from(gb);
                gb.assign(&delta.sum_axis(Axis(0)));
            }
            if l > 0 {
                let w = ArrayView2::from_shape((layer.fan_in, layer.fan_out), &theta[layer.w.clone()]).expect("layout");
                let mut next = delta.dot(&w.t());
                Zip::from(&mut next).and(input).for_each(|d, &h| {
                    if h <= T::zero() {
                        *d = T::zero();
                    }
                });
                delta = next;
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(LearnerError::NonFinite("gradient"));
        }
        Ok(loss)
    }
}

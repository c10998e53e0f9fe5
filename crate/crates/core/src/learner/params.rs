use std::io::{Read, Write};

use ndarray::Array1;
use rand::{Rng, RngCore};

use super::{ArchKind, Architecture, LearnerError};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"CLPARAMS";
const VERSION: u32 = 1;

/// Flat parameter vector. For each dense layer (input to output) it holds the
/// `fan_in x fan_out` weight matrix in row-major order followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    values: Array1<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(n: usize) -> Self {
        Self { values: Array1::zeros(n) }
    }

    pub fn from_vec(values: Vec<T>) -> Self {
        Self { values: Array1::from(values) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        self.values.as_slice().expect("contiguous")
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        self.values.as_slice_mut().expect("contiguous")
    }

    pub fn as_array(&self) -> &Array1<T> {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// He-uniform weights for ReLU layers, Glorot-uniform for the output
    /// layer, zero biases.
    pub fn init(arch: &Architecture, rng: &mut dyn RngCore) -> Self {
        let layers = arch.layers();
        let mut values = Vec::with_capacity(arch.num_params());
        for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let limit = if l + 1 == layers.len() {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            values.extend((0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-limit..limit))));
            values.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        Self::from_vec(values)
    }

    /// Checkpoint: an 8-byte magic, little-endian `u32` header fields
    /// (version, kind, input dim, classes, hidden count, hidden widths...),
    /// a `u64` parameter count, then the parameters as little-endian `f64`.
    pub fn write_checkpoint<W: Write>(&self, arch: &Architecture, mut w: W) -> Result<(), LearnerError> {
        if self.len() != arch.num_params() {
            return Err(LearnerError::ParamLen { expected: arch.num_params(), got: self.len() });
        }
        w.write_all(MAGIC)?;
        let mut header = vec![VERSION, arch.kind().code(), arch.input_dim() as u32, arch.num_classes() as u32];
        header.push(arch.hidden().len() as u32);
        header.extend(arch.hidden().iter().map(|&h| h as u32));
        for v in header {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in self.values.iter() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Architecture, Self), LearnerError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LearnerError::Checkpoint("bad magic".into()));
        }
        let mut u32_field = || -> Result<u32, LearnerError> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = u32_field()?;
        if version != VERSION {
            return Err(LearnerError::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = ArchKind::from_code(u32_field()?)
            .ok_or_else(|| LearnerError::Checkpoint("unknown architecture code".into()))?;
        let input_dim = u32_field()? as usize;
        let num_classes = u32_field()? as usize;
        let n_hidden = u32_field()? as usize;
        let hidden = (0..n_hidden).map(|_| u32_field().map(|h| h as usize)).collect::<Result<Vec<_>, _>>()?;
        let arch = Architecture::with_hidden(kind, input_dim, hidden, num_classes)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        if n != arch.num_params() {
            return Err(LearnerError::ParamLen { expected: arch.num_params(), got: n });
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            values.push(T::lit(f64::from_le_bytes(b8)));
        }
        Ok((arch, Self::from_vec(values)))
    }
}

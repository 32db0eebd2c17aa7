use thiserror::Error;

use crate::graph::TensorShape;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("tensor of shape {shape} needs {expected} values, got {actual}")]
pub struct TensorSizeError {
    pub shape: TensorShape,
    pub expected: usize,
    pub actual: usize,
}

/// Row-major tensor of rank 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: TensorShape,
    values: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: TensorShape, values: Vec<S>) -> Result<Self, TensorSizeError> {
        let expected = shape.element_count();
        if values.len() != expected {
            return Err(TensorSizeError { shape, expected, actual: values.len() });
        }
        Ok(Tensor { shape, values })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        let n = shape.element_count();
        Tensor { shape, values: vec![S::zero(); n] }
    }

    pub fn from_fn(shape: TensorShape, f: impl FnMut(usize) -> S) -> Self {
        let values = (0..shape.element_count()).map(f).collect();
        Tensor { shape, values }
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn timesteps(&self) -> usize {
        self.shape.timesteps()
    }

    pub fn features(&self) -> usize {
        self.shape.features()
    }

    /// Row `t` of a `[T, F]` tensor (the whole tensor for rank 1).
    pub fn row(&self, t: usize) -> &[S] {
        let f = self.features();
        &self.values[t * f..(t + 1) * f]
    }

    pub fn reshape(self, shape: TensorShape) -> Result<Self, TensorSizeError> {
        Tensor::new(shape, self.values)
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| T::from_binary64(v.to_f64().unwrap_or(f64::NAN))).collect(),
        }
    }
}

//! Named trainable tensors.

use super::scalar::Scalar;
use super::tensor::Tensor;

/// A named model weight. Frozen parameters are skipped by optimizers and
/// loaded into graphs as untracked leaves, so their bytes cannot change over
/// a training run.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub frozen: bool,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self {
            name: name.into(),
            value,
            frozen: false,
        }
    }

    pub fn frozen(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self {
            name: name.into(),
            value,
            frozen: true,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }
}

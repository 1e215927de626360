use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{LmptError, Result};
use crate::scalar::Scalar;

/// Ordered, named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> Default for ParamSet<S> {
    fn default() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its slot.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor<S>) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Records every parameter as a leaf; `trainable` controls whether
    /// gradients are tracked.
    pub fn bind(&self, tape: &mut Tape<S>, trainable: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone(), trainable)).collect()
    }

    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        ParamSet { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }

    /// Replaces values with `other`'s, requiring identical names and shapes.
    pub fn assign_from(&mut self, other: &ParamSet<S>) -> Result<()> {
        if self.names != other.names {
            return Err(LmptError::Checkpoint("parameter names do not match the model layout".into()));
        }
        for ((name, mine), theirs) in self.names.iter().zip(&self.tensors).zip(&other.tensors) {
            if mine.shape() != theirs.shape() {
                return Err(LmptError::Checkpoint(format!(
                    "parameter {name}: shape {:?} vs {:?}",
                    mine.shape(),
                    theirs.shape()
                )));
            }
        }
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }
}

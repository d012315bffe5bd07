//! Named, ordered collection of trainable leaf tensors.
//!
//! Enumeration order is insertion order and is part of the model's identity:
//! optimizer moment slots and checkpoint records follow it.

use crate::error::{DwarfError, Result};
use crate::tensor::{Scalar, Shape, Tensor};
use std::collections::HashMap;

pub struct ParamStore<T: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, data: Vec<T>, shape: Shape) -> Result<Tensor<T>> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(DwarfError::invalid(format!("duplicate parameter name {name}")));
        }
        let t = Tensor::param(data, shape)?;
        self.index.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(t.clone());
        Ok(t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total element count across all parameters.
    pub fn total_elements(&self) -> usize {
        self.tensors.iter().map(|t| t.shape().numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub(crate) fn tensor_at(&self, i: usize) -> &Tensor<T> {
        &self.tensors[i]
    }

    pub(crate) fn name_at(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub(crate) fn update_at(&mut self, i: usize, f: impl FnOnce(&mut [T])) -> Result<()> {
        self.tensors[i].update_data(f)
    }

    /// Replace values from (name, shape, f32 data) records. The record set
    /// must cover exactly this store's parameters with matching shapes.
    pub fn load_values(&mut self, entries: &[super::CheckpointEntry]) -> Result<()> {
        if entries.len() != self.len() {
            return Err(DwarfError::Checkpoint(format!(
                "{} records for {} parameters",
                entries.len(),
                self.len()
            )));
        }
        let by_name: HashMap<&str, &super::CheckpointEntry> =
            entries.iter().map(|e| (e.name.as_str(), e)).collect();
        for i in 0..self.len() {
            let name = self.names[i].clone();
            let entry = *by_name
                .get(name.as_str())
                .ok_or_else(|| DwarfError::Checkpoint(format!("missing parameter {name}")))?;
            let shape = self.tensors[i].shape();
            if entry.shape != shape {
                return Err(DwarfError::Checkpoint(format!(
                    "parameter {name}: stored shape {} vs model shape {}",
                    entry.shape, shape
                )));
            }
            self.update_at(i, |dst| {
                for (d, &s) in dst.iter_mut().zip(entry.data.iter()) {
                    *d = T::from_f32(s);
                }
            })?;
        }
        Ok(())
    }
}

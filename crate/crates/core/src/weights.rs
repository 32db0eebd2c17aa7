//! Per-layer weight storage keyed by `(layer index, role)`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{Graph, TensorRole};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeightError {
    #[error("layer {layer}: missing weight tensor {role:?}")]
    Missing { layer: usize, role: TensorRole },
    #[error("layer {layer}: unexpected weight tensor {role:?}")]
    Unexpected { layer: usize, role: TensorRole },
    #[error("layer {layer}: {role:?} has {actual} elements, expected {expected}")]
    LengthMismatch { layer: usize, role: TensorRole, expected: usize, actual: usize },
    #[error("layer {layer}: {role:?} contains a non-finite value")]
    NonFinite { layer: usize, role: TensorRole },
    #[error("layer {layer}: negative moving variance")]
    NegativeVariance { layer: usize },
}

/// Validated binary32 weights for every layer of one graph.
///
/// Immutable after construction. Iteration order (layer ascending, then the
/// layer's role order) is the canonical blob order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<(usize, TensorRole), Vec<f32>>,
    order: Vec<(usize, TensorRole, Vec<usize>)>,
}

impl WeightStore {
    pub fn new(graph: &Graph, mut tensors: BTreeMap<(usize, TensorRole), Vec<f32>>) -> Result<Self, WeightError> {
        let mut order = Vec::new();
        let mut checked = BTreeMap::new();
        for layer in 0..graph.len() {
            for (role, dims) in graph.weight_roles(layer) {
                let values = tensors.remove(&(layer, role)).ok_or(WeightError::Missing { layer, role })?;
                let expected: usize = dims.iter().product();
                if values.len() != expected {
                    return Err(WeightError::LengthMismatch { layer, role, expected, actual: values.len() });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(WeightError::NonFinite { layer, role });
                }
                if role == TensorRole::MovingVariance && values.iter().any(|&v| v < 0.0) {
                    return Err(WeightError::NegativeVariance { layer });
                }
                checked.insert((layer, role), values);
                order.push((layer, role, dims));
            }
        }
        if let Some(&(layer, role)) = tensors.keys().next() {
            return Err(WeightError::Unexpected { layer, role });
        }
        Ok(WeightStore { tensors: checked, order })
    }

    /// Builds a store by slicing a flat blob in canonical order.
    pub fn from_flat(graph: &Graph, flat: &[f32]) -> Result<Self, WeightError> {
        let mut tensors = BTreeMap::new();
        let mut offset = 0;
        for layer in 0..graph.len() {
            for (role, dims) in graph.weight_roles(layer) {
                let n: usize = dims.iter().product();
                let end = (offset + n).min(flat.len());
                tensors.insert((layer, role), flat[offset.min(end)..end].to_vec());
                offset += n;
            }
        }
        Self::new(graph, tensors)
    }

    /// All-zero weights (moving variance included, so batchnorm divides by `sqrt(eps)`).
    pub fn zeros(graph: &Graph) -> Self {
        Self::from_fn(graph, |_, _| 0.0)
    }

    /// Seeded uniform weights in `[-1, 1]`; moving variances are drawn from `[0.5, 1.5]`.
    pub fn random(graph: &Graph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(graph, |role, _| match role {
            TensorRole::MovingVariance => rng.gen_range(0.5f32..=1.5),
            _ => rng.gen_range(-1.0f32..=1.0),
        })
    }

    /// Fills every element with `f(role, flat index within the tensor)` in canonical order.
    pub fn from_fn(graph: &Graph, mut f: impl FnMut(TensorRole, usize) -> f32) -> Self {
        let mut tensors = BTreeMap::new();
        for layer in 0..graph.len() {
            for (role, dims) in graph.weight_roles(layer) {
                let n: usize = dims.iter().product();
                tensors.insert((layer, role), (0..n).map(|i| f(role, i)).collect());
            }
        }
        Self::new(graph, tensors).expect("generated weights match the graph")
    }

    pub fn get(&self, layer: usize, role: TensorRole) -> Option<&[f32]> {
        self.tensors.get(&(layer, role)).map(Vec::as_slice)
    }

    /// Like [`get`](Self::get) for roles the graph guarantees to exist.
    pub fn tensor(&self, layer: usize, role: TensorRole) -> &[f32] {
        self.get(layer, role)
            .unwrap_or_else(|| panic!("layer {layer} has no {role:?} tensor"))
    }

    /// `(layer, role, dims)` in canonical blob order.
    pub fn layout(&self) -> &[(usize, TensorRole, Vec<usize>)] {
        &self.order
    }

    /// Element offset of every tensor within the flat blob.
    pub fn offsets(&self) -> Vec<(usize, TensorRole, usize)> {
        let mut offset = 0;
        self.order
            .iter()
            .map(|(layer, role, dims)| {
                let start = offset;
                offset += dims.iter().product::<usize>();
                (*layer, *role, start)
            })
            .collect()
    }

    pub fn flatten(&self) -> Vec<f32> {
        self.order
            .iter()
            .flat_map(|(layer, role, _)| self.tensors[&(*layer, *role)].iter().copied())
            .collect()
    }

    pub fn element_count(&self) -> usize {
        self.tensors.values().map(Vec::len).sum()
    }

    /// Element count restricted to trainable roles.
    pub fn trainable_count(&self, layer: usize) -> usize {
        self.tensors
            .iter()
            .filter(|((l, role), _)| *l == layer && role.is_trainable())
            .map(|(_, v)| v.len())
            .sum()
    }
}

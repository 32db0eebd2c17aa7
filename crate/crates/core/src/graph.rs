//! Linear-chain graph IR: layer specifications, shape inference, parameter and
//! MACC accounting.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph has no layers")]
    EmptyGraph,
    #[error("invalid shape {0:?}: rank must be 1 or 2 and every extent at least 1")]
    InvalidShape(Vec<usize>),
    #[error("layer {layer}: invalid attribute: {reason}")]
    InvalidAttribute { layer: usize, reason: String },
    #[error("layer {layer}: shape mismatch: {reason}")]
    ShapeMismatch { layer: usize, reason: String },
    #[error("invalid identifier {0:?}")]
    InvalidName(String),
}

/// Tensor extents. Rank 1 is a feature vector, rank 2 is `[timesteps, features]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TensorShape(Vec<usize>);

impl TensorShape {
    pub fn new(dims: Vec<usize>) -> Result<Self, GraphError> {
        if dims.is_empty() || dims.len() > 2 || dims.contains(&0) {
            return Err(GraphError::InvalidShape(dims));
        }
        Ok(TensorShape(dims))
    }

    pub fn vector(len: usize) -> Result<Self, GraphError> {
        Self::new(vec![len])
    }

    pub fn sequence(timesteps: usize, features: usize) -> Result<Self, GraphError> {
        Self::new(vec![timesteps, features])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn element_count(&self) -> usize {
        self.0.iter().product()
    }

    /// Number of rows; 1 for a rank-1 shape.
    pub fn timesteps(&self) -> usize {
        if self.0.len() == 2 {
            self.0[0]
        } else {
            1
        }
    }

    /// Innermost extent.
    pub fn features(&self) -> usize {
        *self.0.last().expect("shape is never empty")
    }
}

impl TryFrom<Vec<usize>> for TensorShape {
    type Error = GraphError;

    fn try_from(dims: Vec<usize>) -> Result<Self, Self::Error> {
        TensorShape::new(dims)
    }
}

impl From<TensorShape> for Vec<usize> {
    fn from(shape: TensorShape) -> Self {
        shape.0
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Linear,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Linear => x,
            Activation::Relu => relu(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

/// `x > 0 ? x : 0`, so a negative zero input yields positive zero.
#[inline]
pub fn relu<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x
    } else {
        S::zero()
    }
}

/// Exact logistic function `1 / (1 + exp(-x))`.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Valid,
}

pub const DEFAULT_BATCHNORM_EPSILON: f32 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv1d,
    MaxPool1d,
    BatchNorm,
    Lstm,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv1d => "conv1d",
            LayerKind::MaxPool1d => "maxpool1d",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Dense {
        units: usize,
        #[serde(default)]
        activation: Activation,
    },
    Conv1d {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
        #[serde(default)]
        activation: Activation,
    },
    #[serde(rename = "maxpool1d")]
    MaxPool1d { pool: usize, stride: usize },
    #[serde(rename = "batchnorm")]
    BatchNorm {
        #[serde(default = "default_epsilon", serialize_with = "shortest_f32")]
        epsilon: f32,
    },
    Lstm {
        units: usize,
        return_sequences: bool,
    },
}

fn one() -> usize {
    1
}

/// Writes the shortest decimal that reads back as the same binary32, so
/// the value survives widening to binary64 along the way.
fn shortest_f32<Z: serde::Serializer>(v: &f32, s: Z) -> Result<Z::Ok, Z::Error> {
    s.serialize_f64(v.to_string().parse::<f64>().expect("f32 Display output parses as f64"))
}

fn default_epsilon() -> f32 {
    DEFAULT_BATCHNORM_EPSILON
}

impl LayerSpec {
    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation }
    }

    pub fn conv1d(filters: usize, kernel: usize, stride: usize, activation: Activation) -> Self {
        LayerSpec::Conv1d { filters, kernel, stride, padding: Padding::Valid, activation }
    }

    pub fn maxpool1d(pool: usize, stride: usize) -> Self {
        LayerSpec::MaxPool1d { pool, stride }
    }

    pub fn batchnorm(epsilon: f32) -> Self {
        LayerSpec::BatchNorm { epsilon }
    }

    pub fn lstm(units: usize, return_sequences: bool) -> Self {
        LayerSpec::Lstm { units, return_sequences }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Conv1d { .. } => LayerKind::Conv1d,
            LayerSpec::MaxPool1d { .. } => LayerKind::MaxPool1d,
            LayerSpec::BatchNorm { .. } => LayerKind::BatchNorm,
            LayerSpec::Lstm { .. } => LayerKind::Lstm,
        }
    }

    fn check_attributes(&self, layer: usize) -> Result<(), GraphError> {
        let bad = |reason: &str| GraphError::InvalidAttribute { layer, reason: reason.to_string() };
        match *self {
            LayerSpec::Dense { units: 0, .. } => Err(bad("units must be >= 1")),
            LayerSpec::Conv1d { filters, kernel, stride, .. } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    Err(bad("filters, kernel and stride must be >= 1"))
                } else {
                    Ok(())
                }
            }
            LayerSpec::MaxPool1d { pool, stride } if pool == 0 || stride == 0 => {
                Err(bad("pool and stride must be >= 1"))
            }
            LayerSpec::BatchNorm { epsilon } if !(epsilon.is_finite() && epsilon >= 0.0) => {
                Err(bad("epsilon must be finite and non-negative"))
            }
            LayerSpec::Lstm { units: 0, .. } => Err(bad("units must be >= 1")),
            _ => Ok(()),
        }
    }

    /// Output shape of this layer for the given input, or a shape error.
    pub fn output_shape(&self, layer: usize, input: &TensorShape) -> Result<TensorShape, GraphError> {
        self.check_attributes(layer)?;
        let mismatch = |reason: String| GraphError::ShapeMismatch { layer, reason };
        let need_sequence = |what: &str| {
            if input.rank() != 2 {
                Err(mismatch(format!("{what} needs a [timesteps, features] input, got {input}")))
            } else {
                Ok(())
            }
        };
        let shape = match *self {
            LayerSpec::Dense { units, .. } => {
                if input.rank() == 2 {
                    TensorShape::sequence(input.timesteps(), units)
                } else {
                    TensorShape::vector(units)
                }
            }
            LayerSpec::Conv1d { filters, kernel, stride, .. } => {
                need_sequence("conv1d")?;
                let t = input.timesteps();
                if kernel > t {
                    return Err(mismatch(format!("kernel {kernel} exceeds {t} timesteps")));
                }
                TensorShape::sequence((t - kernel) / stride + 1, filters)
            }
            LayerSpec::MaxPool1d { pool, stride } => {
                need_sequence("maxpool1d")?;
                let t = input.timesteps();
                if pool > t {
                    return Err(mismatch(format!("pool {pool} exceeds {t} timesteps")));
                }
                TensorShape::sequence((t - pool) / stride + 1, input.features())
            }
            LayerSpec::BatchNorm { .. } => {
                need_sequence("batchnorm")?;
                Ok(input.clone())
            }
            LayerSpec::Lstm { units, return_sequences } => {
                need_sequence("lstm")?;
                if return_sequences {
                    TensorShape::sequence(input.timesteps(), units)
                } else {
                    TensorShape::vector(units)
                }
            }
        };
        shape.map_err(|e| mismatch(e.to_string()))
    }

    /// Weight tensors this layer owns, with their shapes, in blob order.
    pub fn weight_roles(&self, input: &TensorShape) -> Vec<(TensorRole, Vec<usize>)> {
        let in_f = input.features();
        match *self {
            LayerSpec::Dense { units, .. } => {
                vec![(TensorRole::Kernel, vec![units, in_f]), (TensorRole::Bias, vec![units])]
            }
            LayerSpec::Conv1d { filters, kernel, .. } => vec![
                (TensorRole::Kernel, vec![filters, kernel, in_f]),
                (TensorRole::Bias, vec![filters]),
            ],
            LayerSpec::MaxPool1d { .. } => Vec::new(),
            LayerSpec::BatchNorm { .. } => vec![
                (TensorRole::Gamma, vec![in_f]),
                (TensorRole::Beta, vec![in_f]),
                (TensorRole::MovingMean, vec![in_f]),
                (TensorRole::MovingVariance, vec![in_f]),
            ],
            LayerSpec::Lstm { units, .. } => vec![
                (TensorRole::Kernel, vec![4 * units, in_f]),
                (TensorRole::RecurrentKernel, vec![4 * units, units]),
                (TensorRole::Bias, vec![4 * units]),
            ],
        }
    }
}

/// Role of a weight tensor inside its layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorRole {
    Kernel,
    RecurrentKernel,
    Bias,
    Gamma,
    Beta,
    MovingMean,
    MovingVariance,
}

impl TensorRole {
    pub fn is_trainable(self) -> bool {
        !matches!(self, TensorRole::MovingMean | TensorRole::MovingVariance)
    }

    pub fn name(self) -> &'static str {
        match self {
            TensorRole::Kernel => "kernel",
            TensorRole::RecurrentKernel => "recurrent_kernel",
            TensorRole::Bias => "bias",
            TensorRole::Gamma => "gamma",
            TensorRole::Beta => "beta",
            TensorRole::MovingMean => "moving_mean",
            TensorRole::MovingVariance => "moving_variance",
        }
    }
}

/// Returns `true` for `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Resolves the output shape of every layer in a chain.
///
/// Rank-2 input to a dense layer is processed per timestep. Any layer other
/// than dense requires a rank-2 input, so a final-state LSTM can only be
/// followed by dense layers.
pub fn infer_shapes(input: &TensorShape, layers: &[LayerSpec]) -> Result<Vec<TensorShape>, GraphError> {
    if layers.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input.clone();
    for (i, layer) in layers.iter().enumerate() {
        current = layer.output_shape(i, &current)?;
        shapes.push(current.clone());
    }
    Ok(shapes)
}

/// Immutable, shape-resolved linear chain of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    name: String,
    input_shape: TensorShape,
    layers: Vec<LayerSpec>,
    shapes: Vec<TensorShape>,
}

impl Graph {
    pub fn new(name: impl Into<String>, input_shape: TensorShape, layers: Vec<LayerSpec>) -> Result<Self, GraphError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(GraphError::InvalidName(name));
        }
        let shapes = infer_shapes(&input_shape, &layers)?;
        Ok(Graph { name, input_shape, layers, shapes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &TensorShape {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Resolved output shape of every layer.
    pub fn shapes(&self) -> &[TensorShape] {
        &self.shapes
    }

    pub fn layer_input_shape(&self, layer: usize) -> &TensorShape {
        if layer == 0 {
            &self.input_shape
        } else {
            &self.shapes[layer - 1]
        }
    }

    pub fn layer_output_shape(&self, layer: usize) -> &TensorShape {
        &self.shapes[layer]
    }

    pub fn output_shape(&self) -> &TensorShape {
        self.shapes.last().expect("graph is never empty")
    }

    /// Conventional display name: `<kind>_<index>`.
    pub fn layer_name(&self, layer: usize) -> String {
        format!("{}_{}", self.layers[layer].kind(), layer)
    }

    pub fn weight_roles(&self, layer: usize) -> Vec<(TensorRole, Vec<usize>)> {
        self.layers[layer].weight_roles(self.layer_input_shape(layer))
    }

    /// Trainable parameters of one layer (batchnorm moving statistics excluded).
    pub fn layer_params(&self, layer: usize) -> usize {
        let in_f = self.layer_input_shape(layer).features();
        match self.layers[layer] {
            LayerSpec::Dense { units, .. } => (in_f + 1) * units,
            LayerSpec::Conv1d { filters, kernel, .. } => (kernel * in_f + 1) * filters,
            LayerSpec::MaxPool1d { .. } => 0,
            LayerSpec::BatchNorm { .. } => 2 * in_f,
            LayerSpec::Lstm { units, .. } => 4 * (units * (in_f + units) + units),
        }
    }

    /// Stored weight elements of one layer, including non-trainable statistics.
    pub fn layer_stored_params(&self, layer: usize) -> usize {
        self.weight_roles(layer).iter().map(|(_, dims)| dims.iter().product::<usize>()).sum()
    }

    pub fn param_count(&self) -> usize {
        (0..self.len()).map(|i| self.layer_params(i)).sum()
    }

    pub fn stored_param_count(&self) -> usize {
        (0..self.len()).map(|i| self.layer_stored_params(i)).sum()
    }

    /// Multiply-accumulate count of one layer.
    pub fn layer_macc(&self, layer: usize) -> u64 {
        let input = self.layer_input_shape(layer);
        let output = self.layer_output_shape(layer);
        let (t, in_f) = (input.timesteps() as u64, input.features() as u64);
        match self.layers[layer] {
            LayerSpec::Dense { units, .. } => t * in_f * units as u64,
            LayerSpec::Conv1d { filters, kernel, .. } => {
                output.timesteps() as u64 * kernel as u64 * in_f * filters as u64
            }
            LayerSpec::MaxPool1d { .. } => 0,
            LayerSpec::BatchNorm { .. } => t * in_f,
            LayerSpec::Lstm { units, .. } => {
                let u = units as u64;
                t * 4 * u * (in_f + u)
            }
        }
    }

    pub fn macc_count(&self) -> MaccCount {
        let per_layer: Vec<u64> = (0..self.len()).map(|i| self.layer_macc(i)).collect();
        let total = per_layer.iter().sum();
        MaccCount { per_layer, total }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MaccCount {
    pub per_layer: Vec<u64>,
    pub total: u64,
}

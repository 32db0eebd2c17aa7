//! Naive reference forward pass.
//!
//! Every dot product starts from zero, accumulates in the element type with
//! ascending indices and adds the bias last. The C generator emits the same
//! operation order so that host builds reproduce these outputs bit for bit.

use thiserror::Error;

use crate::graph::{sigmoid, Activation, Graph, LayerSpec, TensorRole, TensorShape};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::weights::WeightStore;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("negative variance in channel {0}")]
    NegativeVariance(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpreterError {
    #[error("input shape {actual} does not match graph input {expected}")]
    InputShape { expected: TensorShape, actual: TensorShape },
    #[error("layer {layer}: {source}")]
    Kernel { layer: usize, source: KernelError },
}

fn mismatch(msg: impl Into<String>) -> KernelError {
    KernelError::ShapeMismatch(msg.into())
}

fn shape(dims: Vec<usize>) -> Result<TensorShape, KernelError> {
    TensorShape::new(dims).map_err(|e| mismatch(e.to_string()))
}

#[inline]
fn w<S: Scalar>(v: f32) -> S {
    S::from_binary32(v)
}

/// Hidden and cell state of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<S> {
    pub h: Vec<S>,
    pub c: Vec<S>,
}

impl<S: Scalar> LstmState<S> {
    pub fn zeros(units: usize) -> Self {
        LstmState { h: vec![S::zero(); units], c: vec![S::zero(); units] }
    }
}

pub fn run_dense<S: Scalar>(
    x: &Tensor<S>,
    kernel: &[f32],
    bias: &[f32],
    activation: Activation,
) -> Result<Tensor<S>, KernelError> {
    dense(x, kernel, bias, activation, &mut 0)
}

fn dense<S: Scalar>(
    x: &Tensor<S>,
    kernel: &[f32],
    bias: &[f32],
    activation: Activation,
    muls: &mut u64,
) -> Result<Tensor<S>, KernelError> {
    let units = bias.len();
    let in_f = x.features();
    if units == 0 || kernel.len() != units * in_f {
        return Err(mismatch(format!(
            "dense kernel has {} values, expected {units}x{in_f}",
            kernel.len()
        )));
    }
    let out_shape = if x.shape().rank() == 2 {
        shape(vec![x.timesteps(), units])?
    } else {
        shape(vec![units])?
    };
    let mut out = Vec::with_capacity(out_shape.element_count());
    for t in 0..x.timesteps() {
        let row = x.row(t);
        for o in 0..units {
            let weights = &kernel[o * in_f..(o + 1) * in_f];
            let mut acc = S::zero();
            for (wi, xi) in weights.iter().zip(row) {
                acc += w::<S>(*wi) * *xi;
            }
            *muls += in_f as u64;
            out.push(activation.apply(acc + w(bias[o])));
        }
    }
    Ok(Tensor::new(out_shape, out).expect("sized above"))
}

pub fn run_conv1d<S: Scalar>(
    x: &Tensor<S>,
    kernel: &[f32],
    bias: &[f32],
    kernel_size: usize,
    stride: usize,
    activation: Activation,
) -> Result<Tensor<S>, KernelError> {
    conv1d(x, kernel, bias, kernel_size, stride, activation, &mut 0)
}

fn conv1d<S: Scalar>(
    x: &Tensor<S>,
    kernel: &[f32],
    bias: &[f32],
    kernel_size: usize,
    stride: usize,
    activation: Activation,
    muls: &mut u64,
) -> Result<Tensor<S>, KernelError> {
    if x.shape().rank() != 2 {
        return Err(mismatch("conv1d needs a rank-2 input"));
    }
    let (t_in, channels, filters) = (x.timesteps(), x.features(), bias.len());
    if kernel_size == 0 || stride == 0 || kernel_size > t_in {
        return Err(mismatch(format!("kernel {kernel_size} / stride {stride} invalid for {t_in} timesteps")));
    }
    let window = kernel_size * channels;
    if filters == 0 || kernel.len() != filters * window {
        return Err(mismatch(format!(
            "conv1d kernel has {} values, expected {filters}x{kernel_size}x{channels}",
            kernel.len()
        )));
    }
    let t_out = (t_in - kernel_size) / stride + 1;
    let xs = x.values();
    let mut out = Vec::with_capacity(t_out * filters);
    for t in 0..t_out {
        // Rows t*stride .. t*stride+kernel are contiguous in row-major order.
        let patch = &xs[t * stride * channels..t * stride * channels + window];
        for f in 0..filters {
            let weights = &kernel[f * window..(f + 1) * window];
            let mut acc = S::zero();
            for (wi, xi) in weights.iter().zip(patch) {
                acc += w::<S>(*wi) * *xi;
            }
            *muls += window as u64;
            out.push(activation.apply(acc + w(bias[f])));
        }
    }
    Ok(Tensor::new(shape(vec![t_out, filters])?, out).expect("sized above"))
}

pub fn run_maxpool1d<S: Scalar>(x: &Tensor<S>, pool: usize, stride: usize) -> Result<Tensor<S>, KernelError> {
    if x.shape().rank() != 2 {
        return Err(mismatch("maxpool1d needs a rank-2 input"));
    }
    let (t_in, channels) = (x.timesteps(), x.features());
    if pool == 0 || stride == 0 || pool > t_in {
        return Err(mismatch(format!("pool {pool} / stride {stride} invalid for {t_in} timesteps")));
    }
    let t_out = (t_in - pool) / stride + 1;
    let xs = x.values();
    let mut out = Vec::with_capacity(t_out * channels);
    for t in 0..t_out {
        for c in 0..channels {
            let mut best = xs[t * stride * channels + c];
            for k in 1..pool {
                let v = xs[(t * stride + k) * channels + c];
                if v > best {
                    best = v;
                }
            }
            out.push(best);
        }
    }
    Ok(Tensor::new(shape(vec![t_out, channels])?, out).expect("sized above"))
}

/// `y = gamma * (x - mean) / sqrt(var + eps) + beta`, evaluated left to right.
pub fn run_batchnorm<S: Scalar>(
    x: &Tensor<S>,
    gamma: &[f32],
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    eps: f32,
) -> Result<Tensor<S>, KernelError> {
    batchnorm(x, gamma, beta, mean, var, eps, &mut 0)
}

fn batchnorm<S: Scalar>(
    x: &Tensor<S>,
    gamma: &[f32],
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    eps: f32,
    muls: &mut u64,
) -> Result<Tensor<S>, KernelError> {
    let channels = x.features();
    if [gamma.len(), beta.len(), mean.len(), var.len()].iter().any(|&n| n != channels) {
        return Err(mismatch(format!("batchnorm parameters do not match {channels} channels")));
    }
    if let Some(c) = var.iter().position(|&v| v < 0.0) {
        return Err(KernelError::NegativeVariance(c));
    }
    let eps = w::<S>(eps);
    let denom: Vec<S> = var.iter().map(|&v| (w::<S>(v) + eps).sqrt()).collect();
    let values = x
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = i % channels;
            w::<S>(gamma[c]) * (v - w(mean[c])) / denom[c] + w(beta[c])
        })
        .collect();
    *muls += x.values().len() as u64;
    Ok(Tensor::new(x.shape().clone(), values).expect("same shape"))
}

/// LSTM with gate blocks ordered `[input, forget, candidate, output]` and a
/// zero initial state.
pub fn run_lstm<S: Scalar>(
    x: &Tensor<S>,
    kernel: &[f32],
    recurrent: &[f32],
    bias: &[f32],
    units: usize,
    return_sequences: bool,
) -> Result<Tensor<S>, KernelError> {
    lstm(x, kernel, recurrent, bias, units, return_sequences, &mut 0)
}

fn lstm<S: Scalar>(
    x: &Tensor<S>,
    kernel: &[f32],
    recurrent: &[f32],
    bias: &[f32],
    units: usize,
    return_sequences: bool,
    muls: &mut u64,
) -> Result<Tensor<S>, KernelError> {
    if x.shape().rank() != 2 {
        return Err(mismatch("lstm needs a rank-2 input"));
    }
    let in_f = x.features();
    if units == 0
        || kernel.len() != 4 * units * in_f
        || recurrent.len() != 4 * units * units
        || bias.len() != 4 * units
    {
        return Err(mismatch(format!("lstm weights do not match units={units}, input features={in_f}")));
    }
    let mut state = LstmState::<S>::zeros(units);
    let mut next_h = vec![S::zero(); units];
    let mut out = Vec::with_capacity(if return_sequences { x.timesteps() * units } else { units });
    let gate = |row: usize, xt: &[S], h: &[S]| {
        let mut acc = S::zero();
        for (wi, xi) in kernel[row * in_f..(row + 1) * in_f].iter().zip(xt) {
            acc += w::<S>(*wi) * *xi;
        }
        for (ui, hi) in recurrent[row * units..(row + 1) * units].iter().zip(h) {
            acc += w::<S>(*ui) * *hi;
        }
        acc + w(bias[row])
    };
    for t in 0..x.timesteps() {
        let xt = x.row(t);
        for (j, nh) in next_h.iter_mut().enumerate() {
            let i_gate = sigmoid(gate(j, xt, &state.h));
            let f_gate = sigmoid(gate(units + j, xt, &state.h));
            let g_gate = gate(2 * units + j, xt, &state.h).tanh();
            let o_gate = sigmoid(gate(3 * units + j, xt, &state.h));
            state.c[j] = f_gate * state.c[j] + i_gate * g_gate;
            *nh = o_gate * state.c[j].tanh();
        }
        *muls += 4 * (units * (in_f + units)) as u64;
        state.h.copy_from_slice(&next_h);
        if return_sequences {
            out.extend_from_slice(&state.h);
        }
    }
    if !return_sequences {
        out.extend_from_slice(&state.h);
    }
    let out_shape = if return_sequences { shape(vec![x.timesteps(), units])? } else { shape(vec![units])? };
    Ok(Tensor::new(out_shape, out).expect("sized above"))
}

fn run_layer_counted<S: Scalar>(
    graph: &Graph,
    weights: &WeightStore,
    layer: usize,
    x: &Tensor<S>,
    muls: &mut u64,
) -> Result<Tensor<S>, InterpreterError> {
    let t = |role| weights.tensor(layer, role);
    let result = match graph.layers()[layer] {
        LayerSpec::Dense { activation, .. } => {
            dense(x, t(TensorRole::Kernel), t(TensorRole::Bias), activation, muls)
        }
        LayerSpec::Conv1d { kernel, stride, activation, .. } => conv1d(
            x,
            t(TensorRole::Kernel),
            t(TensorRole::Bias),
            kernel,
            stride,
            activation,
            muls,
        ),
        LayerSpec::MaxPool1d { pool, stride } => run_maxpool1d(x, pool, stride),
        LayerSpec::BatchNorm { epsilon } => batchnorm(
            x,
            t(TensorRole::Gamma),
            t(TensorRole::Beta),
            t(TensorRole::MovingMean),
            t(TensorRole::MovingVariance),
            epsilon,
            muls,
        ),
        LayerSpec::Lstm { units, return_sequences } => lstm(
            x,
            t(TensorRole::Kernel),
            t(TensorRole::RecurrentKernel),
            t(TensorRole::Bias),
            units,
            return_sequences,
            muls,
        ),
    };
    result.map_err(|source| InterpreterError::Kernel { layer, source })
}

/// Runs a single layer of `graph` on `x`.
pub fn run_layer<S: Scalar>(
    graph: &Graph,
    weights: &WeightStore,
    layer: usize,
    x: &Tensor<S>,
) -> Result<Tensor<S>, InterpreterError> {
    run_layer_counted(graph, weights, layer, x, &mut 0)
}

fn check_input<S: Scalar>(graph: &Graph, x: &Tensor<S>) -> Result<(), InterpreterError> {
    if x.shape() != graph.input_shape() {
        return Err(InterpreterError::InputShape {
            expected: graph.input_shape().clone(),
            actual: x.shape().clone(),
        });
    }
    Ok(())
}

pub fn forward<S: Scalar>(graph: &Graph, weights: &WeightStore, x: &Tensor<S>) -> Result<Tensor<S>, InterpreterError> {
    check_input(graph, x)?;
    let mut current = x.clone();
    for layer in 0..graph.len() {
        current = run_layer(graph, weights, layer, &current)?;
    }
    Ok(current)
}

/// Forward pass that also reports the scalar multiplies each layer executed
/// (dot-product terms only; gate products and the maxpool are not counted).
pub fn forward_counted<S: Scalar>(
    graph: &Graph,
    weights: &WeightStore,
    x: &Tensor<S>,
) -> Result<(Tensor<S>, Vec<u64>), InterpreterError> {
    check_input(graph, x)?;
    let mut counts = Vec::with_capacity(graph.len());
    let mut current = x.clone();
    for layer in 0..graph.len() {
        let mut muls = 0;
        current = run_layer_counted(graph, weights, layer, &current, &mut muls)?;
        counts.push(muls);
    }
    Ok((current, counts))
}

/// Convenience for flat binary32 inputs shaped as the graph input.
pub fn forward_flat(graph: &Graph, weights: &WeightStore, input: &[f32]) -> Result<Vec<f32>, InterpreterError> {
    let x = Tensor::new(graph.input_shape().clone(), input.to_vec()).map_err(|_| {
        InterpreterError::InputShape {
            expected: graph.input_shape().clone(),
            actual: TensorShape::vector(input.len().max(1)).expect("non-zero"),
        }
    })?;
    Ok(forward(graph, weights, &x)?.into_values())
}

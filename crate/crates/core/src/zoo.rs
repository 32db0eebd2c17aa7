//! The two bundled case-study topologies with seeded random weights.
//!
//! Training is out of scope; the weights only make the models runnable end to
//! end. Shapes and parameter counts are those of the trained networks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Activation, Graph, LayerSpec, TensorRole, TensorShape};
use crate::weights::WeightStore;

pub const AUTOENCODER_NAME: &str = "can_autoencoder";
pub const CNN_LSTM_NAME: &str = "battery_cnn_lstm";
pub const AUTOENCODER_SEED: u64 = 6272;
pub const CNN_LSTM_SEED: u64 = 8961;

/// CAN-bus LSTM autoencoder: 24 snapshots x 20 signals in and out.
pub fn can_autoencoder() -> Graph {
    Graph::new(
        AUTOENCODER_NAME,
        TensorShape::sequence(24, 20).expect("static shape"),
        vec![
            LayerSpec::dense(20, Activation::Relu),
            LayerSpec::lstm(18, true),
            LayerSpec::lstm(18, true),
            LayerSpec::dense(20, Activation::Linear),
        ],
    )
    .expect("static graph")
}

/// Capacity regressor: 20 samples x [current, voltage, temperature, dt] to one value.
pub fn battery_cnn_lstm() -> Graph {
    Graph::new(
        CNN_LSTM_NAME,
        TensorShape::sequence(20, 4).expect("static shape"),
        vec![
            LayerSpec::conv1d(32, 4, 1, Activation::Relu),
            LayerSpec::batchnorm(1e-3),
            LayerSpec::maxpool1d(2, 2),
            LayerSpec::lstm(32, false),
            LayerSpec::dense(1, Activation::Linear),
        ],
    )
    .expect("static graph")
}

/// Glorot-uniform kernels, small uniform biases, unit-ish batchnorm statistics.
pub fn seeded_weights(graph: &Graph, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = BTreeMap::new();
    for layer in 0..graph.len() {
        let fan_in = graph.layer_input_shape(layer).features() as f32;
        let fan_out = graph.layer_output_shape(layer).features() as f32;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        for (role, dims) in graph.weight_roles(layer) {
            let (lo, hi) = match role {
                TensorRole::Kernel | TensorRole::RecurrentKernel => (-limit, limit),
                TensorRole::Bias | TensorRole::Beta | TensorRole::MovingMean => (-0.1, 0.1),
                TensorRole::Gamma => (0.8, 1.2),
                TensorRole::MovingVariance => (0.5, 1.5),
            };
            let n: usize = dims.iter().product();
            tensors.insert((layer, role), (0..n).map(|_| rng.gen_range(lo..=hi)).collect());
        }
    }
    WeightStore::new(graph, tensors).expect("generated weights match the graph")
}

/// `(graph, weights)` for a bundled model name.
pub fn bundled(name: &str) -> Option<(Graph, WeightStore)> {
    match name {
        AUTOENCODER_NAME | "autoencoder" => {
            let g = can_autoencoder();
            let w = seeded_weights(&g, AUTOENCODER_SEED);
            Some((g, w))
        }
        CNN_LSTM_NAME | "cnn-lstm" | "cnn_lstm" => {
            let g = battery_cnn_lstm();
            let w = seeded_weights(&g, CNN_LSTM_SEED);
            Some((g, w))
        }
        _ => None,
    }
}

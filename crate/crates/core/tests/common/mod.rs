//! Shared test helpers: random chain graphs, reference oracles, plan and
//! pipeline checks, and C build helpers.

#![allow(dead_code)]

pub mod c_driver;
pub mod oracles;
pub mod pipeline_checks;
pub mod soundness;

#[allow(unused_imports)]
pub use c_driver::*;

use rand::Rng;
use tnnc_core::{Activation, Graph, LayerSpec, TensorShape};

pub const ACTIVATIONS: [Activation; 4] = [Activation::Linear, Activation::Relu, Activation::Tanh, Activation::Sigmoid];

pub fn random_activation(rng: &mut impl Rng) -> Activation {
    ACTIVATIONS[rng.gen_range(0..4)]
}

/// Random valid chain of up to `max_layers` layers over a small input.
pub fn random_chain(rng: &mut impl Rng, max_layers: usize) -> Graph {
    let mut shape = if rng.gen_bool(0.85) {
        TensorShape::sequence(rng.gen_range(1..=12), rng.gen_range(1..=6)).unwrap()
    } else {
        TensorShape::vector(rng.gen_range(1..=8)).unwrap()
    };
    let input = shape.clone();
    let n = rng.gen_range(1..=max_layers);
    let mut layers = Vec::with_capacity(n);
    for i in 0..n {
        let t = shape.timesteps();
        let layer = if shape.rank() == 1 {
            LayerSpec::dense(rng.gen_range(1..=8), random_activation(rng))
        } else {
            match rng.gen_range(0..5) {
                0 => LayerSpec::dense(rng.gen_range(1..=8), random_activation(rng)),
                1 => LayerSpec::conv1d(rng.gen_range(1..=5), rng.gen_range(1..=t.min(4)), rng.gen_range(1..=3), random_activation(rng)),
                2 => LayerSpec::maxpool1d(rng.gen_range(1..=t.min(3)), rng.gen_range(1..=3)),
                3 => LayerSpec::batchnorm(1e-3),
                _ => LayerSpec::lstm(rng.gen_range(1..=5), rng.gen_bool(0.6)),
            }
        };
        shape = layer.output_shape(i, &shape).unwrap();
        layers.push(layer);
    }
    Graph::new("chain", input, layers).unwrap()
}

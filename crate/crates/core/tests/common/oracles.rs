//! Naive binary64 reference kernels, written from the layer definitions
//! with explicit index arithmetic, and randomized comparison suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnnc_core::graph::Activation;
use tnnc_core::interpreter::{run_batchnorm, run_conv1d, run_dense, run_lstm, run_maxpool1d};
use tnnc_core::tensor::Tensor;
use tnnc_core::TensorShape;

use super::random_activation;

pub const KERNELS: [&str; 5] = ["dense", "conv1d", "maxpool1d", "batchnorm", "lstm"];

fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Linear => v,
        Activation::Relu => v.max(0.0),
        Activation::Tanh => v.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
    }
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `x[t][i]`, `w[o][i]` -> `y[t][o]`.
pub fn dense(x: &[f64], t: usize, n_in: usize, w: &[f64], b: &[f64], a: Activation) -> Vec<f64> {
    let n_out = b.len();
    let mut y = vec![0.0; t * n_out];
    for s in 0..t {
        for o in 0..n_out {
            let mut sum = b[o];
            for i in 0..n_in {
                sum += w[o * n_in + i] * x[s * n_in + i];
            }
            y[s * n_out + o] = act(a, sum);
        }
    }
    y
}

/// `w[f][k][c]`; output step `s` reads input rows `s*stride + k`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d(x: &[f64], t: usize, c_in: usize, w: &[f64], b: &[f64], k: usize, stride: usize, a: Activation) -> Vec<f64> {
    let f_out = b.len();
    let t_out = (t - k) / stride + 1;
    let mut y = vec![0.0; t_out * f_out];
    for s in 0..t_out {
        for f in 0..f_out {
            let mut sum = 0.0;
            for j in 0..k {
                for c in 0..c_in {
                    sum += w[(f * k + j) * c_in + c] * x[(s * stride + j) * c_in + c];
                }
            }
            y[s * f_out + f] = act(a, sum + b[f]);
        }
    }
    y
}

pub fn maxpool1d(x: &[f64], t: usize, c_in: usize, pool: usize, stride: usize) -> Vec<f64> {
    let t_out = (t - pool) / stride + 1;
    let mut y = vec![f64::NEG_INFINITY; t_out * c_in];
    for s in 0..t_out {
        for c in 0..c_in {
            for j in 0..pool {
                y[s * c_in + c] = y[s * c_in + c].max(x[(s * stride + j) * c_in + c]);
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn batchnorm(x: &[f64], c_in: usize, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], eps: f64) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = i % c_in;
            gamma[c] * (v - mean[c]) / (var[c] + eps).sqrt() + beta[c]
        })
        .collect()
}

/// Gate rows in blocks of `units`: input, forget, cell candidate, output.
#[allow(clippy::too_many_arguments)]
pub fn lstm(x: &[f64], t: usize, n_in: usize, w: &[f64], r: &[f64], b: &[f64], units: usize, seq: bool) -> Vec<f64> {
    let mut h = vec![0.0; units];
    let mut c = vec![0.0; units];
    let mut out = Vec::new();
    for s in 0..t {
        let pre = |row: usize, h: &[f64]| {
            let mut z = b[row];
            for i in 0..n_in {
                z += w[row * n_in + i] * x[s * n_in + i];
            }
            for j in 0..units {
                z += r[row * units + j] * h[j];
            }
            z
        };
        let mut h_new = vec![0.0; units];
        for u in 0..units {
            let ig = sig(pre(u, &h));
            let fg = sig(pre(units + u, &h));
            let gg = pre(2 * units + u, &h).tanh();
            let og = sig(pre(3 * units + u, &h));
            c[u] = fg * c[u] + ig * gg;
            h_new[u] = og * c[u].tanh();
        }
        h = h_new;
        if seq {
            out.extend_from_slice(&h);
        }
    }
    if !seq {
        out = h;
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
}

fn wide(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "output lengths differ");
    a.iter().zip(b).map(|(&p, &q)| (f64::from(p) - q).abs()).fold(0.0, f64::max)
}

fn max_abs_diff64(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "output lengths differ");
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Worst absolute error of one kernel over `instances` random cases, for
/// the binary32 interpreter and the binary64 interpreter.
pub struct SuiteResult {
    pub instances: usize,
    pub max_err_f32: f64,
    pub max_err_f64: f64,
}

pub fn run_suite(kernel: &str, instances: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut res = SuiteResult { instances, max_err_f32: 0.0, max_err_f64: 0.0 };
    for _ in 0..instances {
        let t = rng.gen_range(1..=8);
        let n_in = rng.gen_range(1..=6);
        let x = uniform(&mut rng, t * n_in, -1.0, 1.0);
        let shape = TensorShape::sequence(t, n_in).unwrap();
        let x32 = Tensor::new(shape.clone(), x.clone()).unwrap();
        let x64: Tensor<f64> = x32.cast();
        let xw = wide(&x);
        let (got32, got64, want) = match kernel {
            "dense" => {
                let units = rng.gen_range(1..=8);
                let a = random_activation(&mut rng);
                let w = uniform(&mut rng, units * n_in, -1.0, 1.0);
                let b = uniform(&mut rng, units, -1.0, 1.0);
                (
                    run_dense(&x32, &w, &b, a).unwrap().into_values(),
                    run_dense(&x64, &w, &b, a).unwrap().into_values(),
                    dense(&xw, t, n_in, &wide(&w), &wide(&b), a),
                )
            }
            "conv1d" => {
                let k = rng.gen_range(1..=t.min(4));
                let stride = rng.gen_range(1..=3);
                let filters = rng.gen_range(1..=5);
                let a = random_activation(&mut rng);
                let w = uniform(&mut rng, filters * k * n_in, -1.0, 1.0);
                let b = uniform(&mut rng, filters, -1.0, 1.0);
                (
                    run_conv1d(&x32, &w, &b, k, stride, a).unwrap().into_values(),
                    run_conv1d(&x64, &w, &b, k, stride, a).unwrap().into_values(),
                    conv1d(&xw, t, n_in, &wide(&w), &wide(&b), k, stride, a),
                )
            }
            "maxpool1d" => {
                let pool = rng.gen_range(1..=t.min(4));
                let stride = rng.gen_range(1..=3);
                (
                    run_maxpool1d(&x32, pool, stride).unwrap().into_values(),
                    run_maxpool1d(&x64, pool, stride).unwrap().into_values(),
                    maxpool1d(&xw, t, n_in, pool, stride),
                )
            }
            "batchnorm" => {
                let gamma = uniform(&mut rng, n_in, 0.8, 1.2);
                let beta = uniform(&mut rng, n_in, -0.1, 0.1);
                let mean = uniform(&mut rng, n_in, -0.1, 0.1);
                let var = uniform(&mut rng, n_in, 0.5, 1.5);
                let eps = 1e-3f32;
                (
                    run_batchnorm(&x32, &gamma, &beta, &mean, &var, eps).unwrap().into_values(),
                    run_batchnorm(&x64, &gamma, &beta, &mean, &var, eps).unwrap().into_values(),
                    batchnorm(&xw, n_in, &wide(&gamma), &wide(&beta), &wide(&mean), &wide(&var), f64::from(eps)),
                )
            }
            "lstm" => {
                let units = rng.gen_range(1..=5);
                let seq = rng.gen_bool(0.5);
                let w = uniform(&mut rng, 4 * units * n_in, -1.0, 1.0);
                let r = uniform(&mut rng, 4 * units * units, -1.0, 1.0);
                let b = uniform(&mut rng, 4 * units, -1.0, 1.0);
                (
                    run_lstm(&x32, &w, &r, &b, units, seq).unwrap().into_values(),
                    run_lstm(&x64, &w, &r, &b, units, seq).unwrap().into_values(),
                    lstm(&xw, t, n_in, &wide(&w), &wide(&r), &wide(&b), units, seq),
                )
            }
            other => panic!("unknown kernel {other}"),
        };
        res.max_err_f32 = res.max_err_f32.max(max_abs_diff(&got32, &want));
        res.max_err_f64 = res.max_err_f64.max(max_abs_diff64(&got64, &want));
    }
    res
}

//! Cross-accuracy: generated-code outputs checked element by element against
//! the reference interpreter, which is treated as ground truth.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::Graph;
use crate::interpreter::{forward_flat, InterpreterError};
use crate::vectors::VectorFile;
use crate::weights::WeightStore;

pub const DEFAULT_ATOL: f64 = 1e-5;
pub const DEFAULT_RTOL: f64 = 1e-4;
pub const DEFAULT_RANGE: (f32, f32) = (-1.0, 1.0);
/// Name recorded in reports for the vector generator.
pub const GENERATOR: &str = "chacha8(seed_from_u64)+uniform_f32_inclusive";

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Interpreter(#[from] InterpreterError),
}

/// `n` seeded input vectors with elements uniform in `range` (inclusive).
pub fn generate_vectors(graph: &Graph, n: usize, seed: u64, range: (f32, f32)) -> VectorFile {
    let len = graph.input_shape().element_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(range.0, range.1);
    let values = (0..n * len).map(|_| dist.sample(&mut rng)).collect();
    VectorFile::new(len, values).expect("sized exactly")
}

/// Interpreter outputs for every input vector.
pub fn reference_outputs(graph: &Graph, weights: &WeightStore, inputs: &VectorFile) -> Result<VectorFile, ValidationError> {
    check_len("input", inputs, graph.input_shape().element_count())?;
    let out_len = graph.output_shape().element_count();
    let mut out = VectorFile::empty(out_len);
    for x in inputs.iter() {
        out.push(&forward_flat(graph, weights, x)?);
    }
    Ok(out)
}

fn check_len(what: &str, file: &VectorFile, expected: usize) -> Result<(), ValidationError> {
    if !file.is_empty() && file.length() != expected {
        return Err(ValidationError::ShapeMismatch(format!(
            "{what} vectors have length {}, model expects {expected}",
            file.length()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub vector: usize,
    pub element: usize,
    pub reference: f32,
    pub candidate: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossAccuracyReport {
    pub vectors: usize,
    pub elements: usize,
    pub matches: usize,
    pub cross_accuracy: f64,
    pub max_abs_error: f64,
    /// Over elements whose reference value is non-zero.
    pub max_rel_error: f64,
    pub atol: f64,
    pub rtol: f64,
    /// The predicate is `|candidate - reference| <= atol + rtol * |reference|`.
    pub direction: &'static str,
    pub first_mismatch: Option<Mismatch>,
}

impl CrossAccuracyReport {
    pub fn is_perfect(&self) -> bool {
        self.matches == self.elements
    }
}

/// Compares two output sets. `reference` is ground truth.
pub fn compare(reference: &VectorFile, candidate: &VectorFile, atol: f64, rtol: f64) -> Result<CrossAccuracyReport, ValidationError> {
    if reference.count() != candidate.count() || (!reference.is_empty() && reference.length() != candidate.length()) {
        return Err(ValidationError::ShapeMismatch(format!(
            "reference has {}x{} values, candidate {}x{}",
            reference.count(),
            reference.length(),
            candidate.count(),
            candidate.length()
        )));
    }
    let mut matches = 0;
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut first_mismatch = None;
    let length = reference.length().max(1);
    for (i, (&r, &c)) in reference.values().iter().zip(candidate.values()).enumerate() {
        let (r64, c64) = (r as f64, c as f64);
        let diff = (c64 - r64).abs();
        let diff = if diff.is_nan() { f64::INFINITY } else { diff };
        if diff <= atol + rtol * r64.abs() {
            matches += 1;
        } else if first_mismatch.is_none() {
            first_mismatch = Some(Mismatch { vector: i / length, element: i % length, reference: r, candidate: c });
        }
        max_abs = max_abs.max(diff);
        if r != 0.0 {
            max_rel = max_rel.max(diff / r64.abs());
        }
    }
    let elements = reference.values().len();
    Ok(CrossAccuracyReport {
        vectors: reference.count(),
        elements,
        matches,
        cross_accuracy: if elements == 0 { 1.0 } else { matches as f64 / elements as f64 },
        max_abs_error: max_abs,
        max_rel_error: max_rel,
        atol,
        rtol,
        direction: "candidate (generated C) checked against reference (interpreter)",
        first_mismatch,
    })
}

/// Runs the interpreter on `inputs` and scores `c_outputs` against it.
pub fn cross_validate(
    graph: &Graph,
    weights: &WeightStore,
    c_outputs: &VectorFile,
    inputs: &VectorFile,
    atol: f64,
    rtol: f64,
) -> Result<CrossAccuracyReport, ValidationError> {
    check_len("output", c_outputs, graph.output_shape().element_count())?;
    let reference = reference_outputs(graph, weights, inputs)?;
    compare(&reference, c_outputs, atol, rtol)
}

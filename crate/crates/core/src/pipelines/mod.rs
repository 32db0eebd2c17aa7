//! Dataset windowing, scaling and evaluation for the two case studies:
//! CAN-bus intrusion detection ([`can`]) and battery capacity estimation
//! ([`battery`]). Scoring and metrics live in [`metrics`]; [`synthetic`]
//! generates seeded streams in the ingestion formats.

pub mod battery;
pub mod can;
pub mod metrics;
pub mod synthetic;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::vectors::{VectorFile, VectorFileError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {reason}")]
    Input { path: String, reason: String },
    #[error("record {record}: {reason}")]
    InvalidRecord { record: usize, reason: String },
    #[error("invalid signal map: {0}")]
    InvalidSignalMap(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("message stream is empty")]
    EmptyStream,
    #[error("timestamps decrease at record {0}")]
    UnsortedStream(usize),
    #[error("cycle {cycle} has {rows} measurements, {samples} needed")]
    ShortCycle { cycle: String, rows: usize, samples: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("score list is empty")]
    EmptyScores,
    #[error("quantile {0} is outside (0, 1]")]
    InvalidQuantile(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("rated capacity must be positive, got {0}")]
    NonPositiveRated(f64),
    #[error("no values to evaluate")]
    EmptyInput,
    #[error(transparent)]
    Vectors(#[from] VectorFileError),
}

/// Fixed-shape windows with one scalar label per window.
///
/// Labels are window label codes for CAN windows (see
/// [`can::WindowLabel`]) and capacity targets for battery windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    timesteps: usize,
    features: usize,
    values: Vec<f32>,
    labels: Vec<f32>,
}

impl WindowSet {
    pub fn new(timesteps: usize, features: usize) -> Self {
        WindowSet { timesteps, features, values: Vec::new(), labels: Vec::new() }
    }

    pub fn from_parts(timesteps: usize, features: usize, values: Vec<f32>, labels: Vec<f32>) -> Result<Self, PipelineError> {
        let len = timesteps * features;
        if len == 0 || !values.len().is_multiple_of(len) || values.len() / len != labels.len() {
            return Err(PipelineError::ShapeMismatch(format!(
                "{} values and {} labels do not form {timesteps}x{features} windows",
                values.len(),
                labels.len()
            )));
        }
        Ok(WindowSet { timesteps, features, values, labels })
    }

    pub fn push(&mut self, window: &[f32], label: f32) {
        assert_eq!(window.len(), self.window_len(), "window length");
        self.values.extend_from_slice(window);
        self.labels.push(label);
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn window_len(&self) -> usize {
        self.timesteps * self.features
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row-major `[timesteps][features]` window.
    pub fn window(&self, index: usize) -> &[f32] {
        let n = self.window_len();
        &self.values[index * n..(index + 1) * n]
    }

    pub fn windows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.window_len())
    }

    pub fn windows_mut(&mut self) -> impl Iterator<Item = &mut [f32]> {
        let n = self.window_len();
        self.values.chunks_exact_mut(n)
    }

    pub fn labels(&self) -> &[f32] {
        &self.labels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Inputs and labels as a vector-file pair.
    pub fn to_vector_files(&self) -> (VectorFile, VectorFile) {
        let inputs = VectorFile::new(self.window_len(), self.values.clone()).expect("whole windows");
        let labels = VectorFile::new(1, self.labels.clone()).expect("one label per window");
        (inputs, labels)
    }

    pub fn from_vector_files(inputs: &VectorFile, labels: &VectorFile, timesteps: usize) -> Result<Self, PipelineError> {
        if timesteps == 0 || !inputs.length().is_multiple_of(timesteps) {
            return Err(PipelineError::ShapeMismatch(format!(
                "vector length {} is not a multiple of {timesteps} timesteps",
                inputs.length()
            )));
        }
        if labels.length() != 1 {
            return Err(PipelineError::ShapeMismatch(format!("label vectors have length {}, expected 1", labels.length())));
        }
        if inputs.count() != labels.count() {
            return Err(PipelineError::LengthMismatch { left: inputs.count(), right: labels.count() });
        }
        Self::from_parts(timesteps, inputs.length() / timesteps, inputs.values().to_vec(), labels.values().to_vec())
    }

    /// Writes `<stem>.inputs.tnnv` and `<stem>.labels.tnnv`.
    pub fn write(&self, stem: &Path) -> Result<(PathBuf, PathBuf), PipelineError> {
        let (inputs, labels) = self.to_vector_files();
        let (ip, lp) = pair_paths(stem);
        inputs.write(&ip)?;
        labels.write(&lp)?;
        Ok((ip, lp))
    }

    pub fn read(stem: &Path, timesteps: usize) -> Result<Self, PipelineError> {
        let (ip, lp) = pair_paths(stem);
        Self::from_vector_files(&VectorFile::read(&ip)?, &VectorFile::read(&lp)?, timesteps)
    }
}

pub fn pair_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let base = stem.as_os_str().to_string_lossy();
    (PathBuf::from(format!("{base}.inputs.tnnv")), PathBuf::from(format!("{base}.labels.tnnv")))
}

fn csv_error(path: &str, e: csv::Error) -> PipelineError {
    PipelineError::Input { path: path.to_string(), reason: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_set_round_trip() {
        let mut set = WindowSet::new(2, 3);
        set.push(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 0.0);
        set.push(&[0.5; 6], 3.0);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("w");
        set.write(&stem).unwrap();
        assert_eq!(WindowSet::read(&stem, 2).unwrap(), set);
        assert!(WindowSet::read(&stem, 4).is_err());
        assert_eq!(set.window(1), &[0.5; 6]);
    }

    #[test]
    fn from_parts_checks_shape() {
        assert!(WindowSet::from_parts(2, 2, vec![0.0; 8], vec![0.0]).is_err());
        assert!(WindowSet::from_parts(2, 2, vec![0.0; 7], vec![0.0, 1.0]).is_err());
        assert_eq!(WindowSet::from_parts(2, 2, vec![0.0; 8], vec![0.0, 1.0]).unwrap().len(), 2);
    }
}

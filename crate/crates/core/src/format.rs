//! `tnnf-v1` model exchange format: a JSON manifest plus a headerless blob of
//! little-endian binary32 weights.
//!
//! Files on disk are `<name>.tnnf.json` and `<name>.weights.bin`. Weight
//! references are element offsets into the blob. The manifest is written with
//! sorted keys so the text is stable for a given model.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Graph, GraphError, LayerSpec, TensorRole, TensorShape};
use crate::weights::{WeightError, WeightStore};

pub const FORMAT_TAG: &str = "tnnf-v1";
pub const MANIFEST_SUFFIX: &str = ".tnnf.json";
pub const BLOB_SUFFIX: &str = ".weights.bin";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed manifest: {0}")]
    Parse(String),
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
    #[error("blob mismatch: {0}")]
    BlobMismatch(String),
    #[error("layer {layer}: {role:?} contains a non-finite weight")]
    NonFiniteWeight { layer: usize, role: TensorRole },
    #[error("invalid weights: {0}")]
    Weights(WeightError),
    #[error("weights do not cover the graph: {0}")]
    IncompleteWeights(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightRef {
    /// Offset in elements, not bytes.
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl WeightRef {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    #[serde(flatten)]
    pub spec: LayerSpec,
    #[serde(default)]
    pub weights: BTreeMap<TensorRole, WeightRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub name: String,
    pub input_shape: TensorShape,
    pub layers: Vec<LayerDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

impl ModelManifest {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let manifest: ModelManifest = serde_json::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
        if manifest.format != FORMAT_TAG {
            return Err(FormatError::Parse(format!(
                "format tag {:?}, expected {FORMAT_TAG:?}",
                manifest.format
            )));
        }
        Ok(manifest)
    }

    /// Pretty JSON with keys in sorted order.
    pub fn to_canonical_string(&self) -> String {
        let value = serde_json::to_value(self).expect("manifest serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn decode_blob(bytes: &[u8]) -> Result<Vec<f32>, FormatError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(FormatError::BlobMismatch(format!(
            "blob length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn encode_blob(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn load_model(manifest_text: &str, blob: &[u8]) -> Result<(Graph, WeightStore), FormatError> {
    let manifest = ModelManifest::parse(manifest_text)?;
    let graph = Graph::new(
        manifest.name.clone(),
        manifest.input_shape.clone(),
        manifest.layers.iter().map(|l| l.spec).collect(),
    )?;
    if let Some(expected) = &manifest.sha256 {
        let actual = sha256_hex(blob);
        if !expected.eq_ignore_ascii_case(&actual) {
            return Err(FormatError::BlobMismatch(format!("sha256 {actual} does not match manifest {expected}")));
        }
    }
    let values = decode_blob(blob)?;

    let mut ranges = Vec::new();
    let mut tensors = BTreeMap::new();
    for (layer, desc) in manifest.layers.iter().enumerate() {
        let roles = graph.weight_roles(layer);
        for role in desc.weights.keys() {
            if !roles.iter().any(|(r, _)| r == role) {
                return Err(FormatError::BlobMismatch(format!("layer {layer}: unexpected tensor {role:?}")));
            }
        }
        for (role, dims) in roles {
            let wref = desc
                .weights
                .get(&role)
                .ok_or_else(|| FormatError::BlobMismatch(format!("layer {layer}: missing tensor {role:?}")))?;
            if wref.shape != dims {
                return Err(FormatError::BlobMismatch(format!(
                    "layer {layer}: {role:?} has shape {:?}, expected {dims:?}",
                    wref.shape
                )));
            }
            let end = wref.offset + wref.len();
            if end > values.len() {
                return Err(FormatError::BlobMismatch(format!(
                    "layer {layer}: {role:?} spans elements {}..{end} of a {}-element blob",
                    wref.offset,
                    values.len()
                )));
            }
            let slice = &values[wref.offset..end];
            if slice.iter().any(|v| !v.is_finite()) {
                return Err(FormatError::NonFiniteWeight { layer, role });
            }
            ranges.push((wref.offset, end));
            tensors.insert((layer, role), slice.to_vec());
        }
    }
    ranges.sort_unstable();
    if ranges.windows(2).any(|w| w[0].1 > w[1].0) {
        return Err(FormatError::BlobMismatch("weight references overlap".into()));
    }
    let referenced: usize = ranges.iter().map(|(s, e)| e - s).sum();
    if referenced != values.len() {
        return Err(FormatError::BlobMismatch(format!(
            "blob holds {} elements but manifest references {referenced}",
            values.len()
        )));
    }
    let weights = WeightStore::new(&graph, tensors).map_err(FormatError::Weights)?;
    Ok((graph, weights))
}

/// Serializes a model. The manifest always carries the blob's SHA-256.
pub fn save_model(graph: &Graph, weights: &WeightStore) -> Result<(String, Vec<u8>), FormatError> {
    let expected: Vec<(usize, TensorRole, Vec<usize>)> = (0..graph.len())
        .flat_map(|layer| graph.weight_roles(layer).into_iter().map(move |(r, d)| (layer, r, d)))
        .collect();
    if weights.layout() != expected.as_slice() {
        return Err(FormatError::IncompleteWeights(format!(
            "store has {} tensors, graph needs {}",
            weights.layout().len(),
            expected.len()
        )));
    }
    let blob = encode_blob(&weights.flatten());
    let mut layers: Vec<LayerDescriptor> =
        graph.layers().iter().map(|&spec| LayerDescriptor { spec, weights: BTreeMap::new() }).collect();
    for ((layer, role, offset), (_, _, dims)) in weights.offsets().into_iter().zip(weights.layout()) {
        layers[layer].weights.insert(role, WeightRef { offset, shape: dims.clone() });
    }
    let manifest = ModelManifest {
        format: FORMAT_TAG.to_string(),
        name: graph.name().to_string(),
        input_shape: graph.input_shape().clone(),
        layers,
        sha256: Some(sha256_hex(&blob)),
    };
    Ok((manifest.to_canonical_string(), blob))
}

/// Blob path belonging to a manifest path (`x.tnnf.json` → `x.weights.bin`).
pub fn blob_path_for(manifest: &Path) -> PathBuf {
    let name = manifest.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let stem = name.strip_suffix(MANIFEST_SUFFIX).unwrap_or(name);
    manifest.with_file_name(format!("{stem}{BLOB_SUFFIX}"))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

pub fn read_model(manifest_path: &Path) -> Result<(Graph, WeightStore), FormatError> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let blob_path = blob_path_for(manifest_path);
    let blob = fs::read(&blob_path).map_err(io_err(&blob_path))?;
    load_model(&text, &blob)
}

/// Writes `<dir>/<name>.tnnf.json` and `<dir>/<name>.weights.bin`; returns the manifest path.
pub fn write_model(dir: &Path, graph: &Graph, weights: &WeightStore) -> Result<PathBuf, FormatError> {
    let (text, blob) = save_model(graph, weights)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest_path = dir.join(format!("{}{MANIFEST_SUFFIX}", graph.name()));
    let blob_path = blob_path_for(&manifest_path);
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    fs::write(&blob_path, blob).map_err(io_err(&blob_path))?;
    Ok(manifest_path)
}

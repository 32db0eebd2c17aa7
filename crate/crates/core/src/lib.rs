//! Compiler toolchain for small neural-network chains (dense, conv1d,
//! maxpool1d, batchnorm, LSTM) targeting microcontrollers.
//!
//! The pipeline is: load a `tnnf-v1` model ([`format`]), resolve shapes
//! ([`graph`]), plan the activation arena ([`planner`]), emit C99 sources
//! ([`codegen`]), check the compiled code against the reference
//! [`interpreter`] ([`validator`]) and report per-layer cost ([`profiler`]).
//! [`pipelines`] turns CAN traces and battery discharge logs into model
//! inputs and scores the outputs.

pub mod codegen;
pub mod format;
pub mod graph;
pub mod interpreter;
pub mod pipelines;
pub mod planner;
pub mod profiler;
pub mod scalar;
pub mod tensor;
pub mod validator;
pub mod vectors;
pub mod weights;
pub mod zoo;

pub use format::{load_model, read_model, save_model, write_model, FormatError, ModelManifest};
pub use graph::{Activation, Graph, GraphError, LayerKind, LayerSpec, TensorRole, TensorShape};
pub use interpreter::{forward, InterpreterError, KernelError};
pub use pipelines::{PipelineError, WindowSet};
pub use planner::{flash_estimate, plan, MemoryPlan};
pub use profiler::{estimate_target_time, profile, ComplexityReport, McuCatalog, McuSpec};
pub use scalar::Scalar;
pub use validator::{cross_validate, CrossAccuracyReport};
pub use vectors::VectorFile;
pub use weights::{WeightError, WeightStore};

/// Binary32 tensor, the toolchain's native element type.
pub type TensorF32 = tensor::Tensor<f32>;
/// Binary64 tensor for wide-precision replays.
pub type TensorF64 = tensor::Tensor<f64>;
/// Binary32 min-max scaler, as stored next to battery window sets.
pub type MinMaxScalerF32 = pipelines::battery::MinMaxScaler<f32>;
pub type MinMaxScalerF64 = pipelines::battery::MinMaxScaler<f64>;

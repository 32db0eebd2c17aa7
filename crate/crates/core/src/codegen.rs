//! C99 source emission.
//!
//! A bundle is three files: `<name>_model.h` (public API: `<name>_init`,
//! `<name>_run` and the `IN_SIZE` / `OUT_SIZE` / `ARENA_BYTES` macros),
//! `<name>_model.c` (one straight-line function per layer over a static
//! arena) and `<name>_weights.c` (the weight blob as binary32 bit patterns).
//!
//! Kernels reproduce the interpreter's operation order exactly: zero-started
//! accumulators, ascending indices, bias added last, gates evaluated in
//! `[input, forget, candidate, output]` order.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::graph::{is_identifier, Activation, Graph, LayerKind, LayerSpec, TensorRole};
use crate::planner::{MemoryPlan, ELEMENT_BYTES};
use crate::weights::WeightStore;

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("{0:?} is not a valid C identifier")]
    InvalidIdentifier(String),
    #[error("layer {layer}: unsupported layer kind {kind}")]
    UnsupportedLayer { layer: usize, kind: LayerKind },
    #[error("weight {index} is not finite")]
    NonFiniteWeight { index: usize },
    #[error("memory plan does not belong to this graph: {0}")]
    PlanMismatch(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern",
    "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed",
    "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "_Bool",
    "_Complex", "_Imaginary",
];

/// Per-layer row of the compile report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEntry {
    pub index: usize,
    pub name: String,
    pub kind: LayerKind,
    pub output_shape: Vec<usize>,
    pub params: usize,
    pub stored_params: usize,
    pub macc: u64,
    pub input_offset: usize,
    pub output_offset: usize,
    pub state_offset: Option<usize>,
    pub in_place: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompileReport {
    pub name: String,
    pub in_size: usize,
    pub out_size: usize,
    pub arena_bytes: usize,
    pub flash_bytes: usize,
    pub weight_table_bytes: usize,
    pub param_count: usize,
    pub total_macc: u64,
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedBundle {
    pub name: String,
    pub header: String,
    pub source: String,
    pub weights_source: String,
    pub report: CompileReport,
}

impl GeneratedBundle {
    pub fn header_file(&self) -> String {
        format!("{}_model.h", self.name)
    }

    pub fn source_file(&self) -> String {
        format!("{}_model.c", self.name)
    }

    pub fn weights_file(&self) -> String {
        format!("{}_weights.c", self.name)
    }

    /// Writes the three C files into `dir`; returns their paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, CodegenError> {
        fs::create_dir_all(dir).map_err(|source| CodegenError::Io { path: dir.to_path_buf(), source })?;
        let files = [
            (self.header_file(), &self.header),
            (self.source_file(), &self.source),
            (self.weights_file(), &self.weights_source),
        ];
        let mut paths = Vec::new();
        for (file, text) in files {
            let path = dir.join(file);
            fs::write(&path, text).map_err(|source| CodegenError::Io { path: path.clone(), source })?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Exact C99 hexadecimal literal for a binary32 value, e.g. `0x1.8p+1f`.
pub fn hex_float_literal(v: f32) -> String {
    let bits = v.to_bits();
    let sign = if bits >> 31 == 1 { "-" } else { "" };
    let exp = ((bits >> 23) & 0xff) as i32;
    let frac = bits & 0x7f_ffff;
    match (exp, frac) {
        (0, 0) => format!("{sign}0x0p+0f"),
        (0, _) => format!("{sign}0x0.{:06x}p-126f", frac << 1),
        _ => format!("{sign}0x1.{:06x}p{:+}f", frac << 1, exp - 127),
    }
}

/// Renders weights as `{0xXXXXXXXXu}` initializers, six per line.
pub fn emit_weights_table(weights: &[f32]) -> Result<String, CodegenError> {
    if let Some(index) = weights.iter().position(|v| !v.is_finite()) {
        return Err(CodegenError::NonFiniteWeight { index });
    }
    let mut out = String::new();
    for chunk in weights.chunks(6) {
        out.push_str("   ");
        for v in chunk {
            let _ = write!(out, " {{0x{:08X}u}},", v.to_bits());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Inverse of [`emit_weights_table`]: recovers values from the emitted text.
pub fn decode_weights_table(text: &str) -> Vec<f32> {
    text.split("{0x")
        .skip(1)
        .filter_map(|chunk| chunk.get(..8))
        .filter_map(|hex| u32::from_str_radix(hex, 16).ok())
        .map(f32::from_bits)
        .collect()
}

struct Emitter<'a> {
    graph: &'a Graph,
    weights: &'a WeightStore,
    plan: &'a MemoryPlan,
    name: String,
    upper: String,
    offsets: Vec<(usize, TensorRole, usize)>,
}

impl Emitter<'_> {
    fn weight_offset(&self, layer: usize, role: TensorRole) -> usize {
        self.offsets
            .iter()
            .find(|(l, r, _)| *l == layer && *r == role)
            .map(|(_, _, off)| *off)
            .expect("role present for layer")
    }

    fn float_offset(&self, buffer: usize) -> usize {
        self.plan.offset(buffer) / ELEMENT_BYTES
    }

    fn activation(&self, act: Activation, expr: &str) -> String {
        match act {
            Activation::Linear => expr.to_string(),
            Activation::Relu => format!("{}_relu({expr})", self.name),
            Activation::Tanh => format!("tanhf({expr})"),
            Activation::Sigmoid => format!("{}_sigmoid({expr})", self.name),
        }
    }

    fn uses(&self, act: Activation) -> bool {
        self.graph.layers().iter().any(|l| match *l {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv1d { activation, .. } => activation == act,
            LayerSpec::Lstm { .. } => act == Activation::Sigmoid,
            _ => false,
        })
    }

    fn header(&self) -> String {
        let (n, u) = (&self.name, &self.upper);
        format!(
            "/* {n}_model.h: generated by tnnc, do not edit. */\n\
             #ifndef {u}_MODEL_H\n\
             #define {u}_MODEL_H\n\
             \n\
             #define {u}_IN_SIZE {in_size}\n\
             #define {u}_OUT_SIZE {out_size}\n\
             #define {u}_ARENA_BYTES {arena}\n\
             \n\
             int {n}_init(void);\n\
             int {n}_run(const float *input, float *output);\n\
             \n\
             #endif\n",
            in_size = self.graph.input_shape().element_count(),
            out_size = self.graph.output_shape().element_count(),
            arena = self.plan.arena_bytes,
        )
    }

    fn weights_source(&self, table: &str, count: usize) -> String {
        let n = &self.name;
        let mut out = format!(
            "/* {n}_weights.c: generated by tnnc, do not edit. */\n\
             #include <stdint.h>\n\
             \n\
             union {n}_wbits {{\n    uint32_t u;\n    float f;\n}};\n\
             \n\
             extern const union {n}_wbits {n}_weights[{len}];\n\
             \n\
             /* {count} binary32 values, little-endian blob order. */\n\
             const union {n}_wbits {n}_weights[{len}] = {{\n",
            len = count.max(1),
        );
        if count == 0 {
            out.push_str("    {0x00000000u},\n");
        } else {
            out.push_str(table);
        }
        out.push_str("};\n");
        out
    }

    fn layer_function(&self, layer: usize) -> Result<String, CodegenError> {
        let n = &self.name;
        let io = self.plan.layers[layer];
        let input = self.graph.layer_input_shape(layer);
        let output = self.graph.layer_output_shape(layer);
        let (t_in, in_f) = (input.timesteps(), input.features());
        let (x_off, y_off) = (self.float_offset(io.input), self.float_offset(io.output));
        let mut f = format!(
            "/* layer {layer}: {kind} {input} -> {output} */\nstatic void {n}_layer{layer}(void)\n{{\n",
            kind = self.graph.layers()[layer].kind(),
        );
        let arena = format!("{n}_arena.f");
        let _ = writeln!(f, "    const float *x = {arena} + {x_off};");
        let _ = writeln!(f, "    float *y = {arena} + {y_off};");
        match self.graph.layers()[layer] {
            LayerSpec::Dense { units, activation } => {
                let k = self.weight_offset(layer, TensorRole::Kernel);
                let b = self.weight_offset(layer, TensorRole::Bias);
                let value = self.activation(activation, &format!("acc + W({b} + o)"));
                let _ = write!(
                    f,
                    "    int t, o, i;\n\
                     \x20   for (t = 0; t < {t_in}; ++t) {{\n\
                     \x20       for (o = 0; o < {units}; ++o) {{\n\
                     \x20           float acc = 0.0f;\n\
                     \x20           for (i = 0; i < {in_f}; ++i) {{\n\
                     \x20               acc += W({k} + o * {in_f} + i) * x[t * {in_f} + i];\n\
                     \x20           }}\n\
                     \x20           y[t * {units} + o] = {value};\n\
                     \x20       }}\n\
                     \x20   }}\n"
                );
            }
            LayerSpec::Conv1d { filters, kernel, stride, activation, .. } => {
                let k = self.weight_offset(layer, TensorRole::Kernel);
                let b = self.weight_offset(layer, TensorRole::Bias);
                let window = kernel * in_f;
                let t_out = output.timesteps();
                let value = self.activation(activation, &format!("acc + W({b} + o)"));
                let _ = write!(
                    f,
                    "    int t, o, i;\n\
                     \x20   for (t = 0; t < {t_out}; ++t) {{\n\
                     \x20       const float *patch = x + t * {step};\n\
                     \x20       for (o = 0; o < {filters}; ++o) {{\n\
                     \x20           float acc = 0.0f;\n\
                     \x20           for (i = 0; i < {window}; ++i) {{\n\
                     \x20               acc += W({k} + o * {window} + i) * patch[i];\n\
                     \x20           }}\n\
                     \x20           y[t * {filters} + o] = {value};\n\
                     \x20       }}\n\
                     \x20   }}\n",
                    step = stride * in_f,
                );
            }
            LayerSpec::MaxPool1d { pool, stride } => {
                let t_out = output.timesteps();
                // In place: output row t only ever overwrites rows already consumed.
                let _ = write!(
                    f,
                    "    int t, c, k;\n\
                     \x20   for (t = 0; t < {t_out}; ++t) {{\n\
                     \x20       for (c = 0; c < {in_f}; ++c) {{\n\
                     \x20           float best = x[(t * {stride}) * {in_f} + c];\n\
                     \x20           for (k = 1; k < {pool}; ++k) {{\n\
                     \x20               float v = x[(t * {stride} + k) * {in_f} + c];\n\
                     \x20               if (v > best) {{\n\
                     \x20                   best = v;\n\
                     \x20               }}\n\
                     \x20           }}\n\
                     \x20           y[t * {in_f} + c] = best;\n\
                     \x20       }}\n\
                     \x20   }}\n"
                );
            }
            LayerSpec::BatchNorm { epsilon } => {
                let g = self.weight_offset(layer, TensorRole::Gamma);
                let be = self.weight_offset(layer, TensorRole::Beta);
                let m = self.weight_offset(layer, TensorRole::MovingMean);
                let v = self.weight_offset(layer, TensorRole::MovingVariance);
                let eps = hex_float_literal(epsilon);
                let _ = write!(
                    f,
                    "    int i;\n\
                     \x20   for (i = 0; i < {count}; ++i) {{\n\
                     \x20       int c = i % {in_f};\n\
                     \x20       y[i] = W({g} + c) * (x[i] - W({m} + c)) / sqrtf(W({v} + c) + {eps}) + W({be} + c);\n\
                     \x20   }}\n",
                    count = t_in * in_f,
                );
            }
            LayerSpec::Lstm { units, return_sequences } => {
                let k = self.weight_offset(layer, TensorRole::Kernel);
                let r = self.weight_offset(layer, TensorRole::RecurrentKernel);
                let b = self.weight_offset(layer, TensorRole::Bias);
                let state = io.state.ok_or_else(|| CodegenError::PlanMismatch(format!("layer {layer} has no state buffer")))?;
                let s_off = self.float_offset(state);
                let emit_step = if return_sequences {
                    format!("            y[t * {units} + j] = h[j];\n")
                } else {
                    String::new()
                };
                let _ = write!(
                    f,
                    "    float *h = {arena} + {s_off};\n\
                     \x20   float *c = h + {units};\n\
                     \x20   float *hn = c + {units};\n\
                     \x20   int t, j, g, i;\n\
                     \x20   for (j = 0; j < {units}; ++j) {{\n\
                     \x20       h[j] = 0.0f;\n\
                     \x20       c[j] = 0.0f;\n\
                     \x20   }}\n\
                     \x20   for (t = 0; t < {t_in}; ++t) {{\n\
                     \x20       const float *xt = x + t * {in_f};\n\
                     \x20       for (j = 0; j < {units}; ++j) {{\n\
                     \x20           float z[4];\n\
                     \x20           float ig, fg, gg, og;\n\
                     \x20           for (g = 0; g < 4; ++g) {{\n\
                     \x20               int row = g * {units} + j;\n\
                     \x20               float acc = 0.0f;\n\
                     \x20               for (i = 0; i < {in_f}; ++i) {{\n\
                     \x20                   acc += W({k} + row * {in_f} + i) * xt[i];\n\
                     \x20               }}\n\
                     \x20               for (i = 0; i < {units}; ++i) {{\n\
                     \x20                   acc += W({r} + row * {units} + i) * h[i];\n\
                     \x20               }}\n\
                     \x20               z[g] = acc + W({b} + row);\n\
                     \x20           }}\n\
                     \x20           ig = {n}_sigmoid(z[0]);\n\
                     \x20           fg = {n}_sigmoid(z[1]);\n\
                     \x20           gg = tanhf(z[2]);\n\
                     \x20           og = {n}_sigmoid(z[3]);\n\
                     \x20           c[j] = fg * c[j] + ig * gg;\n\
                     \x20           hn[j] = og * tanhf(c[j]);\n\
                     \x20       }}\n\
                     \x20       for (j = 0; j < {units}; ++j) {{\n\
                     \x20           h[j] = hn[j];\n\
                     {emit_step}\
                     \x20       }}\n\
                     \x20   }}\n"
                );
                if !return_sequences {
                    let _ = write!(
                        f,
                        "    for (j = 0; j < {units}; ++j) {{\n\
                         \x20       y[j] = h[j];\n\
                         \x20   }}\n"
                    );
                }
            }
        }
        f.push_str("}\n\n");
        Ok(f)
    }

    fn source(&self) -> Result<String, CodegenError> {
        let (n, u) = (&self.name, &self.upper);
        let count = self.weights.element_count().max(1);
        let mut s = format!(
            "/* {n}_model.c: generated by tnnc, do not edit. */\n\
             #include <math.h>\n\
             #include <stdint.h>\n\
             #include \"{n}_model.h\"\n\
             \n\
             union {n}_wbits {{\n    uint32_t u;\n    float f;\n}};\n\
             \n\
             extern const union {n}_wbits {n}_weights[{count}];\n\
             \n\
             #define W(i) ({n}_weights[(i)].f)\n\
             \n\
             static union {{\n    double align;\n    float f[{u}_ARENA_BYTES / 4];\n}} {n}_arena;\n\
             \n"
        );
        if self.uses(Activation::Relu) {
            let _ = write!(s, "static float {n}_relu(float v)\n{{\n    return v > 0.0f ? v : 0.0f;\n}}\n\n");
        }
        if self.uses(Activation::Sigmoid) {
            let _ = write!(s, "static float {n}_sigmoid(float v)\n{{\n    return 1.0f / (1.0f + expf(-v));\n}}\n\n");
        }
        for layer in 0..self.graph.len() {
            s.push_str(&self.layer_function(layer)?);
        }
        let in_off = self.float_offset(self.plan.input_buffer());
        let out_off = self.float_offset(self.plan.output_buffer());
        let _ = write!(
            s,
            "int {n}_init(void)\n{{\n\
             \x20   int i;\n\
             \x20   for (i = 0; i < {u}_ARENA_BYTES / 4; ++i) {{\n\
             \x20       {n}_arena.f[i] = 0.0f;\n\
             \x20   }}\n\
             \x20   return 0;\n}}\n\n\
             int {n}_run(const float *input, float *output)\n{{\n\
             \x20   int i;\n\
             \x20   if (input == 0 || output == 0) {{\n\
             \x20       return -1;\n\
             \x20   }}\n\
             \x20   for (i = 0; i < {u}_IN_SIZE; ++i) {{\n\
             \x20       {n}_arena.f[{in_off} + i] = input[i];\n\
             \x20   }}\n"
        );
        for layer in 0..self.graph.len() {
            let _ = writeln!(s, "    {n}_layer{layer}();");
        }
        let _ = write!(
            s,
            "    for (i = 0; i < {u}_OUT_SIZE; ++i) {{\n\
             \x20       output[i] = {n}_arena.f[{out_off} + i];\n\
             \x20   }}\n\
             \x20   return 0;\n}}\n"
        );
        Ok(s)
    }

    fn report(&self) -> CompileReport {
        let macc = self.graph.macc_count();
        let layers = (0..self.graph.len())
            .map(|i| {
                let io = self.plan.layers[i];
                LayerEntry {
                    index: i,
                    name: self.graph.layer_name(i),
                    kind: self.graph.layers()[i].kind(),
                    output_shape: self.graph.layer_output_shape(i).dims().to_vec(),
                    params: self.graph.layer_params(i),
                    stored_params: self.graph.layer_stored_params(i),
                    macc: macc.per_layer[i],
                    input_offset: self.plan.offset(io.input),
                    output_offset: self.plan.offset(io.output),
                    state_offset: io.state.map(|s| self.plan.offset(s)),
                    in_place: io.in_place,
                }
            })
            .collect();
        CompileReport {
            name: self.name.clone(),
            in_size: self.graph.input_shape().element_count(),
            out_size: self.graph.output_shape().element_count(),
            arena_bytes: self.plan.arena_bytes,
            flash_bytes: self.plan.flash_bytes,
            weight_table_bytes: self.weights.element_count() * ELEMENT_BYTES,
            param_count: self.graph.param_count(),
            total_macc: macc.total,
            layers,
        }
    }
}

/// Emits the C bundle for a validated model and its memory plan.
pub fn generate(graph: &Graph, weights: &WeightStore, plan: &MemoryPlan, name: &str) -> Result<GeneratedBundle, CodegenError> {
    if !is_identifier(name) || C_KEYWORDS.contains(&name) {
        return Err(CodegenError::InvalidIdentifier(name.to_string()));
    }
    if plan.layers.len() != graph.len() {
        return Err(CodegenError::PlanMismatch(format!(
            "plan covers {} layers, graph has {}",
            plan.layers.len(),
            graph.len()
        )));
    }
    if weights.element_count() != graph.stored_param_count() {
        return Err(CodegenError::PlanMismatch("weight store does not match the graph".into()));
    }
    let flat = weights.flatten();
    let table = emit_weights_table(&flat)?;
    let emitter = Emitter {
        graph,
        weights,
        plan,
        name: name.to_string(),
        upper: name.to_ascii_uppercase(),
        offsets: weights.offsets(),
    };
    Ok(GeneratedBundle {
        name: name.to_string(),
        header: emitter.header(),
        source: emitter.source()?,
        weights_source: emitter.weights_source(&table, flat.len()),
        report: emitter.report(),
    })
}

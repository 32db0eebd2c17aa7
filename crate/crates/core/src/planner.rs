//! Static activation-arena planning and Flash estimation.
//!
//! Every tensor that crosses a layer boundary gets a buffer with a lifetime
//! expressed in layer steps. Batchnorm and maxpool write into their input
//! buffer (elementwise and shrinking, so the overwrite never clobbers an
//! unread element); every other layer gets a fresh output buffer. LSTM layers
//! additionally own a scratch buffer holding `h`, `c` and the next `h`, live
//! only while the layer runs.
//!
//! Buffers are placed greedily, largest first, at the lowest 8-byte aligned
//! offset that does not collide with any already-placed buffer whose lifetime
//! overlaps.

use serde::Serialize;

use crate::graph::{Graph, LayerSpec};

pub const ALIGNMENT: usize = 8;
pub const ELEMENT_BYTES: usize = 4;

pub fn align_up(bytes: usize) -> usize {
    bytes.div_ceil(ALIGNMENT) * ALIGNMENT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BufferKind {
    /// Copy of the caller's input vector.
    Input,
    /// Output of `layer`, possibly overwritten in place by later layers.
    Activation { layer: usize },
    /// LSTM `h`, `c` and next-`h` vectors of `layer`.
    LstmState { layer: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BufferLifetime {
    pub id: usize,
    pub kind: BufferKind,
    /// Unpadded size: element count times four.
    pub size_bytes: usize,
    pub first_step: usize,
    pub last_step: usize,
}

impl BufferLifetime {
    pub fn padded_size(&self) -> usize {
        align_up(self.size_bytes)
    }

    pub fn is_live_at(&self, step: usize) -> bool {
        self.first_step <= step && step <= self.last_step
    }

    pub fn overlaps_in_time(&self, other: &BufferLifetime) -> bool {
        self.first_step <= other.last_step && other.first_step <= self.last_step
    }
}

/// Buffers used by one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerBuffers {
    pub input: usize,
    pub output: usize,
    pub state: Option<usize>,
    pub in_place: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemoryPlan {
    pub arena_bytes: usize,
    pub flash_bytes: usize,
    /// Bytes of LSTM state scratch (already part of the arena).
    pub state_bytes: usize,
    pub buffers: Vec<BufferLifetime>,
    /// Byte offset of each buffer, indexed by buffer id.
    pub offsets: Vec<usize>,
    pub layers: Vec<LayerBuffers>,
}

impl MemoryPlan {
    pub fn input_buffer(&self) -> usize {
        0
    }

    pub fn output_buffer(&self) -> usize {
        self.layers.last().expect("graph is never empty").output
    }

    pub fn offset(&self, buffer: usize) -> usize {
        self.offsets[buffer]
    }

    /// Sum of padded sizes of the buffers live at `step`.
    pub fn live_bytes_at(&self, step: usize) -> usize {
        self.buffers.iter().filter(|b| b.is_live_at(step)).map(BufferLifetime::padded_size).sum()
    }

    /// Largest simultaneous live total: no placement can beat it.
    pub fn lower_bound(&self) -> usize {
        (0..self.layers.len()).map(|s| self.live_bytes_at(s)).max().unwrap_or(0)
    }

    /// Arena size without any reuse.
    pub fn upper_bound(&self) -> usize {
        self.buffers.iter().map(BufferLifetime::padded_size).sum()
    }
}

fn buffer_lifetimes(graph: &Graph) -> (Vec<BufferLifetime>, Vec<LayerBuffers>) {
    let n = graph.len();
    let mut buffers = vec![BufferLifetime {
        id: 0,
        kind: BufferKind::Input,
        size_bytes: graph.input_shape().element_count() * ELEMENT_BYTES,
        first_step: 0,
        last_step: 0,
    }];
    let mut layers = Vec::with_capacity(n);
    let mut current = 0;
    for (i, layer) in graph.layers().iter().enumerate() {
        let reader = (i + 1).min(n - 1);
        let out_bytes = graph.layer_output_shape(i).element_count() * ELEMENT_BYTES;
        let in_place = matches!(layer, LayerSpec::BatchNorm { .. } | LayerSpec::MaxPool1d { .. });
        let output = if in_place {
            let buf = &mut buffers[current];
            buf.size_bytes = buf.size_bytes.max(out_bytes);
            buf.last_step = buf.last_step.max(reader);
            current
        } else {
            let id = buffers.len();
            buffers.push(BufferLifetime {
                id,
                kind: BufferKind::Activation { layer: i },
                size_bytes: out_bytes,
                first_step: i,
                last_step: reader,
            });
            id
        };
        let state = if let LayerSpec::Lstm { units, .. } = *layer {
            let id = buffers.len();
            buffers.push(BufferLifetime {
                id,
                kind: BufferKind::LstmState { layer: i },
                size_bytes: 3 * units * ELEMENT_BYTES,
                first_step: i,
                last_step: i,
            });
            Some(id)
        } else {
            None
        };
        layers.push(LayerBuffers { input: current, output, state, in_place });
        current = output;
    }
    (buffers, layers)
}

fn place(buffers: &[BufferLifetime]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..buffers.len()).collect();
    order.sort_by(|&a, &b| buffers[b].padded_size().cmp(&buffers[a].padded_size()).then(a.cmp(&b)));
    let mut offsets: Vec<Option<usize>> = vec![None; buffers.len()];
    for &id in &order {
        let buf = &buffers[id];
        let mut taken: Vec<(usize, usize)> = order
            .iter()
            .filter_map(|&other| {
                let off = offsets[other]?;
                buffers[other].overlaps_in_time(buf).then(|| (off, off + buffers[other].padded_size()))
            })
            .collect();
        taken.sort_unstable();
        let mut candidate = 0;
        for (start, end) in taken {
            if candidate + buf.padded_size() <= start {
                break;
            }
            candidate = candidate.max(end);
        }
        offsets[id] = Some(candidate);
    }
    offsets.into_iter().map(|o| o.expect("every buffer placed")).collect()
}

/// Bytes of weight storage, batchnorm moving statistics included.
pub fn flash_estimate(graph: &Graph) -> usize {
    graph.stored_param_count() * ELEMENT_BYTES
}

pub fn plan(graph: &Graph) -> MemoryPlan {
    let (buffers, layers) = buffer_lifetimes(graph);
    let offsets = place(&buffers);
    let arena_bytes = buffers
        .iter()
        .zip(&offsets)
        .map(|(b, off)| off + b.padded_size())
        .max()
        .unwrap_or(0);
    let state_bytes = buffers
        .iter()
        .filter(|b| matches!(b.kind, BufferKind::LstmState { .. }))
        .map(BufferLifetime::padded_size)
        .sum();
    MemoryPlan { arena_bytes, flash_bytes: flash_estimate(graph), state_bytes, buffers, offsets, layers }
}

//! Planner soundness checks against a step-by-step brute-force model of
//! which tensors each layer touches.

use tnnc_core::planner::{align_up, MemoryPlan, ELEMENT_BYTES};
use tnnc_core::{Graph, LayerSpec};

/// Largest total padded size of buffers live at one step, by scanning.
pub fn brute_force_lower_bound(plan: &MemoryPlan, steps: usize) -> usize {
    let mut best = 0;
    for step in 0..steps {
        let mut total = 0;
        for b in &plan.buffers {
            if b.first_step <= step && step <= b.last_step {
                total += align_up(b.size_bytes);
            }
        }
        best = best.max(total);
    }
    best
}

pub fn no_reuse_upper_bound(plan: &MemoryPlan) -> usize {
    plan.buffers.iter().map(|b| align_up(b.size_bytes)).sum()
}

/// Checks one plan; returns a description of the first violation.
pub fn check_plan(graph: &Graph, plan: &MemoryPlan) -> Result<(), String> {
    let n = graph.len();
    if plan.layers.len() != n {
        return Err("layer count".into());
    }
    for (i, b) in plan.buffers.iter().enumerate() {
        let off = plan.offsets[i];
        if !off.is_multiple_of(8) {
            return Err(format!("buffer {i} misaligned at {off}"));
        }
        if off + align_up(b.size_bytes) > plan.arena_bytes {
            return Err(format!("buffer {i} exceeds the arena"));
        }
    }
    // Every tensor a layer touches must be live at its step and large enough.
    let in_bytes = graph.input_shape().element_count() * ELEMENT_BYTES;
    if plan.buffers[plan.input_buffer()].size_bytes < in_bytes {
        return Err("input buffer too small".into());
    }
    for (i, lb) in plan.layers.iter().enumerate() {
        let need_in = graph.layer_input_shape(i).element_count() * ELEMENT_BYTES;
        let need_out = graph.layer_output_shape(i).element_count() * ELEMENT_BYTES;
        let (inp, out) = (&plan.buffers[lb.input], &plan.buffers[lb.output]);
        if !(inp.first_step <= i && i <= inp.last_step) || !(out.first_step <= i && i <= out.last_step) {
            return Err(format!("layer {i}: operand not live at its step"));
        }
        if inp.size_bytes < need_in || out.size_bytes < need_out {
            return Err(format!("layer {i}: operand buffer too small"));
        }
        if i > 0 && lb.input != plan.layers[i - 1].output {
            return Err(format!("layer {i}: does not read its predecessor's output"));
        }
        let in_place_ok = matches!(graph.layers()[i], LayerSpec::BatchNorm { .. } | LayerSpec::MaxPool1d { .. });
        if (lb.input == lb.output) != lb.in_place || (lb.in_place && !in_place_ok) {
            return Err(format!("layer {i}: illegal in-place aliasing"));
        }
        if let LayerSpec::Lstm { units, .. } = graph.layers()[i] {
            let s = lb.state.ok_or(format!("layer {i}: LSTM without state"))?;
            let st = &plan.buffers[s];
            if st.size_bytes < 3 * units * ELEMENT_BYTES || !(st.first_step <= i && i <= st.last_step) {
                return Err(format!("layer {i}: state buffer wrong"));
            }
            if s == lb.input || s == lb.output {
                return Err(format!("layer {i}: state aliases an operand"));
            }
        }
    }
    if plan.buffers[plan.output_buffer()].last_step < n - 1 {
        return Err("final output dies early".into());
    }
    // No two buffers that are live at a common step may share bytes.
    for a in 0..plan.buffers.len() {
        for b in a + 1..plan.buffers.len() {
            let (x, y) = (&plan.buffers[a], &plan.buffers[b]);
            let together = (0..n).any(|s| x.first_step <= s && s <= x.last_step && y.first_step <= s && s <= y.last_step);
            let (xa, ya) = (plan.offsets[a], plan.offsets[b]);
            let disjoint = xa + align_up(x.size_bytes) <= ya || ya + align_up(y.size_bytes) <= xa;
            if together && !disjoint {
                return Err(format!("buffers {a} and {b} are live together and overlap"));
            }
        }
    }
    let lower = brute_force_lower_bound(plan, n);
    let upper = no_reuse_upper_bound(plan);
    if plan.arena_bytes < lower || plan.arena_bytes > upper {
        return Err(format!("arena {} outside [{lower}, {upper}]", plan.arena_bytes));
    }
    Ok(())
}

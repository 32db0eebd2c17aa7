use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use tnnc_core::codegen::{generate, CodegenError};
use tnnc_core::format::{read_model, write_model, FormatError};
use tnnc_core::graph::Graph;
use tnnc_core::interpreter::forward_flat;
use tnnc_core::pipelines::battery::{build_battery_windows, read_battery_csv, write_battery_csv};
use tnnc_core::pipelines::can::{build_can_windows, read_can_csv, write_can_csv, AttackKind, Label, SignalMap};
use tnnc_core::pipelines::metrics::{compute_soh, eval_capacity, eval_detection, flag, mae_score, select_threshold};
use tnnc_core::pipelines::{pair_paths, synthetic, PipelineError, WindowSet};
use tnnc_core::profiler::{measure_host_timings, McuCatalog};
use tnnc_core::tensor::Tensor;
use tnnc_core::validator::{cross_validate, generate_vectors, reference_outputs, GENERATOR};
use tnnc_core::vectors::VectorFile;
use tnnc_core::{plan, profile as profile_graph, zoo, MinMaxScalerF32, WeightStore};

use crate::report::{to_pretty, CliError, Outcome, EXIT_OK, EXIT_VALIDATION};
use crate::ModelArg;

fn load(model: &ModelArg) -> Result<(Graph, WeightStore), CliError> {
    let path = Path::new(&model.model);
    if !path.exists() {
        if let Some(found) = zoo::bundled(&model.model) {
            return Ok(found);
        }
    }
    read_model(path).map_err(|e| match e {
        FormatError::Io { .. } => CliError::input(e),
        other => CliError::input(format!("{}: {other}", model.model)),
    })
}

fn read_vectors(path: &Path) -> Result<VectorFile, CliError> {
    VectorFile::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_vectors(path: &Path, file: &VectorFile) -> Result<(), CliError> {
    file.write(path).map_err(CliError::internal)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

fn pipeline_input(e: PipelineError) -> CliError {
    CliError::input(e)
}

fn pipeline_write(e: PipelineError) -> CliError {
    CliError::internal(e)
}

pub fn inspect(model: &ModelArg) -> Result<Outcome, CliError> {
    let (graph, _) = load(model)?;
    let macc = graph.macc_count();
    let mem = plan(&graph);
    let mut out = String::new();
    let _ = writeln!(out, "model: {}", graph.name());
    let _ = writeln!(out, "input: {}", graph.input_shape());
    let _ = writeln!(out, "{:<14} {:<10} {:>10} {:>8} {:>8}", "layer", "kind", "output", "params", "macc");
    let mut layers = Vec::new();
    for i in 0..graph.len() {
        let name = graph.layer_name(i);
        let shape = graph.layer_output_shape(i);
        let params = graph.layer_params(i);
        let kind = graph.layers()[i].kind().name();
        let _ = writeln!(out, "{:<14} {:<10} {:>10} {:>8} {:>8}", name, kind, shape.to_string(), params, macc.per_layer[i]);
        layers.push(json!({
            "name": name, "kind": kind, "output_shape": shape.dims(), "params": params,
            "stored_params": graph.layer_stored_params(i), "macc": macc.per_layer[i],
        }));
    }
    let _ = writeln!(out, "params: {}", graph.param_count());
    let _ = writeln!(out, "stored params: {}", graph.stored_param_count());
    let _ = writeln!(out, "macc: {}", macc.total);
    let _ = writeln!(out, "flash_bytes: {}", mem.flash_bytes);
    let _ = writeln!(out, "arena_bytes: {}", mem.arena_bytes);
    let body = json!({
        "model": graph.name(),
        "input_shape": graph.input_shape().dims(),
        "layers": layers,
        "params": graph.param_count(),
        "stored_params": graph.stored_param_count(),
        "macc": macc.total,
        "flash_bytes": mem.flash_bytes,
        "arena_bytes": mem.arena_bytes,
    });
    Ok(Outcome::ok(out, body))
}

pub fn compile(model: &ModelArg, out: &Path, name: Option<&str>) -> Result<Outcome, CliError> {
    let (graph, weights) = load(model)?;
    let mem = plan(&graph);
    let name = name.unwrap_or(graph.name());
    let bundle = generate(&graph, &weights, &mem, name).map_err(|e| match e {
        CodegenError::Io { .. } => CliError::internal(e),
        other => CliError::input(other),
    })?;
    let mut files = bundle.write_to(out).map_err(CliError::internal)?;
    let complexity = profile_graph(&graph, &weights, &mem, None)
        .map_err(CliError::internal)?
        .with_estimates(&McuCatalog::builtin().mcus, tnnc_core::profiler::DEFAULT_CYCLES_PER_MACC, mem.flash_bytes);
    let plan_path = out.join(format!("{name}.plan.json"));
    write_text(&plan_path, &to_pretty(&serde_json::to_value(&mem).expect("serializable")))?;
    let body = json!({
        "compile": bundle.report,
        "plan": { "arena_bytes": mem.arena_bytes, "flash_bytes": mem.flash_bytes, "state_bytes": mem.state_bytes,
                  "lower_bound": mem.lower_bound(), "upper_bound": mem.upper_bound() },
        "complexity": complexity,
    });
    let report_path = out.join(format!("{name}.report.json"));
    write_text(&report_path, &to_pretty(&body))?;
    files.push(plan_path);
    files.push(report_path);
    let mut console = String::new();
    for f in &files {
        let _ = writeln!(console, "wrote {}", f.display());
    }
    let _ = writeln!(console, "flash_bytes: {}", mem.flash_bytes);
    let _ = writeln!(console, "arena_bytes: {}", mem.arena_bytes);
    let mut body = body;
    body["files"] = json!(files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    Ok(Outcome::ok(console, body))
}

pub fn vectors(model: &ModelArg, out: &Path, count: usize, seed: u64, range: (f32, f32)) -> Result<Outcome, CliError> {
    if !(range.0.is_finite() && range.1.is_finite() && range.0 <= range.1) {
        return Err(CliError::usage("need finite --low <= --high"));
    }
    let (graph, weights) = load(model)?;
    let inputs = generate_vectors(&graph, count, seed, range);
    let expected = reference_outputs(&graph, &weights, &inputs).map_err(CliError::internal)?;
    let base = out.as_os_str().to_string_lossy();
    let (ip, ep) = (PathBuf::from(format!("{base}.inputs.tnnv")), PathBuf::from(format!("{base}.expected.tnnv")));
    write_vectors(&ip, &inputs)?;
    write_vectors(&ep, &expected)?;
    let console = format!("wrote {count} vectors to {} and {}\n", ip.display(), ep.display());
    let body = json!({
        "count": count, "seed": seed, "generator": GENERATOR, "range": [range.0, range.1],
        "inputs": ip.display().to_string(), "expected": ep.display().to_string(),
    });
    Ok(Outcome::ok(console, body))
}

pub fn validate(model: &ModelArg, inputs: &Path, outputs: &Path, atol: f64, rtol: f64) -> Result<Outcome, CliError> {
    if !(atol >= 0.0 && rtol >= 0.0) {
        return Err(CliError::usage("tolerances must be non-negative"));
    }
    let (graph, weights) = load(model)?;
    let inputs = read_vectors(inputs)?;
    let outputs = read_vectors(outputs)?;
    let report = cross_validate(&graph, &weights, &outputs, &inputs, atol, rtol).map_err(CliError::input)?;
    let mut console = format!(
        "cross_accuracy: {:.6} ({} of {} elements, {} vectors)\nmax_abs_error: {:e}\nmax_rel_error: {:e}\n",
        report.cross_accuracy, report.matches, report.elements, report.vectors, report.max_abs_error, report.max_rel_error
    );
    if let Some(m) = &report.first_mismatch {
        let _ = writeln!(console, "first mismatch: {m:?}");
    }
    let code = if report.is_perfect() { EXIT_OK } else { EXIT_VALIDATION };
    Ok(Outcome { code, console, body: serde_json::to_value(&report).expect("serializable") })
}

pub fn profile(
    model: &ModelArg,
    mcus: &[String],
    cycles_per_macc: f64,
    catalog: Option<&Path>,
    repeats: Option<usize>,
    seed: u64,
) -> Result<Outcome, CliError> {
    if !(cycles_per_macc.is_finite() && cycles_per_macc > 0.0) {
        return Err(CliError::usage("--cycles-per-macc must be positive"));
    }
    let catalog = match catalog {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            McuCatalog::from_json(&text).map_err(CliError::input)?
        }
        None => McuCatalog::builtin(),
    };
    let selected = if mcus.is_empty() {
        catalog.mcus.clone()
    } else {
        mcus.iter()
            .map(|m| catalog.get(m).cloned().map_err(CliError::usage))
            .collect::<Result<Vec<_>, _>>()?
    };
    let (graph, weights) = load(model)?;
    let mem = plan(&graph);
    let timings = match repeats {
        Some(r) => {
            let x = generate_vectors(&graph, 1, seed, tnnc_core::validator::DEFAULT_RANGE);
            let input = Tensor::new(graph.input_shape().clone(), x.vector(0).to_vec()).expect("sized from graph");
            Some(measure_host_timings(&graph, &weights, &input, r).map_err(CliError::internal)?)
        }
        None => None,
    };
    let report = profile_graph(&graph, &weights, &mem, timings.as_deref())
        .map_err(CliError::internal)?
        .with_estimates(&selected, cycles_per_macc, mem.flash_bytes);
    let console = report.render_table();
    Ok(Outcome::ok(console, serde_json::to_value(&report).expect("serializable")))
}

fn label_counts(labels: &[f32]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for &l in labels {
        let name = Label::from_code(l).map_or_else(|| format!("code {l}"), |l| l.to_string());
        *counts.entry(name).or_insert(0) += 1;
    }
    counts
}

pub fn ids_window(csv: &Path, map: &Path, out: &Path, window: usize, stride: usize) -> Result<Outcome, CliError> {
    if window == 0 || stride == 0 {
        return Err(CliError::usage("--window and --stride must be positive"));
    }
    let messages = read_can_csv(csv).map_err(pipeline_input)?;
    let map = SignalMap::read(map).map_err(pipeline_input)?;
    let built = build_can_windows(&messages, &map, window, stride).map_err(pipeline_input)?;
    let (ip, lp) = built.set.write(out).map_err(pipeline_write)?;
    let counts = label_counts(built.set.labels());
    let mut console = format!(
        "{} messages, {} rows, {} windows of {}x{}, {} unmapped messages\n",
        messages.len(),
        built.rows,
        built.set.len(),
        window,
        map.columns(),
        built.unmapped
    );
    for (label, n) in &counts {
        let _ = writeln!(console, "  {label}: {n}");
    }
    let _ = writeln!(console, "wrote {} and {}", ip.display(), lp.display());
    let body = json!({
        "messages": messages.len(), "rows": built.rows, "windows": built.set.len(),
        "window": window, "stride": stride, "columns": map.columns(),
        "unmapped": built.unmapped, "unmapped_ids": built.unmapped_ids, "labels": counts,
        "inputs": ip.display().to_string(), "label_file": lp.display().to_string(),
    });
    Ok(Outcome::ok(console, body))
}

fn read_windows(stem: &Path, graph: &Graph) -> Result<WindowSet, CliError> {
    let (ip, lp) = pair_paths(stem);
    let inputs = read_vectors(&ip)?;
    let labels = read_vectors(&lp)?;
    let expected = graph.input_shape().element_count();
    if inputs.length() != expected {
        return Err(CliError::input(format!(
            "windows have {} values, model {} expects {} ({})",
            inputs.length(),
            graph.name(),
            expected,
            graph.input_shape()
        )));
    }
    WindowSet::from_vector_files(&inputs, &labels, graph.input_shape().timesteps()).map_err(pipeline_input)
}

fn run_model(graph: &Graph, weights: &WeightStore, set: &WindowSet) -> Result<Vec<Vec<f32>>, CliError> {
    set.windows().map(|w| forward_flat(graph, weights, w).map_err(CliError::internal)).collect()
}

fn reconstruction_scores(graph: &Graph, weights: &WeightStore, set: &WindowSet) -> Result<Vec<f32>, CliError> {
    let outputs = run_model(graph, weights, set)?;
    set.windows().zip(&outputs).map(|(w, r)| mae_score(w, r).map_err(pipeline_input)).collect()
}

fn metric_json(m: tnnc_core::pipelines::metrics::Metric) -> Value {
    serde_json::to_value(m).expect("serializable")
}

pub fn ids_eval(
    model: &ModelArg,
    windows: &Path,
    threshold: Option<f32>,
    fit_windows: Option<&Path>,
    quantile: f64,
) -> Result<Outcome, CliError> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(CliError::usage(format!("--quantile {quantile} is outside (0, 1]")));
    }
    let (graph, weights) = load(model)?;
    if graph.output_shape() != graph.input_shape() {
        return Err(CliError::input(format!(
            "model {} maps {} to {}; reconstruction scoring needs equal shapes",
            graph.name(),
            graph.input_shape(),
            graph.output_shape()
        )));
    }
    let set = read_windows(windows, &graph)?;
    let labels: Vec<Label> = set
        .labels()
        .iter()
        .map(|&c| Label::from_code(c).ok_or_else(|| CliError::input(format!("invalid window label code {c}"))))
        .collect::<Result<_, _>>()?;
    let scores = reconstruction_scores(&graph, &weights, &set)?;
    let (threshold, source) = match threshold {
        Some(t) => (t, "fixed".to_string()),
        None => {
            let (fit_scores, fit_labels, source) = match fit_windows {
                Some(stem) => {
                    let fit = read_windows(stem, &graph)?;
                    let s = reconstruction_scores(&graph, &weights, &fit)?;
                    (s, fit.labels().to_vec(), stem.display().to_string())
                }
                None => (scores.clone(), set.labels().to_vec(), windows.display().to_string()),
            };
            let normal: Vec<f32> = fit_scores.iter().zip(&fit_labels).filter(|(_, &l)| l == 0.0).map(|(&s, _)| s).collect();
            let t = select_threshold(&normal, quantile).map_err(pipeline_input)?;
            (t, format!("quantile {quantile} of {} normal windows in {source}", normal.len()))
        }
    };
    let flags = flag(&scores, threshold);
    let report = eval_detection(&flags, &labels).map_err(pipeline_input)?;
    let mut console = format!("{} windows, threshold {threshold:e} ({source}), {} flagged\n", set.len(), flags.iter().filter(|&&f| f).count());
    let _ = writeln!(console, "{:<18} {:>6} {:>6} {:>6} {:>6} {:>10} {:>10}", "kind", "tp", "fp", "fn", "tn", "precision", "recall");
    let mut row = |name: &str, m: &tnnc_core::pipelines::metrics::DetectionMetrics| {
        let c = m.confusion;
        let _ = writeln!(
            console,
            "{:<18} {:>6} {:>6} {:>6} {:>6} {:>10} {:>10}",
            name,
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            m.precision.to_string(),
            m.recall.to_string()
        );
    };
    row("all", &report.overall);
    for (kind, m) in &report.per_kind {
        row(AttackKind::name(*kind), m);
    }
    let _ = writeln!(console, "mean precision: {}", report.mean_precision);
    let _ = writeln!(console, "mean recall: {}", report.mean_recall);
    let body = json!({
        "windows": set.len(),
        "threshold": threshold,
        "threshold_source": source,
        "quantile": quantile,
        "flagged": flags.iter().filter(|&&f| f).count(),
        "detection": report,
        "mean_precision": metric_json(report.mean_precision),
        "mean_recall": metric_json(report.mean_recall),
        "scores": scores,
    });
    Ok(Outcome::ok(console, body))
}

pub fn batt_window(
    csv: &Path,
    out: &Path,
    samples: usize,
    fit_scaler: Option<&Path>,
    scaler: Option<&Path>,
) -> Result<Outcome, CliError> {
    if samples < 2 {
        return Err(CliError::usage("--samples must be at least 2"));
    }
    let cycles = read_battery_csv(csv).map_err(pipeline_input)?;
    let mut set = build_battery_windows(&cycles, samples).map_err(pipeline_input)?;
    let mut scaling = Value::Null;
    if let Some(path) = fit_scaler {
        let s = MinMaxScalerF32::fit_windows(&set).map_err(pipeline_input)?;
        s.apply_windows(&mut set).map_err(pipeline_input)?;
        write_text(path, &s.to_json())?;
        scaling = json!({ "fitted": path.display().to_string(), "degenerate_features": s.degenerate_features() });
    } else if let Some(path) = scaler {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let s = MinMaxScalerF32::from_json(&text).map_err(pipeline_input)?;
        s.apply_windows(&mut set).map_err(pipeline_input)?;
        scaling = json!({ "applied": path.display().to_string() });
    }
    let (ip, lp) = set.write(out).map_err(pipeline_write)?;
    let console = format!(
        "{} cycles -> {} windows of {}x{}\nwrote {} and {}\n",
        cycles.len(),
        set.len(),
        set.timesteps(),
        set.features(),
        ip.display(),
        lp.display()
    );
    let body = json!({
        "cycles": cycles.len(), "windows": set.len(), "samples": samples, "features": set.features(),
        "scaler": scaling, "inputs": ip.display().to_string(), "label_file": lp.display().to_string(),
    });
    Ok(Outcome::ok(console, body))
}

pub fn batt_eval(model: &ModelArg, windows: &Path, rated: f64) -> Result<Outcome, CliError> {
    let (graph, weights) = load(model)?;
    if graph.output_shape().element_count() != 1 {
        return Err(CliError::input(format!("model {} does not output a single capacity", graph.name())));
    }
    let set = read_windows(windows, &graph)?;
    let predictions: Vec<f32> = run_model(&graph, &weights, &set)?.into_iter().map(|o| o[0]).collect();
    let mae = eval_capacity(&predictions, set.labels()).map_err(pipeline_input)?;
    let soh = predictions
        .iter()
        .map(|&p| compute_soh(f64::from(p), rated).map_err(CliError::usage))
        .collect::<Result<Vec<_>, _>>()?;
    let replace = soh.iter().filter(|s| s.replace).count();
    let console = format!(
        "{} windows\ncapacity MAE: {mae:.6}\nreplace flags (soh < 0.8 of {rated}): {replace}\n",
        set.len()
    );
    let body = json!({
        "windows": set.len(), "mae": mae, "rated_capacity": rated, "replace_count": replace,
        "predictions": predictions, "targets": set.labels(), "soh": soh,
    });
    Ok(Outcome::ok(console, body))
}

pub fn bundled(out: &Path) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::internal(format!("{}: {e}", out.display())))?;
    let mut files = Vec::new();
    for name in [zoo::AUTOENCODER_NAME, zoo::CNN_LSTM_NAME] {
        let (graph, weights) = zoo::bundled(name).expect("bundled name");
        let path = write_model(out, &graph, &weights).map_err(|e| match e {
            FormatError::Io { .. } => CliError::internal(e),
            other => CliError::input(other),
        })?;
        files.push(path.display().to_string());
    }
    let console = files.iter().map(|f| format!("wrote {f}\n")).collect();
    Ok(Outcome::ok(console, json!({ "files": files })))
}

pub fn synth_can(out: &Path, map: &Path, messages: usize, normal_only: bool, seed: u64) -> Result<Outcome, CliError> {
    let attacks: &[AttackKind] = if normal_only { &[] } else { &AttackKind::ALL };
    let stream = synthetic::can_stream(seed, messages, attacks);
    write_can_csv(out, &stream).map_err(pipeline_write)?;
    write_text(map, &synthetic::can_signal_map().to_json())?;
    let console = format!("wrote {} messages to {} and the signal map to {}\n", stream.len(), out.display(), map.display());
    Ok(Outcome::ok(console, json!({ "messages": stream.len(), "csv": out.display().to_string(), "signal_map": map.display().to_string() })))
}

pub fn synth_battery(out: &Path, cycles: usize, rows: usize, seed: u64) -> Result<Outcome, CliError> {
    if rows < 2 {
        return Err(CliError::usage("--rows must be at least 2"));
    }
    let data = synthetic::discharge_cycles(seed, cycles, rows);
    write_battery_csv(out, &data).map_err(pipeline_write)?;
    let console = format!("wrote {cycles} cycles to {}\n", out.display());
    Ok(Outcome::ok(console, json!({ "cycles": cycles, "csv": out.display().to_string() })))
}

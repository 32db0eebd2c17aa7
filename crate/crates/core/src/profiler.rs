//! Per-layer complexity reports and on-target latency estimates.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, LayerKind};
use crate::interpreter::{run_layer, InterpreterError};
use crate::planner::{MemoryPlan, ELEMENT_BYTES};
use crate::tensor::Tensor;
use crate::weights::WeightStore;

/// Cycles per multiply-accumulate used when none is given.
pub const DEFAULT_CYCLES_PER_MACC: f64 = 9.6;

pub const BUILTIN_CATALOG: &str = include_str!("../data/mcus.json");

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("malformed MCU catalog: {0}")]
    Catalog(String),
    #[error("unknown MCU {0:?}")]
    UnknownMcu(String),
    #[error("expected {expected} host timings, got {actual}")]
    TimingCount { expected: usize, actual: usize },
    #[error(transparent)]
    Interpreter(#[from] InterpreterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McuSpec {
    pub name: String,
    pub flash_kib: f64,
    pub ram_kib: f64,
    pub clock_mhz: f64,
    pub power_ma: f64,
    #[serde(default)]
    pub cache: bool,
    #[serde(default)]
    pub fpu: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McuCatalog {
    pub mcus: Vec<McuSpec>,
}

impl McuCatalog {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_CATALOG).expect("bundled catalog is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let catalog: McuCatalog = serde_json::from_str(text).map_err(|e| ProfileError::Catalog(e.to_string()))?;
        for mcu in &catalog.mcus {
            let fields = [mcu.flash_kib, mcu.ram_kib, mcu.clock_mhz, mcu.power_ma];
            if !fields.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(ProfileError::Catalog(format!("{}: every numeric field must be positive", mcu.name)));
            }
        }
        Ok(catalog)
    }

    /// Case-insensitive lookup.
    pub fn get(&self, name: &str) -> Result<&McuSpec, ProfileError> {
        self.mcus
            .iter()
            .find(|m| m.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| ProfileError::UnknownMcu(name.to_string()))
    }
}

/// `total_macc * cycles_per_macc / (clock_mhz * 1000)` milliseconds.
pub fn estimate_target_time(total_macc: u64, mcu: &McuSpec, cycles_per_macc: f64) -> f64 {
    total_macc as f64 * cycles_per_macc / (mcu.clock_mhz * 1000.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerProfile {
    pub name: String,
    pub kind: LayerKind,
    pub macc: u64,
    pub flash_bytes: usize,
    /// Arena bytes live while the layer runs: its input, output and scratch.
    pub ram_bytes: usize,
    pub host_time_ns: Option<u64>,
    pub flash_pct: f64,
    pub ram_pct: f64,
    pub time_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileTotals {
    pub macc: u64,
    pub flash_bytes: usize,
    pub ram_bytes: usize,
    pub host_time_ns: Option<u64>,
    pub arena_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetEstimate {
    pub mcu: String,
    pub clock_mhz: f64,
    pub cycles_per_macc: f64,
    pub time_ms: f64,
    pub fits_flash: bool,
    pub fits_ram: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSource {
    /// Shares of multiply-accumulates.
    Macc,
    /// Measured host wall time.
    Host,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub model: String,
    pub layers: Vec<LayerProfile>,
    pub totals: ProfileTotals,
    pub time_source: TimeSource,
    pub estimates: Vec<TargetEstimate>,
}

/// Column shares in percent; an all-zero column yields all-zero shares.
fn shares(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    values.iter().map(|v| if total > 0.0 { 100.0 * v / total } else { 0.0 }).collect()
}

pub fn profile(
    graph: &Graph,
    weights: &WeightStore,
    plan: &MemoryPlan,
    host_timings: Option<&[u64]>,
) -> Result<ComplexityReport, ProfileError> {
    if let Some(t) = host_timings {
        if t.len() != graph.len() {
            return Err(ProfileError::TimingCount { expected: graph.len(), actual: t.len() });
        }
    }
    let macc = graph.macc_count();
    // Stored weights, so batchnorm statistics count towards Flash.
    let flash: Vec<usize> = (0..graph.len())
        .map(|i| {
            weights
                .layout()
                .iter()
                .filter(|(l, _, _)| *l == i)
                .map(|(_, _, d)| d.iter().product::<usize>() * ELEMENT_BYTES)
                .sum()
        })
        .collect();
    let ram: Vec<usize> = (0..graph.len()).map(|i| plan.live_bytes_at(i)).collect();
    let time_basis: Vec<f64> = match host_timings {
        Some(t) => t.iter().map(|&ns| ns as f64).collect(),
        None => macc.per_layer.iter().map(|&m| m as f64).collect(),
    };
    let flash_pct = shares(&flash.iter().map(|&b| b as f64).collect::<Vec<_>>());
    let ram_pct = shares(&ram.iter().map(|&b| b as f64).collect::<Vec<_>>());
    let time_pct = shares(&time_basis);
    let layers = (0..graph.len())
        .map(|i| LayerProfile {
            name: graph.layer_name(i),
            kind: graph.layers()[i].kind(),
            macc: macc.per_layer[i],
            flash_bytes: flash[i],
            ram_bytes: ram[i],
            host_time_ns: host_timings.map(|t| t[i]),
            flash_pct: flash_pct[i],
            ram_pct: ram_pct[i],
            time_pct: time_pct[i],
        })
        .collect();
    Ok(ComplexityReport {
        model: graph.name().to_string(),
        layers,
        totals: ProfileTotals {
            macc: macc.total,
            flash_bytes: flash.iter().sum(),
            ram_bytes: ram.iter().sum(),
            host_time_ns: host_timings.map(|t| t.iter().sum()),
            arena_bytes: plan.arena_bytes,
        },
        time_source: if host_timings.is_some() { TimeSource::Host } else { TimeSource::Macc },
        estimates: Vec::new(),
    })
}

impl ComplexityReport {
    /// Adds an on-target time estimate for every catalog entry.
    pub fn with_estimates<'a>(mut self, mcus: impl IntoIterator<Item = &'a McuSpec>, cycles_per_macc: f64, flash_bytes: usize) -> Self {
        for mcu in mcus {
            self.estimates.push(TargetEstimate {
                mcu: mcu.name.clone(),
                clock_mhz: mcu.clock_mhz,
                cycles_per_macc,
                time_ms: estimate_target_time(self.totals.macc, mcu, cycles_per_macc),
                fits_flash: flash_bytes as f64 <= mcu.flash_kib * 1024.0,
                fits_ram: self.totals.arena_bytes as f64 <= mcu.ram_kib * 1024.0,
            });
        }
        self
    }

    /// Summed `(flash %, ram %, time %)` over every layer of `kind`.
    pub fn kind_share(&self, kind: LayerKind) -> (f64, f64, f64) {
        self.layers.iter().filter(|l| l.kind == kind).fold((0.0, 0.0, 0.0), |acc, l| {
            (acc.0 + l.flash_pct, acc.1 + l.ram_pct, acc.2 + l.time_pct)
        })
    }

    /// Aligned plain-text table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:<10} {:>10} {:>10} {:>9} {:>8} {:>8} {:>8}",
            "layer", "kind", "macc", "flash[B]", "ram[B]", "flash%", "ram%", "time%"
        );
        for l in &self.layers {
            let _ = writeln!(
                out,
                "{:<14} {:<10} {:>10} {:>10} {:>9} {:>8.2} {:>8.2} {:>8.2}",
                l.name, l.kind.name(), l.macc, l.flash_bytes, l.ram_bytes, l.flash_pct, l.ram_pct, l.time_pct
            );
        }
        let _ = writeln!(
            out,
            "{:<14} {:<10} {:>10} {:>10} {:>9}   (arena {} B, time shares from {})",
            "total",
            "",
            self.totals.macc,
            self.totals.flash_bytes,
            self.totals.ram_bytes,
            self.totals.arena_bytes,
            match self.time_source {
                TimeSource::Macc => "macc",
                TimeSource::Host => "host timings",
            }
        );
        for e in &self.estimates {
            let _ = writeln!(
                out,
                "estimate {:<10} {:>6.0} MHz x {:.2} cycles/macc -> {:>8.3} ms{}",
                e.mcu,
                e.clock_mhz,
                e.cycles_per_macc,
                e.time_ms,
                if e.fits_flash && e.fits_ram { "" } else { "  (does not fit)" }
            );
        }
        out
    }
}

/// Median per-layer interpreter wall time over `repeats` runs.
pub fn measure_host_timings(
    graph: &Graph,
    weights: &WeightStore,
    input: &Tensor<f32>,
    repeats: usize,
) -> Result<Vec<u64>, ProfileError> {
    let repeats = repeats.max(1);
    let mut samples = vec![Vec::with_capacity(repeats); graph.len()];
    for _ in 0..repeats {
        let mut x = input.clone();
        for (layer, bucket) in samples.iter_mut().enumerate() {
            let start = Instant::now();
            x = run_layer(graph, weights, layer, &x)?;
            bucket.push(start.elapsed().as_nanos() as u64);
        }
    }
    Ok(samples
        .into_iter()
        .map(|mut s| {
            s.sort_unstable();
            s[s.len() / 2]
        })
        .collect())
}

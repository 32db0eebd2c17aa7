//! Discharge cycles to `[samples x 4]` windows of
//! `[current, voltage, temperature, dt]`, plus per-feature min-max scaling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_error, PipelineError, WindowSet};
use crate::scalar::Scalar;

pub const BATTERY_SAMPLES: usize = 20;
pub const BATTERY_FEATURES: usize = 4;
pub const BATTERY_CSV_HEADER: [&str; 6] = ["cycle_id", "time", "voltage", "current", "temperature", "capacity"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub time: f64,
    pub voltage: f64,
    pub current: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DischargeCycle {
    pub id: String,
    pub capacity: f64,
    pub measurements: Vec<Measurement>,
}

#[derive(Deserialize)]
struct BatteryRecord {
    cycle_id: String,
    time: f64,
    voltage: f64,
    current: f64,
    temperature: f64,
    capacity: f64,
}

/// Groups rows into cycles in order of first appearance. Every row of a
/// cycle must repeat the same capacity.
pub fn parse_battery_csv(reader: impl std::io::Read, source: &str) -> Result<Vec<DischargeCycle>, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != BATTERY_CSV_HEADER {
        return Err(PipelineError::Input {
            path: source.to_string(),
            reason: format!("expected header {}", BATTERY_CSV_HEADER.join(",")),
        });
    }
    let mut cycles: Vec<DischargeCycle> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (i, rec) in rdr.deserialize::<BatteryRecord>().enumerate() {
        let rec = rec.map_err(|e| csv_error(source, e))?;
        let invalid = |reason: String| PipelineError::InvalidRecord { record: i + 1, reason };
        let values = [rec.time, rec.voltage, rec.current, rec.temperature, rec.capacity];
        if !values.iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite value".into()));
        }
        let slot = *index.entry(rec.cycle_id.clone()).or_insert_with(|| {
            cycles.push(DischargeCycle { id: rec.cycle_id.clone(), capacity: rec.capacity, measurements: Vec::new() });
            cycles.len() - 1
        });
        let cycle = &mut cycles[slot];
        if cycle.capacity != rec.capacity {
            return Err(invalid(format!("cycle {} changes capacity", cycle.id)));
        }
        if cycle.measurements.last().is_some_and(|m| rec.time < m.time) {
            return Err(invalid(format!("cycle {} time decreases", cycle.id)));
        }
        cycle.measurements.push(Measurement {
            time: rec.time,
            voltage: rec.voltage,
            current: rec.current,
            temperature: rec.temperature,
        });
    }
    Ok(cycles)
}

pub fn read_battery_csv(path: &Path) -> Result<Vec<DischargeCycle>, PipelineError> {
    let file = std::fs::File::open(path)
        .map_err(|e| PipelineError::Input { path: path.display().to_string(), reason: e.to_string() })?;
    parse_battery_csv(file, &path.display().to_string())
}

pub fn write_battery_csv(path: &Path, cycles: &[DischargeCycle]) -> Result<(), PipelineError> {
    let name = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(&name, e))?;
    w.write_record(BATTERY_CSV_HEADER).map_err(|e| csv_error(&name, e))?;
    for c in cycles {
        for m in &c.measurements {
            let row = [
                c.id.clone(),
                m.time.to_string(),
                m.voltage.to_string(),
                m.current.to_string(),
                m.temperature.to_string(),
                c.capacity.to_string(),
            ];
            w.write_record(&row).map_err(|e| csv_error(&name, e))?;
        }
    }
    w.flush().map_err(|e| PipelineError::Input { path: name, reason: e.to_string() })
}

/// `samples` evenly spaced indices over `n` rows, first and last included:
/// `round(i * (n - 1) / (samples - 1))`, halves rounded up, in integers.
pub fn sample_indices(n: usize, samples: usize) -> Vec<usize> {
    assert!(samples >= 2 && n >= samples, "need n >= samples >= 2");
    let den = samples - 1;
    (0..samples).map(|i| (2 * i * (n - 1) + den) / (2 * den)).collect()
}

pub fn build_battery_windows(cycles: &[DischargeCycle], samples: usize) -> Result<WindowSet, PipelineError> {
    if samples < 2 {
        return Err(PipelineError::InvalidParameter(format!("samples must be at least 2, got {samples}")));
    }
    let mut set = WindowSet::new(samples, BATTERY_FEATURES);
    let mut window = Vec::with_capacity(samples * BATTERY_FEATURES);
    for c in cycles {
        if c.measurements.len() < samples {
            return Err(PipelineError::ShortCycle { cycle: c.id.clone(), rows: c.measurements.len(), samples });
        }
        window.clear();
        let mut prev_time = None;
        for idx in sample_indices(c.measurements.len(), samples) {
            let m = c.measurements[idx];
            let dt = prev_time.map_or(0.0, |t| m.time - t);
            prev_time = Some(m.time);
            window.extend([m.current, m.voltage, m.temperature, dt].map(|v| v as f32));
        }
        set.push(&window, c.capacity as f32);
    }
    Ok(set)
}

/// Per-feature min-max scaler mapping `[min, max]` onto `[0, 1]`.
///
/// Features with `max == min` are degenerate: they map to 0 and invert to
/// `min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler<S> {
    pub min: Vec<S>,
    pub max: Vec<S>,
}

impl<S: Scalar> MinMaxScaler<S> {
    /// Fits on rows of `features` values each.
    pub fn fit<'a>(features: usize, rows: impl IntoIterator<Item = &'a [S]>) -> Result<Self, PipelineError> {
        let mut min = vec![S::infinity(); features];
        let mut max = vec![S::neg_infinity(); features];
        let mut seen = false;
        for row in rows {
            if row.len() != features {
                return Err(PipelineError::ShapeMismatch(format!("row of {} values, expected {features}", row.len())));
            }
            for (f, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(PipelineError::ShapeMismatch(format!("non-finite value in feature {f}")));
                }
                min[f] = min[f].min(v);
                max[f] = max[f].max(v);
            }
            seen = true;
        }
        if !seen {
            return Err(PipelineError::EmptyInput);
        }
        let scaler = MinMaxScaler { min, max };
        for f in scaler.degenerate_features() {
            log::warn!("feature {f} is constant; it scales to 0");
        }
        Ok(scaler)
    }

    pub fn features(&self) -> usize {
        self.min.len()
    }

    pub fn degenerate_features(&self) -> Vec<usize> {
        (0..self.features()).filter(|&f| self.max[f] == self.min[f]).collect()
    }

    pub fn apply_value(&self, feature: usize, v: S) -> S {
        let span = self.max[feature] - self.min[feature];
        if span == S::zero() {
            S::zero()
        } else {
            (v - self.min[feature]) / span
        }
    }

    pub fn invert_value(&self, feature: usize, v: S) -> S {
        v * (self.max[feature] - self.min[feature]) + self.min[feature]
    }

    /// Scales a row-major buffer of whole rows in place.
    pub fn apply(&self, values: &mut [S]) {
        let n = self.features();
        for row in values.chunks_exact_mut(n) {
            for (f, v) in row.iter_mut().enumerate() {
                *v = self.apply_value(f, *v);
            }
        }
    }

    pub fn invert(&self, values: &mut [S]) {
        let n = self.features();
        for row in values.chunks_exact_mut(n) {
            for (f, v) in row.iter_mut().enumerate() {
                *v = self.invert_value(f, *v);
            }
        }
    }
}

impl MinMaxScaler<f32> {
    pub fn fit_windows(set: &WindowSet) -> Result<Self, PipelineError> {
        let f = set.features();
        Self::fit(f, set.values().chunks_exact(f))
    }

    pub fn apply_windows(&self, set: &mut WindowSet) -> Result<(), PipelineError> {
        if set.features() != self.features() {
            return Err(PipelineError::ShapeMismatch(format!(
                "scaler has {} features, windows have {}",
                self.features(),
                set.features()
            )));
        }
        for w in set.windows_mut() {
            self.apply(w);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let s: Self = serde_json::from_str(text).map_err(|e| PipelineError::ShapeMismatch(e.to_string()))?;
        if s.min.len() != s.max.len() || s.min.iter().zip(&s.max).any(|(a, b)| a > b) {
            return Err(PipelineError::ShapeMismatch("scaler needs min <= max per feature".into()));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> DischargeCycle {
        DischargeCycle {
            id: "c".into(),
            capacity: 1.8,
            measurements: (0..n)
                .map(|i| Measurement { time: (i * i) as f64, voltage: 4.2 - i as f64 * 0.01, current: -2.0, temperature: 24.0 })
                .collect(),
        }
    }

    #[test]
    fn indices_exact_and_spread() {
        assert_eq!(sample_indices(20, 20), (0..20).collect::<Vec<_>>());
        assert_eq!(sample_indices(39, 20), (0..20).map(|i| 2 * i).collect::<Vec<_>>());
        for n in 20..200 {
            let idx = sample_indices(n, 20);
            for (i, &k) in idx.iter().enumerate() {
                let exact = i as f64 * (n - 1) as f64 / 19.0;
                assert!((k as f64 - exact).abs() <= 0.5);
            }
            assert_eq!((idx[0], idx[19]), (0, n - 1));
        }
    }

    #[test]
    fn window_features_and_dt() {
        let set = build_battery_windows(&[cycle(20)], 20).unwrap();
        let w = set.window(0);
        assert_eq!(&w[..4], &[-2.0, 4.2, 24.0, 0.0]);
        assert_eq!(w[4 * 3 + 3], (9 - 4) as f32);
        assert_eq!(set.labels(), &[1.8f32]);
        assert!(matches!(build_battery_windows(&[cycle(19)], 20), Err(PipelineError::ShortCycle { rows: 19, .. })));
    }

    #[test]
    fn scaler_basics() {
        let rows: [&[f64]; 2] = [&[2.0, 5.0], &[4.0, 5.0]];
        let s = MinMaxScaler::fit(2, rows).unwrap();
        assert_eq!(s.apply_value(0, 3.0), 0.5);
        assert_eq!(s.degenerate_features(), vec![1]);
        assert_eq!(s.apply_value(1, 7.0), 0.0);
        assert_eq!(s.invert_value(1, 0.0), 5.0);
        assert!(MinMaxScaler::<f64>::fit(2, std::iter::empty()).is_err());
        let s32 = MinMaxScaler::<f32> { min: vec![0.0], max: vec![2.0] };
        assert_eq!(MinMaxScaler::from_json(&s32.to_json()).unwrap(), s32);
        assert!(MinMaxScaler::<f32>::from_json(r#"{"min":[1.0],"max":[0.0]}"#).is_err());
    }

    #[test]
    fn csv_grouping() {
        let text = "cycle_id,time,voltage,current,temperature,capacity\n\
                    a,0,4.1,-2,24,1.9\nb,0,4.1,-2,24,1.8\na,1,4.0,-2,25,1.9\n";
        let cycles = parse_battery_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(cycles.len(), 2);
        assert_eq!(cycles[0].measurements.len(), 2);
        let bad = "cycle_id,time,voltage,current,temperature,capacity\na,0,4.1,-2,24,1.9\na,1,4.0,-2,25,1.8\n";
        assert!(parse_battery_csv(bad.as_bytes(), "mem").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        write_battery_csv(&p, &cycles).unwrap();
        assert_eq!(read_battery_csv(&p).unwrap(), cycles);
    }
}

//! CAN traces to `[window x columns]` snapshot windows.
//!
//! Each message updates its mapped columns of a last-known-value snapshot
//! (initially all zero) and appends the snapshot as one row. Windows are
//! runs of consecutive rows; a window is an attack window when any message
//! behind its rows is labeled attack.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{csv_error, PipelineError, WindowSet};

pub const CAN_WINDOW: usize = 24;
pub const CAN_COLUMNS: usize = 20;
pub const SIGNALS_PER_MESSAGE: usize = 4;
pub const CAN_CSV_HEADER: [&str; 7] = ["label", "time", "id", "signal1", "signal2", "signal3", "signal4"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Plateau,
    ContinuousChange,
    Playback,
    Suppress,
    Flooding,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] =
        [AttackKind::Plateau, AttackKind::ContinuousChange, AttackKind::Playback, AttackKind::Suppress, AttackKind::Flooding];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Plateau => "plateau",
            AttackKind::ContinuousChange => "continuous_change",
            AttackKind::Playback => "playback",
            AttackKind::Suppress => "suppress",
            AttackKind::Flooding => "flooding",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Message or window label. Attacks may carry their kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Normal,
    Attack(Option<AttackKind>),
}

impl Label {
    pub fn is_attack(self) -> bool {
        matches!(self, Label::Attack(_))
    }

    /// Numeric code stored in window label files: 0 normal, 1..=5 the
    /// attack kinds in declaration order, 6 attack of unknown kind.
    pub fn code(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Attack(Some(k)) => 1 + AttackKind::ALL.iter().position(|&a| a == k).expect("listed") as u8,
            Label::Attack(None) => 6,
        }
    }

    pub fn from_code(code: f32) -> Option<Label> {
        match code {
            0.0 => Some(Label::Normal),
            6.0 => Some(Label::Attack(None)),
            c if (1.0..=5.0).contains(&c) && c.fract() == 0.0 => Some(Label::Attack(Some(AttackKind::ALL[c as usize - 1]))),
            _ => None,
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "normal" | "0" => Ok(Label::Normal),
            "attack" | "1" => Ok(Label::Attack(None)),
            _ => AttackKind::ALL
                .iter()
                .find(|k| k.name() == s)
                .map(|&k| Label::Attack(Some(k)))
                .ok_or_else(|| format!("unknown label {s:?}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Normal => f.write_str("normal"),
            Label::Attack(None) => f.write_str("attack"),
            Label::Attack(Some(k)) => f.write_str(k.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanMessage {
    pub label: Label,
    /// Seconds.
    pub timestamp: f64,
    pub id: String,
    pub signals: [Option<f32>; SIGNALS_PER_MESSAGE],
}

impl CanMessage {
    pub fn new(label: Label, timestamp: f64, id: impl Into<String>, signals: [Option<f32>; SIGNALS_PER_MESSAGE]) -> Self {
        CanMessage { label, timestamp, id: id.into(), signals }
    }

    fn validate(&self) -> Result<(), String> {
        if !self.timestamp.is_finite() {
            return Err("timestamp is not finite".into());
        }
        if self.signals.iter().all(Option::is_none) {
            return Err("message carries no signal".into());
        }
        if let Some(v) = self.signals.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(format!("signal value {v} outside [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct CanRecord {
    label: String,
    time: f64,
    id: String,
    signal1: Option<f32>,
    signal2: Option<f32>,
    signal3: Option<f32>,
    signal4: Option<f32>,
}

/// Parses `label,time,id,signal1..signal4` CSV; empty signal cells are absent.
pub fn parse_can_csv(reader: impl Read, source: &str) -> Result<Vec<CanMessage>, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != CAN_CSV_HEADER {
        return Err(PipelineError::Input {
            path: source.to_string(),
            reason: format!("expected header {}", CAN_CSV_HEADER.join(",")),
        });
    }
    let mut messages = Vec::new();
    for (i, rec) in rdr.deserialize::<CanRecord>().enumerate() {
        let rec = rec.map_err(|e| csv_error(source, e))?;
        let invalid = |reason: String| PipelineError::InvalidRecord { record: i + 1, reason };
        let label = rec.label.parse::<Label>().map_err(invalid)?;
        let msg = CanMessage::new(label, rec.time, rec.id, [rec.signal1, rec.signal2, rec.signal3, rec.signal4]);
        msg.validate().map_err(invalid)?;
        messages.push(msg);
    }
    Ok(messages)
}

pub fn read_can_csv(path: &Path) -> Result<Vec<CanMessage>, PipelineError> {
    let file = std::fs::File::open(path)
        .map_err(|e| PipelineError::Input { path: path.display().to_string(), reason: e.to_string() })?;
    parse_can_csv(file, &path.display().to_string())
}

pub fn write_can_csv(path: &Path, messages: &[CanMessage]) -> Result<(), PipelineError> {
    let name = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(&name, e))?;
    w.write_record(CAN_CSV_HEADER).map_err(|e| csv_error(&name, e))?;
    for m in messages {
        let mut row = vec![m.label.to_string(), format!("{}", m.timestamp), m.id.clone()];
        row.extend(m.signals.iter().map(|s| s.map(|v| format!("{v}")).unwrap_or_default()));
        w.write_record(&row).map_err(|e| csv_error(&name, e))?;
    }
    w.flush().map_err(|e| PipelineError::Input { path: name, reason: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalEntry {
    pub id: String,
    /// 1-based, matching the `signalN` CSV columns.
    pub signal: usize,
    pub column: usize,
}

/// Bijection from `(message id, signal index)` to snapshot columns `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalMap {
    entries: Vec<SignalEntry>,
    by_id: HashMap<String, Vec<(usize, usize)>>,
}

#[derive(Serialize, Deserialize)]
struct SignalMapFile {
    signals: Vec<SignalEntry>,
}

impl SignalMap {
    pub fn new(entries: Vec<SignalEntry>) -> Result<Self, PipelineError> {
        let n = entries.len();
        if n == 0 {
            return Err(PipelineError::InvalidSignalMap("no entries".into()));
        }
        let mut columns = vec![false; n];
        let mut by_id: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        for e in &entries {
            if !(1..=SIGNALS_PER_MESSAGE).contains(&e.signal) {
                return Err(PipelineError::InvalidSignalMap(format!("{}: signal index {} outside 1..=4", e.id, e.signal)));
            }
            if e.column >= n || std::mem::replace(&mut columns[e.column], true) {
                return Err(PipelineError::InvalidSignalMap(format!("column {} is out of range or repeated", e.column)));
            }
            let slots = by_id.entry(e.id.clone()).or_default();
            if slots.iter().any(|&(s, _)| s == e.signal - 1) {
                return Err(PipelineError::InvalidSignalMap(format!("{} signal {} mapped twice", e.id, e.signal)));
            }
            slots.push((e.signal - 1, e.column));
        }
        Ok(SignalMap { entries, by_id })
    }

    pub fn columns(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[SignalEntry] {
        &self.entries
    }

    /// `(signal slot, column)` pairs of `id`, or `None` when unmapped.
    pub fn lookup(&self, id: &str) -> Option<&[(usize, usize)]> {
        self.by_id.get(id).map(Vec::as_slice)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let file: SignalMapFile = serde_json::from_str(text).map_err(|e| PipelineError::InvalidSignalMap(e.to_string()))?;
        Self::new(file.signals)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SignalMapFile { signals: self.entries.clone() }).expect("serializable")
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Input { path: path.display().to_string(), reason: e.to_string() })?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanWindows {
    pub set: WindowSet,
    /// Snapshot rows built, one per mapped message.
    pub rows: usize,
    /// Messages skipped because their id is not in the map.
    pub unmapped: usize,
    pub unmapped_ids: BTreeMap<String, usize>,
}

/// Number of windows over `rows` snapshot rows.
pub fn window_count(rows: usize, window: usize, stride: usize) -> usize {
    if rows < window {
        0
    } else {
        (rows - window) / stride + 1
    }
}

/// Label of a window: normal, or the kind of the first attack message in
/// it that names one.
pub fn window_label(labels: &[Label]) -> Label {
    if !labels.iter().any(|l| l.is_attack()) {
        return Label::Normal;
    }
    labels.iter().find(|l| matches!(l, Label::Attack(Some(_)))).copied().unwrap_or(Label::Attack(None))
}

pub fn build_can_windows(
    messages: &[CanMessage],
    map: &SignalMap,
    window: usize,
    stride: usize,
) -> Result<CanWindows, PipelineError> {
    if window == 0 || stride == 0 {
        return Err(PipelineError::InvalidParameter("window and stride must be positive".into()));
    }
    if messages.is_empty() {
        return Err(PipelineError::EmptyStream);
    }
    if let Some(i) = messages.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        return Err(PipelineError::UnsortedStream(i + 1));
    }
    let cols = map.columns();
    let mut snapshot = vec![0.0f32; cols];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut unmapped_ids = BTreeMap::new();
    for m in messages {
        let Some(slots) = map.lookup(&m.id) else {
            *unmapped_ids.entry(m.id.clone()).or_insert(0) += 1;
            continue;
        };
        for &(slot, column) in slots {
            if let Some(v) = m.signals[slot] {
                snapshot[column] = v;
            }
        }
        rows.extend_from_slice(&snapshot);
        labels.push(m.label);
    }
    let n_rows = labels.len();
    let mut set = WindowSet::new(window, cols);
    for w in 0..window_count(n_rows, window, stride) {
        let start = w * stride;
        let label = window_label(&labels[start..start + window]);
        set.push(&rows[start * cols..(start + window) * cols], label.code() as f32);
    }
    let unmapped = unmapped_ids.values().sum();
    if unmapped > 0 {
        log::warn!("skipped {unmapped} messages with unmapped ids");
    }
    Ok(CanWindows { set, rows: n_rows, unmapped, unmapped_ids })
}

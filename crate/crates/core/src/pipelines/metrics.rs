//! Anomaly scoring, thresholding and the detection/regression metrics.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

use super::can::{AttackKind, Label};
use super::PipelineError;
use crate::scalar::Scalar;

pub const DEFAULT_QUANTILE: f64 = 0.99;
/// State of health below which a battery is due for replacement.
pub const SOH_REPLACE_BELOW: f64 = 0.8;

/// Ratio that may be undefined when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    pub fn ratio(num: usize, den: usize) -> Metric {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Value(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }

    /// Mean of the defined entries; undefined when none is.
    pub fn mean(items: impl IntoIterator<Item = Metric>) -> Metric {
        let defined: Vec<f64> = items.into_iter().filter_map(Metric::value).collect();
        if defined.is_empty() {
            Metric::Undefined
        } else {
            Metric::Value(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v:.4}"),
            Metric::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<Z: Serializer>(&self, s: Z) -> Result<Z::Ok, Z::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Undefined => s.serialize_str("undefined"),
        }
    }
}

/// Mean absolute elementwise difference, accumulated in binary64.
pub fn mae_score<S: Scalar>(x: &[S], reconstruction: &[S]) -> Result<S, PipelineError> {
    if x.len() != reconstruction.len() {
        return Err(PipelineError::ShapeMismatch(format!("{} vs {} elements", x.len(), reconstruction.len())));
    }
    if x.is_empty() {
        return Err(PipelineError::EmptyInput);
    }
    let wide = |v: S| v.to_f64().expect("scalars widen to f64");
    let sum: f64 = x.iter().zip(reconstruction).map(|(&a, &b)| (wide(a) - wide(b)).abs()).sum();
    Ok(S::from_binary64(sum / x.len() as f64))
}

/// Nearest-rank empirical quantile: the `ceil(q * n)`-th smallest score.
pub fn select_threshold<S: Scalar>(scores: &[S], quantile: f64) -> Result<S, PipelineError> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(PipelineError::InvalidQuantile(quantile));
    }
    if scores.is_empty() {
        return Err(PipelineError::EmptyScores);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(PipelineError::ShapeMismatch("NaN score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = sorted.len();
    // The tolerance keeps products like 0.99 * 100 from rounding up a rank.
    let rank = ((quantile * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[rank - 1])
}

/// Scores strictly above the threshold are anomalous.
pub fn flag<S: Scalar>(scores: &[S], threshold: S) -> Vec<bool> {
    scores.iter().map(|&s| s > threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn tally(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Confusion::default();
        for (flagged, attack) in pairs {
            match (flagged, attack) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionMetrics {
    pub confusion: Confusion,
    pub precision: Metric,
    pub recall: Metric,
}

impl DetectionMetrics {
    fn from_confusion(confusion: Confusion) -> Self {
        DetectionMetrics { precision: confusion.precision(), recall: confusion.recall(), confusion }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    /// All windows, every attack kind together.
    pub overall: DetectionMetrics,
    /// Windows of one kind plus all normal windows, for each kind present.
    pub per_kind: BTreeMap<AttackKind, DetectionMetrics>,
    /// Mean over `per_kind` of the defined values; the overall figures when
    /// no window names its kind.
    pub mean_precision: Metric,
    pub mean_recall: Metric,
}

pub fn eval_detection(flags: &[bool], labels: &[Label]) -> Result<DetectionReport, PipelineError> {
    if flags.len() != labels.len() {
        return Err(PipelineError::LengthMismatch { left: flags.len(), right: labels.len() });
    }
    let pairs = || flags.iter().copied().zip(labels.iter().copied());
    let overall = DetectionMetrics::from_confusion(Confusion::tally(pairs().map(|(f, l)| (f, l.is_attack()))));
    let mut per_kind = BTreeMap::new();
    for kind in AttackKind::ALL {
        let this = Label::Attack(Some(kind));
        if !labels.contains(&this) {
            continue;
        }
        let c = Confusion::tally(pairs().filter(|&(_, l)| l == this || l == Label::Normal).map(|(f, l)| (f, l == this)));
        per_kind.insert(kind, DetectionMetrics::from_confusion(c));
    }
    let (mean_precision, mean_recall) = if per_kind.is_empty() {
        (overall.precision, overall.recall)
    } else {
        (Metric::mean(per_kind.values().map(|m| m.precision)), Metric::mean(per_kind.values().map(|m| m.recall)))
    };
    Ok(DetectionReport { overall, per_kind, mean_precision, mean_recall })
}

pub fn eval_capacity<S: Scalar>(predictions: &[S], targets: &[S]) -> Result<S, PipelineError> {
    if predictions.len() != targets.len() {
        return Err(PipelineError::LengthMismatch { left: predictions.len(), right: targets.len() });
    }
    mae_score(predictions, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SohReport {
    pub soh: f64,
    pub replace: bool,
}

/// `c_max / c_rated`; replacement is due strictly below 0.8.
pub fn compute_soh(c_max: f64, c_rated: f64) -> Result<SohReport, PipelineError> {
    if c_rated <= 0.0 || !c_rated.is_finite() {
        return Err(PipelineError::NonPositiveRated(c_rated));
    }
    let soh = c_max / c_rated;
    Ok(SohReport { soh, replace: soh < SOH_REPLACE_BELOW })
}

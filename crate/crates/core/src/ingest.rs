//! Trace ingestion: parse raw crash sessions, build a shared metric
//! vocabulary, and homogenize each session into a fixed-shape scaled matrix.
//!
//! A raw session arrives as named timeseries of varying lengths. The steps
//! here follow the deployment pipeline: drop metrics that appear in too few
//! sessions, zero-fill missing metrics, trim each kept series to its most
//! recent `t` readings, left-pad short series with zeros, then min-max
//! scale every column to `[0, 1]`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::numerics::Matrix;

/// One crashing session: named metric timeseries of varying lengths.
///
/// Readings are `(timestep index, count)` pairs with strictly increasing
/// indices per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub session_id: String,
    pub metrics: BTreeMap<String, Vec<(u64, f64)>>,
}

impl RawTrace {
    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::InvalidInput(format!(
                "session {} has no metrics",
                self.session_id
            )));
        }
        for (name, readings) in &self.metrics {
            let mut last: Option<u64> = None;
            for &(ts, value) in readings {
                if !value.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "session {} metric {name} has non-finite value",
                        self.session_id
                    )));
                }
                if value < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "session {} metric {name} has negative count",
                        self.session_id
                    )));
                }
                if let Some(prev) = last {
                    if ts <= prev {
                        return Err(Error::InvalidInput(format!(
                            "session {} metric {name} has non-increasing timesteps",
                            self.session_id
                        )));
                    }
                }
                last = Some(ts);
            }
        }
        Ok(())
    }

    /// A metric is present when it has at least one non-zero reading.
    pub fn is_present(&self, metric: &str) -> bool {
        self.metrics
            .get(metric)
            .is_some_and(|r| r.iter().any(|&(_, v)| v > 0.0))
    }
}

/// The shared, ordered metric namespace all tensors are built against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVocabulary {
    /// Sorted, duplicate-free metric names.
    pub names: Vec<String>,
    pub presence_threshold: f64,
}

impl MetricVocabulary {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Stable identifier binding tensors and models to this vocabulary.
    pub fn hash(&self) -> String {
        let mut buf = Vec::new();
        for name in &self.names {
            buf.extend_from_slice(name.as_bytes());
            buf.push(b'\n');
        }
        buf.extend_from_slice(&self.presence_threshold.to_bits().to_le_bytes());
        sha256_hex(&buf)
    }
}

/// Homogenized, scaled `t x m` matrix for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTensor {
    pub session_id: String,
    /// `t` rows (time) by `m` columns (vocabulary order), entries in [0, 1].
    pub values: Matrix,
    /// Hash of the [`MetricVocabulary`] the columns follow.
    pub vocabulary_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Production,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Validation => write!(f, "validation"),
            Split::Production => write!(f, "production"),
        }
    }
}

/// A set of tensors sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub tensors: Vec<TraceTensor>,
    pub split: Split,
}

impl Dataset {
    /// Validate that every tensor shares one vocabulary and shape.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.tensors.first() else {
            return Ok(());
        };
        for t in &self.tensors {
            if t.vocabulary_ref != first.vocabulary_ref {
                return Err(Error::DataMismatch(format!(
                    "session {} was built against a different vocabulary",
                    t.session_id
                )));
            }
            if t.values.rows() != first.values.rows() || t.values.cols() != first.values.cols() {
                return Err(Error::DataMismatch(format!(
                    "session {} has shape {}x{}, expected {}x{}",
                    t.session_id,
                    t.values.rows(),
                    t.values.cols(),
                    first.values.rows(),
                    first.values.cols()
                )));
            }
        }
        Ok(())
    }
}

/// Check that datasets do not share session ids across splits.
pub fn validate_disjoint_splits(datasets: &[&Dataset]) -> Result<()> {
    let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
    for ds in datasets {
        for t in &ds.tensors {
            if let Some(prev) = seen.insert(&t.session_id, ds.split) {
                if prev != ds.split {
                    return Err(Error::InvalidInput(format!(
                        "session {} appears in both {} and {}",
                        t.session_id, prev, ds.split
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Keep exactly the metrics present (any non-zero reading) in strictly more
/// than `presence_threshold` of the traces, in sorted order.
pub fn build_vocabulary(traces: &[RawTrace], presence_threshold: f64) -> Result<MetricVocabulary> {
    if traces.is_empty() {
        return Err(Error::InvalidInput("no traces to build vocabulary from".into()));
    }
    if !(0.0..=1.0).contains(&presence_threshold) {
        return Err(Error::InvalidInput(format!(
            "presence threshold {presence_threshold} outside [0, 1]"
        )));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for trace in traces {
        trace.validate()?;
        for (name, readings) in &trace.metrics {
            if readings.iter().any(|&(_, v)| v > 0.0) {
                *counts.entry(name).or_insert(0) += 1;
            }
        }
    }
    let n = traces.len() as f64;
    // BTreeMap iteration already yields names in sorted order.
    let names: Vec<String> = counts
        .into_iter()
        .filter(|&(_, c)| c as f64 / n > presence_threshold)
        .map(|(name, _)| name.to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::ThresholdTooStrict(format!(
            "no metric is present in more than {:.1}% of {} traces",
            presence_threshold * 100.0,
            traces.len()
        )));
    }
    Ok(MetricVocabulary {
        names,
        presence_threshold,
    })
}

/// Min-max scale a series to `[0, 1]`; a constant series maps to all zeros
/// so that "absent" and "flat" read the same downstream.
pub fn scale_column(series: &[f64]) -> Vec<f64> {
    let mut out = series.to_vec();
    scale_column_in_place(&mut out);
    out
}

fn scale_column_in_place(series: &mut [f64]) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in series.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    if range <= 0.0 || series.is_empty() {
        series.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for v in series.iter_mut() {
        *v = (*v - lo) / range;
    }
}

/// Build the fixed-shape scaled tensor for one session.
///
/// Metrics missing from the trace become all-zero columns; a trace sharing
/// no metrics with the vocabulary yields an all-zero tensor, which is valid.
pub fn homogenize(trace: &RawTrace, vocab: &MetricVocabulary, t: usize) -> Result<TraceTensor> {
    if t == 0 {
        return Err(Error::InvalidInput("t must be at least 1".into()));
    }
    trace.validate()?;
    let m = vocab.len();
    let mut values = Matrix::zeros(t, m);
    let mut column = vec![0.0; t];
    for (j, name) in vocab.names.iter().enumerate() {
        let Some(readings) = trace.metrics.get(name) else {
            continue; // zero-filled column
        };
        column.iter_mut().for_each(|v| *v = 0.0);
        // Most recent `t` readings, left-padded with zeros.
        let keep = readings.len().min(t);
        let pad = t - keep;
        for (slot, &(_, v)) in column[pad..].iter_mut().zip(&readings[readings.len() - keep..]) {
            *slot = v;
        }
        scale_column_in_place(&mut column);
        for (i, &v) in column.iter().enumerate() {
            values.set(i, j, v);
        }
    }
    Ok(TraceTensor {
        session_id: trace.session_id.clone(),
        values,
        vocabulary_ref: vocab.hash(),
    })
}

/// Column-major flattening: column 0's `t` values, then column 1's, ...
pub fn stack(tensor: &TraceTensor) -> Vec<f64> {
    stack_values(&tensor.values)
}

pub fn stack_values(values: &Matrix) -> Vec<f64> {
    let (t, m) = (values.rows(), values.cols());
    let mut flat = Vec::with_capacity(t * m);
    for j in 0..m {
        for i in 0..t {
            flat.push(values.get(i, j));
        }
    }
    flat
}

/// Inverse of [`stack`].
pub fn unstack(flat: &[f64], t: usize, m: usize) -> Result<Matrix> {
    if flat.len() != t * m {
        return Err(Error::InvalidInput(format!(
            "stacked length {} is not {t} x {m}",
            flat.len()
        )));
    }
    let mut values = Matrix::zeros(t, m);
    for j in 0..m {
        for i in 0..t {
            values.set(i, j, flat[j * t + i]);
        }
    }
    Ok(values)
}

/// Stack a whole dataset into an n x (t * m) matrix, row per session.
pub fn stack_dataset(tensors: &[TraceTensor]) -> Result<Matrix> {
    if tensors.is_empty() {
        return Err(Error::InvalidInput("no tensors to stack".into()));
    }
    let rows: Vec<Vec<f64>> = tensors.iter().map(stack).collect();
    Matrix::from_rows(rows)
}

/// Read traces from JSON-lines: one `{"session_id", "metrics"}` object per
/// line. Blank lines are skipped.
pub fn read_traces_jsonl(reader: impl BufRead) -> Result<Vec<RawTrace>> {
    let mut traces = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: RawTrace = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidInput(format!("line {}: {e}", lineno + 1))
        })?;
        trace.validate()?;
        traces.push(trace);
    }
    Ok(traces)
}

pub fn write_traces_jsonl(mut writer: impl Write, traces: &[RawTrace]) -> Result<()> {
    for trace in traces {
        serde_json::to_writer(&mut writer, trace)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

//! Contrastive cluster explanation.
//!
//! Given cluster labels over a set of session tensors, these tables rank
//! the objects that characterize each cluster: how often an object is
//! present (any non-zero reading) inside the cluster versus everywhere
//! else, the same for absence, average-value comparisons over present
//! readings, and mutation tests that re-embed each session after zeroing
//! or average-filling one object and record whether its cluster changes.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterModel;
use crate::embed::EmbeddingModel;
use crate::error::{Error, Result};
use crate::ingest::{MetricVocabulary, TraceTensor};

/// Rank objects by `F = presence / (presence + (presence + other) / 2)`;
/// higher means more specific to the cluster. Returns 0 when both rates
/// are 0.
pub fn f1_score(presence: f64, other: f64) -> f64 {
    let denom = presence + 0.5 * (presence + other);
    if denom <= 0.0 {
        return 0.0;
    }
    presence / denom
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationKind {
    Presence,
    Absence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRow {
    pub rank: usize,
    pub object: String,
    /// Rate of the measured condition inside the cluster.
    pub presence: f64,
    /// Rate of the same condition over all other clusters combined.
    pub other: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterExplanation {
    pub cluster: usize,
    pub sessions: usize,
    pub rows: Vec<ExplanationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationTable {
    pub kind: ExplanationKind,
    pub clusters: Vec<ClusterExplanation>,
}

impl ExplanationTable {
    /// Aligned text rendering, one block of `top_n` rows per cluster.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("cluster  rank  object                     presence%   other%     f1\n");
        for cluster in &self.clusters {
            for row in &cluster.rows {
                out.push_str(&format!(
                    "{:>7}  {:>4}  {:<25}  {:>8.2}  {:>7.2}  {:>5.2}\n",
                    cluster.cluster, row.rank, row.object, row.presence, row.other, row.f1
                ));
            }
        }
        out
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cluster", "rank", "object", "presence", "other", "f1"])?;
        for cluster in &self.clusters {
            for row in &cluster.rows {
                w.write_record([
                    cluster.cluster.to_string(),
                    row.rank.to_string(),
                    row.object.clone(),
                    row.presence.to_string(),
                    row.other.to_string(),
                    row.f1.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_inputs(
    dataset: &[TraceTensor],
    vocab: &MetricVocabulary,
    labels: &[usize],
) -> Result<()> {
    if dataset.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} sessions",
            labels.len(),
            dataset.len()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    for tensor in dataset {
        if tensor.values.cols() != vocab.len() {
            return Err(Error::DataMismatch(format!(
                "session {} has {} columns, vocabulary has {}",
                tensor.session_id,
                tensor.values.cols(),
                vocab.len()
            )));
        }
    }
    Ok(())
}

/// Count of sessions per cluster, keyed by label, in label order.
fn cluster_sizes(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut sizes = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_insert(0) += 1;
    }
    sizes
}

fn column_is_present(tensor: &TraceTensor, column: usize) -> bool {
    (0..tensor.values.rows()).any(|row| tensor.values.get(row, column) > 0.0)
}

fn contrast_table(
    dataset: &[TraceTensor],
    vocab: &MetricVocabulary,
    labels: &[usize],
    top_n: usize,
    kind: ExplanationKind,
) -> Result<ExplanationTable> {
    check_inputs(dataset, vocab, labels)?;
    let sizes = cluster_sizes(labels);
    let n = dataset.len();
    let m = vocab.len();

    // Per (cluster, object) presence counts over one pass.
    let mut counts: BTreeMap<usize, Vec<usize>> = sizes
        .keys()
        .map(|&c| (c, vec![0usize; m]))
        .collect();
    let mut totals = vec![0usize; m];
    for (tensor, &label) in dataset.iter().zip(labels) {
        let slots = counts.get_mut(&label).expect("label present in sizes");
        for j in 0..m {
            let hit = match kind {
                ExplanationKind::Presence => column_is_present(tensor, j),
                ExplanationKind::Absence => !column_is_present(tensor, j),
            };
            if hit {
                slots[j] += 1;
                totals[j] += 1;
            }
        }
    }

    let mut clusters = Vec::new();
    for (&cluster, slots) in &counts {
        let inside = sizes[&cluster];
        let outside = n - inside;
        if inside == 0 {
            log::warn!("cluster {cluster} is empty; skipped in explanation table");
            continue;
        }
        let mut rows: Vec<ExplanationRow> = (0..m)
            .map(|j| {
                let presence = slots[j] as f64 / inside as f64;
                let other = if outside > 0 {
                    (totals[j] - slots[j]) as f64 / outside as f64
                } else {
                    0.0
                };
                ExplanationRow {
                    rank: 0,
                    object: vocab.names[j].clone(),
                    presence,
                    other,
                    f1: f1_score(presence, other),
                }
            })
            .collect();
        rows.sort_by(|a, b| {
            b.f1.partial_cmp(&a.f1)
                .expect("finite f1")
                .then_with(|| a.object.cmp(&b.object))
        });
        rows.truncate(top_n);
        for (i, row) in rows.iter_mut().enumerate() {
            row.rank = i + 1;
        }
        clusters.push(ClusterExplanation {
            cluster,
            sessions: inside,
            rows,
        });
    }
    Ok(ExplanationTable { kind, clusters })
}

/// Per cluster, the `top_n` objects most specific to it by presence rate.
pub fn presence_table(
    dataset: &[TraceTensor],
    vocab: &MetricVocabulary,
    labels: &[usize],
    top_n: usize,
) -> Result<ExplanationTable> {
    contrast_table(dataset, vocab, labels, top_n, ExplanationKind::Presence)
}

/// Same machinery with presence replaced by the all-zero condition.
pub fn absence_table(
    dataset: &[TraceTensor],
    vocab: &MetricVocabulary,
    labels: &[usize],
    top_n: usize,
) -> Result<ExplanationTable> {
    contrast_table(dataset, vocab, labels, top_n, ExplanationKind::Absence)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageValueRow {
    pub cluster: usize,
    pub object: String,
    /// Mean over non-zero readings of in-cluster sessions where present.
    pub mean_in: f64,
    /// Same over all other clusters.
    pub mean_other: f64,
    pub ratio: f64,
}

/// Compare average object values between each cluster and the rest.
///
/// Objects present in less than `min_presence` of a cluster's sessions are
/// excluded there; rows with a zero denominator are dropped. Rows are
/// ranked by `|ln ratio|` descending, `top_n` per cluster.
pub fn average_value_table(
    dataset: &[TraceTensor],
    vocab: &MetricVocabulary,
    labels: &[usize],
    min_presence: f64,
    top_n: usize,
) -> Result<Vec<AverageValueRow>> {
    if !(0.0..=1.0).contains(&min_presence) {
        return Err(Error::InvalidInput(format!(
            "min presence {min_presence} outside [0, 1]"
        )));
    }
    check_inputs(dataset, vocab, labels)?;
    let sizes = cluster_sizes(labels);
    let m = vocab.len();

    // (sum of non-zero readings, count of non-zero readings, sessions with
    // any non-zero reading) per cluster and object.
    #[derive(Clone, Default)]
    struct Accumulator {
        sum: f64,
        readings: usize,
        sessions: usize,
    }
    let mut acc: BTreeMap<usize, Vec<Accumulator>> = sizes
        .keys()
        .map(|&c| (c, vec![Accumulator::default(); m]))
        .collect();
    for (tensor, &label) in dataset.iter().zip(labels) {
        let slots = acc.get_mut(&label).expect("label present");
        for j in 0..m {
            let mut any = false;
            for i in 0..tensor.values.rows() {
                let v = tensor.values.get(i, j);
                if v > 0.0 {
                    slots[j].sum += v;
                    slots[j].readings += 1;
                    any = true;
                }
            }
            if any {
                slots[j].sessions += 1;
            }
        }
    }

    let mut rows = Vec::new();
    for (&cluster, slots) in &acc {
        let inside = sizes[&cluster];
        let mut cluster_rows: Vec<AverageValueRow> = Vec::new();
        for j in 0..m {
            let presence = slots[j].sessions as f64 / inside as f64;
            if presence < min_presence || slots[j].readings == 0 {
                continue;
            }
            let mean_in = slots[j].sum / slots[j].readings as f64;
            let mut other_sum = 0.0;
            let mut other_count = 0usize;
            for (&other_cluster, other_slots) in &acc {
                if other_cluster != cluster {
                    other_sum += other_slots[j].sum;
                    other_count += other_slots[j].readings;
                }
            }
            if other_count == 0 {
                continue; // zero denominator: dropped
            }
            let mean_other = other_sum / other_count as f64;
            if mean_other <= 0.0 {
                continue;
            }
            cluster_rows.push(AverageValueRow {
                cluster,
                object: vocab.names[j].clone(),
                mean_in,
                mean_other,
                ratio: mean_in / mean_other,
            });
        }
        cluster_rows.sort_by(|a, b| {
            let ka = a.ratio.ln().abs();
            let kb = b.ratio.ln().abs();
            kb.partial_cmp(&ka)
                .expect("finite ratios")
                .then_with(|| a.object.cmp(&b.object))
        });
        cluster_rows.truncate(top_n);
        rows.extend(cluster_rows);
    }
    Ok(rows)
}

pub fn write_average_value_csv(rows: &[AverageValueRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cluster", "object", "mean_in", "mean_other", "ratio"])?;
    for row in rows {
        w.write_record([
            row.cluster.to_string(),
            row.object.clone(),
            row.mean_in.to_string(),
            row.mean_other.to_string(),
            row.ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationKind {
    /// A present object's column is set to all zeros.
    ZeroOut,
    /// An absent object's column is filled with its calibration-set mean.
    FillAverage,
}

impl std::fmt::Display for MutationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MutationKind::ZeroOut => write!(f, "zero-out"),
            MutationKind::FillAverage => write!(f, "fill-average"),
        }
    }
}

/// One (session, object) mutation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationRecord {
    pub session_id: String,
    pub cluster: usize,
    pub object: String,
    pub kind: MutationKind,
    pub original: usize,
    pub mutated: usize,
    pub changed: bool,
}

/// Aggregated flip rate per (cluster, object, kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationSummaryRow {
    pub cluster: usize,
    pub object: String,
    pub kind: MutationKind,
    pub sessions: usize,
    pub changed: usize,
    pub change_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MutationReport {
    pub records: Vec<MutationRecord>,
}

impl MutationReport {
    pub fn summarize(&self) -> Vec<MutationSummaryRow> {
        let mut agg: BTreeMap<(usize, &str, MutationKind), (usize, usize)> = BTreeMap::new();
        for r in &self.records {
            let entry = agg.entry((r.cluster, r.object.as_str(), r.kind)).or_insert((0, 0));
            entry.0 += 1;
            entry.1 += usize::from(r.changed);
        }
        agg.into_iter()
            .map(|((cluster, object, kind), (sessions, changed))| MutationSummaryRow {
                cluster,
                object: object.to_string(),
                kind,
                sessions,
                changed,
                change_rate: changed as f64 / sessions as f64,
            })
            .collect()
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "session_id",
            "cluster",
            "object",
            "kind",
            "original",
            "mutated",
            "changed",
        ])?;
        for r in &self.records {
            w.write_record([
                r.session_id.clone(),
                r.cluster.to_string(),
                r.object.clone(),
                r.kind.to_string(),
                r.original.to_string(),
                r.mutated.to_string(),
                r.changed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cluster", "object", "kind", "sessions", "changed", "change_rate"])?;
        for r in self.summarize() {
            w.write_record([
                r.cluster.to_string(),
                r.object.clone(),
                r.kind.to_string(),
                r.sessions.to_string(),
                r.changed.to_string(),
                r.change_rate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean over non-zero readings across all sessions, per object; 0 for
/// objects that are present nowhere.
pub fn object_averages(dataset: &[TraceTensor], m: usize) -> Vec<f64> {
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for tensor in dataset {
        for j in 0..m {
            for i in 0..tensor.values.rows() {
                let v = tensor.values.get(i, j);
                if v > 0.0 {
                    sums[j] += v;
                    counts[j] += 1;
                }
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

/// Mutate every (session, object) pair — zeroing present objects, filling
/// absent ones with the object's calibration average — re-embed, re-assign
/// to the nearest centroid and record label changes.
///
/// `labels` must be the model's own assignments for `dataset`.
pub fn mutation_test(
    model: &EmbeddingModel,
    cluster_model: &ClusterModel,
    dataset: &[TraceTensor],
    vocab: &MetricVocabulary,
    labels: &[usize],
) -> Result<MutationReport> {
    check_inputs(dataset, vocab, labels)?;
    let m = vocab.len();
    let averages = object_averages(dataset, m);

    let records: Vec<Vec<MutationRecord>> = dataset
        .par_iter()
        .zip(labels.par_iter())
        .map(|(tensor, &label)| -> Result<Vec<MutationRecord>> {
            let mut out = Vec::with_capacity(m);
            for j in 0..m {
                let present = column_is_present(tensor, j);
                let (kind, fill) = if present {
                    (MutationKind::ZeroOut, 0.0)
                } else {
                    (MutationKind::FillAverage, averages[j])
                };
                let mut mutated = tensor.clone();
                for i in 0..mutated.values.rows() {
                    mutated.values.set(i, j, fill);
                }
                let embedding = model.embed(&mutated)?;
                let (nearest, _) = cluster_model.nearest(&embedding.vector);
                out.push(MutationRecord {
                    session_id: tensor.session_id.clone(),
                    cluster: label,
                    object: vocab.names[j].clone(),
                    kind,
                    original: label,
                    mutated: nearest,
                    changed: nearest != label,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(MutationReport {
        records: records.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use proptest::prelude::*;

    fn vocab(names: &[&str]) -> MetricVocabulary {
        MetricVocabulary {
            names: names.iter().map(|s| s.to_string()).collect(),
            presence_threshold: 0.0,
        }
    }

    fn tensor(id: &str, columns: &[&[f64]]) -> TraceTensor {
        let t = columns[0].len();
        let mut values = Matrix::zeros(t, columns.len());
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values.set(i, j, v);
            }
        }
        TraceTensor {
            session_id: id.into(),
            values,
            vocabulary_ref: "v".into(),
        }
    }

    #[test]
    fn f1_reference_pairs() {
        // Published reference rows for this ranking formula.
        assert!((f1_score(0.50, 0.12) - 0.62).abs() < 0.005);
        assert!((f1_score(0.72, 0.08) - 0.64).abs() < 0.005);
        // Symmetric rates pin F at one half.
        assert!((f1_score(0.3, 0.3) - 0.5).abs() < 1e-12);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    proptest! {
        #[test]
        fn f1_monotonicity(p in 0.01f64..1.0, o in 0.0f64..1.0, delta in 0.01f64..0.5) {
            let base = f1_score(p, o);
            prop_assert!((0.0..=1.0).contains(&base));
            if p + delta <= 1.0 {
                prop_assert!(f1_score(p + delta, o) > base);
            }
            if o + delta <= 1.0 {
                prop_assert!(f1_score(p, o + delta) < base);
            }
        }
    }

    fn contrast_fixture() -> (Vec<TraceTensor>, MetricVocabulary, Vec<usize>) {
        // Cluster 0: "hot" present in both sessions, "shared" in both.
        // Cluster 1: "hot" absent, "shared" present in both.
        let v = vocab(&["hot", "shared"]);
        let dataset = vec![
            tensor("a", &[&[1.0, 1.0], &[0.5, 0.5]]),
            tensor("b", &[&[2.0, 0.0], &[0.5, 0.5]]),
            tensor("c", &[&[0.0, 0.0], &[0.5, 0.5]]),
            tensor("d", &[&[0.0, 0.0], &[0.5, 0.5]]),
        ];
        (dataset, v, vec![0, 0, 1, 1])
    }

    #[test]
    fn presence_table_ranks_the_defining_object_first() {
        let (dataset, v, labels) = contrast_fixture();
        let table = presence_table(&dataset, &v, &labels, 2).unwrap();
        let cluster0 = &table.clusters[0];
        assert_eq!(cluster0.cluster, 0);
        assert_eq!(cluster0.rows[0].object, "hot");
        assert_eq!(cluster0.rows[0].rank, 1);
        assert!((cluster0.rows[0].presence - 1.0).abs() < 1e-12);
        assert!((cluster0.rows[0].other - 0.0).abs() < 1e-12);
        // shared is present everywhere: uninformative F = 0.5.
        assert!((cluster0.rows[1].f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn absence_complements_presence() {
        let (dataset, v, labels) = contrast_fixture();
        let presence = presence_table(&dataset, &v, &labels, 2).unwrap();
        let absence = absence_table(&dataset, &v, &labels, 2).unwrap();
        for (pc, ac) in presence.clusters.iter().zip(&absence.clusters) {
            for object in ["hot", "shared"] {
                let p = pc.rows.iter().find(|r| r.object == object);
                let a = ac.rows.iter().find(|r| r.object == object);
                if let (Some(p), Some(a)) = (p, a) {
                    assert!((p.presence + a.presence - 1.0).abs() < 1e-12);
                    assert!((p.other + a.other - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn object_absent_everywhere_is_uninformative() {
        let v = vocab(&["ghost", "shared"]);
        let dataset = vec![
            tensor("a", &[&[0.0, 0.0], &[0.5, 0.5]]),
            tensor("b", &[&[0.0, 0.0], &[0.5, 0.5]]),
            tensor("c", &[&[0.0, 0.0], &[0.5, 0.5]]),
        ];
        let labels = vec![0, 0, 1];
        let table = absence_table(&dataset, &v, &labels, 2).unwrap();
        for cluster in &table.clusters {
            let ghost = cluster.rows.iter().find(|r| r.object == "ghost").unwrap();
            assert!((ghost.presence - 1.0).abs() < 1e-12);
            assert!((ghost.f1 - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn tables_are_invariant_under_session_reordering() {
        let (mut dataset, v, mut labels) = contrast_fixture();
        let forward = presence_table(&dataset, &v, &labels, 2).unwrap();
        dataset.reverse();
        labels.reverse();
        let reversed = presence_table(&dataset, &v, &labels, 2).unwrap();
        assert_eq!(forward, reversed);
    }

    #[test]
    fn average_value_constant_object_has_unit_ratio() {
        let v = vocab(&["flat", "other"]);
        let dataset = vec![
            tensor("a", &[&[0.5, 0.5], &[1.0, 0.0]]),
            tensor("b", &[&[0.5, 0.0], &[1.0, 1.0]]),
            tensor("c", &[&[0.5, 0.5], &[0.0, 1.0]]),
            tensor("d", &[&[0.5, 0.5], &[1.0, 1.0]]),
        ];
        let labels = vec![0, 0, 1, 1];
        let rows = average_value_table(&dataset, &v, &labels, 0.05, 5).unwrap();
        let flat: Vec<&AverageValueRow> = rows.iter().filter(|r| r.object == "flat").collect();
        assert_eq!(flat.len(), 2);
        for row in flat {
            assert!((row.ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn average_value_excludes_below_presence_threshold() {
        // "rare" is present in 1 of 25 sessions of cluster 0 (4%).
        let v = vocab(&["rare", "base"]);
        let mut dataset = Vec::new();
        let mut labels = Vec::new();
        for i in 0..25 {
            let rare = if i == 0 { 1.0 } else { 0.0 };
            dataset.push(tensor(&format!("s{i}"), &[&[rare, 0.0], &[1.0, 1.0]]));
            labels.push(0);
        }
        for i in 0..5 {
            dataset.push(tensor(&format!("o{i}"), &[&[1.0, 1.0], &[1.0, 1.0]]));
            labels.push(1);
        }
        let rows = average_value_table(&dataset, &v, &labels, 0.05, 5).unwrap();
        assert!(!rows
            .iter()
            .any(|r| r.cluster == 0 && r.object == "rare"));
        // In cluster 1 it is present in 100% of sessions, so it stays.
        assert!(rows.iter().any(|r| r.cluster == 1 && r.object == "rare"));
    }

    #[test]
    fn average_value_detects_doubled_magnitude() {
        let v = vocab(&["gauge", "base"]);
        let mut dataset = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            // Cluster 0 carries the doubled gauge readings.
            dataset.push(tensor(&format!("hi{i}"), &[&[0.8, 0.8, 0.0], &[1.0, 0.0, 1.0]]));
            labels.push(0);
            dataset.push(tensor(&format!("lo{i}"), &[&[0.4, 0.4, 0.0], &[1.0, 0.0, 1.0]]));
            labels.push(1);
        }
        let rows = average_value_table(&dataset, &v, &labels, 0.05, 5).unwrap();
        let row = rows
            .iter()
            .find(|r| r.cluster == 0 && r.object == "gauge")
            .unwrap();
        assert!((row.ratio - 2.0).abs() < 1e-9, "ratio {}", row.ratio);
    }

    #[test]
    fn object_averages_ignore_zero_readings() {
        let dataset = vec![
            tensor("a", &[&[1.0, 0.0], &[0.0, 0.0]]),
            tensor("b", &[&[3.0, 0.0], &[0.0, 0.0]]),
        ];
        let averages = object_averages(&dataset, 2);
        assert_eq!(averages[0], 2.0);
        assert_eq!(averages[1], 0.0);
    }

    #[test]
    fn mutation_summary_aggregates_by_cluster_object_kind() {
        let report = MutationReport {
            records: vec![
                MutationRecord {
                    session_id: "a".into(),
                    cluster: 0,
                    object: "x".into(),
                    kind: MutationKind::ZeroOut,
                    original: 0,
                    mutated: 1,
                    changed: true,
                },
                MutationRecord {
                    session_id: "b".into(),
                    cluster: 0,
                    object: "x".into(),
                    kind: MutationKind::ZeroOut,
                    original: 0,
                    mutated: 0,
                    changed: false,
                },
            ],
        };
        let summary = report.summarize();
        assert_eq!(summary.len(), 1);
        assert_eq!(summary[0].sessions, 2);
        assert_eq!(summary[0].changed, 1);
        assert!((summary[0].change_rate - 0.5).abs() < 1e-12);
    }
}

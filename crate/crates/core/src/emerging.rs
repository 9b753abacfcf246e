//! Emerging-crash detection: flag sessions whose embeddings sit farther
//! from every calibrated centroid than a threshold taken from the
//! nearest-centroid distance distribution of the calibration set.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cluster::{nearest_centroid, ClusterModel};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Percentile ladder recorded into every calibrated cluster model.
pub const PERCENTILE_LADDER: [f64; 5] = [0.5, 0.9, 0.95, 0.99, 1.0];

/// Verdict for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergingVerdict {
    pub session_id: String,
    pub nearest_centroid: usize,
    pub distance: f64,
    pub threshold: f64,
    pub flagged: bool,
}

/// Nearest-centroid index and distance for each embedding row.
pub fn nearest_centroid_distances(embeddings: &Matrix, centroids: &Matrix) -> Vec<(usize, f64)> {
    (0..embeddings.rows())
        .map(|i| nearest_centroid(centroids, embeddings.row(i)))
        .collect()
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile_of(values: &[f64], percentile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("empty sample for percentile".into()));
    }
    if !(0.0..=1.0).contains(&percentile) {
        return Err(Error::InvalidInput(format!(
            "percentile {percentile} outside [0, 1]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = sorted.len();
    let rank = ((percentile * n as f64).ceil() as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

/// Threshold = the given percentile of nearest-centroid distances over the
/// validation embeddings.
pub fn calibrate_threshold(
    validation_embeddings: &Matrix,
    centroids: &Matrix,
    percentile: f64,
) -> Result<f64> {
    if validation_embeddings.rows() == 0 {
        return Err(Error::InvalidInput("empty validation set".into()));
    }
    let distances: Vec<f64> = nearest_centroid_distances(validation_embeddings, centroids)
        .into_iter()
        .map(|(_, d)| d)
        .collect();
    percentile_of(&distances, percentile)
}

/// The full percentile ladder for the cluster-model record.
pub fn distance_percentiles(
    validation_embeddings: &Matrix,
    centroids: &Matrix,
) -> Result<Vec<(f64, f64)>> {
    let distances: Vec<f64> = nearest_centroid_distances(validation_embeddings, centroids)
        .into_iter()
        .map(|(_, d)| d)
        .collect();
    PERCENTILE_LADDER
        .iter()
        .map(|&p| Ok((p, percentile_of(&distances, p)?)))
        .collect()
}

/// Pure verdict: flagged iff the nearest-centroid distance exceeds the
/// stored threshold.
pub fn assess(session_id: &str, embedding: &[f64], model: &ClusterModel) -> EmergingVerdict {
    let (nearest, distance) = model.nearest(embedding);
    EmergingVerdict {
        session_id: session_id.to_string(),
        nearest_centroid: nearest,
        distance,
        threshold: model.threshold,
        flagged: distance > model.threshold,
    }
}

/// JSON-lines output: `{"session_id", "cluster", "distance", "flagged"}`.
pub fn write_verdicts_jsonl(verdicts: &[EmergingVerdict], mut writer: impl Write) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        session_id: &'a str,
        cluster: usize,
        distance: f64,
        flagged: bool,
    }
    for v in verdicts {
        serde_json::to_writer(
            &mut writer,
            &Line {
                session_id: &v.session_id,
                cluster: v.nearest_centroid,
                distance: v.distance,
                flagged: v.flagged,
            },
        )?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

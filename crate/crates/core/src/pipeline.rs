//! Phase orchestration: the library entry points behind the CLI commands.
//!
//! Training learns the embedder (and optionally fine-tunes it with cluster
//! centroids), calibration fixes the networks and instantiates the cluster
//! model on held-out data, and the production operations (assign, detect)
//! run incoming raw traces through the full chain. Every step validates
//! the vocabulary/config hash chain before touching data.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::bundle::{ModelBundle, TensorBundle, MODEL_BUNDLE_VERSION};
use crate::cluster::{elbow_select, kmeans_fit, ClusterModel, MetricReport};
use crate::config::PipelineConfig;
use crate::dec::{dec_train, Centroids, DecConfig};
use crate::embed::{train_embedder, TrainConfig};
use crate::emerging::{assess, calibrate_threshold, distance_percentiles, EmergingVerdict};
use crate::error::{Error, Result};
use crate::ingest::{
    build_vocabulary, homogenize, stack_dataset, Dataset, MetricVocabulary, RawTrace, Split,
};
use crate::numerics::Matrix;

/// Homogenize raw traces into a tensor bundle. When `vocabulary` is given
/// (production and validation preprocessing), it is reused instead of
/// being rebuilt from the input.
pub fn preprocess(
    traces: &[RawTrace],
    config: &PipelineConfig,
    vocabulary: Option<MetricVocabulary>,
    split: Split,
) -> Result<TensorBundle> {
    config.validate()?;
    if traces.is_empty() {
        return Err(Error::InvalidInput("no traces to preprocess".into()));
    }
    let vocabulary = match vocabulary {
        Some(v) => v,
        None => build_vocabulary(traces, config.presence_threshold)?,
    };
    let tensors = traces
        .iter()
        .map(|trace| homogenize(trace, &vocabulary, config.t))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset { tensors, split };
    TensorBundle::from_dataset(&dataset, config.t, vocabulary)
}

/// Train the embedder on a tensor bundle; when `dec_enabled`, follow with
/// centroid/encoder fine-tuning seeded by K-Means at `dec_k`.
pub fn train(tensors: &TensorBundle, config: &PipelineConfig, app_version: &str) -> Result<ModelBundle> {
    config.validate()?;
    if tensors.is_empty() {
        return Err(Error::InvalidInput("empty tensor bundle".into()));
    }
    let dataset = tensors.to_dataset()?;
    let train_config = TrainConfig {
        variant: config.variant,
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        optimizer: config.optimizer,
        z_len: config.z_len,
        seed: config.seed,
    };
    let (mut embedder, training_curve) = train_embedder(&dataset, &train_config)?;

    let dec_centroids = if config.dec_enabled {
        let stacked = stack_dataset(&dataset.tensors)?;
        let embeddings = embedder.embed_matrix(&stacked)?;
        let fit = kmeans_fit(&embeddings, config.dec_k, config.seed, config.kmeans_restarts)?;
        let initial = Centroids::new(fit.centroids)?;
        let dec_config = DecConfig {
            iterations: config.dec_iterations,
            update_interval: config.dec_update_interval,
            learning_rate: config.dec_learning_rate,
            optimizer: config.optimizer,
            joint_reconstruction: config.dec_joint_reconstruction,
        };
        let outcome = dec_train(&mut embedder, &stacked, initial, &dec_config)?;
        Some(outcome.centroids)
    } else {
        None
    };

    Ok(ModelBundle {
        format_version: MODEL_BUNDLE_VERSION,
        app_version: app_version.to_string(),
        config_hash: config.hash(),
        config: config.clone(),
        vocabulary_hash: tensors.vocabulary_hash.clone(),
        vocabulary: tensors.vocabulary.clone(),
        embedder,
        training_curve,
        dec_centroids,
        cluster_model: None,
    })
}

/// Calibration: embed the validation bundle, pick the cluster count by
/// elbow over `k_range`, fit the final K-Means, and record the distance
/// percentile ladder plus the emerging threshold.
pub fn calibrate(
    bundle: &ModelBundle,
    validation: &TensorBundle,
    k_range: std::ops::RangeInclusive<usize>,
    percentile: f64,
) -> Result<(ModelBundle, MetricReport)> {
    bundle.check_tensor_bundle(validation)?;
    if validation.is_empty() {
        return Err(Error::InvalidInput("empty validation bundle".into()));
    }
    let dataset = validation.to_dataset()?;
    let (_, embeddings) = bundle.embedder.embed_dataset(&dataset.tensors)?;
    let seed = bundle.config.seed;
    let restarts = bundle.config.kmeans_restarts;
    let (k_prime, report) = elbow_select(&embeddings, k_range, seed, restarts)?;
    let fit = kmeans_fit(&embeddings, k_prime, seed, restarts)?;
    let threshold = calibrate_threshold(&embeddings, &fit.centroids, percentile)?;
    let percentiles = distance_percentiles(&embeddings, &fit.centroids)?;
    let cluster_model = ClusterModel {
        k_prime,
        centroids: fit.centroids,
        distance_percentiles: percentiles,
        threshold,
        threshold_percentile: percentile,
    };
    let mut calibrated = bundle.clone();
    calibrated.cluster_model = Some(cluster_model);
    Ok((calibrated, report))
}

/// One production label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub session_id: String,
    pub cluster: usize,
}

/// Preprocess raw traces with the bundle's own vocabulary and t.
pub fn preprocess_with_bundle(bundle: &ModelBundle, traces: &[RawTrace]) -> Result<Dataset> {
    let tensors = traces
        .iter()
        .map(|trace| homogenize(trace, &bundle.vocabulary, bundle.embedder.t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        tensors,
        split: Split::Production,
    })
}

/// Assign each raw trace to its nearest calibrated centroid.
pub fn assign(bundle: &ModelBundle, traces: &[RawTrace]) -> Result<Vec<Assignment>> {
    let cluster_model = bundle.require_cluster_model()?;
    let dataset = preprocess_with_bundle(bundle, traces)?;
    let (ids, embeddings) = bundle.embedder.embed_dataset(&dataset.tensors)?;
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, session_id)| {
            let (cluster, _) = cluster_model.nearest(embeddings.row(i));
            Assignment {
                session_id,
                cluster,
            }
        })
        .collect())
}

/// Emerging-crash verdicts for raw traces.
pub fn detect(bundle: &ModelBundle, traces: &[RawTrace]) -> Result<Vec<EmergingVerdict>> {
    let cluster_model = bundle.require_cluster_model()?;
    let dataset = preprocess_with_bundle(bundle, traces)?;
    let (ids, embeddings) = bundle.embedder.embed_dataset(&dataset.tensors)?;
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, id)| assess(id, embeddings.row(i), cluster_model))
        .collect())
}

/// Embeddings of a tensor bundle under a model bundle, hash-checked.
pub fn embed_bundle(bundle: &ModelBundle, tensors: &TensorBundle) -> Result<(Vec<String>, Matrix)> {
    bundle.check_tensor_bundle(tensors)?;
    let dataset = tensors.to_dataset()?;
    bundle.embedder.embed_dataset(&dataset.tensors)
}

pub fn write_assignments_jsonl(assignments: &[Assignment], mut writer: impl Write) -> Result<()> {
    for a in assignments {
        serde_json::to_writer(&mut writer, a)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_assignments_jsonl(reader: impl BufRead) -> Result<Vec<Assignment>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let a: Assignment = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))?;
        out.push(a);
    }
    Ok(out)
}

/// Match label records to the bundle's session order; every session must
/// be labeled.
pub fn labels_for_sessions(assignments: &[Assignment], session_ids: &[String]) -> Result<Vec<usize>> {
    let by_id: std::collections::BTreeMap<&str, usize> = assignments
        .iter()
        .map(|a| (a.session_id.as_str(), a.cluster))
        .collect();
    session_ids
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| {
                Error::InvalidInput(format!("no label for session {id}"))
            })
        })
        .collect()
}

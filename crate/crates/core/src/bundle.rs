//! Artifact persistence: tensor bundles (preprocessed datasets) and model
//! bundles (trained embedder plus calibration state).
//!
//! Both formats are versioned JSON with a content hash, so any command can
//! refuse artifacts that were tampered with or that belong to a different
//! preprocessing run. Serialization is canonical: re-serializing a loaded
//! bundle reproduces the original bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterModel;
use crate::config::PipelineConfig;
use crate::dec::Centroids;
use crate::embed::{EmbeddingModel, TrainingCurve};
use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::ingest::{Dataset, MetricVocabulary, Split, TraceTensor};
use crate::numerics::Matrix;

pub const TENSOR_BUNDLE_VERSION: u32 = 1;
pub const MODEL_BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SerializedTensor {
    session_id: String,
    /// Row-major `t x m` values.
    values: Vec<f64>,
}

/// Preprocessed dataset: fixed-shape scaled tensors plus the vocabulary
/// they were built against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBundle {
    pub format_version: u32,
    pub split: Split,
    pub t: usize,
    pub vocabulary: MetricVocabulary,
    pub vocabulary_hash: String,
    sessions: Vec<SerializedTensor>,
}

impl TensorBundle {
    pub fn from_dataset(dataset: &Dataset, t: usize, vocabulary: MetricVocabulary) -> Result<Self> {
        dataset.validate()?;
        let vocabulary_hash = vocabulary.hash();
        for tensor in &dataset.tensors {
            if tensor.vocabulary_ref != vocabulary_hash {
                return Err(Error::DataMismatch(format!(
                    "session {} does not match the bundle vocabulary",
                    tensor.session_id
                )));
            }
        }
        Ok(Self {
            format_version: TENSOR_BUNDLE_VERSION,
            split: dataset.split,
            t,
            vocabulary,
            vocabulary_hash,
            sessions: dataset
                .tensors
                .iter()
                .map(|tensor| SerializedTensor {
                    session_id: tensor.session_id.clone(),
                    values: tensor.values.data().to_vec(),
                })
                .collect(),
        })
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        let m = self.vocabulary.len();
        let tensors = self
            .sessions
            .iter()
            .map(|s| {
                Ok(TraceTensor {
                    session_id: s.session_id.clone(),
                    values: Matrix::from_vec(self.t, m, s.values.clone())?,
                    vocabulary_ref: self.vocabulary_hash.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            tensors,
            split: self.split,
        })
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_with_hash(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bundle: Self = load_with_hash(path)?;
        if bundle.format_version != TENSOR_BUNDLE_VERSION {
            return Err(Error::InvalidState(format!(
                "unsupported tensor bundle version {}",
                bundle.format_version
            )));
        }
        if bundle.vocabulary.hash() != bundle.vocabulary_hash {
            return Err(Error::DataMismatch("vocabulary hash mismatch in bundle".into()));
        }
        Ok(bundle)
    }
}

/// Trained embedder plus everything needed to serve a deployment: the
/// vocabulary, fine-tuned centroids, calibrated cluster model and
/// threshold, tagged with the application version it was trained for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub app_version: String,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub vocabulary: MetricVocabulary,
    pub vocabulary_hash: String,
    pub embedder: EmbeddingModel,
    pub training_curve: TrainingCurve,
    /// Fine-tuned centroids (`dec_k` rows), when fine-tuning ran.
    pub dec_centroids: Option<Centroids>,
    /// Calibration output; absent until `calibrate` runs.
    pub cluster_model: Option<ClusterModel>,
}

impl ModelBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_with_hash(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bundle: Self = load_with_hash(path)?;
        if bundle.format_version != MODEL_BUNDLE_VERSION {
            return Err(Error::InvalidState(format!(
                "unsupported model bundle version {}",
                bundle.format_version
            )));
        }
        if bundle.vocabulary.hash() != bundle.vocabulary_hash {
            return Err(Error::DataMismatch("vocabulary hash mismatch in bundle".into()));
        }
        if bundle.embedder.vocabulary_hash != bundle.vocabulary_hash {
            return Err(Error::DataMismatch(
                "embedder was trained against a different vocabulary".into(),
            ));
        }
        Ok(bundle)
    }

    /// The cluster model, or an invalid-state error when the bundle has
    /// not been calibrated yet.
    pub fn require_cluster_model(&self) -> Result<&ClusterModel> {
        self.cluster_model.as_ref().ok_or_else(|| {
            Error::InvalidState(
                "bundle is not calibrated; run calibrate before assign/detect/explain".into(),
            )
        })
    }

    /// Refuse tensor bundles from a different preprocessing run.
    pub fn check_tensor_bundle(&self, tensors: &TensorBundle) -> Result<()> {
        if tensors.vocabulary_hash != self.vocabulary_hash {
            return Err(Error::DataMismatch(
                "tensor bundle vocabulary does not match the model bundle".into(),
            ));
        }
        if tensors.t != self.embedder.t {
            return Err(Error::DataMismatch(format!(
                "tensor bundle t={} but the model expects t={}",
                tensors.t, self.embedder.t
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct HashedFile<T> {
    content_hash: String,
    payload: T,
}

fn save_with_hash<T: Serialize>(path: &Path, payload: &T) -> Result<()> {
    let json = serde_json::to_string(payload)?;
    let wrapper = HashedFile {
        content_hash: sha256_hex(json.as_bytes()),
        payload: serde_json::value::RawValue::from_string(json)?,
    };
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut writer, &wrapper)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

fn load_with_hash<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    let wrapper: HashedFile<Box<serde_json::value::RawValue>> = serde_json::from_reader(reader)?;
    let json = wrapper.payload.get();
    if sha256_hex(json.as_bytes()) != wrapper.content_hash {
        return Err(Error::InvalidState(format!(
            "content hash mismatch in {}; the file was modified or truncated",
            path.display()
        )));
    }
    Ok(serde_json::from_str(json)?)
}

//! Pipeline configuration: one serializable struct whose hash is recorded
//! into every model bundle for provenance.

use serde::{Deserialize, Serialize};

use crate::embed::Variant;
use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::numerics::OptimizerKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Timesteps every session is trimmed or padded to.
    pub t: usize,
    /// Vocabulary presence threshold (fraction of traces).
    pub presence_threshold: f64,
    pub variant: Variant,
    /// Whether encoder/centroid fine-tuning runs after embedding training.
    pub dec_enabled: bool,
    /// Override for the embedding width; `None` applies the default
    /// policy: `(t * m) / 64` for the AE, 256 for the VAE.
    pub z_len: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Cluster count used during fine-tuning; deliberately higher than the
    /// calibrated cluster count.
    pub dec_k: usize,
    pub dec_iterations: usize,
    pub dec_update_interval: usize,
    pub dec_learning_rate: f64,
    /// Keep training the decoder on reconstruction during fine-tuning.
    pub dec_joint_reconstruction: bool,
    /// Inclusive cluster-count range scanned during calibration.
    pub k_range: (usize, usize),
    /// Percentile of validation nearest-centroid distances that sets the
    /// emerging-session threshold.
    pub emerging_percentile: f64,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            t: 100,
            presence_threshold: 0.05,
            variant: Variant::Vae,
            dec_enabled: true,
            z_len: None,
            epochs: 1000,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            dec_k: 20,
            dec_iterations: 300,
            dec_update_interval: 140,
            dec_learning_rate: 0.01,
            dec_joint_reconstruction: false,
            k_range: (2, 10),
            emerging_percentile: 0.95,
            kmeans_restarts: 10,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::InvalidInput("t must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.presence_threshold) {
            return Err(Error::InvalidInput("presence threshold outside [0, 1]".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("epochs and batch size must be positive".into()));
        }
        if self.learning_rate <= 0.0 || self.dec_learning_rate < 0.0 {
            return Err(Error::InvalidInput("learning rates must be positive".into()));
        }
        if self.dec_k < 2 {
            return Err(Error::InvalidInput("dec_k must be at least 2".into()));
        }
        if self.dec_update_interval == 0 {
            return Err(Error::InvalidInput("dec update interval must be positive".into()));
        }
        if self.k_range.0 < 2 || self.k_range.0 > self.k_range.1 {
            return Err(Error::InvalidInput(format!(
                "bad k range {}..={}",
                self.k_range.0, self.k_range.1
            )));
        }
        if !(0.0..=1.0).contains(&self.emerging_percentile) || self.emerging_percentile == 0.0 {
            return Err(Error::InvalidInput("emerging percentile outside (0, 1]".into()));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::InvalidInput("kmeans restarts must be positive".into()));
        }
        if let Some(z) = self.z_len {
            if z == 0 {
                return Err(Error::InvalidInput("z_len must be positive".into()));
            }
        }
        Ok(())
    }

    /// Hash of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(json.as_bytes())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }
}

//! Shared fixtures for the pipeline benchmarks.

use crashprint_core::config::PipelineConfig;
use crashprint_core::ingest::{Dataset, Split};
use crashprint_core::numerics::{Matrix, SeedStream};
use crashprint_core::pipeline::preprocess;
use crashprint_core::synthetic::{generate, SyntheticSpec};

/// A labeled synthetic corpus at benchmark scale.
pub fn corpus(sessions_per_archetype: usize) -> (Vec<crashprint_core::ingest::RawTrace>, Vec<usize>) {
    let spec = SyntheticSpec {
        archetypes: 4,
        sessions_per_archetype,
        metrics: 32,
        defining_per_archetype: 2,
        session_len: (33, 45),
        noise: 0.05,
        sparsity: 0.15,
        faint_presence: 0.08,
        gauge_scales: None,
        seed: 99,
    };
    generate(&spec).expect("benchmark spec is valid")
}

/// Preprocessed dataset for the embedding benchmarks.
pub fn dataset(sessions_per_archetype: usize, t: usize) -> Dataset {
    let (traces, _) = corpus(sessions_per_archetype);
    let config = PipelineConfig {
        t,
        ..PipelineConfig::default()
    };
    preprocess(&traces, &config, None, Split::Train)
        .expect("benchmark corpus preprocesses")
        .to_dataset()
        .expect("bundle converts")
}

/// Gaussian blobs in embedding space for the clustering benchmarks.
pub fn blobs(n_per_cluster: usize, centers: usize, dim: usize) -> Matrix {
    let mut rng = SeedStream::new(7);
    let mut rows = Vec::new();
    for c in 0..centers {
        for _ in 0..n_per_cluster {
            rows.push(
                (0..dim)
                    .map(|d| {
                        let center = if d % centers == c { 6.0 } else { 0.0 };
                        center + rng.standard_normal()
                    })
                    .collect(),
            );
        }
    }
    Matrix::from_rows(rows).expect("rows are rectangular")
}

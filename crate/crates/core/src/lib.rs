//! Fingerprinting and clustering of crashing-session telemetry.
//!
//! A crashing session arrives as a multivariate timeseries of object
//! allocation counts. This crate homogenizes sessions into fixed-shape
//! tensors, trains an autoencoder or variational autoencoder to embed
//! them, refines the encoder jointly with cluster centroids, calibrates a
//! K-Means cluster model with elbow-selected cluster count, flags sessions
//! whose embeddings sit far from every calibrated centroid, and explains
//! clusters through contrastive presence statistics and input mutations.

pub mod bundle;
pub mod cluster;
pub mod config;
pub mod dec;
pub mod embed;
pub mod emerging;
pub mod error;
pub mod explain;
pub mod hash;
pub mod ingest;
pub mod numerics;
pub mod pipeline;
pub mod synthetic;
pub mod tsne;

pub use error::{Error, Result};

//! Exact O(n^2) t-SNE for 2-D visualization of embedding sets.
//!
//! Calibration sets here are at most a few thousand points, so the exact
//! pairwise formulation is fine. Per-point Gaussian bandwidths come from a
//! binary search matching the target perplexity; the low-dimensional
//! affinities use the Student-t kernel; optimization is gradient descent
//! with momentum and per-parameter gains, with early exaggeration up front.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{pairwise_sq_distances, Matrix, SeedStream};

const AFFINITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// Step size; `None` scales with the point count as
    /// `max(n / early_exaggeration, 50)`.
    pub learning_rate: Option<f64>,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iteration: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: None,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iteration: 250,
            seed: 0,
        }
    }
}

/// 2-D projection of a point set, with optional per-point annotations
/// carried through to the CSV export.
#[derive(Debug, Clone)]
pub struct Projection {
    pub coords: Matrix,
    pub labels: Option<Vec<usize>>,
    pub tags: Option<Vec<String>>,
    /// KL objective per gradient iteration (true affinities, no
    /// exaggeration), for convergence checks.
    pub objective_history: Vec<f64>,
}

/// Conditional Gaussian affinities `p(j|i)` with per-point bandwidths found
/// by binary search so that every row's perplexity matches the target.
pub fn conditional_affinities(points: &Matrix, perplexity: f64) -> Result<Matrix> {
    let n = points.rows();
    if perplexity <= 0.0 {
        return Err(Error::InvalidInput("perplexity must be positive".into()));
    }
    if (n as f64) < 3.0 * perplexity {
        return Err(Error::InvalidInput(format!(
            "perplexity {perplexity} too large for {n} points (need n >= 3 * perplexity)"
        )));
    }
    let d2 = pairwise_sq_distances(points, points);
    let target_entropy = perplexity.ln();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let row_d2 = d2.row(i);
        let row_p = p.row_mut(i);
        for _ in 0..200 {
            // p(j|i) for the current precision.
            let mut sum = 0.0;
            for (j, slot) in row_p.iter_mut().enumerate() {
                if j == i {
                    *slot = 0.0;
                } else {
                    *slot = (-beta * row_d2[j]).exp();
                    sum += *slot;
                }
            }
            if sum <= 0.0 {
                // All mass collapsed; soften and retry.
                beta_max = beta;
                beta /= 2.0;
                continue;
            }
            let mut entropy = 0.0;
            for (j, slot) in row_p.iter_mut().enumerate() {
                if j == i {
                    continue;
                }
                *slot /= sum;
                if *slot > AFFINITY_FLOOR {
                    entropy -= *slot * slot.ln();
                }
            }
            let diff = entropy - target_entropy;
            if diff.abs() < 1e-7 {
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_infinite() {
                    beta * 2.0
                } else {
                    (beta + beta_max) / 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() {
                    beta / 2.0
                } else {
                    (beta + beta_min) / 2.0
                };
            }
        }
    }
    Ok(p)
}

/// Symmetrized joint affinities `(p(j|i) + p(i|j)) / 2n`, floored.
fn joint_affinities(conditional: &Matrix) -> Matrix {
    let n = conditional.rows();
    let norm = 2.0 * n as f64;
    let mut joint = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = (conditional.get(i, j) + conditional.get(j, i)) / norm;
            joint.set(i, j, v.max(AFFINITY_FLOOR));
        }
    }
    joint
}

/// Project `points` to 2-D. Deterministic for a fixed seed.
pub fn tsne(points: &Matrix, config: &TsneConfig) -> Result<Projection> {
    let n = points.rows();
    let p_joint = joint_affinities(&conditional_affinities(points, config.perplexity)?);

    let learning_rate = config
        .learning_rate
        .unwrap_or_else(|| (n as f64 / config.early_exaggeration).max(50.0));
    let mut rng = SeedStream::substream(config.seed, 0x7 << 16);
    let mut y: Vec<f64> = (0..n * 2).map(|_| rng.standard_normal() * 1e-4).collect();
    let mut velocity = vec![0.0_f64; n * 2];
    let mut gains = vec![1.0_f64; n * 2];
    let mut objective_history = Vec::with_capacity(config.iterations);

    let mut q_unnorm = Matrix::zeros(n, n);
    for iteration in 0..config.iterations {
        // Student-t affinities in the plane.
        let mut q_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let s = 1.0 / (1.0 + dx * dx + dy * dy);
                q_unnorm.set(i, j, s);
                q_unnorm.set(j, i, s);
                q_sum += 2.0 * s;
            }
        }

        let exaggeration = if iteration < config.exaggeration_iterations {
            config.early_exaggeration
        } else {
            1.0
        };

        // Gradient and (unexaggerated) KL objective in one sweep.
        let mut grad = vec![0.0; n * 2];
        let mut kl = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let p = p_joint.get(i, j);
                let s = q_unnorm.get(i, j);
                let q = (s / q_sum).max(AFFINITY_FLOOR);
                if p > AFFINITY_FLOOR {
                    kl += p * (p.ln() - q.ln());
                }
                let force = 4.0 * (exaggeration * p - q) * s;
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                grad[2 * i] += force * dx;
                grad[2 * i + 1] += force * dy;
            }
        }
        // KL double-counts ordered pairs consistently with symmetric P, Q.
        objective_history.push(kl);

        let momentum = if iteration < config.momentum_switch_iteration {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        for idx in 0..n * 2 {
            let same_sign = grad[idx].signum() == velocity[idx].signum();
            gains[idx] = if same_sign {
                (gains[idx] * 0.8).max(0.01)
            } else {
                gains[idx] + 0.2
            };
            velocity[idx] = momentum * velocity[idx] - learning_rate * gains[idx] * grad[idx];
            y[idx] += velocity[idx];
        }
        // Keep the embedding centered.
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            cx += y[2 * i];
            cy += y[2 * i + 1];
        }
        cx /= n as f64;
        cy /= n as f64;
        for i in 0..n {
            y[2 * i] -= cx;
            y[2 * i + 1] -= cy;
        }
    }

    Ok(Projection {
        coords: Matrix::from_vec(n, 2, y)?,
        labels: None,
        tags: None,
        objective_history,
    })
}

/// Write `session_id,x,y,cluster_label,tag` rows; absent annotations show
/// as empty fields.
pub fn write_projection_csv(
    projection: &Projection,
    session_ids: &[String],
    writer: impl Write,
) -> Result<()> {
    if session_ids.len() != projection.coords.rows() {
        return Err(Error::InvalidInput(format!(
            "{} session ids for {} projected points",
            session_ids.len(),
            projection.coords.rows()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["session_id", "x", "y", "cluster_label", "tag"])?;
    for (i, id) in session_ids.iter().enumerate() {
        let label = projection
            .labels
            .as_ref()
            .map(|l| l[i].to_string())
            .unwrap_or_default();
        let tag = projection
            .tags
            .as_ref()
            .map(|t| t[i].clone())
            .unwrap_or_default();
        w.write_record([
            id.clone(),
            projection.coords.get(i, 0).to_string(),
            projection.coords.get(i, 1).to_string(),
            label,
            tag,
        ])?;
    }
    w.flush()?;
    Ok(())
}

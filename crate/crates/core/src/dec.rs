//! Cluster-aware encoder fine-tuning.
//!
//! After reconstruction training, the encoder is refined jointly with a set
//! of cluster centroids: a Student-t kernel turns embedding/centroid
//! distances into soft assignments Q, a sharpened target distribution P is
//! derived from Q and frozen between refreshes, and gradient steps on
//! KL(P || Q) move both the encoder parameters and the centroids.

use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingModel, Network};
use crate::error::{Error, Result};
use crate::numerics::{
    assign_stack_params, backward, collect_stack_grads, collect_stack_params, forward,
    squared_distance, stack_param_count, Matrix, Optimizer, OptimizerKind,
};

/// Student-t kernel degrees of freedom.
const ALPHA: f64 = 1.0;

/// Floor applied inside logarithms.
const EPS_FLOOR: f64 = 1e-12;

/// Centroids in embedding space, one row per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub vectors: Matrix,
}

impl Centroids {
    pub fn new(vectors: Matrix) -> Result<Self> {
        if vectors.rows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 centroids, got {}",
                vectors.rows()
            )));
        }
        if !vectors.is_finite() {
            return Err(Error::InvalidInput("non-finite centroid".into()));
        }
        Ok(Self { vectors })
    }

    pub fn k(&self) -> usize {
        self.vectors.rows()
    }

    /// Smallest pairwise distance between centroids.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.k() {
            for j in (i + 1)..self.k() {
                let d = squared_distance(self.vectors.row(i), self.vectors.row(j)).sqrt();
                best = best.min(d);
            }
        }
        best
    }
}

/// Row-stochastic soft assignments of points to centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    pub weights: Matrix,
}

/// Row-stochastic sharpened target distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    pub weights: Matrix,
}

/// Student-t soft assignment of each embedding row to each centroid:
/// `q_ij` is proportional to `(1 + d^2/alpha)^-((alpha+1)/2)` with alpha 1.
pub fn soft_assign(embeddings: &Matrix, centroids: &Centroids) -> Result<SoftAssignment> {
    if centroids.k() < 2 {
        return Err(Error::InvalidInput("soft assignment needs k >= 2".into()));
    }
    if embeddings.cols() != centroids.vectors.cols() {
        return Err(Error::InvalidInput(format!(
            "embedding width {} does not match centroid width {}",
            embeddings.cols(),
            centroids.vectors.cols()
        )));
    }
    let n = embeddings.rows();
    let k = centroids.k();
    let mut weights = Matrix::zeros(n, k);
    let exponent = -(ALPHA + 1.0) / 2.0;
    for i in 0..n {
        let row = weights.row_mut(i);
        let mut sum = 0.0;
        for (j, w) in row.iter_mut().enumerate() {
            let d2 = squared_distance(embeddings.row(i), centroids.vectors.row(j));
            *w = (1.0 + d2 / ALPHA).powf(exponent);
            sum += *w;
        }
        for w in row.iter_mut() {
            *w /= sum;
        }
    }
    Ok(SoftAssignment { weights })
}

/// Sharpen assignments: `p_ij` proportional to `q_ij^2 / f_j` with
/// `f_j = sum_i q_ij`, renormalized per row.
pub fn target_distribution(q: &SoftAssignment) -> TargetDistribution {
    let (n, k) = (q.weights.rows(), q.weights.cols());
    let mass = q.weights.column_sums();
    let mut weights = Matrix::zeros(n, k);
    for i in 0..n {
        let src = q.weights.row(i);
        let dst = weights.row_mut(i);
        let mut sum = 0.0;
        for j in 0..k {
            let v = src[j] * src[j] / mass[j].max(EPS_FLOOR);
            dst[j] = v;
            sum += v;
        }
        for v in dst.iter_mut() {
            *v /= sum;
        }
    }
    TargetDistribution { weights }
}

/// `KL(P || Q) = sum_ij p_ij log(p_ij / q_ij)` with an epsilon floor inside
/// the logs and the convention `0 log(0/q) = 0`.
pub fn dec_loss(p: &TargetDistribution, q: &SoftAssignment) -> f64 {
    debug_assert_eq!(p.weights.rows(), q.weights.rows());
    debug_assert_eq!(p.weights.cols(), q.weights.cols());
    let mut acc = 0.0;
    for (pv, qv) in p.weights.data().iter().zip(q.weights.data()) {
        if *pv > 0.0 {
            acc += pv * (pv.max(EPS_FLOOR).ln() - qv.max(EPS_FLOOR).ln());
        }
    }
    acc
}

/// Exact gradients of [`dec_loss`] with respect to the embeddings and the
/// centroids, treating P as constant:
/// `dL/dz_i = 2 sum_j (1 + d_ij^2)^-1 (p_ij - q_ij)(z_i - mu_j)` and the
/// negated sum for `dL/dmu_j` (alpha = 1).
pub fn dec_grads(
    embeddings: &Matrix,
    centroids: &Centroids,
    p: &TargetDistribution,
    q: &SoftAssignment,
) -> (Matrix, Matrix) {
    let (n, k, d) = (embeddings.rows(), centroids.k(), embeddings.cols());
    let mut d_z = Matrix::zeros(n, d);
    let mut d_c = Matrix::zeros(k, d);
    let coeff = (ALPHA + 1.0) / ALPHA;
    for i in 0..n {
        let z = embeddings.row(i);
        for j in 0..k {
            let mu = centroids.vectors.row(j);
            let d2 = squared_distance(z, mu);
            let w = coeff / (1.0 + d2 / ALPHA) * (p.weights.get(i, j) - q.weights.get(i, j));
            for dim in 0..d {
                let diff = z[dim] - mu[dim];
                d_z.row_mut(i)[dim] += w * diff;
                d_c.row_mut(j)[dim] -= w * diff;
            }
        }
    }
    (d_z, d_c)
}

#[derive(Debug, Clone)]
pub struct DecConfig {
    pub iterations: usize,
    /// P is recomputed every this many iterations and frozen in between.
    pub update_interval: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// When set, the decoder keeps training on reconstruction alongside the
    /// KL objective instead of staying frozen.
    pub joint_reconstruction: bool,
}

impl Default for DecConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            update_interval: 140,
            learning_rate: 0.01,
            optimizer: OptimizerKind::Adam,
            joint_reconstruction: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecOutcome {
    pub centroids: Centroids,
    /// KL loss per iteration.
    pub loss_curve: Vec<f64>,
    /// KL loss measured right after each P refresh.
    pub refresh_losses: Vec<f64>,
}

/// Fine-tune the encoder of `model` and the given centroids on KL(P || Q)
/// over the full stacked input matrix (one row per session).
///
/// For the VAE variant the gradients flow into the mean head and the trunk
/// only. The decoder stays frozen unless `joint_reconstruction` is set, in
/// which case the reconstruction loss of the deterministic embedding is
/// added to the objective.
pub fn dec_train(
    model: &mut EmbeddingModel,
    inputs: &Matrix,
    initial_centroids: Centroids,
    config: &DecConfig,
) -> Result<DecOutcome> {
    if inputs.rows() == 0 {
        return Err(Error::InvalidInput("no inputs for cluster fine-tuning".into()));
    }
    if initial_centroids.vectors.cols() != model.z_len() {
        return Err(Error::InvalidInput(format!(
            "centroid width {} does not match embedding width {}",
            initial_centroids.vectors.cols(),
            model.z_len()
        )));
    }
    if config.update_interval == 0 {
        return Err(Error::InvalidInput("update interval must be positive".into()));
    }

    let mut centroids = initial_centroids;
    let encoder_param_count = match &model.network {
        Network::Ae(net) => {
            stack_param_count(&net.encoder)
                + if config.joint_reconstruction {
                    stack_param_count(&net.decoder)
                } else {
                    0
                }
        }
        Network::Vae(net) => {
            stack_param_count(&net.trunk)
                + net.mean_head.param_count()
                + if config.joint_reconstruction {
                    stack_param_count(&net.decoder)
                } else {
                    0
                }
        }
    };
    let total_params = encoder_param_count + centroids.vectors.data().len();
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, total_params);

    let mut target: Option<TargetDistribution> = None;
    let mut loss_curve = Vec::with_capacity(config.iterations);
    let mut refresh_losses = Vec::new();

    for iteration in 0..config.iterations {
        let (embeddings, grads_ctx) = encode_with_tape(model, inputs)?;
        let q = soft_assign(&embeddings, &centroids)?;
        if iteration % config.update_interval == 0 {
            let p = target_distribution(&q);
            refresh_losses.push(dec_loss(&p, &q));
            target = Some(p);
            if centroids.min_pairwise_distance() < 1e-8 {
                log::warn!(
                    "centroid collapse at iteration {iteration}: two centroids nearly coincide"
                );
            }
        }
        let p = target.as_ref().expect("refreshed on iteration 0");
        let mut loss = dec_loss(p, &q);
        let (dz, dc) = dec_grads(&embeddings, &centroids, p, &q);

        let (mut params, mut grads, recon_loss) =
            backprop_encoder(model, grads_ctx, &dz, inputs, config.joint_reconstruction)?;
        loss += recon_loss;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch: iteration,
                message: "non-finite cluster fine-tuning loss".into(),
            });
        }
        loss_curve.push(loss);

        params.extend_from_slice(centroids.vectors.data());
        grads.extend_from_slice(dc.data());
        optimizer.step(&mut params, &grads).map_err(|e| match e {
            Error::TrainingDiverged { message, .. } => Error::TrainingDiverged {
                epoch: iteration,
                message,
            },
            other => other,
        })?;

        let centroid_len = centroids.vectors.data().len();
        let split = params.len() - centroid_len;
        apply_encoder_params(model, &params[..split], config.joint_reconstruction);
        centroids
            .vectors
            .data_mut()
            .copy_from_slice(&params[split..]);
    }

    Ok(DecOutcome {
        centroids,
        loss_curve,
        refresh_losses,
    })
}

/// KL(P || Q) of `inputs` under the model's encoder and `centroids`
/// against a frozen target, together with its exact gradients: encoder
/// parameters (flattened in [`encoder_params`] order) and centroids. This
/// is the per-iteration gradient the fine-tuning loop takes.
pub fn model_kl_gradients(
    model: &EmbeddingModel,
    inputs: &Matrix,
    centroids: &Centroids,
    target: &TargetDistribution,
) -> Result<(f64, Vec<f64>, Matrix)> {
    let (embeddings, ctx) = encode_with_tape(model, inputs)?;
    let q = soft_assign(&embeddings, centroids)?;
    let loss = dec_loss(target, &q);
    let (dz, dc) = dec_grads(&embeddings, centroids, target, &q);
    let (_, grads, _) = backprop_encoder(model, ctx, &dz, inputs, false)?;
    Ok((loss, grads, dc))
}

/// Flat view of the parameters the fine-tuning loop updates (encoder only
/// for the AE; trunk plus mean head for the VAE).
pub fn encoder_params(model: &EmbeddingModel) -> Vec<f64> {
    let mut params = Vec::new();
    match &model.network {
        Network::Ae(net) => collect_stack_params(&net.encoder, &mut params),
        Network::Vae(net) => {
            collect_stack_params(&net.trunk, &mut params);
            params.extend_from_slice(net.mean_head.weights.data());
            params.extend_from_slice(&net.mean_head.bias);
        }
    }
    params
}

/// Inverse of [`encoder_params`].
pub fn set_encoder_params(model: &mut EmbeddingModel, flat: &[f64]) {
    apply_encoder_params(model, flat, false);
}

/// Per-iteration forward state needed to push dL/dz back to parameters.
enum EncodeContext {
    Ae {
        tape: crate::numerics::Tape,
    },
    Vae {
        trunk_tape: crate::numerics::Tape,
        mean_tape: crate::numerics::Tape,
    },
}

fn encode_with_tape(model: &EmbeddingModel, inputs: &Matrix) -> Result<(Matrix, EncodeContext)> {
    match &model.network {
        Network::Ae(net) => {
            let (z, tape) = forward(&net.encoder, inputs)?;
            Ok((z, EncodeContext::Ae { tape }))
        }
        Network::Vae(net) => {
            let (trunk_out, trunk_tape) = forward(&net.trunk, inputs)?;
            let (mean, mean_tape) = forward(std::slice::from_ref(&net.mean_head), &trunk_out)?;
            Ok((
                mean,
                EncodeContext::Vae {
                    trunk_tape,
                    mean_tape,
                },
            ))
        }
    }
}

/// Backpropagate dL/dz into flat parameter/gradient vectors ordered to
/// match [`apply_encoder_params`]. Returns the reconstruction loss when
/// joint reconstruction is enabled (0 otherwise).
fn backprop_encoder(
    model: &EmbeddingModel,
    ctx: EncodeContext,
    dz: &Matrix,
    inputs: &Matrix,
    joint_reconstruction: bool,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let mut params = Vec::new();
    let mut grads = Vec::new();
    let mut recon_loss = 0.0;
    match (&model.network, ctx) {
        (Network::Ae(net), EncodeContext::Ae { tape }) => {
            let mut dz_total = dz.clone();
            let mut dec_grads_opt = None;
            if joint_reconstruction {
                let z = tape.output().clone();
                let (x_hat, dec_tape) = forward(&net.decoder, &z)?;
                let scale = 1.0 / (inputs.rows() * inputs.cols()) as f64;
                let mut d_xhat = Matrix::zeros(inputs.rows(), inputs.cols());
                for i in 0..inputs.rows() {
                    for j in 0..inputs.cols() {
                        let d = x_hat.get(i, j) - inputs.get(i, j);
                        recon_loss += d * d * scale;
                        d_xhat.set(i, j, 2.0 * d * scale);
                    }
                }
                let dec_back = backward(&net.decoder, &dec_tape, &d_xhat)?;
                for (a, b) in dz_total.data_mut().iter_mut().zip(dec_back.input.data()) {
                    *a += b;
                }
                dec_grads_opt = Some(dec_back.layers);
            }
            let enc_back = backward(&net.encoder, &tape, &dz_total)?;
            collect_stack_params(&net.encoder, &mut params);
            collect_stack_grads(&enc_back.layers, &mut grads);
            if let Some(dec_layers) = dec_grads_opt {
                collect_stack_params(&net.decoder, &mut params);
                collect_stack_grads(&dec_layers, &mut grads);
            }
        }
        (
            Network::Vae(net),
            EncodeContext::Vae {
                trunk_tape,
                mean_tape,
            },
        ) => {
            let mut dz_total = dz.clone();
            let mut dec_grads_opt = None;
            if joint_reconstruction {
                let mean = mean_tape.output().clone();
                let (x_hat, dec_tape) = forward(&net.decoder, &mean)?;
                let scale = 1.0 / (inputs.rows() * inputs.cols()) as f64;
                let mut d_xhat = Matrix::zeros(inputs.rows(), inputs.cols());
                for i in 0..inputs.rows() {
                    for j in 0..inputs.cols() {
                        let d = x_hat.get(i, j) - inputs.get(i, j);
                        recon_loss += d * d * scale;
                        d_xhat.set(i, j, 2.0 * d * scale);
                    }
                }
                let dec_back = backward(&net.decoder, &dec_tape, &d_xhat)?;
                for (a, b) in dz_total.data_mut().iter_mut().zip(dec_back.input.data()) {
                    *a += b;
                }
                dec_grads_opt = Some(dec_back.layers);
            }
            let mean_back = backward(std::slice::from_ref(&net.mean_head), &mean_tape, &dz_total)?;
            let trunk_back = backward(&net.trunk, &trunk_tape, &mean_back.input)?;
            collect_stack_params(&net.trunk, &mut params);
            params.extend_from_slice(net.mean_head.weights.data());
            params.extend_from_slice(&net.mean_head.bias);
            collect_stack_grads(&trunk_back.layers, &mut grads);
            collect_stack_grads(&mean_back.layers, &mut grads);
            if let Some(dec_layers) = dec_grads_opt {
                collect_stack_params(&net.decoder, &mut params);
                collect_stack_grads(&dec_layers, &mut grads);
            }
        }
        _ => unreachable!("context built from the same network"),
    }
    Ok((params, grads, recon_loss))
}

fn apply_encoder_params(model: &mut EmbeddingModel, flat: &[f64], joint_reconstruction: bool) {
    let mut offset = 0;
    match &mut model.network {
        Network::Ae(net) => {
            assign_stack_params(&mut net.encoder, flat, &mut offset);
            if joint_reconstruction {
                assign_stack_params(&mut net.decoder, flat, &mut offset);
            }
        }
        Network::Vae(net) => {
            assign_stack_params(&mut net.trunk, flat, &mut offset);
            assign_stack_params(std::slice::from_mut(&mut net.mean_head), flat, &mut offset);
            if joint_reconstruction {
                assign_stack_params(&mut net.decoder, flat, &mut offset);
            }
        }
    }
    debug_assert_eq!(offset, flat.len());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradient_check;

    fn centroids(rows: Vec<Vec<f64>>) -> Centroids {
        Centroids::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn equidistant_point_splits_evenly() {
        let c = centroids(vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
        let z = Matrix::from_vec(1, 2, vec![0.0, 5.0]).unwrap();
        let q = soft_assign(&z, &c).unwrap();
        assert!((q.weights.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((q.weights.get(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_kernel_example() {
        // Centroids {0, 2}, point at 0: q proportional to [1, 1/5].
        let c = centroids(vec![vec![0.0], vec![2.0]]);
        let z = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        let q = soft_assign(&z, &c).unwrap();
        assert!((q.weights.get(0, 0) - 5.0 / 6.0).abs() < 1e-12);
        assert!((q.weights.get(0, 1) - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn rows_sum_to_one_over_random_inputs() {
        let mut rng = crate::numerics::SeedStream::new(23);
        for trial in 0..1000 {
            let k = 2 + trial % 5;
            let c = Centroids::new(Matrix::from_fn(k, 3, |_, _| rng.normal_vec(1)[0] * 3.0)).unwrap();
            let z = Matrix::from_fn(1, 3, |_, _| rng.normal_vec(1)[0] * 3.0);
            let q = soft_assign(&z, &c).unwrap();
            let sum: f64 = q.weights.row(0).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(q.weights.row(0).iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn rejects_single_centroid() {
        assert!(Centroids::new(Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn single_point_target_equals_assignment() {
        // With one point, f_j = q_j so the squares cancel.
        let q = SoftAssignment {
            weights: Matrix::from_vec(1, 2, vec![0.8, 0.2]).unwrap(),
        };
        let p = target_distribution(&q);
        assert!((p.weights.get(0, 0) - 0.8).abs() < 1e-12);
        assert!((p.weights.get(0, 1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn target_hand_example() {
        let q = SoftAssignment {
            weights: Matrix::from_vec(2, 2, vec![0.9, 0.1, 0.5, 0.5]).unwrap(),
        };
        let p = target_distribution(&q);
        // f = [1.4, 0.6]; row 1 is [0.81/1.4, 0.01/0.6] normalized.
        assert!((p.weights.get(0, 0) - 0.972).abs() < 5e-4);
        assert!((p.weights.get(0, 1) - 0.028).abs() < 5e-4);
    }

    #[test]
    fn uniform_assignment_is_a_fixed_point() {
        let q = SoftAssignment {
            weights: Matrix::from_fn(4, 4, |_, _| 0.25),
        };
        let p = target_distribution(&q);
        for &v in p.weights.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn target_sharpens_under_equal_masses() {
        // Permuted rows give equal column masses; each row's maximum must
        // not shrink.
        let rows = vec![
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.5, 0.3],
            vec![0.3, 0.2, 0.5],
        ];
        let q = SoftAssignment {
            weights: Matrix::from_rows(rows).unwrap(),
        };
        let p = target_distribution(&q);
        for i in 0..3 {
            let qmax = q.weights.row(i).iter().cloned().fold(0.0, f64::max);
            let pmax = p.weights.row(i).iter().cloned().fold(0.0, f64::max);
            assert!(pmax >= qmax, "row {i}: {pmax} < {qmax}");
        }
    }

    #[test]
    fn kl_identity_and_hand_value() {
        let q = SoftAssignment {
            weights: Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap(),
        };
        let p_eq = TargetDistribution {
            weights: q.weights.clone(),
        };
        assert!(dec_loss(&p_eq, &q).abs() < 1e-12);
        let p = TargetDistribution {
            weights: Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
        };
        assert!((dec_loss(&p, &q) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative_over_random_stochastic_pairs() {
        let mut rng = crate::numerics::SeedStream::new(77);
        for _ in 0..1000 {
            let make_row = |rng: &mut crate::numerics::SeedStream| {
                let mut row: Vec<f64> = (0..4).map(|_| rng.uniform(1e-3, 1.0)).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= sum);
                row
            };
            let p = TargetDistribution {
                weights: Matrix::from_rows(vec![make_row(&mut rng)]).unwrap(),
            };
            let q = SoftAssignment {
                weights: Matrix::from_rows(vec![make_row(&mut rng)]).unwrap(),
            };
            assert!(dec_loss(&p, &q) >= -1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::numerics::SeedStream::new(41);
        let n = 5;
        let k = 3;
        let d = 4;
        let z = Matrix::from_fn(n, d, |_, _| rng.uniform(-2.0, 2.0));
        let c = Centroids::new(Matrix::from_fn(k, d, |_, _| rng.uniform(-2.0, 2.0))).unwrap();
        let q = soft_assign(&z, &c).unwrap();
        let p = target_distribution(&q);
        let (dz, dc) = dec_grads(&z, &c, &p, &q);

        // Embedding gradients.
        let z_params = z.data().to_vec();
        let p_fixed = p.clone();
        let c_fixed = c.clone();
        let report = gradient_check(
            &z_params,
            dz.data(),
            |flat| {
                let zm = Matrix::from_vec(n, d, flat.to_vec()).unwrap();
                let q2 = soft_assign(&zm, &c_fixed).unwrap();
                dec_loss(&p_fixed, &q2)
            },
            1e-5,
            1e-4,
        );
        assert!(report.passed, "embedding grad rel err {}", report.max_rel_err);

        // Centroid gradients.
        let c_params = c.vectors.data().to_vec();
        let report = gradient_check(
            &c_params,
            dc.data(),
            |flat| {
                let cm = Centroids::new(Matrix::from_vec(k, d, flat.to_vec()).unwrap()).unwrap();
                let q2 = soft_assign(&z, &cm).unwrap();
                dec_loss(&p_fixed, &q2)
            },
            1e-5,
            1e-4,
        );
        assert!(report.passed, "centroid grad rel err {}", report.max_rel_err);
    }

    fn toy_model_and_inputs(seed: u64) -> (EmbeddingModel, Matrix) {
        use crate::embed::{train_embedder, TrainConfig, Variant};
        use crate::ingest::{Dataset, Split, TraceTensor};
        let mut rng = crate::numerics::SeedStream::new(seed);
        let (t, m) = (4, 6);
        let tensors: Vec<TraceTensor> = (0..24)
            .map(|i| {
                let arch = i % 3;
                let values = Matrix::from_fn(t, m, |row, col| {
                    if col / 2 == arch {
                        (row + 1) as f64 / t as f64 * (1.0 + 0.05 * rng.standard_normal()).abs()
                    } else {
                        0.0
                    }
                });
                TraceTensor {
                    session_id: format!("s{i}"),
                    values,
                    vocabulary_ref: "toy".into(),
                }
            })
            .collect();
        let dataset = Dataset {
            tensors,
            split: Split::Train,
        };
        let config = TrainConfig {
            variant: Variant::Ae,
            epochs: 60,
            batch_size: 8,
            learning_rate: 3e-3,
            optimizer: OptimizerKind::Adam,
            z_len: Some(3),
            seed,
        };
        let (model, _) = train_embedder(&dataset, &config).unwrap();
        let inputs = crate::ingest::stack_dataset(&dataset.tensors).unwrap();
        (model, inputs)
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (mut model, inputs) = toy_model_and_inputs(61);
        let z = model.embed_matrix(&inputs).unwrap();
        let init = Centroids::new(Matrix::from_rows(vec![
            z.row(0).to_vec(),
            z.row(1).to_vec(),
        ]).unwrap())
        .unwrap();
        let before = model.clone();
        let cfg = DecConfig {
            iterations: 10,
            update_interval: 5,
            learning_rate: 0.0,
            ..DecConfig::default()
        };
        let outcome = dec_train(&mut model, &inputs, init.clone(), &cfg).unwrap();
        assert_eq!(model, before);
        assert_eq!(outcome.centroids.vectors, init.vectors);
        let first = outcome.loss_curve[0];
        for &l in &outcome.loss_curve {
            assert!((l - first).abs() < 1e-12);
        }
    }

    fn toy2(seed: u64, m: usize, z_len: usize, epochs: usize, amp: f64) -> (EmbeddingModel, Matrix) {
        use crate::embed::{train_embedder, TrainConfig, Variant};
        use crate::ingest::{Dataset, Split, TraceTensor};
        let mut rng = crate::numerics::SeedStream::new(seed);
        let t = 6;
        let per = m / 3;
        let tensors: Vec<TraceTensor> = (0..30)
            .map(|i| {
                let arch = i % 3;
                let values = Matrix::from_fn(t, m, |row, col| {
                    if col / per == arch {
                        (amp * (row + 1) as f64 / t as f64 * (1.0 + 0.05 * rng.standard_normal())).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                });
                TraceTensor { session_id: format!("s{i}"), values, vocabulary_ref: "toy".into() }
            })
            .collect();
        let dataset = Dataset { tensors, split: Split::Train };
        let config = TrainConfig {
            variant: Variant::Ae, epochs, batch_size: 10, learning_rate: 3e-3,
            optimizer: OptimizerKind::Adam, z_len: Some(z_len), seed,
        };
        let (model, _) = train_embedder(&dataset, &config).unwrap();
        let inputs = crate::ingest::stack_dataset(&dataset.tensors).unwrap();
        (model, inputs)
    }

    /// Well-separated archetypes and a trained encoder put the soft
    /// assignments in the sharp regime where each P refresh finds the
    /// embeddings closer to self-consistency than the previous one.
    fn sharp_model_and_inputs(seed: u64) -> (EmbeddingModel, Matrix) {
        use crate::embed::{train_embedder, TrainConfig, Variant};
        use crate::ingest::{Dataset, Split, TraceTensor};
        let mut rng = crate::numerics::SeedStream::new(seed);
        let (t, m) = (6, 12);
        let tensors: Vec<TraceTensor> = (0..30)
            .map(|i| {
                let arch = i % 3;
                let values = Matrix::from_fn(t, m, |row, col| {
                    if col / 4 == arch {
                        ((row + 1) as f64 / t as f64
                            * (1.0 + 0.05 * rng.standard_normal()))
                        .clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                });
                TraceTensor {
                    session_id: format!("s{i}"),
                    values,
                    vocabulary_ref: "toy".into(),
                }
            })
            .collect();
        let dataset = Dataset {
            tensors,
            split: Split::Train,
        };
        let config = TrainConfig {
            variant: Variant::Ae,
            epochs: 60,
            batch_size: 10,
            learning_rate: 3e-3,
            optimizer: OptimizerKind::Adam,
            z_len: Some(3),
            seed,
        };
        let (model, _) = train_embedder(&dataset, &config).unwrap();
        let inputs = crate::ingest::stack_dataset(&dataset.tensors).unwrap();
        (model, inputs)
    }

    #[test]
    fn refresh_losses_do_not_increase_on_synthetic_data() {
        let (mut model, inputs) = sharp_model_and_inputs(62);
        let z = model.embed_matrix(&inputs).unwrap();
        let fit = crate::cluster::kmeans_fit(&z, 3, 62, 4).unwrap();
        let init = Centroids::new(fit.centroids).unwrap();
        let cfg = DecConfig {
            iterations: 120,
            update_interval: 40,
            learning_rate: 1e-3,
            ..DecConfig::default()
        };
        let outcome = dec_train(&mut model, &inputs, init, &cfg).unwrap();
        assert!(outcome.refresh_losses.len() >= 3);
        for w in outcome.refresh_losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "refresh losses {:?}", outcome.refresh_losses);
        }
        // The per-iteration curve also ends below where it started.
        assert!(outcome.loss_curve.last().unwrap() < outcome.loss_curve.first().unwrap());
    }
}

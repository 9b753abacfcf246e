//! Stacking autoencoder and stacking variational autoencoder.
//!
//! Both variants consume the column-stacked `t * m` vector of a session
//! tensor and produce a fixed-length embedding `z`. The AE bottleneck
//! defaults to `(t * m) / 64`; the VAE downscales the input by a factor of
//! 8 into a trunk that feeds mean and log-variance heads with a fixed
//! default width of 256. Inference is deterministic: the VAE embedding is
//! the mean head, never a sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{stack, stack_dataset, Dataset, TraceTensor};
use crate::numerics::{
    assign_stack_params, backward, collect_stack_grads, collect_stack_params, forward,
    stack_param_count, Activation, DenseLayer, Matrix, Optimizer, OptimizerKind, SeedStream, Tape,
};

/// Log-variance head outputs are clamped to this range.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// Default VAE embedding width.
pub const VAE_DEFAULT_Z_LEN: usize = 256;

/// RNG substream ids so the independent draws never overlap.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 1 << 32;
const STREAM_NOISE: u64 = 2 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ae,
    Vae,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Ok(Variant::Ae),
            "vae" => Ok(Variant::Vae),
            other => Err(Error::InvalidInput(format!("unknown variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Ae => write!(f, "ae"),
            Variant::Vae => write!(f, "vae"),
        }
    }
}

/// Default embedding width for a variant at a given input shape.
pub fn default_z_len(variant: Variant, t: usize, m: usize) -> usize {
    match variant {
        Variant::Ae => (t * m / 64).max(1),
        Variant::Vae => VAE_DEFAULT_Z_LEN,
    }
}

/// Hidden width shared by both variants: input reduced by a factor of 8.
pub fn hidden_len(t: usize, m: usize) -> usize {
    (t * m / 8).max(1)
}

/// Encoder/decoder pair: input -> hidden -> z -> hidden -> input, relu in
/// the hidden layers and a sigmoid output since the data lives in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeNet {
    pub encoder: Vec<DenseLayer>,
    pub decoder: Vec<DenseLayer>,
    pub z_len: usize,
}

impl AeNet {
    pub fn new(input_len: usize, z_len: usize, rng: &mut SeedStream) -> Self {
        let hidden = (input_len / 8).max(1);
        let encoder = vec![
            DenseLayer::xavier(input_len, hidden, Activation::Relu, rng),
            DenseLayer::xavier(hidden, z_len, Activation::Linear, rng),
        ];
        let decoder = vec![
            DenseLayer::xavier(z_len, hidden, Activation::Relu, rng),
            DenseLayer::xavier(hidden, input_len, Activation::Sigmoid, rng),
        ];
        Self {
            encoder,
            decoder,
            z_len,
        }
    }

    pub fn input_len(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn param_count(&self) -> usize {
        stack_param_count(&self.encoder) + stack_param_count(&self.decoder)
    }

    /// All parameters as one flat vector: encoder stack, then decoder.
    pub fn collect_params(&self) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        collect_stack_params(&self.encoder, &mut params);
        collect_stack_params(&self.decoder, &mut params);
        params
    }

    pub fn assign_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        assign_stack_params(&mut self.encoder, flat, &mut offset);
        assign_stack_params(&mut self.decoder, flat, &mut offset);
        debug_assert_eq!(offset, flat.len());
    }
}

/// Shared trunk feeding mean and log-variance heads, plus a mirrored
/// decoder from the sampled latent back to the input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeNet {
    pub trunk: Vec<DenseLayer>,
    pub mean_head: DenseLayer,
    pub logvar_head: DenseLayer,
    pub decoder: Vec<DenseLayer>,
    pub z_len: usize,
}

impl VaeNet {
    pub fn new(input_len: usize, z_len: usize, rng: &mut SeedStream) -> Self {
        let hidden = (input_len / 8).max(1);
        let trunk = vec![DenseLayer::xavier(input_len, hidden, Activation::Relu, rng)];
        let mean_head = DenseLayer::xavier(hidden, z_len, Activation::Linear, rng);
        let logvar_head = DenseLayer::xavier(hidden, z_len, Activation::Linear, rng);
        let decoder = vec![
            DenseLayer::xavier(z_len, hidden, Activation::Relu, rng),
            DenseLayer::xavier(hidden, input_len, Activation::Sigmoid, rng),
        ];
        Self {
            trunk,
            mean_head,
            logvar_head,
            decoder,
            z_len,
        }
    }

    pub fn input_len(&self) -> usize {
        self.trunk[0].in_dim()
    }

    pub fn param_count(&self) -> usize {
        stack_param_count(&self.trunk)
            + self.mean_head.param_count()
            + self.logvar_head.param_count()
            + stack_param_count(&self.decoder)
    }

    /// Flat parameter order: trunk, mean head, log-variance head, decoder.
    pub fn collect_params(&self) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        collect_stack_params(&self.trunk, &mut params);
        params.extend_from_slice(self.mean_head.weights.data());
        params.extend_from_slice(&self.mean_head.bias);
        params.extend_from_slice(self.logvar_head.weights.data());
        params.extend_from_slice(&self.logvar_head.bias);
        collect_stack_params(&self.decoder, &mut params);
        params
    }

    pub fn assign_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        assign_stack_params(&mut self.trunk, flat, &mut offset);
        assign_stack_params(std::slice::from_mut(&mut self.mean_head), flat, &mut offset);
        assign_stack_params(std::slice::from_mut(&mut self.logvar_head), flat, &mut offset);
        assign_stack_params(&mut self.decoder, flat, &mut offset);
        debug_assert_eq!(offset, flat.len());
    }

    /// Mean and clamped log-variance for a batch.
    pub fn encode(&self, input: &Matrix) -> Result<(Matrix, Matrix, Tape, Tape, Tape)> {
        let (trunk_out, trunk_tape) = forward(&self.trunk, input)?;
        let (mean, mean_tape) = forward(std::slice::from_ref(&self.mean_head), &trunk_out)?;
        let (mut logvar, logvar_tape) =
            forward(std::slice::from_ref(&self.logvar_head), &trunk_out)?;
        logvar.map_in_place(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX));
        Ok((mean, logvar, trunk_tape, mean_tape, logvar_tape))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Network {
    Ae(AeNet),
    Vae(VaeNet),
}

/// Trained embedder plus the preprocessing contract it was built against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub network: Network,
    pub vocabulary_hash: String,
    pub t: usize,
    pub m: usize,
    pub seed: u64,
}

/// Embedding of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub session_id: String,
    pub vector: Vec<f64>,
}

impl EmbeddingModel {
    pub fn variant(&self) -> Variant {
        match self.network {
            Network::Ae(_) => Variant::Ae,
            Network::Vae(_) => Variant::Vae,
        }
    }

    pub fn z_len(&self) -> usize {
        match &self.network {
            Network::Ae(net) => net.z_len,
            Network::Vae(net) => net.z_len,
        }
    }

    pub fn input_len(&self) -> usize {
        self.t * self.m
    }

    /// Deterministic embedding of one tensor; the tensor must carry the
    /// vocabulary this model was trained against.
    pub fn embed(&self, tensor: &TraceTensor) -> Result<Embedding> {
        if tensor.vocabulary_ref != self.vocabulary_hash {
            return Err(Error::DataMismatch(format!(
                "session {} tensor vocabulary {} does not match model vocabulary {}",
                tensor.session_id, tensor.vocabulary_ref, self.vocabulary_hash
            )));
        }
        if tensor.values.rows() != self.t || tensor.values.cols() != self.m {
            return Err(Error::DataMismatch(format!(
                "session {} tensor is {}x{}, model expects {}x{}",
                tensor.session_id,
                tensor.values.rows(),
                tensor.values.cols(),
                self.t,
                self.m
            )));
        }
        let flat = stack(tensor);
        let input = Matrix::from_vec(1, flat.len(), flat)?;
        let z = self.embed_matrix(&input)?;
        Ok(Embedding {
            session_id: tensor.session_id.clone(),
            vector: z.row(0).to_vec(),
        })
    }

    /// Batch embedding of pre-stacked rows (no vocabulary check).
    pub fn embed_matrix(&self, stacked: &Matrix) -> Result<Matrix> {
        match &self.network {
            Network::Ae(net) => {
                let (z, _) = forward(&net.encoder, stacked)?;
                Ok(z)
            }
            Network::Vae(net) => {
                let (mean, _logvar, _, _, _) = net.encode(stacked)?;
                Ok(mean)
            }
        }
    }

    /// Embed a whole dataset, preserving order.
    pub fn embed_dataset(&self, tensors: &[TraceTensor]) -> Result<(Vec<String>, Matrix)> {
        for tensor in tensors {
            if tensor.vocabulary_ref != self.vocabulary_hash {
                return Err(Error::DataMismatch(format!(
                    "session {} was preprocessed with a different vocabulary",
                    tensor.session_id
                )));
            }
        }
        let ids = tensors.iter().map(|t| t.session_id.clone()).collect();
        let stacked = stack_dataset(tensors)?;
        Ok((ids, self.embed_matrix(&stacked)?))
    }
}

/// Mean squared error between two equally sized vectors.
pub fn mse_loss(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::InvalidInput(format!(
            "mse length mismatch: {} vs {}",
            x.len(),
            x_hat.len()
        )));
    }
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(x_hat) {
        let d = a - b;
        acc += d * d;
    }
    Ok(acc / x.len() as f64)
}

/// `z = mean + exp(logvar / 2) * eps` with `eps` drawn standard normal.
pub fn reparameterize(mean: &[f64], logvar: &[f64], rng: &mut SeedStream) -> Vec<f64> {
    debug_assert_eq!(mean.len(), logvar.len());
    mean.iter()
        .zip(logvar)
        .map(|(&mu, &lv)| mu + (lv / 2.0).exp() * rng.standard_normal())
        .collect()
}

/// Closed-form KL(q(z|x) || N(0, I)) for a diagonal Gaussian posterior.
pub fn gaussian_kl(mean: &[f64], logvar: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&mu, &lv) in mean.iter().zip(logvar) {
        let var = lv.exp();
        acc += mu * mu + var - 1.0 - lv;
    }
    0.5 * acc
}

/// Loss components of one ELBO evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboParts {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// Negative ELBO for a single input: unit-variance Gaussian reconstruction
/// term (half the squared error, constants dropped) plus the closed-form
/// Gaussian KL, with one Monte-Carlo sample via reparameterization.
pub fn elbo_loss(net: &VaeNet, x: &[f64], rng: &mut SeedStream) -> Result<ElboParts> {
    if x.len() != net.input_len() {
        return Err(Error::InvalidInput(format!(
            "elbo input length {} does not match model input {}",
            x.len(),
            net.input_len()
        )));
    }
    let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let (mean, logvar, _, _, _) = net.encode(&input)?;
    let z = reparameterize(mean.row(0), logvar.row(0), rng);
    let z_mat = Matrix::from_vec(1, z.len(), z)?;
    let (x_hat, _) = forward(&net.decoder, &z_mat)?;
    let mut recon = 0.0;
    for (a, b) in x.iter().zip(x_hat.row(0)) {
        let d = a - b;
        recon += d * d;
    }
    recon *= 0.5;
    let kl = gaussian_kl(mean.row(0), logvar.row(0));
    let total = recon + kl;
    if !total.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch: 0,
            message: "non-finite elbo".into(),
        });
    }
    Ok(ElboParts {
        total,
        reconstruction: recon,
        kl,
    })
}

/// Per-epoch mean training losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub total: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub kl: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Override for the default embedding-width policy.
    pub z_len: Option<usize>,
    pub seed: u64,
}

/// Train an embedder on the stacked tensors of `dataset`.
pub fn train_embedder(dataset: &Dataset, config: &TrainConfig) -> Result<(EmbeddingModel, TrainingCurve)> {
    dataset.validate()?;
    let Some(first) = dataset.tensors.first() else {
        return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
    };
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::InvalidInput("epochs and batch size must be positive".into()));
    }
    let (t, m) = (first.values.rows(), first.values.cols());
    let vocabulary_hash = first.vocabulary_ref.clone();
    let z_len = config.z_len.unwrap_or_else(|| default_z_len(config.variant, t, m));
    let inputs = stack_dataset(&dataset.tensors)?;

    let mut init_rng = SeedStream::substream(config.seed, STREAM_INIT);
    let network = match config.variant {
        Variant::Ae => Network::Ae(AeNet::new(t * m, z_len, &mut init_rng)),
        Variant::Vae => Network::Vae(VaeNet::new(t * m, z_len, &mut init_rng)),
    };
    let mut model = EmbeddingModel {
        network,
        vocabulary_hash,
        t,
        m,
        seed: config.seed,
    };

    let curve = match &mut model.network {
        Network::Ae(net) => train_ae(net, &inputs, config)?,
        Network::Vae(net) => train_vae(net, &inputs, config)?,
    };
    Ok((model, curve))
}

/// Mean-MSE reconstruction loss of a batch and its gradient, flattened in
/// [`AeNet::collect_params`] order. This is the exact training gradient.
pub fn ae_loss_and_gradients(net: &AeNet, x: &Matrix) -> Result<(f64, Vec<f64>)> {
    let (z, enc_tape) = forward(&net.encoder, x)?;
    let (x_hat, dec_tape) = forward(&net.decoder, &z)?;
    let scale = 1.0 / (x.rows() * x.cols()) as f64;
    let mut loss = 0.0;
    let mut d_xhat = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let d = x_hat.get(i, j) - x.get(i, j);
            loss += d * d;
            d_xhat.set(i, j, 2.0 * d * scale);
        }
    }
    loss *= scale;
    let dec_grads = backward(&net.decoder, &dec_tape, &d_xhat)?;
    let enc_grads = backward(&net.encoder, &enc_tape, &dec_grads.input)?;
    let mut grads = Vec::with_capacity(net.param_count());
    collect_stack_grads(&enc_grads.layers, &mut grads);
    collect_stack_grads(&dec_grads.layers, &mut grads);
    Ok((loss, grads))
}

fn train_ae(net: &mut AeNet, inputs: &Matrix, config: &TrainConfig) -> Result<TrainingCurve> {
    let n = inputs.rows();
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, net.param_count());
    let mut curve = TrainingCurve::default();

    for epoch in 0..config.epochs {
        let mut order_rng = SeedStream::substream(config.seed, STREAM_SHUFFLE + epoch as u64);
        let order = order_rng.shuffled_indices(n);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = inputs.select_rows(batch);
            let (loss, grads) = ae_loss_and_gradients(net, &x)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    message: "non-finite reconstruction loss".into(),
                });
            }
            epoch_loss += loss * x.rows() as f64;
            let mut params = net.collect_params();
            step_optimizer(&mut optimizer, &mut params, &grads, epoch)?;
            net.assign_params(&params);
        }
        let mean_loss = epoch_loss / n as f64;
        curve.total.push(mean_loss);
        curve.reconstruction.push(mean_loss);
        curve.kl.push(0.0);
    }
    Ok(curve)
}

/// Negative ELBO of a batch under fixed reparameterization noise `eps`
/// (one sample per row), and its gradient flattened in
/// [`VaeNet::collect_params`] order. This is the exact training gradient.
pub fn vae_loss_and_gradients(net: &VaeNet, x: &Matrix, eps: &Matrix) -> Result<(ElboParts, Vec<f64>)> {
    let b = x.rows();
    if eps.rows() != b || eps.cols() != net.z_len {
        return Err(Error::InvalidInput(format!(
            "noise shape {}x{} does not match batch {b} x z {}",
            eps.rows(),
            eps.cols(),
            net.z_len
        )));
    }
    let (mean, logvar, trunk_tape, mean_tape, logvar_tape) = net.encode(x)?;
    let mut z = Matrix::zeros(b, net.z_len);
    let mut sigma = Matrix::zeros(b, net.z_len);
    for i in 0..b {
        for j in 0..net.z_len {
            let s = (logvar.get(i, j) / 2.0).exp();
            sigma.set(i, j, s);
            z.set(i, j, mean.get(i, j) + s * eps.get(i, j));
        }
    }
    let (x_hat, dec_tape) = forward(&net.decoder, &z)?;

    // Reconstruction: 0.5 * sum of squared errors; KL: closed-form
    // Gaussian; both averaged over the batch.
    let inv_b = 1.0 / b as f64;
    let mut recon = 0.0;
    let mut d_xhat = Matrix::zeros(b, x.cols());
    for i in 0..b {
        for j in 0..x.cols() {
            let d = x_hat.get(i, j) - x.get(i, j);
            recon += 0.5 * d * d;
            d_xhat.set(i, j, d * inv_b);
        }
    }
    recon *= inv_b;
    let mut kl = 0.0;
    for i in 0..b {
        kl += gaussian_kl(mean.row(i), logvar.row(i));
    }
    kl *= inv_b;

    let dec_grads = backward(&net.decoder, &dec_tape, &d_xhat)?;
    // dz flows to the mean head directly and to the log-variance head
    // through sigma; the KL term adds its closed-form gradients. Clamped
    // log-variance entries pass no gradient.
    let dz = &dec_grads.input;
    let mut d_mean = Matrix::zeros(b, net.z_len);
    let mut d_logvar = Matrix::zeros(b, net.z_len);
    for i in 0..b {
        for j in 0..net.z_len {
            let lv = logvar.get(i, j);
            let mu = mean.get(i, j);
            d_mean.set(i, j, dz.get(i, j) + mu * inv_b);
            let clamped = lv <= LOGVAR_MIN || lv >= LOGVAR_MAX;
            if !clamped {
                let s = sigma.get(i, j);
                let through_z = dz.get(i, j) * eps.get(i, j) * s / 2.0;
                let through_kl = 0.5 * (s * s - 1.0) * inv_b;
                d_logvar.set(i, j, through_z + through_kl);
            }
        }
    }
    let mean_grads = backward(std::slice::from_ref(&net.mean_head), &mean_tape, &d_mean)?;
    let logvar_grads = backward(
        std::slice::from_ref(&net.logvar_head),
        &logvar_tape,
        &d_logvar,
    )?;
    let mut d_trunk_out = mean_grads.input.clone();
    for (a, b) in d_trunk_out.data_mut().iter_mut().zip(logvar_grads.input.data()) {
        *a += b;
    }
    let trunk_grads = backward(&net.trunk, &trunk_tape, &d_trunk_out)?;

    let mut grads = Vec::with_capacity(net.param_count());
    collect_stack_grads(&trunk_grads.layers, &mut grads);
    collect_stack_grads(&mean_grads.layers, &mut grads);
    collect_stack_grads(&logvar_grads.layers, &mut grads);
    collect_stack_grads(&dec_grads.layers, &mut grads);
    Ok((
        ElboParts {
            total: recon + kl,
            reconstruction: recon,
            kl,
        },
        grads,
    ))
}

fn train_vae(net: &mut VaeNet, inputs: &Matrix, config: &TrainConfig) -> Result<TrainingCurve> {
    let n = inputs.rows();
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, net.param_count());
    let mut curve = TrainingCurve::default();

    for epoch in 0..config.epochs {
        let mut order_rng = SeedStream::substream(config.seed, STREAM_SHUFFLE + epoch as u64);
        let mut noise_rng = SeedStream::substream(config.seed, STREAM_NOISE + epoch as u64);
        let order = order_rng.shuffled_indices(n);
        let mut epoch_total = 0.0;
        let mut epoch_recon = 0.0;
        let mut epoch_kl = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = inputs.select_rows(batch);
            let b = x.rows();
            // One Monte-Carlo sample per evaluation.
            let eps = Matrix::from_fn(b, net.z_len, |_, _| noise_rng.standard_normal());
            let (parts, grads) = vae_loss_and_gradients(net, &x, &eps)?;
            if !parts.total.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    message: "non-finite elbo".into(),
                });
            }
            epoch_total += parts.total * b as f64;
            epoch_recon += parts.reconstruction * b as f64;
            epoch_kl += parts.kl * b as f64;
            let mut params = net.collect_params();
            step_optimizer(&mut optimizer, &mut params, &grads, epoch)?;
            net.assign_params(&params);
        }
        curve.total.push(epoch_total / n as f64);
        curve.reconstruction.push(epoch_recon / n as f64);
        curve.kl.push(epoch_kl / n as f64);
    }
    Ok(curve)
}

fn step_optimizer(
    optimizer: &mut Optimizer,
    params: &mut [f64],
    grads: &[f64],
    epoch: usize,
) -> Result<()> {
    optimizer.step(params, grads).map_err(|e| match e {
        Error::TrainingDiverged { message, .. } => Error::TrainingDiverged { epoch, message },
        other => other,
    })
}

//! Fully-connected layers with exact reverse-mode gradients.
//!
//! A forward pass over a batch records the post-activation value of every
//! layer in a [`Tape`]; `backward` replays it to produce parameter and
//! input gradients. There is no general autodiff here, just the affine +
//! activation compositions the embedders need.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::SeedStream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => {
                // Numerically stable on both tails.
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// One dense layer: `y = act(W x + b)` with `W` stored out x in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Xavier-uniform initialization, zero bias.
    pub fn xavier(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut SeedStream) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = Matrix::from_fn(out_dim, in_dim, |_, _| rng.uniform(-limit, limit));
        Self {
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }
}

/// Post-activation values: `activations[0]` is the input batch,
/// `activations[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Tape {
    pub activations: Vec<Matrix>,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("tape is never empty")
    }
}

/// Gradient of one layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients for a whole layer stack plus the gradient w.r.t. its input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    pub input: Matrix,
}

/// Run a batch (rows = samples) through a layer stack.
pub fn forward(layers: &[DenseLayer], input: &Matrix) -> Result<(Matrix, Tape)> {
    if let Some(first) = layers.first() {
        if input.cols() != first.in_dim() {
            return Err(Error::InvalidInput(format!(
                "input width {} does not match layer input {}",
                input.cols(),
                first.in_dim()
            )));
        }
    }
    let mut activations = Vec::with_capacity(layers.len() + 1);
    activations.push(input.clone());
    for layer in layers {
        let current = activations.last().expect("non-empty");
        let mut out = current.matmul_nt(&layer.weights);
        for i in 0..out.rows() {
            for (v, b) in out.row_mut(i).iter_mut().zip(&layer.bias) {
                *v = layer.activation.apply(*v + b);
            }
        }
        activations.push(out);
    }
    let output = activations.last().expect("non-empty").clone();
    Ok((output, Tape { activations }))
}

/// Exact reverse-mode gradients for a forward pass recorded in `tape`.
///
/// `output_grad` is dL/d(output). Errors with `InvalidState` if the tape
/// does not match the layer stack it claims to describe.
pub fn backward(layers: &[DenseLayer], tape: &Tape, output_grad: &Matrix) -> Result<Gradients> {
    if tape.activations.len() != layers.len() + 1 {
        return Err(Error::InvalidState("stale tape: layer count mismatch".into()));
    }
    for (layer, act) in layers.iter().zip(&tape.activations[1..]) {
        if act.cols() != layer.out_dim() {
            return Err(Error::InvalidState("stale tape: shape mismatch".into()));
        }
    }
    let out = tape.output();
    if output_grad.rows() != out.rows() || output_grad.cols() != out.cols() {
        return Err(Error::InvalidInput("output gradient shape mismatch".into()));
    }

    let mut layer_grads: Vec<LayerGradient> = Vec::with_capacity(layers.len());
    let mut upstream = output_grad.clone();
    for (idx, layer) in layers.iter().enumerate().rev() {
        let layer_out = &tape.activations[idx + 1];
        let layer_in = &tape.activations[idx];
        // d(pre-activation) = upstream (*) act'(out)
        let mut d_pre = upstream;
        for i in 0..d_pre.rows() {
            for (g, &y) in d_pre.row_mut(i).iter_mut().zip(layer_out.row(i)) {
                *g *= layer.activation.derivative_from_output(y);
            }
        }
        let d_weights = d_pre.matmul_tn(layer_in);
        let d_bias = d_pre.column_sums();
        upstream = d_pre.matmul_nn(&layer.weights);
        layer_grads.push(LayerGradient {
            weights: d_weights,
            bias: d_bias,
        });
    }
    layer_grads.reverse();
    Ok(Gradients {
        layers: layer_grads,
        input: upstream,
    })
}

/// Total parameter count of a stack.
pub fn stack_param_count(layers: &[DenseLayer]) -> usize {
    layers.iter().map(DenseLayer::param_count).sum()
}

/// Append all parameters (weights then bias, per layer) to `out`.
pub fn collect_stack_params(layers: &[DenseLayer], out: &mut Vec<f64>) {
    for layer in layers {
        out.extend_from_slice(layer.weights.data());
        out.extend_from_slice(&layer.bias);
    }
}

/// Inverse of [`collect_stack_params`]; advances `offset`.
pub fn assign_stack_params(layers: &mut [DenseLayer], flat: &[f64], offset: &mut usize) {
    for layer in layers {
        let w = layer.weights.data_mut();
        w.copy_from_slice(&flat[*offset..*offset + w.len()]);
        *offset += w.len();
        let n = layer.bias.len();
        layer.bias.copy_from_slice(&flat[*offset..*offset + n]);
        *offset += n;
    }
}

/// Append layer gradients in the same order as [`collect_stack_params`].
pub fn collect_stack_grads(grads: &[LayerGradient], out: &mut Vec<f64>) {
    for g in grads {
        out.extend_from_slice(g.weights.data());
        out.extend_from_slice(&g.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::dot;

    fn vec_forward(layers: &[DenseLayer], x: &[f64]) -> Vec<f64> {
        let input = Matrix::from_vec(1, x.len(), x.to_vec()).unwrap();
        let (out, _) = forward(layers, &input).unwrap();
        out.row(0).to_vec()
    }

    #[test]
    fn identity_linear_layer_is_identity() {
        let layer = DenseLayer {
            weights: Matrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 }),
            bias: vec![0.0; 3],
            activation: Activation::Linear,
        };
        let x = vec![0.5, -2.0, 3.25];
        assert_eq!(vec_forward(&[layer], &x), x);
    }

    #[test]
    fn relu_clamps_negatives() {
        let layer = DenseLayer {
            weights: Matrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.0 }),
            bias: vec![0.0; 2],
            activation: Activation::Relu,
        };
        assert_eq!(vec_forward(&[layer], &[-1.0, 2.0]), vec![0.0, 2.0]);
    }

    // Independent oracle: plain nested-loop affine + activation per layer.
    fn oracle_forward(layers: &[DenseLayer], x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in layers {
            let mut next = vec![0.0; layer.out_dim()];
            for (o, n) in next.iter_mut().enumerate() {
                *n = layer
                    .activation
                    .apply(dot(layer.weights.row(o), &cur) + layer.bias[o]);
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn two_layer_net_matches_hand_rolled_oracle() {
        let mut rng = SeedStream::new(11);
        let layers = vec![
            DenseLayer::xavier(5, 4, Activation::Relu, &mut rng),
            DenseLayer::xavier(4, 3, Activation::Sigmoid, &mut rng),
        ];
        let x = rng.normal_vec(5);
        let got = vec_forward(&layers, &x);
        let want = oracle_forward(&layers, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let layer = DenseLayer {
            weights: Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap(),
            bias: vec![0.0; 2],
            activation: Activation::Linear,
        };
        let x = Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let (_, tape) = forward(std::slice::from_ref(&layer), &x).unwrap();
        let g = Matrix::from_vec(1, 2, vec![10.0, 20.0]).unwrap();
        let grads = backward(std::slice::from_ref(&layer), &tape, &g).unwrap();
        // dL/dW = g x^T
        let want = [10.0, 20.0, 30.0, 20.0, 40.0, 60.0];
        assert_eq!(grads.layers[0].weights.data(), &want);
        assert_eq!(grads.layers[0].bias, vec![10.0, 20.0]);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradients() {
        let mut rng = SeedStream::new(3);
        let layers = vec![
            DenseLayer::xavier(4, 3, Activation::Relu, &mut rng),
            DenseLayer::xavier(3, 2, Activation::Linear, &mut rng),
        ];
        let x = Matrix::from_vec(2, 4, rng.normal_vec(8)).unwrap();
        let (out, tape) = forward(&layers, &x).unwrap();
        let zero = Matrix::zeros(out.rows(), out.cols());
        let grads = backward(&layers, &tape, &zero).unwrap();
        for lg in &grads.layers {
            assert!(lg.weights.data().iter().all(|&v| v == 0.0));
            assert!(lg.bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = SeedStream::new(5);
        let layers = vec![DenseLayer::xavier(3, 2, Activation::Linear, &mut rng)];
        let other = vec![
            DenseLayer::xavier(3, 4, Activation::Linear, &mut rng),
            DenseLayer::xavier(4, 2, Activation::Linear, &mut rng),
        ];
        let x = Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let (out, tape) = forward(&layers, &x).unwrap();
        let g = Matrix::zeros(out.rows(), out.cols());
        assert!(matches!(
            backward(&other, &tape, &g),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn forward_rejects_width_mismatch() {
        let mut rng = SeedStream::new(5);
        let layers = vec![DenseLayer::xavier(3, 2, Activation::Linear, &mut rng)];
        let x = Matrix::from_vec(1, 4, vec![0.0; 4]).unwrap();
        assert!(matches!(forward(&layers, &x), Err(Error::InvalidInput(_))));
    }
}

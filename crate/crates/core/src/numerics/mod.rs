//! Minimal dense neural-network core: matrices, fully-connected layers,
//! reverse-mode gradients, optimizers, seeded RNG and finite-difference
//! gradient verification.

pub mod gradcheck;
pub mod layer;
pub mod matrix;
pub mod optim;
pub mod rng;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use layer::{
    assign_stack_params, backward, collect_stack_grads, collect_stack_params, forward,
    stack_param_count, Activation, DenseLayer, Gradients, LayerGradient, Tape,
};
pub use matrix::{dot, euclidean_distance, pairwise_sq_distances, squared_distance, Matrix};
pub use optim::{Adam, Optimizer, OptimizerKind, Sgd};
pub use rng::{SeedStream, RNG_ALGORITHM};

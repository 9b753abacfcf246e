//! Gradient-descent optimizers over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Adam with bias correction. Moment buffers are shaped like the parameter
/// vector; `step` counts completed updates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, param_count: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_update(params, grads, self.first_moment.len())?;
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            let m = &mut self.first_moment[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            let v = &mut self.second_moment[i];
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    param_count: usize,
}

impl Sgd {
    pub fn new(learning_rate: f64, param_count: usize) -> Self {
        Self {
            learning_rate,
            param_count,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_update(params, grads, self.param_count)?;
        for (p, g) in params.iter_mut().zip(grads) {
            *p -= self.learning_rate * g;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(Adam),
    Sgd(Sgd),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, param_count: usize) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(learning_rate, param_count)),
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd::new(learning_rate, param_count)),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        match self {
            Optimizer::Adam(a) => a.step(params, grads),
            Optimizer::Sgd(s) => s.step(params, grads),
        }
    }
}

fn check_update(params: &[f64], grads: &[f64], expected: usize) -> Result<()> {
    if params.len() != grads.len() || params.len() != expected {
        return Err(Error::InvalidInput(format!(
            "parameter/gradient size mismatch: {} vs {} (state {})",
            params.len(),
            grads.len(),
            expected
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        // Callers attach the epoch index before surfacing this.
        return Err(Error::TrainingDiverged {
            epoch: 0,
            message: "non-finite gradient".into(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = Adam::new(0.1, 3);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        adam.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn one_adam_step_on_quadratic_shrinks_parameter() {
        // f(w) = w^2, df/dw = 2w; from w = 1 with lr = 0.1 the bias-corrected
        // first step moves by exactly lr (up to epsilon): w -> 0.9.
        let mut adam = Adam::new(0.1, 1);
        let mut w = vec![1.0];
        let g = vec![2.0 * w[0]];
        adam.step(&mut w, &g).unwrap();
        assert!((w[0] - 0.9).abs() < 1e-9, "w = {}", w[0]);
        assert!(w[0].abs() < 1.0);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut adam = Adam::new(0.01, 4);
            let mut params = vec![0.3, -0.7, 1.1, 0.0];
            for step in 1..=20 {
                let grads: Vec<f64> = params.iter().map(|p| p * 0.5 + step as f64 * 0.01).collect();
                adam.step(&mut params, &grads).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut adam = Adam::new(0.1, 1);
        let mut params = vec![1.0];
        assert!(matches!(
            adam.step(&mut params, &[f64::NAN]),
            Err(Error::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut sgd = Sgd::new(0.5, 2);
        let mut params = vec![1.0, -1.0];
        sgd.step(&mut params, &[2.0, -2.0]).unwrap();
        assert_eq!(params, vec![0.0, 0.0]);
    }
}

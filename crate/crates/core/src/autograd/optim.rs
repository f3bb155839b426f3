use super::Tensor;
use crate::error::{Error, Result};

/// Velocity buffers and hyperparameters of SGD with Nesterov momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self { learning_rate, momentum, velocity: Vec::new() }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }
}

impl Default for OptimizerState {
    fn default() -> Self {
        Self::new(0.001, 0.9)
    }
}

/// `v ← μ·v − lr·g`, then `θ ← θ + μ·v − lr·g`.
pub fn sgd_nesterov_step(params: &mut [Tensor], grads: &[Tensor], state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
    }
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.velocity[i].len() != p.len() {
            return Err(Error::Shape(format!("parameter {i}: {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
    }
    let (lr, mu) = (state.learning_rate, state.momentum);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        for ((theta, &grad), vel) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
            *vel = mu * *vel - lr * grad;
            *theta += mu * *vel - lr * grad;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Vec<Tensor> {
        vec![Tensor::new(vec![1], vec![v]).unwrap()]
    }

    #[test]
    fn plain_sgd_without_momentum() {
        let mut p = one(0.0);
        let mut s = OptimizerState::new(0.1, 0.0);
        sgd_nesterov_step(&mut p, &one(1.0), &mut s).unwrap();
        assert!((p[0].data()[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn two_nesterov_steps_by_hand() {
        // v1 = -0.001, θ1 = 0.9·v1 - 0.001 = -0.0019
        // v2 = 0.9·v1 - 0.001 = -0.0019, θ2 = θ1 + 0.9·v2 - 0.001 = -0.00461
        let mut p = one(0.0);
        let mut s = OptimizerState::new(0.001, 0.9);
        sgd_nesterov_step(&mut p, &one(1.0), &mut s).unwrap();
        assert!((p[0].data()[0] + 0.0019).abs() < 1e-15);
        sgd_nesterov_step(&mut p, &one(1.0), &mut s).unwrap();
        assert!((p[0].data()[0] + 0.00461).abs() < 1e-15, "{}", p[0].data()[0]);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = one(0.7);
        let mut s = OptimizerState::default();
        sgd_nesterov_step(&mut p, &one(0.0), &mut s).unwrap();
        assert_eq!(p[0].data()[0], 0.7);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = one(0.0);
        let g = vec![Tensor::zeros(vec![2])];
        assert!(sgd_nesterov_step(&mut p, &g, &mut OptimizerState::default()).is_err());
    }
}

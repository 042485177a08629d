use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
/// Moments are allocated as zeros on the first step.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Usage(alloc::format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
    }
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        state.v = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
    } else if state.m.len() != grads.len() {
        return Err(Error::Usage("optimizer state belongs to a different parameter set".into()));
    }
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - math::powi(cfg.beta1, t);
    let c2 = 1.0 - math::powi(cfg.beta2, t);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= cfg.learning_rate * m_hat / (math::sqrt(v_hat) + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_gradient_leaves_everything_unchanged() {
        let mut p = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut state = AdamState::new();
        for _ in 0..3 {
            adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
        assert!(state.first_moments()[0].data().iter().all(|&v| v == 0.0));
        assert!(state.second_moments()[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        for g in [0.3, -2.0, 1e-3] {
            let mut p = Tensor::new(vec![1], vec![1.0]).unwrap();
            let cfg = AdamConfig::default();
            adam_step(&mut [&mut p], &[Tensor::new(vec![1], vec![g]).unwrap()], &mut AdamState::new(), &cfg).unwrap();
            let moved = 1.0 - p.data()[0];
            let expected = cfg.learning_rate * g / (g.abs() + cfg.epsilon);
            assert!((moved - expected).abs() < 1e-15);
            assert!((moved.abs() - cfg.learning_rate).abs() < 1e-7);
        }
    }

    #[test]
    fn opposite_gradients_move_symmetrically() {
        let mut p = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        let g = Tensor::new(vec![2], vec![0.7, -0.7]).unwrap();
        let mut state = AdamState::new();
        for _ in 0..5 {
            adam_step(&mut [&mut p], &[g.clone()], &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p.data()[0], -p.data()[1]);
        assert!(p.data()[0] < 0.0);
    }

    #[test]
    fn mismatched_shapes_error() {
        let mut p = Tensor::zeros(&[2]);
        let err = adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut AdamState::new(), &AdamConfig::default());
        assert!(matches!(err, Err(Error::Shape { .. })));
    }
}

//! Adam optimizer over a named parameter set.

use crate::error::{GrafError, Result};

use super::Tensor;

/// Named, order-stable collection of trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.push((name.into(), tensor.tracked()));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor)> {
        self.entries.iter()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    /// Snapshot of all values, for checkpoint/restore.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|(_, t)| t.values.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f64>]) {
        for ((_, t), vals) in self.entries.iter_mut().zip(snapshot) {
            t.values.copy_from_slice(vals);
        }
    }
}

/// Adam state: per-parameter first and second moment buffers plus the shared
/// step counter and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient folded into the gradient before the moment updates.
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, params: &ParamSet) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            m: params.tensors().map(|t| vec![0.0; t.numel()]).collect(),
            v: params.tensors().map(|t| vec![0.0; t.numel()]).collect(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update; gradients are consumed and cleared.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(GrafError::Usage(
                "optimizer state does not match parameter set".into(),
            ));
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (pi, (name, tensor)) in params.entries.iter_mut().enumerate() {
            let grad = tensor
                .grad
                .take()
                .ok_or_else(|| GrafError::Usage(format!("parameter {name} has no gradient")))?;
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            for (i, &raw) in grad.iter().enumerate() {
                let g = raw + self.weight_decay * tensor.values[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                tensor.values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_vec(&[1], vec![value]).unwrap());
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With g = 1 the bias-corrected first step is lr * g / sqrt(g^2) = lr.
        let mut params = one_param(1.0);
        params.tensors_mut().next().unwrap().grad = Some(vec![1.0]);
        let mut adam = AdamState::new(0.1, &params);
        adam.step(&mut params).unwrap();
        let w = params.get("w").unwrap().values[0];
        assert!((w - (1.0 - 0.1)).abs() < 1e-9, "w = {w}");
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut params = one_param(2.5);
        params.tensors_mut().next().unwrap().grad = Some(vec![0.0]);
        let mut adam = AdamState::new(0.1, &params);
        adam.step(&mut params).unwrap();
        assert_eq!(params.get("w").unwrap().values[0], 2.5);
    }

    #[test]
    fn identical_steps_are_deterministic() {
        let run = || {
            let mut params = one_param(1.0);
            let mut adam = AdamState::new(0.05, &params);
            for _ in 0..2 {
                params.tensors_mut().next().unwrap().grad = Some(vec![0.3]);
                adam.step(&mut params).unwrap();
            }
            params.get("w").unwrap().values[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn missing_gradient_is_a_usage_error() {
        let mut params = one_param(1.0);
        let mut adam = AdamState::new(0.1, &params);
        assert!(adam.step(&mut params).is_err());
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        // Zero raw gradient, positive parameter: the L2 term alone drives the
        // first bias-corrected step to -lr.
        let mut params = one_param(2.0);
        params.tensors_mut().next().unwrap().grad = Some(vec![0.0]);
        let mut adam = AdamState::new(0.1, &params).with_weight_decay(0.01);
        adam.step(&mut params).unwrap();
        let w = params.get("w").unwrap().values[0];
        assert!((w - 1.9).abs() < 1e-6, "w = {w}");
    }

    #[test]
    fn grads_cleared_after_step() {
        let mut params = one_param(1.0);
        params.tensors_mut().next().unwrap().grad = Some(vec![1.0]);
        let mut adam = AdamState::new(0.1, &params);
        adam.step(&mut params).unwrap();
        assert!(params.get("w").unwrap().grad.is_none());
        assert_eq!(adam.step_count(), 1);
    }
}

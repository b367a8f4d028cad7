use std::collections::BTreeMap;

use super::{KernelError, ParamStore};

/// Adam optimizer state with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step_count: 0, moments: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every trainable tensor that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), KernelError> {
        // Validate before mutating anything.
        for (name, t) in store.iter() {
            if let Some((m, _)) = self.moments.get(name) {
                if m.len() != t.len() {
                    return Err(KernelError::Shape(format!(
                        "parameter {name} changed size from {} to {}",
                        m.len(),
                        t.len()
                    )));
                }
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, tensor) in store.iter_mut() {
            if !tensor.requires_grad {
                continue;
            }
            let Some(grad) = tensor.grad().map(<[f64]>::to_vec) else { continue };
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
            for (i, p) in tensor.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

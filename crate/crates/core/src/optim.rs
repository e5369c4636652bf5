//! AdamW with decoupled weight decay, global-norm gradient clipping, and a
//! linear-warmup learning-rate schedule.

use crate::error::{FlowError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Steps of linear warmup; the effective rate at step 0 is 0 whenever
    /// warmup is enabled, then constant after `warmup_steps`.
    pub warmup_steps: usize,
    pub clip_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
            warmup_steps: 0,
            clip_norm: 10.0,
        }
    }
}

/// Per-parameter first/second moment accumulators plus step count.
#[derive(Debug)]
pub struct AdamW {
    config: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: usize,
}

impl AdamW {
    /// State shaped after `params`; the same parameter ordering must be used
    /// for every subsequent step.
    pub fn new(config: AdamWConfig, params: &[&Tensor]) -> Self {
        let m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            config,
            m,
            v,
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Effective learning rate for the *next* step.
    pub fn current_lr(&self) -> f64 {
        schedule_lr(self.config.lr, self.step, self.config.warmup_steps)
    }

    /// Scales all gradients in place so the global L2 norm does not exceed
    /// `clip_norm`; returns the pre-clip norm.
    pub fn clip_gradients(&self, grads: &mut [Vec<f64>]) -> f64 {
        let sq: f64 = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum();
        let norm = sq.sqrt();
        if norm > self.config.clip_norm && norm > 0.0 {
            let scale = self.config.clip_norm / norm;
            for g in grads.iter_mut() {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
        }
        norm
    }

    /// One decoupled-weight-decay update over index-aligned parameters and
    /// gradients. Parameters are replaced with fresh untracked tensors.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(FlowError::Contract(format!(
                "optimizer built for {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);

        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if grad.len() != param.len() {
                return Err(FlowError::Shape(format!(
                    "gradient length {} vs parameter length {}",
                    grad.len(),
                    param.len()
                )));
            }
            let mut next = param.data().to_vec();
            for i in 0..next.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                next[i] -= lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * next[i]);
            }
            **param = Tensor::new(next, param.shape())?;
        }
        Ok(())
    }
}

/// Linear warmup to `lr` over `warmup_steps`, then constant. Step 0 with
/// warmup enabled yields 0.
pub fn schedule_lr(lr: f64, step: usize, warmup_steps: usize) -> f64 {
    if warmup_steps == 0 || step >= warmup_steps {
        lr
    } else {
        lr * step as f64 / warmup_steps as f64
    }
}

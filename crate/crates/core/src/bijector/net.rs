//! Dense and masked linear layers used by conditioner networks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::tensor::Tensor;

/// Fully connected layer, weights `[out, in]`, bias `[1, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    /// Weights ~ N(0, 1/in), zero bias.
    pub fn random(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let std = 1.0 / (in_dim as f64).sqrt();
        let w: Vec<f64> = (0..out_dim * in_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Self {
            w: Tensor::new(w, &[out_dim, in_dim]).expect("linear weight shape"),
            b: Tensor::zeros(&[1, out_dim]),
        }
    }

    /// All-zero layer; conditioner heads start here so the enclosing
    /// transform is the identity at initialization.
    pub fn zero(in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: Tensor::zeros(&[out_dim, in_dim]),
            b: Tensor::zeros(&[1, out_dim]),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let n = x.n_rows();
        x.matmul(&self.w.transpose()?)?
            .add(&self.b.broadcast_rows(n)?)
    }

    /// Applies the layer with weights elementwise-gated by a constant binary
    /// mask of the same `[out, in]` shape.
    pub fn apply_masked(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let n = x.n_rows();
        x.matmul(&self.w.mul(mask)?.transpose()?)?
            .add(&self.b.broadcast_rows(n)?)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Bounded reparameterization of raw log-scales: `cap · tanh(x / cap)` keeps
/// values in (-cap, cap) while staying smooth and identity-like near zero.
pub fn smooth_clamp(x: &Tensor, cap: f64) -> Result<Tensor> {
    x.mul_scalar(1.0 / cap)?.tanh()?.mul_scalar(cap)
}

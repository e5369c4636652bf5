//! Affine coupling layer over a binary partition of the event dimensions.
//!
//! Part A (mask = 1) passes through untouched and conditions an MLP that
//! produces shift and log-scale for part B: `x = z ⊙ exp(s̃) + t̃` where both
//! s̃ and t̃ are zeroed on part A. Raw log-scales go through a smooth clamp
//! before exponentiation so training cannot overflow the scale path. Heads
//! start at zero, making the layer an exact identity at initialization.

use rand::Rng;

use super::net::{smooth_clamp, Linear};
use crate::error::{FlowError, Result};
use crate::tensor::Tensor;

pub const SCALE_CAP: f64 = 7.0;

#[derive(Debug, Clone)]
pub struct Coupling {
    dim: usize,
    mask: Tensor,     // [1, d], 1 marks the conditioning part A
    inv_mask: Tensor, // 1 - mask
    pub(crate) hidden: Vec<Linear>,
    pub(crate) shift_head: Linear,
    pub(crate) scale_head: Linear,
}

impl Coupling {
    /// Alternating even/odd mask; `parity` flips which half conditions.
    pub fn alternating(
        dim: usize,
        hidden_width: usize,
        hidden_layers: usize,
        parity: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mask: Vec<f64> = (0..dim)
            .map(|j| {
                if (j % 2 == 0) ^ parity {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self::with_mask(mask, hidden_width, hidden_layers, rng)
    }

    pub fn with_mask(
        mask: Vec<f64>,
        hidden_width: usize,
        hidden_layers: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let dim = mask.len();
        if mask.iter().any(|m| *m != 0.0 && *m != 1.0) {
            return Err(FlowError::Config("coupling mask must be binary".into()));
        }
        let ones = mask.iter().filter(|m| **m == 1.0).count();
        if ones == 0 || ones == dim {
            return Err(FlowError::Config(
                "coupling mask must split dimensions into two non-empty parts".into(),
            ));
        }
        let mut hidden = Vec::with_capacity(hidden_layers);
        let mut in_dim = dim;
        for _ in 0..hidden_layers {
            hidden.push(Linear::random(in_dim, hidden_width, rng));
            in_dim = hidden_width;
        }
        let inv: Vec<f64> = mask.iter().map(|m| 1.0 - m).collect();
        Ok(Self {
            dim,
            mask: Tensor::new(mask, &[1, dim])?,
            inv_mask: Tensor::new(inv, &[1, dim])?,
            hidden,
            shift_head: Linear::zero(in_dim, dim),
            scale_head: Linear::zero(in_dim, dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mask_values(&self) -> &[f64] {
        self.mask.data()
    }

    /// Effective (shift, log-scale), both zeroed on part A. The conditioner
    /// sees only the masked view of the event.
    fn conditioner(&self, visible: &Tensor) -> Result<(Tensor, Tensor)> {
        let n = visible.n_rows();
        let mut h = visible.clone();
        for layer in &self.hidden {
            h = layer.apply(&h)?.tanh()?;
        }
        let inv = self.inv_mask.broadcast_rows(n)?;
        let shift = self.shift_head.apply(&h)?.mul(&inv)?;
        let log_scale = smooth_clamp(&self.scale_head.apply(&h)?, SCALE_CAP)?.mul(&inv)?;
        Ok((shift, log_scale))
    }

    pub fn forward(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        if z.n_cols() != self.dim {
            return Err(FlowError::Shape(format!(
                "event dim {} vs layer dim {}",
                z.n_cols(),
                self.dim
            )));
        }
        let n = z.n_rows();
        let visible = z.mul(&self.mask.broadcast_rows(n)?)?;
        let (shift, log_scale) = self.conditioner(&visible)?;
        let x = z.mul(&log_scale.exp()?)?.add(&shift)?;
        let ld = log_scale.row_sum()?;
        Ok((x, ld))
    }

    pub fn inverse(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if x.n_cols() != self.dim {
            return Err(FlowError::Shape(format!(
                "event dim {} vs layer dim {}",
                x.n_cols(),
                self.dim
            )));
        }
        let n = x.n_rows();
        // Part A is untouched by forward, so masking x recovers the
        // conditioner input exactly.
        let visible = x.mul(&self.mask.broadcast_rows(n)?)?;
        let (shift, log_scale) = self.conditioner(&visible)?;
        let z = x.sub(&shift)?.mul(&log_scale.neg()?.exp()?)?;
        let ld = log_scale.row_sum()?.neg()?;
        Ok((z, ld))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = Vec::new();
        for l in &self.hidden {
            p.extend(l.params());
        }
        p.extend(self.shift_head.params());
        p.extend(self.scale_head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = Vec::new();
        for l in &mut self.hidden {
            p.extend(l.params_mut());
        }
        p.extend(self.shift_head.params_mut());
        p.extend(self.scale_head.params_mut());
        p
    }
}

//! Masked autoregressive layer: `x_i = z_i ⊙ exp(α_i) + μ_i` with
//! `(μ_i, α_i)` produced from `z_{1:i-1}` in a single pass through a
//! degree-masked MLP. The Jacobian is lower triangular by construction, so
//! the log-determinant is `Σ α_i`.
//!
//! Degrees follow the natural ordering: inputs carry 1..d, hidden units get
//! degrees 1..d-1 assigned round-robin, and the μ/α heads connect only to
//! strictly smaller degrees. Heads start at zero so the layer is an exact
//! identity at initialization.

use rand::Rng;

use super::net::{smooth_clamp, Linear};
use crate::error::{FlowError, Result};
use crate::tensor::Tensor;

pub const SCALE_CAP: f64 = 7.0;

#[derive(Debug, Clone)]
pub struct MafLayer {
    dim: usize,
    pub(crate) hidden: Vec<Linear>,
    hidden_masks: Vec<Tensor>,
    pub(crate) mu_head: Linear,
    pub(crate) alpha_head: Linear,
    head_mask: Tensor,
}

impl MafLayer {
    pub fn new(
        dim: usize,
        hidden_width: usize,
        hidden_layers: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dim == 0 || hidden_layers == 0 || hidden_width == 0 {
            return Err(FlowError::Config(
                "MAF layer needs dim ≥ 1 and a non-empty hidden stack".into(),
            ));
        }
        let input_degrees: Vec<usize> = (1..=dim).collect();
        let hidden_degrees: Vec<usize> = (0..hidden_width)
            .map(|k| 1 + (k % dim.saturating_sub(1).max(1)))
            .collect();

        let mut masks = Vec::with_capacity(hidden_layers);
        masks.push(degree_mask(&input_degrees, &hidden_degrees, false));
        for _ in 1..hidden_layers {
            masks.push(degree_mask(&hidden_degrees, &hidden_degrees, false));
        }
        let head_mask = degree_mask(&hidden_degrees, &input_degrees, true);

        validate_mask_stack(&masks, &head_mask, dim, hidden_width)?;

        let mut hidden = Vec::with_capacity(hidden_layers);
        let mut in_dim = dim;
        for _ in 0..hidden_layers {
            hidden.push(Linear::random(in_dim, hidden_width, rng));
            in_dim = hidden_width;
        }
        let masks_t: Result<Vec<Tensor>> = masks
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let cols = if i == 0 { dim } else { hidden_width };
                Tensor::new(m.clone(), &[hidden_width, cols])
            })
            .collect();
        Ok(Self {
            dim,
            hidden,
            hidden_masks: masks_t?,
            mu_head: Linear::zero(hidden_width, dim),
            alpha_head: Linear::zero(hidden_width, dim),
            head_mask: Tensor::new(head_mask, &[dim, hidden_width])?,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Single masked pass producing per-dimension (μ, α); α is smoothly
    /// clamped before use.
    fn conditioner(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut h = z.clone();
        for (layer, mask) in self.hidden.iter().zip(&self.hidden_masks) {
            h = layer.apply_masked(&h, mask)?.tanh()?;
        }
        let mu = self.mu_head.apply_masked(&h, &self.head_mask)?;
        let alpha = smooth_clamp(&self.alpha_head.apply_masked(&h, &self.head_mask)?, SCALE_CAP)?;
        Ok((mu, alpha))
    }

    pub fn forward(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        if z.n_cols() != self.dim {
            return Err(FlowError::Shape(format!(
                "event dim {} vs layer dim {}",
                z.n_cols(),
                self.dim
            )));
        }
        let (mu, alpha) = self.conditioner(z)?;
        let x = z.mul(&alpha.exp()?)?.add(&mu)?;
        let ld = alpha.row_sum()?;
        Ok((x, ld))
    }

    /// Autoregressive inversion by d fixed-point passes: after pass k the
    /// first k coordinates are exact, so d passes recover the input and the
    /// final pass's α is already evaluated at the true preimage.
    pub fn inverse(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if x.n_cols() != self.dim {
            return Err(FlowError::Shape(format!(
                "event dim {} vs layer dim {}",
                x.n_cols(),
                self.dim
            )));
        }
        let mut z = x.clone();
        let mut last_alpha = None;
        for _ in 0..self.dim {
            let (mu, alpha) = self.conditioner(&z)?;
            z = x.sub(&mu)?.mul(&alpha.neg()?.exp()?)?;
            last_alpha = Some(alpha);
        }
        let alpha = last_alpha.expect("dim ≥ 1");
        let ld = alpha.row_sum()?.neg()?;
        Ok((z, ld))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = Vec::new();
        for l in &self.hidden {
            p.extend(l.params());
        }
        p.extend(self.mu_head.params());
        p.extend(self.alpha_head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = Vec::new();
        for l in &mut self.hidden {
            p.extend(l.params_mut());
        }
        p.extend(self.mu_head.params_mut());
        p.extend(self.alpha_head.params_mut());
        p
    }
}

/// Binary mask `[out, in]` connecting unit pairs by degree comparison;
/// strict comparison for the output heads enforces dependence on strictly
/// earlier inputs only.
fn degree_mask(in_degrees: &[usize], out_degrees: &[usize], strict: bool) -> Vec<f64> {
    let mut m = vec![0.0; out_degrees.len() * in_degrees.len()];
    for (o, &dc) in out_degrees.iter().enumerate() {
        for (i, &dr) in in_degrees.iter().enumerate() {
            let connected = if strict { dc > dr } else { dc >= dr };
            if connected {
                m[o * in_degrees.len() + i] = 1.0;
            }
        }
    }
    m
}

/// Checks the stacked masks admit no path from input i to output o when
/// i ≥ o (natural ordering), by multiplying path-count matrices.
pub fn validate_mask_stack(
    hidden_masks: &[Vec<f64>],
    head_mask: &[f64],
    dim: usize,
    hidden_width: usize,
) -> Result<()> {
    // paths[o][i] accumulated left-to-right: start with the first mask.
    let mut paths = hidden_masks[0].clone(); // [h, dim]
    let mut rows = hidden_width;
    for m in &hidden_masks[1..] {
        // m: [h, h] × paths: [rows=h, dim]
        let mut next = vec![0.0; hidden_width * dim];
        for o in 0..hidden_width {
            for k in 0..rows {
                let w = m[o * rows + k];
                if w == 0.0 {
                    continue;
                }
                for i in 0..dim {
                    next[o * dim + i] += w * paths[k * dim + i];
                }
            }
        }
        paths = next;
        rows = hidden_width;
    }
    let mut full = vec![0.0; dim * dim];
    for o in 0..dim {
        for k in 0..rows {
            let w = head_mask[o * rows + k];
            if w == 0.0 {
                continue;
            }
            for i in 0..dim {
                full[o * dim + i] += w * paths[k * dim + i];
            }
        }
    }
    for o in 0..dim {
        for i in o..dim {
            if full[o * dim + i] != 0.0 {
                return Err(FlowError::Config(format!(
                    "autoregressive mask violation: output {} reachable from input {}",
                    o, i
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_heads(layer: &mut MafLayer, rng: &mut ChaCha8Rng, scale: f64) {
        let h = layer.hidden.last().unwrap().w.shape()[0];
        let d = layer.dim;
        let mut head = Linear::random(h, d, rng);
        head.w = head.w.mul_scalar(scale).unwrap();
        layer.mu_head = head.clone();
        let mut ahead = Linear::random(h, d, rng);
        ahead.w = ahead.w.mul_scalar(scale).unwrap();
        layer.alpha_head = ahead;
    }

    #[test]
    fn zero_heads_make_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = MafLayer::new(5, 16, 2, &mut rng).unwrap();
        let z = Tensor::new((0..10).map(|i| i as f64 * 0.2 - 1.0).collect(), &[2, 5]).unwrap();
        let (x, ld) = layer.forward(&z).unwrap();
        assert_eq!(x.data(), z.data());
        assert_eq!(ld.data(), &[0.0, 0.0]);
    }

    #[test]
    fn later_inputs_never_reach_earlier_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut layer = MafLayer::new(3, 12, 2, &mut rng).unwrap();
        random_heads(&mut layer, &mut rng, 0.5);
        let z = Tensor::matrix(&[vec![0.3, -0.8, 1.1]]).unwrap();
        let (x, _) = layer.forward(&z).unwrap();
        let z2 = Tensor::matrix(&[vec![0.3, -0.8, 42.0]]).unwrap();
        let (x2, _) = layer.forward(&z2).unwrap();
        assert_eq!(x.data()[0], x2.data()[0]);
        assert_eq!(x.data()[1], x2.data()[1]);
        assert_ne!(x.data()[2], x2.data()[2]);
    }

    #[test]
    fn inverse_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut layer = MafLayer::new(4, 10, 2, &mut rng).unwrap();
        random_heads(&mut layer, &mut rng, 0.3);
        let z = Tensor::new((0..12).map(|i| ((i * 3) as f64 * 0.41).sin()).collect(), &[3, 4])
            .unwrap();
        let (x, ld_f) = layer.forward(&z).unwrap();
        let (back, ld_i) = layer.inverse(&x).unwrap();
        for (a, b) in back.data().iter().zip(z.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (f, i) in ld_f.data().iter().zip(ld_i.data()) {
            assert!((f + i).abs() < 1e-12);
        }
    }

    #[test]
    fn dim_one_layer_is_learned_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut layer = MafLayer::new(1, 4, 1, &mut rng).unwrap();
        layer.mu_head.b = Tensor::row(&[0.5]);
        layer.alpha_head.b = Tensor::row(&[1.0]);
        let z = Tensor::matrix(&[vec![2.0]]).unwrap();
        let (x, _) = layer.forward(&z).unwrap();
        let a = 7.0 * (1.0f64 / 7.0).tanh();
        assert!((x.data()[0] - (2.0 * a.exp() + 0.5)).abs() < 1e-12);
        let (back, _) = layer.inverse(&x).unwrap();
        assert!((back.data()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn corrupted_mask_stack_is_rejected() {
        // A head mask with a same-degree connection leaks input i into
        // output i.
        let dim = 3;
        let width = 4;
        let input_degrees: Vec<usize> = (1..=dim).collect();
        let hidden_degrees: Vec<usize> = (0..width).map(|k| 1 + (k % (dim - 1))).collect();
        let hidden_mask = degree_mask(&input_degrees, &hidden_degrees, false);
        let bad_head = degree_mask(&hidden_degrees, &input_degrees, false);
        assert!(matches!(
            validate_mask_stack(&[hidden_mask], &bad_head, dim, width),
            Err(FlowError::Config(_))
        ));
    }
}

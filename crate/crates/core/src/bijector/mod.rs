//! Invertible building blocks and their composition.
//!
//! Every step exposes `forward`, `inverse`, and a per-event
//! log-abs-det-Jacobian; chains compose by summing per-step log-determinants
//! in recording order. Intermediate outputs can be tapped at chosen step
//! indices for latent distillation.

mod actnorm;
mod coupling;
mod linear;
mod maf;
mod net;
mod permute;

pub use actnorm::ActNorm;
pub use coupling::Coupling;
pub use linear::InvLinear;
pub use maf::{validate_mask_stack, MafLayer};
pub use net::{smooth_clamp, Linear};
pub use permute::Permute;

use crate::error::{FlowError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub enum Bijector {
    ActNorm(ActNorm),
    InvLinear(InvLinear),
    Coupling(Coupling),
    Maf(MafLayer),
    Permute(Permute),
}

impl Bijector {
    pub fn dim(&self) -> usize {
        match self {
            Bijector::ActNorm(b) => b.dim(),
            Bijector::InvLinear(b) => b.dim(),
            Bijector::Coupling(b) => b.dim(),
            Bijector::Maf(b) => b.dim(),
            Bijector::Permute(b) => b.dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Bijector::ActNorm(_) => "actnorm",
            Bijector::InvLinear(_) => "inv_linear",
            Bijector::Coupling(_) => "affine_coupling",
            Bijector::Maf(_) => "maf_layer",
            Bijector::Permute(_) => "permute",
        }
    }

    /// Applies the step in the normalizing direction, returning the mapped
    /// events `[n, d]` and per-event log-det `[n, 1]`.
    pub fn forward(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        match self {
            Bijector::ActNorm(b) => b.forward(z),
            Bijector::InvLinear(b) => b.forward(z),
            Bijector::Coupling(b) => b.forward(z),
            Bijector::Maf(b) => b.forward(z),
            Bijector::Permute(b) => b.forward(z),
        }
    }

    /// Inverse map; its log-det is the negative of the forward log-det at
    /// the corresponding point.
    pub fn inverse(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        match self {
            Bijector::ActNorm(b) => b.inverse(x),
            Bijector::InvLinear(b) => b.inverse(x),
            Bijector::Coupling(b) => b.inverse(x),
            Bijector::Maf(b) => b.inverse(x),
            Bijector::Permute(b) => b.inverse(x),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Bijector::ActNorm(b) => b.params(),
            Bijector::InvLinear(b) => b.params(),
            Bijector::Coupling(b) => b.params(),
            Bijector::Maf(b) => b.params(),
            Bijector::Permute(_) => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Bijector::ActNorm(b) => b.params_mut(),
            Bijector::InvLinear(b) => b.params_mut(),
            Bijector::Coupling(b) => b.params_mut(),
            Bijector::Maf(b) => b.params_mut(),
            Bijector::Permute(_) => Vec::new(),
        }
    }
}

/// Applies `steps` in order, summing per-step log-determinants and
/// collecting the intermediate output after every index listed in
/// `tap_indices` (ascending). An empty chain is the identity with zero
/// log-det and no taps.
pub fn compose_forward(
    steps: &[Bijector],
    z: &Tensor,
    tap_indices: &[usize],
) -> Result<(Tensor, Tensor, Vec<Tensor>)> {
    let n = z.n_rows();
    let mut current = z.clone();
    let mut total_ld = Tensor::zeros(&[n, 1]);
    let mut taps = Vec::with_capacity(tap_indices.len());
    for (i, step) in steps.iter().enumerate() {
        if step.dim() != current.n_cols() {
            return Err(FlowError::Shape(format!(
                "step {} has dim {}, chain carries {}",
                i,
                step.dim(),
                current.n_cols()
            )));
        }
        let (next, ld) = step.forward(&current)?;
        total_ld = total_ld.add(&ld)?;
        current = next;
        if tap_indices.contains(&i) {
            taps.push(current.clone());
        }
    }
    Ok((current, total_ld, taps))
}

/// Applies the inverses of `steps` in reverse order.
pub fn compose_inverse(steps: &[Bijector], x: &Tensor) -> Result<(Tensor, Tensor)> {
    let n = x.n_rows();
    let mut current = x.clone();
    let mut total_ld = Tensor::zeros(&[n, 1]);
    for step in steps.iter().rev() {
        let (next, ld) = step.inverse(&current)?;
        total_ld = total_ld.add(&ld)?;
        current = next;
    }
    Ok((current, total_ld))
}

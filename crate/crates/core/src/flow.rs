//! Full normalizing flow: a bijector chain composed with a standard-normal
//! base distribution.
//!
//! The chain runs in the data→latent (normalizing) direction; `generate`
//! inverts it latent→data. Exact log-density is the base log-density of the
//! latent image plus the accumulated log-determinant. Intermediate latents
//! can be tapped at configured step indices for distillation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bijector::{
    compose_forward, compose_inverse, ActNorm, Bijector, Coupling, InvLinear, MafLayer, Permute,
};
use crate::error::{FlowError, Result};
use crate::tensor::Tensor;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Blocks of [actnorm → invertible linear → affine coupling].
    GlowTabular,
    /// Blocks of [masked autoregressive layer → reverse permutation].
    Maf,
}

impl std::str::FromStr for Architecture {
    type Err = FlowError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glow_tabular" => Ok(Architecture::GlowTabular),
            "maf" => Ok(Architecture::Maf),
            other => Err(FlowError::Config(format!(
                "unknown architecture '{}'; expected glow_tabular or maf",
                other
            ))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Architecture::GlowTabular => write!(f, "glow_tabular"),
            Architecture::Maf => write!(f, "maf"),
        }
    }
}

/// Hidden layers per conditioner MLP (coupling and MAF alike).
pub const CONDITIONER_DEPTH: usize = 2;

#[derive(Debug, Clone)]
pub struct FlowModel {
    architecture: Architecture,
    dim: usize,
    depth: usize,
    hidden: usize,
    steps: Vec<Bijector>,
    tap_indices: Vec<usize>,
}

impl FlowModel {
    /// GLOW-style tabular flow: `depth` blocks of
    /// [actnorm → inv_linear → coupling], coupling masks alternating
    /// even/odd across blocks. Taps default to every block boundary.
    pub fn glow_tabular(
        dim: usize,
        depth: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(FlowError::Config(
                "glow_tabular requires dim ≥ 2 (coupling needs a two-part split)".into(),
            ));
        }
        let mut steps = Vec::with_capacity(3 * depth);
        for b in 0..depth {
            steps.push(Bijector::ActNorm(ActNorm::new(dim)));
            steps.push(Bijector::InvLinear(InvLinear::new(dim, rng)?));
            steps.push(Bijector::Coupling(Coupling::alternating(
                dim,
                hidden,
                CONDITIONER_DEPTH,
                b % 2 == 1,
                rng,
            )?));
        }
        let taps = (0..depth).map(|b| 3 * b + 2).collect();
        Ok(Self {
            architecture: Architecture::GlowTabular,
            dim,
            depth,
            hidden,
            steps,
            tap_indices: taps,
        })
    }

    /// Masked autoregressive flow: `depth` blocks of
    /// [maf_layer → reverse permute]. Taps default to every block boundary.
    pub fn maf(dim: usize, depth: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if dim == 0 {
            return Err(FlowError::Config("maf requires dim ≥ 1".into()));
        }
        let mut steps = Vec::with_capacity(2 * depth);
        for _ in 0..depth {
            steps.push(Bijector::Maf(MafLayer::new(
                dim,
                hidden,
                CONDITIONER_DEPTH,
                rng,
            )?));
            steps.push(Bijector::Permute(Permute::reverse(dim)));
        }
        let taps = (0..depth).map(|b| 2 * b + 1).collect();
        Ok(Self {
            architecture: Architecture::Maf,
            dim,
            depth,
            hidden,
            steps,
            tap_indices: taps,
        })
    }

    pub fn new(dim: usize, depth: usize, hidden: usize, architecture: Architecture, rng: &mut impl Rng) -> Result<Self> {
        match architecture {
            Architecture::GlowTabular => Self::glow_tabular(dim, depth, hidden, rng),
            Architecture::Maf => Self::maf(dim, depth, hidden, rng),
        }
    }

    /// Reassembles a model from explicit steps (checkpoint load, tests).
    pub fn from_parts(
        architecture: Architecture,
        dim: usize,
        depth: usize,
        hidden: usize,
        steps: Vec<Bijector>,
        tap_indices: Vec<usize>,
    ) -> Result<Self> {
        for (i, s) in steps.iter().enumerate() {
            if s.dim() != dim {
                return Err(FlowError::Shape(format!(
                    "step {} has dim {}, model dim {}",
                    i,
                    s.dim(),
                    dim
                )));
            }
        }
        for &t in &tap_indices {
            if t >= steps.len() {
                return Err(FlowError::Config(format!(
                    "tap index {} out of range for {} steps",
                    t,
                    steps.len()
                )));
            }
        }
        Ok(Self {
            architecture,
            dim,
            depth,
            hidden,
            steps,
            tap_indices,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    pub fn steps(&self) -> &[Bijector] {
        &self.steps
    }

    pub fn tap_indices(&self) -> &[usize] {
        &self.tap_indices
    }

    pub fn tap_count(&self) -> usize {
        self.tap_indices.len()
    }

    pub fn set_tap_indices(&mut self, taps: Vec<usize>) -> Result<()> {
        for &t in &taps {
            if t >= self.steps.len() {
                return Err(FlowError::Config(format!(
                    "tap index {} out of range for {} steps",
                    t,
                    self.steps.len()
                )));
            }
        }
        let mut sorted = taps;
        sorted.sort_unstable();
        sorted.dedup();
        self.tap_indices = sorted;
        Ok(())
    }

    /// True once every data-initialized layer has seen its first batch.
    pub fn is_initialized(&self) -> bool {
        self.steps.iter().all(|s| match s {
            Bijector::ActNorm(a) => a.is_initialized(),
            _ => true,
        })
    }

    /// Walks the chain over `batch`, initializing each uninitialized
    /// ActNorm from the activations arriving at it.
    pub fn data_init(&mut self, batch: &Tensor) -> Result<()> {
        let mut current = batch.detach();
        for step in &mut self.steps {
            if let Bijector::ActNorm(a) = step {
                if !a.is_initialized() {
                    a.init_from_batch(&current)?;
                }
            }
            let (next, _) = step.forward(&current)?;
            current = next;
        }
        Ok(())
    }

    fn require_initialized(&self) -> Result<()> {
        if !self.is_initialized() {
            return Err(FlowError::Contract(
                "model has uninitialized ActNorm layers; run data_init first".into(),
            ));
        }
        Ok(())
    }

    /// Data→latent pass returning the latent image, total log-det `[n, 1]`,
    /// and tapped intermediates.
    pub fn forward_with_taps(&self, x: &Tensor) -> Result<(Tensor, Tensor, Vec<Tensor>)> {
        self.require_initialized()?;
        compose_forward(&self.steps, x, &self.tap_indices)
    }

    /// Latent image of `x` (no taps).
    pub fn latent_of(&self, x: &Tensor) -> Result<Tensor> {
        self.require_initialized()?;
        let (u, _, _) = compose_forward(&self.steps, x, &[])?;
        Ok(u)
    }

    fn base_log_prob(&self, u: &Tensor) -> Result<Tensor> {
        u.mul(u)?
            .row_sum()?
            .mul_scalar(-0.5)?
            .add_scalar(-0.5 * self.dim as f64 * LN_2PI)
    }

    /// Exact log-density per event `[n, 1]`, plus tapped latents.
    pub fn log_prob(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (u, total_ld, taps) = self.forward_with_taps(x)?;
        let logp = self.base_log_prob(&u)?.add(&total_ld)?;
        Ok((logp, taps))
    }

    /// Mean negative log-likelihood over the batch (scalar).
    pub fn nll_loss(&self, batch: &Tensor) -> Result<Tensor> {
        if batch.n_rows() == 0 {
            return Err(FlowError::Contract("nll_loss on empty batch".into()));
        }
        let (logp, _) = self.log_prob(batch)?;
        logp.neg()?.mean_all()
    }

    /// Latent→data image of `latents` through the inverse chain.
    pub fn generate(&self, latents: &Tensor) -> Result<Tensor> {
        self.require_initialized()?;
        let (x, _) = compose_inverse(&self.steps, latents)?;
        Ok(x)
    }

    /// Draws `n` events by pushing `u ~ N(0, T²·I)` through the inverse
    /// chain. `temperature` 0 collapses to the image of the zero latent;
    /// the base draw consumes the same rng stream regardless of T.
    pub fn sample(&self, n: usize, temperature: f64, rng: &mut impl Rng) -> Result<Tensor> {
        let u = self.sample_latents(n, temperature, rng)?;
        self.generate(&u)
    }

    /// Base-distribution draws at the given temperature, `[n, d]`.
    pub fn sample_latents(
        &self,
        n: usize,
        temperature: f64,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        if temperature < 0.0 {
            return Err(FlowError::Contract(format!(
                "temperature must be ≥ 0, got {}",
                temperature
            )));
        }
        let data: Vec<f64> = (0..n * self.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * temperature
            })
            .collect();
        Tensor::new(data, &[n, self.dim])
    }

    /// Norm-preserving latent interpolation: maps both events to latents,
    /// interpolates linearly, rescales to the linearly interpolated norm,
    /// and maps back through the inverse chain.
    pub fn latent_interpolate(&self, a: &Tensor, b: &Tensor, alpha: f64) -> Result<Tensor> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(FlowError::Contract(format!(
                "interpolation weight must be in [0, 1], got {}",
                alpha
            )));
        }
        if a.n_rows() != 1 || b.n_rows() != 1 || a.n_cols() != self.dim || b.n_cols() != self.dim {
            return Err(FlowError::Shape(
                "latent_interpolate expects two [1, d] events".into(),
            ));
        }
        let fa = self.latent_of(&a.detach())?;
        let fb = self.latent_of(&b.detach())?;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lerp: Vec<f64> = fa
            .data()
            .iter()
            .zip(fb.data())
            .map(|(x, y)| (1.0 - alpha) * x + alpha * y)
            .collect();
        let lerp_norm = norm(&lerp);
        if lerp_norm < 1e-12 {
            return Err(FlowError::DegenerateInterpolant(
                "interpolated latent has zero norm".into(),
            ));
        }
        let target_norm = (1.0 - alpha) * norm(fa.data()) + alpha * norm(fb.data());
        let scaled: Vec<f64> = lerp.iter().map(|v| v * target_norm / lerp_norm).collect();
        self.generate(&Tensor::new(scaled, &[1, self.dim])?)
    }

    /// Exact count of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.steps.iter().flat_map(|s| s.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.steps.iter_mut().flat_map(|s| s.params_mut()).collect()
    }

    /// Registers every parameter as a watched leaf on `graph`; subsequent
    /// forward passes record and gradients accumulate per parameter.
    pub fn attach_params(&mut self, graph: &crate::tensor::Graph) {
        for p in self.params_mut() {
            *p = graph.leaf(p);
        }
    }

    /// Drops any graph handles from the parameters.
    pub fn detach_params(&mut self) {
        for p in self.params_mut() {
            *p = p.detach();
        }
    }
}

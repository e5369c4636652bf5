//! Model checkpointing.
//!
//! Checkpoints are JSON documents carrying the architecture header, tap
//! positions, and one state record per bijector step. Finite float64 values
//! round-trip bit-exactly through the shortest-representation encoder, and
//! loading reconstructs the model without consulting any rng. Writes go
//! through a temp file and rename so readers never observe a partial file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bijector::{ActNorm, Bijector, Coupling, InvLinear, Linear, MafLayer, Permute};
use crate::error::{FlowError, Result};
use crate::flow::{Architecture, FlowModel};
use crate::tensor::Tensor;

pub const FORMAT_TAG: &str = "flowkd-checkpoint-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub architecture: Architecture,
    pub dim: usize,
    pub depth: usize,
    pub hidden: usize,
    pub tap_indices: Vec<usize>,
    pub steps: Vec<StepState>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearState {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub out_dim: usize,
    pub in_dim: usize,
}

impl LinearState {
    fn of(l: &Linear) -> Self {
        Self {
            w: l.w.data().to_vec(),
            b: l.b.data().to_vec(),
            out_dim: l.w.shape()[0],
            in_dim: l.w.shape()[1],
        }
    }

    fn build(&self) -> Result<Linear> {
        Ok(Linear {
            w: Tensor::new(self.w.clone(), &[self.out_dim, self.in_dim])?,
            b: Tensor::new(self.b.clone(), &[1, self.out_dim])?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepState {
    ActNorm {
        scale: Vec<f64>,
        bias: Vec<f64>,
        initialized: bool,
    },
    InvLinear {
        perm: Vec<usize>,
        sign: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        log_diag: Vec<f64>,
    },
    AffineCoupling {
        mask: Vec<f64>,
        hidden: Vec<LinearState>,
        shift_head: LinearState,
        scale_head: LinearState,
    },
    MafLayer {
        dim: usize,
        hidden_width: usize,
        hidden: Vec<LinearState>,
        mu_head: LinearState,
        alpha_head: LinearState,
    },
    Permute {
        perm: Vec<usize>,
    },
}

impl StepState {
    pub fn of(step: &Bijector) -> Self {
        match step {
            Bijector::ActNorm(a) => StepState::ActNorm {
                scale: a.params()[0].data().to_vec(),
                bias: a.params()[1].data().to_vec(),
                initialized: a.is_initialized(),
            },
            Bijector::InvLinear(l) => StepState::InvLinear {
                perm: l.permutation().to_vec(),
                sign: l.signs().to_vec(),
                lower: l.params()[0].data().to_vec(),
                upper: l.params()[1].data().to_vec(),
                log_diag: l.params()[2].data().to_vec(),
            },
            Bijector::Coupling(c) => StepState::AffineCoupling {
                mask: c.mask_values().to_vec(),
                hidden: c.hidden.iter().map(LinearState::of).collect(),
                shift_head: LinearState::of(&c.shift_head),
                scale_head: LinearState::of(&c.scale_head),
            },
            Bijector::Maf(m) => StepState::MafLayer {
                dim: m.dim(),
                hidden_width: m.hidden.first().map(|l| l.w.shape()[0]).unwrap_or(0),
                hidden: m.hidden.iter().map(LinearState::of).collect(),
                mu_head: LinearState::of(&m.mu_head),
                alpha_head: LinearState::of(&m.alpha_head),
            },
            Bijector::Permute(p) => StepState::Permute {
                perm: p.permutation().to_vec(),
            },
        }
    }

    pub fn build(&self, rng_free_dim: usize) -> Result<Bijector> {
        match self {
            StepState::ActNorm {
                scale,
                bias,
                initialized,
            } => {
                let mut a = ActNorm::with_params(scale.clone(), bias.clone())?;
                a.set_initialized(*initialized);
                Ok(Bijector::ActNorm(a))
            }
            StepState::InvLinear {
                perm,
                sign,
                lower,
                upper,
                log_diag,
            } => Ok(Bijector::InvLinear(InvLinear::from_parts(
                rng_free_dim,
                perm.clone(),
                sign.clone(),
                lower.clone(),
                upper.clone(),
                log_diag.clone(),
            )?)),
            StepState::AffineCoupling {
                mask,
                hidden,
                shift_head,
                scale_head,
            } => {
                // Build with a throwaway rng, then overwrite every layer.
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
                let width = shift_head.in_dim;
                let mut c = Coupling::with_mask(mask.clone(), width, hidden.len(), &mut rng)?;
                for (slot, state) in c.hidden.iter_mut().zip(hidden) {
                    *slot = state.build()?;
                }
                c.shift_head = shift_head.build()?;
                c.scale_head = scale_head.build()?;
                Ok(Bijector::Coupling(c))
            }
            StepState::MafLayer {
                dim,
                hidden_width,
                hidden,
                mu_head,
                alpha_head,
            } => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
                let mut m = MafLayer::new(*dim, *hidden_width, hidden.len(), &mut rng)?;
                for (slot, state) in m.hidden.iter_mut().zip(hidden) {
                    *slot = state.build()?;
                }
                m.mu_head = mu_head.build()?;
                m.alpha_head = alpha_head.build()?;
                Ok(Bijector::Maf(m))
            }
            StepState::Permute { perm } => Ok(Bijector::Permute(Permute::new(perm.clone())?)),
        }
    }
}

impl Checkpoint {
    pub fn of(model: &FlowModel) -> Self {
        Self {
            format: FORMAT_TAG.to_string(),
            architecture: model.architecture(),
            dim: model.dim(),
            depth: model.depth(),
            hidden: model.hidden_width(),
            tap_indices: model.tap_indices().to_vec(),
            steps: model.steps().iter().map(StepState::of).collect(),
        }
    }

    pub fn build(&self) -> Result<FlowModel> {
        if self.format != FORMAT_TAG {
            return Err(FlowError::Checkpoint(format!(
                "unsupported format tag '{}'",
                self.format
            )));
        }
        let steps: Result<Vec<Bijector>> =
            self.steps.iter().map(|s| s.build(self.dim)).collect();
        FlowModel::from_parts(
            self.architecture,
            self.dim,
            self.depth,
            self.hidden,
            steps?,
            self.tap_indices.clone(),
        )
    }
}

/// Saves atomically (temp file + rename in the target directory).
pub fn save(model: &FlowModel, path: &Path) -> Result<()> {
    let checkpoint = Checkpoint::of(model);
    let json = serde_json::to_string(&checkpoint)
        .map_err(|e| FlowError::Checkpoint(format!("serialize failed: {}", e)))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, json)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<FlowModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FlowError::Checkpoint(format!("cannot read {}: {}", path.display(), e)))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| FlowError::Checkpoint(format!("malformed checkpoint: {}", e)))?;
    checkpoint.build()
}

//! Per-dimension affine layer with data-dependent initialization.
//!
//! `x = s ⊙ z + b`, with `s`, `b` chosen on the first batch so the
//! transformed output has per-dimension mean 0 and standard deviation 1.
//! The log-determinant is `Σ log|s_i|` per event (tabular events carry no
//! spatial replication factor).

use crate::error::{FlowError, Result};
use crate::tensor::Tensor;

const SCALE_UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct ActNorm {
    dim: usize,
    pub(crate) scale: Tensor,
    pub(crate) bias: Tensor,
    initialized: bool,
}

impl ActNorm {
    /// Uninitialized layer; call [`init_from_batch`](Self::init_from_batch)
    /// before the first forward pass.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            scale: Tensor::ones(&[1, dim]),
            bias: Tensor::zeros(&[1, dim]),
            initialized: false,
        }
    }

    /// Layer with explicit parameters, marked initialized.
    pub fn with_params(scale: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if scale.len() != bias.len() {
            return Err(FlowError::Shape("scale/bias length mismatch".into()));
        }
        let dim = scale.len();
        Ok(Self {
            dim,
            scale: Tensor::new(scale, &[1, dim])?,
            bias: Tensor::new(bias, &[1, dim])?,
            initialized: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub(crate) fn set_initialized(&mut self, flag: bool) {
        self.initialized = flag;
    }

    /// Sets `s = 1/std`, `b = -mean/std` from per-dimension statistics of
    /// `batch` (population variance), so the transformed batch is
    /// standardized.
    pub fn init_from_batch(&mut self, batch: &Tensor) -> Result<()> {
        if self.initialized {
            return Err(FlowError::Contract("ActNorm already initialized".into()));
        }
        let (n, d) = (batch.n_rows(), batch.n_cols());
        if d != self.dim {
            return Err(FlowError::Shape(format!(
                "ActNorm dim {} vs batch dim {}",
                self.dim, d
            )));
        }
        if n < 2 {
            return Err(FlowError::Contract(
                "ActNorm initialization needs at least 2 events".into(),
            ));
        }
        let mut scale = vec![0.0; d];
        let mut bias = vec![0.0; d];
        for j in 0..d {
            let mean: f64 = (0..n).map(|i| batch.at(i, j)).sum::<f64>() / n as f64;
            let var: f64 = (0..n)
                .map(|i| {
                    let c = batch.at(i, j) - mean;
                    c * c
                })
                .sum::<f64>()
                / n as f64;
            let std = var.sqrt();
            if std < 1e-12 {
                return Err(FlowError::DegenerateData(format!(
                    "zero standard deviation in column {}",
                    j
                )));
            }
            scale[j] = 1.0 / std;
            bias[j] = -mean / std;
        }
        self.scale = Tensor::new(scale, &[1, d])?;
        self.bias = Tensor::new(bias, &[1, d])?;
        self.initialized = true;
        Ok(())
    }

    fn check_ready(&self) -> Result<()> {
        if !self.initialized {
            return Err(FlowError::Contract(
                "ActNorm used before data-dependent initialization".into(),
            ));
        }
        if self.scale.data().iter().any(|s| s.abs() < SCALE_UNDERFLOW) {
            return Err(FlowError::Singular("ActNorm scale underflowed".into()));
        }
        Ok(())
    }

    pub fn forward(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_ready()?;
        let n = z.n_rows();
        let x = z
            .mul(&self.scale.broadcast_rows(n)?)?
            .add(&self.bias.broadcast_rows(n)?)?;
        let ld = self.log_det_scalar()?.broadcast_rows(n)?;
        Ok((x, ld))
    }

    pub fn inverse(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_ready()?;
        let n = x.n_rows();
        let z = x
            .sub(&self.bias.broadcast_rows(n)?)?
            .div(&self.scale.broadcast_rows(n)?)?;
        let ld = self.log_det_scalar()?.neg()?.broadcast_rows(n)?;
        Ok((z, ld))
    }

    fn log_det_scalar(&self) -> Result<Tensor> {
        self.scale.abs()?.ln()?.row_sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.scale, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.scale, &mut self.bias]
    }
}

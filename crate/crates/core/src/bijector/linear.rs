//! Invertible linear map parameterized through a fixed-pivot PLU
//! factorization.
//!
//! `W = P · L · (U + diag(s))` with P a permutation frozen at
//! initialization, L unit-diagonal lower-triangular, U strictly upper, and
//! `s = sign ⊙ exp(log_diag)` (signs frozen). The factorization keeps the
//! map invertible for any parameter values and makes the log-determinant a
//! plain sum: `log|det W| = Σ log_diag_i`.

use rand::Rng;

use crate::error::{FlowError, Result};
use crate::linalg;
use crate::tensor::Tensor;

/// exp underflows to zero below roughly -745; treat anything near that as a
/// collapsed scale.
const LOG_SCALE_FLOOR: f64 = -690.0;

#[derive(Debug, Clone)]
pub struct InvLinear {
    dim: usize,
    pub(crate) lower: Tensor,    // [d, d], strict lower triangle trainable
    pub(crate) upper: Tensor,    // [d, d], strict upper triangle trainable
    pub(crate) log_diag: Tensor, // [1, d], log|s|
    sign: Vec<f64>,
    perm: Vec<usize>,
    // Cached constants.
    perm_mat_t: Tensor,
    sign_row: Tensor,
    lower_mask: Tensor,
    upper_mask: Tensor,
    eye: Tensor,
}

impl InvLinear {
    /// Initializes from a random orthonormal matrix, so the initial map is a
    /// rotation/reflection with log-determinant 0.
    pub fn new(dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let w = linalg::random_orthonormal(dim, rng);
        let f = linalg::plu_decompose(&w, dim)?;
        let mut sign = vec![0.0; dim];
        let mut log_diag = vec![0.0; dim];
        let mut upper = f.upper.clone();
        for i in 0..dim {
            let u_ii = f.upper[i * dim + i];
            sign[i] = if u_ii >= 0.0 { 1.0 } else { -1.0 };
            log_diag[i] = u_ii.abs().ln();
            upper[i * dim + i] = 0.0;
        }
        let mut lower = f.lower.clone();
        for i in 0..dim {
            lower[i * dim + i] = 0.0;
        }
        Self::from_parts(dim, f.perm, sign, lower, upper, log_diag)
    }

    /// Rebuilds a layer from stored factors (checkpoint load, tests).
    pub fn from_parts(
        dim: usize,
        perm: Vec<usize>,
        sign: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        log_diag: Vec<f64>,
    ) -> Result<Self> {
        if perm.len() != dim || sign.len() != dim || log_diag.len() != dim {
            return Err(FlowError::Shape("PLU vector length mismatch".into()));
        }
        if sign.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return Err(FlowError::Config("PLU signs must be ±1".into()));
        }
        let mut lower_mask = vec![0.0; dim * dim];
        let mut upper_mask = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                if j < i {
                    lower_mask[i * dim + j] = 1.0;
                } else if j > i {
                    upper_mask[i * dim + j] = 1.0;
                }
            }
        }
        let perm_dense = linalg::permutation_matrix(&perm);
        let perm_mat_t = Tensor::new(perm_dense, &[dim, dim])?.transpose()?;
        Ok(Self {
            dim,
            lower: Tensor::new(lower, &[dim, dim])?,
            upper: Tensor::new(upper, &[dim, dim])?,
            log_diag: Tensor::new(log_diag, &[1, dim])?,
            sign_row: Tensor::new(sign.clone(), &[1, dim])?,
            sign,
            perm,
            perm_mat_t,
            lower_mask: Tensor::new(lower_mask, &[dim, dim])?,
            upper_mask: Tensor::new(upper_mask, &[dim, dim])?,
            eye: Tensor::identity(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn signs(&self) -> &[f64] {
        &self.sign
    }

    fn check_scales(&self) -> Result<()> {
        if self.log_diag.data().iter().any(|v| *v < LOG_SCALE_FLOOR) {
            return Err(FlowError::Singular(
                "PLU diagonal scale underflowed to zero".into(),
            ));
        }
        Ok(())
    }

    /// Effective unit-lower factor `L = strict(lower) + I`.
    fn lower_eff(&self) -> Result<Tensor> {
        self.lower.mul(&self.lower_mask)?.add(&self.eye)
    }

    /// Effective strictly-upper factor.
    fn upper_eff(&self) -> Result<Tensor> {
        self.upper.mul(&self.upper_mask)
    }

    /// Diagonal scales `s = sign ⊙ exp(log_diag)` as a row vector.
    fn diag_scales(&self) -> Result<Tensor> {
        self.log_diag.exp()?.mul(&self.sign_row)
    }

    pub fn forward(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_scales()?;
        let n = z.n_rows();
        if z.n_cols() != self.dim {
            return Err(FlowError::Shape(format!(
                "event dim {} vs layer dim {}",
                z.n_cols(),
                self.dim
            )));
        }
        let s = self.diag_scales()?;
        // (U + diag s)·z computed row-wise as z·Uᵀ + s ⊙ z.
        let y = z
            .matmul(&self.upper_eff()?.transpose()?)?
            .add(&z.mul(&s.broadcast_rows(n)?)?)?;
        let y = y.matmul(&self.lower_eff()?.transpose()?)?;
        let x = y.matmul(&self.perm_mat_t)?;
        let ld = self.log_diag.row_sum()?.broadcast_rows(n)?;
        Ok((x, ld))
    }

    pub fn inverse(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_scales()?;
        let n = x.n_rows();
        if x.n_cols() != self.dim {
            return Err(FlowError::Shape(format!(
                "event dim {} vs layer dim {}",
                x.n_cols(),
                self.dim
            )));
        }
        let s = self.diag_scales()?;
        // Solve P·L·(U + diag s)·zᵀ = xᵀ by permutation then two
        // triangular solves; both are differentiable.
        let rhs = self.perm_mat_t.matmul(&x.transpose()?)?;
        let m1 = self.lower_eff()?.solve_triangular(&rhs, true, true)?;
        let u_full = self
            .upper_eff()?
            .add(&self.eye.mul(&s.broadcast_rows(self.dim)?)?)?;
        let m2 = u_full.solve_triangular(&m1, false, false)?;
        let z = m2.transpose()?;
        let ld = self.log_diag.row_sum()?.neg()?.broadcast_rows(n)?;
        Ok((z, ld))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.lower, &self.upper, &self.log_diag]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.lower, &mut self.upper, &mut self.log_diag]
    }
}

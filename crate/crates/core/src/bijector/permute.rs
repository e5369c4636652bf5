//! Fixed dimension permutation; volume-preserving (log-determinant zero).

use crate::error::{FlowError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Permute {
    dim: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
}

impl Permute {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let dim = perm.len();
        let mut inv_perm = vec![usize::MAX; dim];
        for (j, &p) in perm.iter().enumerate() {
            if p >= dim || inv_perm[p] != usize::MAX {
                return Err(FlowError::Config(format!("invalid permutation {:?}", perm)));
            }
            inv_perm[p] = j;
        }
        Ok(Self { dim, perm, inv_perm })
    }

    /// Reverses the dimension order.
    pub fn reverse(dim: usize) -> Self {
        Self::new((0..dim).rev().collect()).expect("reverse permutation")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn forward(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        let x = z.permute_cols(&self.perm)?;
        let ld = Tensor::zeros(&[z.n_rows(), 1]);
        Ok((x, ld))
    }

    pub fn inverse(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let z = x.permute_cols(&self.inv_perm)?;
        let ld = Tensor::zeros(&[x.n_rows(), 1]);
        Ok((z, ld))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reverse_round_trips() {
        let p = Permute::reverse(4);
        let z = Tensor::matrix(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let (x, ld) = p.forward(&z).unwrap();
        assert_eq!(x.data(), &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(ld.data()[0], 0.0);
        let (back, _) = p.inverse(&x).unwrap();
        assert_eq!(back.data(), z.data());
    }

    #[test]
    fn non_permutation_rejected() {
        assert!(matches!(
            Permute::new(vec![0, 0, 1]),
            Err(FlowError::Config(_))
        ));
    }
}

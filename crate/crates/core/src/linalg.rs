//! Small dense matrix helpers for parameter initialization.
//!
//! These run on plain values at construction time only; nothing here is
//! differentiated. Matrices are row-major `Vec<f64>` of size d×d.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FlowError, Result};

/// Random matrix with i.i.d. standard-normal entries.
pub fn random_gaussian(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..d * d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Orthonormal matrix via modified Gram-Schmidt on the columns of a random
/// Gaussian matrix. d is small here, so numerical refinement is unnecessary.
pub fn random_orthonormal(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let a = random_gaussian(d, rng);
        if let Some(q) = gram_schmidt(&a, d) {
            return q;
        }
        // Rank-deficient draw (measure zero); redraw.
    }
}

fn gram_schmidt(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| a[i * d + j]).collect())
        .collect();
    for j in 0..d {
        for k in 0..j {
            let dot: f64 = (0..d).map(|i| cols[j][i] * cols[k][i]).sum();
            for i in 0..d {
                cols[j][i] -= dot * cols[k][i];
            }
        }
        let norm: f64 = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-10 {
            return None;
        }
        for v in cols[j].iter_mut() {
            *v /= norm;
        }
    }
    let mut q = vec![0.0; d * d];
    for j in 0..d {
        for i in 0..d {
            q[i * d + j] = cols[j][i];
        }
    }
    Some(q)
}

/// Factors of `A = P · L · U` from Gaussian elimination with partial
/// pivoting: `perm` encodes the permutation matrix column-wise
/// (`P[perm[j], j] = 1`), `lower` has unit diagonal, `upper` carries the
/// pivots on its diagonal.
pub struct PluFactors {
    pub perm: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn plu_decompose(a: &[f64], d: usize) -> Result<PluFactors> {
    let mut u = a.to_vec();
    let mut l = vec![0.0; d * d];
    // Row i of the worked matrix corresponds to original row rows[i].
    let mut rows: Vec<usize> = (0..d).collect();

    for k in 0..d {
        let (pivot_row, pivot_abs) = (k..d)
            .map(|i| (i, u[i * d + k].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("nonempty pivot range");
        if pivot_abs == 0.0 {
            return Err(FlowError::Singular(format!(
                "matrix singular at elimination column {}",
                k
            )));
        }
        if pivot_row != k {
            for j in 0..d {
                u.swap(k * d + j, pivot_row * d + j);
                l.swap(k * d + j, pivot_row * d + j);
            }
            rows.swap(k, pivot_row);
        }
        for i in (k + 1)..d {
            let factor = u[i * d + k] / u[k * d + k];
            l[i * d + k] = factor;
            u[i * d + k] = 0.0;
            for j in (k + 1)..d {
                u[i * d + j] -= factor * u[k * d + j];
            }
        }
    }
    for i in 0..d {
        l[i * d + i] = 1.0;
    }
    // rows[i] = r means worked row i holds original row r, i.e. (P·L·U) row
    // r equals (L·U) row i: P[rows[i], i] = 1.
    let mut perm = vec![0usize; d];
    for (i, &r) in rows.iter().enumerate() {
        perm[i] = r;
    }
    Ok(PluFactors {
        perm,
        lower: l,
        upper: u,
    })
}

/// Builds the dense permutation matrix with `P[perm[j], j] = 1`.
pub fn permutation_matrix(perm: &[usize]) -> Vec<f64> {
    let d = perm.len();
    let mut p = vec![0.0; d * d];
    for (j, &i) in perm.iter().enumerate() {
        p[i * d + j] = 1.0;
    }
    p
}

pub fn matmul_dense(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2usize, 5, 8] {
            let q = random_orthonormal(d, &mut rng);
            for j1 in 0..d {
                for j2 in 0..d {
                    let dot: f64 = (0..d).map(|i| q[i * d + j1] * q[i * d + j2]).sum();
                    let want = if j1 == j2 { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10, "d={} cols {},{}", d, j1, j2);
                }
            }
        }
    }

    #[test]
    fn plu_reconstructs_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2usize, 4, 7] {
            let a = random_gaussian(d, &mut rng);
            let f = plu_decompose(&a, d).unwrap();
            let p = permutation_matrix(&f.perm);
            let rebuilt = matmul_dense(&p, &matmul_dense(&f.lower, &f.upper, d), d);
            for (x, y) in rebuilt.iter().zip(&a) {
                assert!((x - y).abs() < 1e-10);
            }
            // Unit diagonal in L, strictness of triangles.
            for i in 0..d {
                assert_eq!(f.lower[i * d + i], 1.0);
                for j in (i + 1)..d {
                    assert_eq!(f.lower[i * d + j], 0.0);
                }
                for j in 0..i {
                    assert_eq!(f.upper[i * d + j], 0.0);
                }
            }
        }
    }

    #[test]
    fn plu_rejects_singular() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(matches!(
            plu_decompose(&a, 2),
            Err(FlowError::Singular(_))
        ));
    }
}

//! Shared oracle utilities for integration tests.
//!
//! Everything here is deliberately independent of the library's internals:
//! derivatives come from central finite differences and determinants from a
//! local pivoted elimination, so they can falsify the implementation paths
//! they are compared against.

#![allow(dead_code)]

/// Central-difference Jacobian of a vector map at `x`: J[i][j] = df_i/dx_j.
pub fn fd_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let fx = f(x);
    let m = fx.len();
    let n = x.len();
    let mut jac = vec![vec![0.0; n]; m];
    for j in 0..n {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[j] += h;
        minus[j] -= h;
        let fp = f(&plus);
        let fm = f(&minus);
        for i in 0..m {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Central-difference gradient of a scalar function.
pub fn fd_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[j] += h;
            minus[j] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

/// Signed determinant by Gaussian elimination with partial pivoting;
/// written against nested rows so it shares nothing with the crate's
/// flat-buffer routines.
pub fn det_nested(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len();
    let mut m: Vec<Vec<f64>> = matrix.to_vec();
    let mut det = 1.0;
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&a, &b| m[a][k].abs().total_cmp(&m[b][k].abs()))
            .unwrap();
        if m[pivot][k] == 0.0 {
            return 0.0;
        }
        if pivot != k {
            m.swap(pivot, k);
            det = -det;
        }
        det *= m[k][k];
        for i in (k + 1)..n {
            let factor = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= factor * m[k][j];
            }
        }
    }
    det
}

pub fn log_abs_det(matrix: &[Vec<f64>]) -> f64 {
    det_nested(matrix).abs().ln()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-12)
}

/// Midpoint-rule integral of `f` over [lo, hi]² on a `steps`×`steps` grid.
pub fn grid_quadrature_2d(f: &dyn Fn(f64, f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
    let cell = (hi - lo) / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        let x = lo + (i as f64 + 0.5) * cell;
        for j in 0..steps {
            let y = lo + (j as f64 + 0.5) * cell;
            total += f(x, y);
        }
    }
    total * cell * cell
}

use flowkd::bijector::{ActNorm, Bijector, Coupling, InvLinear, MafLayer, Permute};
use flowkd::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const BIJECTOR_KINDS: [&str; 5] = [
    "actnorm",
    "inv_linear",
    "affine_coupling",
    "maf_layer",
    "permute",
];

/// Adds uniform noise in ±`spread` to every trainable scalar, pushing
/// identity-initialized conditioner heads off zero.
pub fn perturb_params(step: &mut Bijector, spread: f64, rng: &mut ChaCha8Rng) {
    for p in step.params_mut() {
        let bumped: Vec<f64> = p
            .data()
            .iter()
            .map(|v| v + rng.random_range(-spread..spread))
            .collect();
        *p = Tensor::new(bumped, p.shape()).unwrap();
    }
}

/// One bijector of the named kind with randomized, well-conditioned
/// parameters.
pub fn random_bijector(kind: &str, dim: usize, seed: u64) -> Bijector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        "actnorm" => {
            let scale: Vec<f64> = (0..dim)
                .map(|_| {
                    let mag = rng.random_range(0.5..2.0);
                    if rng.random_range(0.0..1.0) < 0.5 {
                        -mag
                    } else {
                        mag
                    }
                })
                .collect();
            let bias: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            Bijector::ActNorm(ActNorm::with_params(scale, bias).unwrap())
        }
        "inv_linear" => {
            let mut step = Bijector::InvLinear(InvLinear::new(dim, &mut rng).unwrap());
            perturb_params(&mut step, 0.3, &mut rng);
            step
        }
        "affine_coupling" => {
            let parity = seed % 2 == 1;
            let mut step = Bijector::Coupling(
                Coupling::alternating(dim, 8, 2, parity, &mut rng).unwrap(),
            );
            perturb_params(&mut step, 0.4, &mut rng);
            step
        }
        "maf_layer" => {
            let mut step = Bijector::Maf(MafLayer::new(dim, 10, 2, &mut rng).unwrap());
            perturb_params(&mut step, 0.25, &mut rng);
            step
        }
        "permute" => {
            let mut perm: Vec<usize> = (0..dim).collect();
            perm.shuffle(&mut rng);
            Bijector::Permute(Permute::new(perm).unwrap())
        }
        other => panic!("unknown bijector kind {}", other),
    }
}

/// Mixed chain of `depth` randomized steps cycling through the parametric
/// kinds (coupling requires dim ≥ 2).
pub fn random_chain(dim: usize, depth: usize, seed: u64) -> Vec<Bijector> {
    let kinds: Vec<&str> = if dim >= 2 {
        vec!["actnorm", "inv_linear", "affine_coupling", "maf_layer", "permute"]
    } else {
        vec!["actnorm", "maf_layer"]
    };
    (0..depth)
        .map(|i| random_bijector(kinds[i % kinds.len()], dim, seed.wrapping_add(i as u64 * 1299721)))
        .collect()
}

/// Random events in [-2, 2]^d.
pub fn random_events(n: usize, dim: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::new(data, &[n, dim]).unwrap()
}

/// Batched variant evaluating a vectorized density over the same midpoint
/// grid; `f` maps row-major points [(x, y); k] to k values.
pub fn grid_quadrature_2d_batched(
    f: &dyn Fn(&[(f64, f64)]) -> Vec<f64>,
    lo: f64,
    hi: f64,
    steps: usize,
) -> f64 {
    let cell = (hi - lo) / steps as f64;
    let mut points = Vec::with_capacity(steps * steps);
    for i in 0..steps {
        let x = lo + (i as f64 + 0.5) * cell;
        for j in 0..steps {
            let y = lo + (j as f64 + 0.5) * cell;
            points.push((x, y));
        }
    }
    f(&points).iter().sum::<f64>() * cell * cell
}

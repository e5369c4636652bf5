//! Dataset ingestion, preprocessing, dequantization, and synthetic 2-D
//! target densities with exact log-densities.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::tensor::Tensor;

/// Tabular dataset with deterministic splits and train-derived
/// standardization applied to every split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub train: Tensor,
    pub val: Tensor,
    pub test: Tensor,
    /// Per-dimension mean of the raw train split.
    pub mean: Vec<f64>,
    /// Per-dimension (population) standard deviation of the raw train split.
    pub std: Vec<f64>,
    pub dequantized: bool,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.train.n_cols()
    }
}

/// Loads a numeric CSV (optional single header row), shuffles rows with a
/// seeded permutation, splits by the given fractions, and standardizes all
/// splits with statistics from the train split only.
pub fn load_csv(path: &Path, fractions: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let rows = parse_csv(&text)?;
    dataset_from_rows(name, rows, fractions, seed, false)
}

/// Parses comma-separated numeric rows; a non-numeric first line is treated
/// as a header. Row/column positions in errors are 1-based file positions.
pub fn parse_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (line_idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, (usize, String)> = cells
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .map_err(|_| (c, format!("'{}' is not numeric", cell)))
            })
            .collect();
        match parsed {
            Ok(values) => {
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(FlowError::Parse {
                            row: line_idx + 1,
                            col: values.len().min(w) + 1,
                            message: format!("expected {} columns, found {}", w, values.len()),
                        });
                    }
                } else {
                    width = Some(values.len());
                }
                rows.push(values);
            }
            Err((c, message)) => {
                // A non-numeric first line is an optional header.
                if line_idx == 0 && rows.is_empty() {
                    continue;
                }
                return Err(FlowError::Parse {
                    row: line_idx + 1,
                    col: c + 1,
                    message,
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(FlowError::Data("no numeric rows in input".into()));
    }
    Ok(rows)
}

/// Splits, standardizes, and wraps raw rows into a [`Dataset`].
pub fn dataset_from_rows(
    name: String,
    rows: Vec<Vec<f64>>,
    fractions: (f64, f64, f64),
    seed: u64,
    dequantized: bool,
) -> Result<Dataset> {
    let (f_train, f_val, f_test) = fractions;
    for (label, f) in [("train", f_train), ("val", f_val), ("test", f_test)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(FlowError::Config(format!(
                "{} fraction {} outside [0, 1]",
                label, f
            )));
        }
    }
    if (f_train + f_val + f_test - 1.0).abs() > 1e-9 {
        return Err(FlowError::Config(format!(
            "split fractions must sum to 1, got {}",
            f_train + f_val + f_test
        )));
    }
    let n = rows.len();
    let d = rows[0].len();
    let n_train = (n as f64 * f_train).floor() as usize;
    let n_val = (n as f64 * f_val).floor() as usize;
    let n_test = n - n_train - n_val;
    if n_train < 2 || n_val < 1 || n_test < 1 {
        return Err(FlowError::Data(format!(
            "too few rows ({}) for splits {}/{}/{}",
            n, n_train, n_val, n_test
        )));
    }

    // Seeded Fisher-Yates permutation keeps reloads bitwise identical.
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let take = |idx: &[usize]| -> Vec<Vec<f64>> { idx.iter().map(|&i| rows[i].clone()).collect() };
    let train_rows = take(&order[..n_train]);
    let val_rows = take(&order[n_train..n_train + n_val]);
    let test_rows = take(&order[n_train + n_val..]);

    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for j in 0..d {
        let m: f64 = train_rows.iter().map(|r| r[j]).sum::<f64>() / n_train as f64;
        let var: f64 = train_rows
            .iter()
            .map(|r| (r[j] - m) * (r[j] - m))
            .sum::<f64>()
            / n_train as f64;
        let s = var.sqrt();
        if s < 1e-12 {
            return Err(FlowError::DegenerateData(format!(
                "column {} is constant in the train split",
                j
            )));
        }
        mean[j] = m;
        std[j] = s;
    }
    let standardize = |rows: Vec<Vec<f64>>| -> Result<Tensor> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            for j in 0..d {
                data.push((r[j] - mean[j]) / std[j]);
            }
        }
        Tensor::new(data, &[n, d])
    };

    Ok(Dataset {
        name,
        train: standardize(train_rows)?,
        val: standardize(val_rows)?,
        test: standardize(test_rows)?,
        mean,
        std,
        dequantized,
    })
}

/// Uniform dequantization of integer-valued data in [0, 255]:
/// `(x + u) / 256` with `u ~ Uniform[0, 1)` per element; output in [0, 1).
/// Flooring `out · 256` recovers the original integers exactly.
pub fn dequantize(x_int: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
    let mut out = Vec::with_capacity(x_int.len());
    for (i, &v) in x_int.data().iter().enumerate() {
        if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
            return Err(FlowError::Data(format!(
                "dequantize expects integers in [0, 255]; element {} is {}",
                i, v
            )));
        }
        let u: f64 = rng.random_range(0.0..1.0);
        out.push((v + u) / 256.0);
    }
    Tensor::new(out, x_int.shape())
}

/// Synthetic 2-D targets with exact log-densities, used for desk-scale
/// verification in place of the large tabular benchmarks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyDensity {
    GaussianMixture {
        means: Vec<(f64, f64)>,
        stds: Vec<f64>,
        weights: Vec<f64>,
    },
    TwoRings {
        radius_inner: f64,
        radius_outer: f64,
        sigma: f64,
    },
    Checkerboard {
        /// Grid spans [-half_extent, half_extent]² with `cells`² squares.
        half_extent: f64,
        cells: usize,
    },
}

impl ToyDensity {
    /// Default parameterizations by name.
    pub fn by_name(name: &str) -> Result<ToyDensity> {
        match name {
            "gaussian_mixture" => Ok(ToyDensity::GaussianMixture {
                means: vec![(-1.5, 0.0), (1.5, 0.0)],
                stds: vec![0.5, 0.5],
                weights: vec![0.5, 0.5],
            }),
            "two_rings" => Ok(ToyDensity::TwoRings {
                radius_inner: 1.0,
                radius_outer: 3.0,
                sigma: 0.12,
            }),
            "checkerboard" => Ok(ToyDensity::Checkerboard {
                half_extent: 2.0,
                cells: 4,
            }),
            other => Err(FlowError::Config(format!(
                "unknown toy density '{}'; expected gaussian_mixture, two_rings, or checkerboard",
                other
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ToyDensity::GaussianMixture { .. } => "gaussian_mixture",
            ToyDensity::TwoRings { .. } => "two_rings",
            ToyDensity::Checkerboard { .. } => "checkerboard",
        }
    }

    /// Exact log-density at a point (−∞ outside the support).
    pub fn log_density(&self, x: f64, y: f64) -> f64 {
        match self {
            ToyDensity::GaussianMixture {
                means,
                stds,
                weights,
            } => {
                let terms: Vec<f64> = means
                    .iter()
                    .zip(stds)
                    .zip(weights)
                    .map(|(((mx, my), s), w)| {
                        let dx = x - mx;
                        let dy = y - my;
                        w.ln() - (2.0 * std::f64::consts::PI * s * s).ln()
                            - (dx * dx + dy * dy) / (2.0 * s * s)
                    })
                    .collect();
                log_sum_exp(&terms)
            }
            ToyDensity::TwoRings {
                radius_inner,
                radius_outer,
                sigma,
            } => {
                let r = x.hypot(y);
                if r <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let radial = |r0: f64| -> f64 {
                    let z = (r - r0) / sigma;
                    0.5f64.ln()
                        - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
                        - 0.5 * z * z
                };
                let angular = -(2.0 * std::f64::consts::PI * r).ln();
                log_sum_exp(&[radial(*radius_inner), radial(*radius_outer)]) + angular
            }
            ToyDensity::Checkerboard { half_extent, cells } => {
                let cell = 2.0 * half_extent / *cells as f64;
                if x < -half_extent || x >= *half_extent || y < -half_extent || y >= *half_extent
                {
                    return f64::NEG_INFINITY;
                }
                let i = ((x + half_extent) / cell).floor() as usize;
                let j = ((y + half_extent) / cell).floor() as usize;
                if (i + j) % 2 == 0 {
                    let dark = cells * cells / 2;
                    -((dark as f64) * cell * cell).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// i.i.d. samples, `[n, 2]`.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Tensor> {
        if n == 0 {
            return Err(FlowError::Contract("toy_sample needs n ≥ 1".into()));
        }
        let mut data = Vec::with_capacity(n * 2);
        for _ in 0..n {
            let (x, y) = self.sample_one(rng);
            data.push(x);
            data.push(y);
        }
        Tensor::new(data, &[n, 2])
    }

    fn sample_one(&self, rng: &mut impl Rng) -> (f64, f64) {
        match self {
            ToyDensity::GaussianMixture {
                means,
                stds,
                weights,
            } => {
                let k = pick_weighted(weights, rng);
                let (mx, my) = means[k];
                let s = stds[k];
                let zx: f64 = StandardNormal.sample(rng);
                let zy: f64 = StandardNormal.sample(rng);
                (mx + s * zx, my + s * zy)
            }
            ToyDensity::TwoRings {
                radius_inner,
                radius_outer,
                sigma,
            } => {
                let r0 = if rng.random_range(0.0..1.0) < 0.5 {
                    *radius_inner
                } else {
                    *radius_outer
                };
                let r = loop {
                    let z: f64 = StandardNormal.sample(rng);
                    let r = r0 + sigma * z;
                    if r > 0.0 {
                        break r;
                    }
                };
                let theta = rng.random_range(0.0..2.0 * std::f64::consts::PI);
                (r * theta.cos(), r * theta.sin())
            }
            ToyDensity::Checkerboard { half_extent, cells } => {
                let cell = 2.0 * half_extent / *cells as f64;
                // Enumerate dark cells row-major and pick one uniformly.
                let dark = cells * cells / 2;
                let pick = rng.random_range(0..dark);
                let mut count = 0;
                for i in 0..*cells {
                    for j in 0..*cells {
                        if (i + j) % 2 == 0 {
                            if count == pick {
                                let x = -half_extent
                                    + (i as f64 + rng.random_range(0.0..1.0)) * cell;
                                let y = -half_extent
                                    + (j as f64 + rng.random_range(0.0..1.0)) * cell;
                                return (x, y);
                            }
                            count += 1;
                        }
                    }
                }
                unreachable!("dark cell index in range");
            }
        }
    }
}

fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn pick_weighted(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Training-time event source: a standardized table or a toy density with
/// pre-drawn validation/test sets.
#[derive(Debug, Clone)]
pub enum DataSource {
    Table(Dataset),
    Toy {
        density: ToyDensity,
        val: Tensor,
        test: Tensor,
    },
}

impl DataSource {
    /// Toy source with `val_n`/`test_n` events pre-drawn from a dedicated
    /// seed so training draws never disturb evaluation sets.
    pub fn toy(density: ToyDensity, val_n: usize, test_n: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7097_1ead_5eed_0001);
        let val = density.sample(val_n, &mut rng)?;
        let test = density.sample(test_n, &mut rng)?;
        Ok(DataSource::Toy { density, val, test })
    }

    pub fn name(&self) -> String {
        match self {
            DataSource::Table(d) => d.name.clone(),
            DataSource::Toy { density, .. } => density.name().to_string(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DataSource::Table(d) => d.dim(),
            DataSource::Toy { test, .. } => test.n_cols(),
        }
    }

    pub fn dequantized(&self) -> bool {
        match self {
            DataSource::Table(d) => d.dequantized,
            DataSource::Toy { .. } => false,
        }
    }

    pub fn test(&self) -> &Tensor {
        match self {
            DataSource::Table(d) => &d.test,
            DataSource::Toy { test, .. } => test,
        }
    }

    pub fn val(&self) -> &Tensor {
        match self {
            DataSource::Table(d) => &d.val,
            DataSource::Toy { val, .. } => val,
        }
    }

    /// Next training batch: with-replacement row draws for tables, fresh
    /// density draws for toys. Deterministic given the rng state.
    pub fn batch(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Tensor> {
        match self {
            DataSource::Table(d) => {
                let n = d.train.n_rows();
                let dim = d.dim();
                let mut data = Vec::with_capacity(batch_size * dim);
                for _ in 0..batch_size {
                    let i = rng.random_range(0..n);
                    data.extend_from_slice(d.train.row_values(i));
                }
                Tensor::new(data, &[batch_size, dim])
            }
            DataSource::Toy { density, .. } => density.sample(batch_size, rng),
        }
    }
}

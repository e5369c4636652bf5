//! Training loop, evaluation metrics, and throughput benchmarking.

use std::borrow::Cow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataSource;
use crate::distill::{combined_loss, DistillPlan};
use crate::error::{FlowError, Result};
use crate::flow::FlowModel;
use crate::optim::{AdamW, AdamWConfig};
use crate::tensor::{Graph, Tensor};

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of iterations spent in linear warmup.
    pub warmup_frac: f64,
    pub clip_norm: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Consecutive non-finite losses tolerated before aborting.
    pub divergence_patience: usize,
    /// Steps per recorded train-loss window.
    pub log_every: usize,
    /// Track validation NLL every `log_every` steps and restore the
    /// best-validation parameters at the end of the run.
    pub keep_best_val: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            batch_size: 512,
            lr: 5e-4,
            warmup_frac: 0.05,
            clip_norm: 10.0,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            divergence_patience: 10,
            log_every: 100,
            keep_best_val: false,
        }
    }
}

/// Outcome of a training run. All fields except the wall-clock timings are
/// bitwise reproducible from (config, seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    /// Mean train loss per logging window.
    pub train_loss: Vec<f64>,
    /// Mean test log-likelihood in nats (higher is better).
    pub test_loglik: f64,
    /// Bits per dimension, reported only for dequantized data.
    pub test_bpd: Option<f64>,
    pub infer_mean_ms: f64,
    pub infer_std_ms: f64,
    pub param_count: usize,
    /// Steps whose synthesized-loss term was skipped for instability.
    pub skd_skipped: usize,
    pub seed: u64,
    /// Validation log-likelihood of the returned parameters, when the
    /// best-validation snapshot was enabled.
    pub val_loglik: Option<f64>,
}

/// Evaluation metrics on a held-out split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loglik_nats: f64,
    pub bpd: Option<f64>,
}

/// Mean test log-likelihood; bits-per-dimension is derived as
/// `-logp/(d·ln 2) + log2(256)` when the data went through dequantization.
pub fn evaluate(model: &FlowModel, test: &Tensor, dequantized: bool) -> Result<EvalMetrics> {
    let (logp, _) = model.log_prob(&test.detach())?;
    let mean: f64 = logp.data().iter().sum::<f64>() / logp.len() as f64;
    let bpd = dequantized.then(|| {
        let d = test.n_cols() as f64;
        -mean / (d * LN_2) + 8.0
    });
    Ok(EvalMetrics {
        loglik_nats: mean,
        bpd,
    })
}

/// Trains `model` by minimizing the negative log-likelihood, or the
/// weighted distillation objective when a teacher and plan are given.
/// ActNorm layers are data-initialized on the first batch. Deterministic
/// given (config, seed) apart from the timing fields.
pub fn train(
    model: &mut FlowModel,
    teacher: Option<&FlowModel>,
    source: &DataSource,
    plan: Option<&DistillPlan>,
    config: &TrainConfig,
) -> Result<RunReport> {
    if plan.is_some() && teacher.is_none() {
        return Err(FlowError::Contract(
            "distillation plan provided without a teacher".into(),
        ));
    }
    if let (Some(t), Some(p)) = (teacher, plan) {
        if !t.is_initialized() {
            return Err(FlowError::Contract("teacher is not initialized".into()));
        }
        p.validate(t, model)?;
    }
    if source.dim() != model.dim() {
        return Err(FlowError::Shape(format!(
            "data dim {} vs model dim {}",
            source.dim(),
            model.dim()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Synthesized-loss draws use their own stream so the batch sequence is
    // identical across runs that differ only in loss weights.
    let mut synth_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5caf_f01d_0d15_7e11);
    let warmup_steps = (config.iterations as f64 * config.warmup_frac).ceil() as usize;
    let adamw_config = AdamWConfig {
        lr: config.lr,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.eps,
        weight_decay: config.weight_decay,
        warmup_steps,
        clip_norm: config.clip_norm,
    };

    // Data-dependent initialization before any optimizer state is created.
    if !model.is_initialized() {
        let first = source.batch(config.batch_size, &mut rng)?;
        model.data_init(&first)?;
    }

    let mut optimizer = AdamW::new(adamw_config, &model.params());

    let mut train_loss = Vec::new();
    let mut window_sum = 0.0;
    let mut window_count = 0usize;
    let mut skd_skipped = 0usize;
    let mut bad_streak = 0usize;
    let mut best_val: Option<(f64, Vec<Vec<f64>>)> = None;

    for step in 0..config.iterations {
        let batch = source.batch(config.batch_size, &mut rng)?;
        let graph = Graph::new();
        model.attach_params(&graph);

        let loss = match (teacher, plan) {
            (Some(t), Some(p)) => {
                let latents = if p.weight_synth > 0.0 {
                    model.sample_latents(p.skd_batch, p.skd_temperature, &mut synth_rng)?
                } else {
                    Tensor::zeros(&[1, model.dim()])
                };
                let effective: Cow<'_, DistillPlan> =
                    if p.weight_synth > 0.0 && step < p.skd_warmup_steps {
                        let mut warm = p.clone();
                        warm.weight_synth = 0.0;
                        Cow::Owned(warm)
                    } else {
                        Cow::Borrowed(p)
                    };
                let out = combined_loss(t, model, &batch, &latents, &effective)?;
                if out.skd_skipped {
                    skd_skipped += 1;
                }
                out.total
            }
            _ => model.nll_loss(&batch)?,
        };

        let value = loss.item();
        if !value.is_finite() {
            model.detach_params();
            bad_streak += 1;
            if bad_streak >= config.divergence_patience {
                return Err(FlowError::Divergence {
                    step,
                    consecutive: bad_streak,
                    diagnostics: format!("last loss {}", value),
                });
            }
            continue;
        }
        bad_streak = 0;

        // Gradients must be read while the parameters still hold their leaf
        // handles; the optimizer replaces them with fresh untracked tensors.
        loss.backward()?;
        let mut params = model.params_mut();
        let mut grads: Vec<Vec<f64>> = params.iter().map(|p| p.grad_or_zeros()).collect();
        optimizer.clip_gradients(&mut grads);
        optimizer.step(&mut params, &grads)?;

        window_sum += value;
        window_count += 1;
        if (step + 1) % config.log_every.max(1) == 0 {
            train_loss.push(window_sum / window_count as f64);
            window_sum = 0.0;
            window_count = 0;
        }
        if config.keep_best_val
            && ((step + 1) % config.log_every.max(1) == 0 || step + 1 == config.iterations)
        {
            let val = evaluate(model, source.val(), false)?.loglik_nats;
            let better = best_val.as_ref().map(|(v, _)| val > *v).unwrap_or(true);
            if better {
                let snapshot = model.params().iter().map(|p| p.data().to_vec()).collect();
                best_val = Some((val, snapshot));
            }
        }
    }
    if window_count > 0 {
        train_loss.push(window_sum / window_count as f64);
    }

    let mut val_loglik = None;
    if let Some((val, snapshot)) = best_val {
        for (p, data) in model.params_mut().into_iter().zip(snapshot) {
            *p = Tensor::new(data, p.shape())?;
        }
        val_loglik = Some(val);
    }

    let metrics = evaluate(model, source.test(), source.dequantized())?;
    let (infer_mean_ms, infer_std_ms, param_count) =
        benchmark(model, (config.batch_size.min(1024), model.dim()), 10)?;

    Ok(RunReport {
        train_loss,
        test_loglik: metrics.loglik_nats,
        test_bpd: metrics.bpd,
        infer_mean_ms,
        infer_std_ms,
        param_count,
        skd_skipped,
        seed: config.seed,
        val_loglik,
    })
}

/// Wall-clock per-batch forward log-density timing: `repeats` measured
/// passes after 3 warmup passes, on a fixed standard-normal batch.
pub fn benchmark(
    model: &FlowModel,
    batch_shape: (usize, usize),
    repeats: usize,
) -> Result<(f64, f64, usize)> {
    if repeats < 10 {
        return Err(FlowError::Contract(
            "benchmark needs at least 10 repeats".into(),
        ));
    }
    let (n, d) = batch_shape;
    if d != model.dim() {
        return Err(FlowError::Shape(format!(
            "benchmark batch dim {} vs model dim {}",
            d,
            model.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xbe9c);
    let batch = model.sample_latents(n, 1.0, &mut rng)?;
    for _ in 0..3 {
        let _ = model.log_prob(&batch)?;
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = std::time::Instant::now();
        let _ = model.log_prob(&batch)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / times.len() as f64;
    Ok((mean, var.sqrt(), model.param_count()))
}

//! Command implementations. Artifacts are written atomically (temp file +
//! rename); stdout carries the human-readable summary.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use flowkd::checkpoint;
use flowkd::data::parse_csv;
use flowkd::error::{FlowError, Result};
use flowkd::flow::FlowModel;
use flowkd::tensor::Tensor;
use flowkd::train::{benchmark, evaluate, train, RunReport};

use crate::config::ExperimentConfig;

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| FlowError::Io(std::io::Error::other(e)))?;
    write_atomic(&dir.join("report.json"), &json)?;

    // Line-delimited window log for streaming consumers.
    let mut log = String::new();
    for (i, loss) in report.train_loss.iter().enumerate() {
        log.push_str(&format!(
            "{{\"window\":{},\"mean_train_loss\":{}}}\n",
            i, loss
        ));
    }
    write_atomic(&dir.join("train_log.jsonl"), &log)
}

fn rows_to_csv(t: &Tensor) -> String {
    let mut out = String::new();
    for i in 0..t.n_rows() {
        let row: Vec<String> = t.row_values(i).iter().map(|v| format!("{}", v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Trains (optionally distilling) per the config and writes
/// checkpoint.json, report.json, and train_log.jsonl under output_dir.
pub fn cmd_train(config_path: &Path, preset: Option<&str>, require_distill: bool) -> Result<()> {
    let mut config = ExperimentConfig::from_path(config_path)?;
    if let Some(p) = preset {
        config.apply_preset(p)?;
    }
    if require_distill && config.distill.mode == "none" {
        return Err(FlowError::Config(
            "distill.mode: the distill command needs a mode other than \"none\" \
             (set it in the config or pass --preset)"
                .into(),
        ));
    }

    let source = config.data_source()?;
    let mut model = config.build_model(source.dim())?;
    let pair = config.distillation(&model)?;
    let train_config = config.train_config();

    let started = std::time::Instant::now();
    let report = match &pair {
        Some((teacher, plan)) => train(&mut model, Some(teacher), &source, Some(plan), &train_config)?,
        None => train(&mut model, None, &source, None, &train_config)?,
    };
    let elapsed = started.elapsed().as_secs_f64();

    let ck_path = config.output_dir.join("checkpoint.json");
    checkpoint::save(&model, &ck_path)?;
    write_report(&config.output_dir, &report)?;

    println!(
        "{}: trained {} ({} params) on {} in {:.1}s",
        config.name,
        config.model.architecture,
        report.param_count,
        source.name(),
        elapsed
    );
    println!(
        "  test log-likelihood {:.6} nats{}  (seed {}, skd skipped {})",
        report.test_loglik,
        report
            .test_bpd
            .map(|b| format!(", {:.4} bpd", b))
            .unwrap_or_default(),
        report.seed,
        report.skd_skipped
    );
    println!("  checkpoint: {}", ck_path.display());
    Ok(())
}

/// Prints held-out metrics of a checkpoint on the config's data and writes
/// eval.json next to the other artifacts.
pub fn cmd_evaluate(checkpoint_path: &Path, config_path: &Path) -> Result<()> {
    let config = ExperimentConfig::from_path(config_path)?;
    let model = checkpoint::load(checkpoint_path)?;
    let source = config.data_source()?;
    if source.dim() != model.dim() {
        return Err(FlowError::Config(format!(
            "data: event dim {} does not match checkpoint dim {}",
            source.dim(),
            model.dim()
        )));
    }
    let metrics = evaluate(&model, source.test(), source.dequantized())?;
    let json = serde_json::to_string_pretty(&metrics)
        .map_err(|e| FlowError::Io(std::io::Error::other(e)))?;
    write_atomic(&config.output_dir.join("eval.json"), &json)?;
    println!(
        "{}: test log-likelihood {:.6} nats{}",
        config.name,
        metrics.loglik_nats,
        metrics
            .bpd
            .map(|b| format!(", {:.4} bpd", b))
            .unwrap_or_default()
    );
    Ok(())
}

/// Draws `count` events at the given temperature and writes them as CSV
/// rows (one event per line, model-dim columns).
pub fn cmd_sample(
    checkpoint_path: &Path,
    count: usize,
    temperature: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let model = checkpoint::load(checkpoint_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = model.sample(count, temperature, &mut rng)?;
    write_atomic(out, &rows_to_csv(&samples))?;
    println!(
        "wrote {} samples ({} columns, temperature {}) to {}",
        count,
        model.dim(),
        temperature,
        out.display()
    );
    Ok(())
}

fn read_point(path: &Path, dim: usize, label: &str) -> Result<Tensor> {
    let text = std::fs::read_to_string(path)?;
    let rows = parse_csv(&text)?;
    if rows.len() != 1 || rows[0].len() != dim {
        return Err(FlowError::Shape(format!(
            "{}: expected a single row of {} values, got {} row(s) of {}",
            label,
            dim,
            rows.len(),
            rows.first().map(|r| r.len()).unwrap_or(0)
        )));
    }
    Tensor::new(rows[0].clone(), &[1, dim])
}

/// Norm-preserving latent interpolation between two events; emits
/// `steps + 1` rows covering α = 0..1 inclusive.
pub fn cmd_interpolate(
    checkpoint_path: &Path,
    from: &Path,
    to: &Path,
    steps: usize,
    out: &Path,
) -> Result<()> {
    if steps == 0 {
        return Err(FlowError::Config("steps: must be ≥ 1".into()));
    }
    let model = checkpoint::load(checkpoint_path)?;
    let a = read_point(from, model.dim(), "point-a")?;
    let b = read_point(to, model.dim(), "point-b")?;
    let mut out_text = String::new();
    for k in 0..=steps {
        let alpha = k as f64 / steps as f64;
        let point = model.latent_interpolate(&a, &b, alpha)?;
        out_text.push_str(&rows_to_csv(&point));
    }
    write_atomic(out, &out_text)?;
    println!(
        "wrote {} interpolation rows to {}",
        steps + 1,
        out.display()
    );
    Ok(())
}

/// Forward-pass timing and parameter count for a checkpoint.
pub fn cmd_benchmark(checkpoint_path: &Path, batch: usize, repeats: usize) -> Result<()> {
    let model = checkpoint::load(checkpoint_path)?;
    let (mean_ms, std_ms, params) = benchmark(&model, (batch, model.dim()), repeats)?;
    println!(
        "{:<14} batch={:<6} time {:.3} ± {:.3} ms   params {} ({:.1}K)",
        model.architecture().to_string(),
        batch,
        mean_ms,
        std_ms,
        params,
        params as f64 / 1000.0
    );
    Ok(())
}

/// Artifact paths a train run produces for a given output directory.
pub fn artifact_paths(output_dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        output_dir.join("checkpoint.json"),
        output_dir.join("report.json"),
        output_dir.join("train_log.jsonl"),
    )
}

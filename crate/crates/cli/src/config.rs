//! Experiment configuration: TOML schema, λ presets, and validation with
//! errors that name the offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use flowkd::data::{load_csv, DataSource, ToyDensity};
use flowkd::distill::DistillPlan;
use flowkd::error::{FlowError, Result};
use flowkd::flow::{Architecture, FlowModel};
use flowkd::train::TrainConfig;

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.81, 0.09, 0.10);

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelSection,
    pub data: DataSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub distill: DistillSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: String,
    pub depth: usize,
    pub hidden: usize,
    /// Optional explicit tap step indices; defaults to block boundaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taps: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// "toy" or "csv".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<[f64; 3]>,
    #[serde(default)]
    pub dequantize: bool,
    #[serde(default = "default_val_events")]
    pub val_events: usize,
    #[serde(default = "default_test_events")]
    pub test_events: usize,
}

fn default_val_events() -> usize {
    1024
}

fn default_test_events() -> usize {
    8192
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_frac: f64,
    pub clip_norm: f64,
    pub weight_decay: f64,
    pub divergence_patience: usize,
    pub log_every: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            iterations: t.iterations,
            batch_size: t.batch_size,
            lr: t.lr,
            warmup_frac: t.warmup_frac,
            clip_norm: t.clip_norm,
            weight_decay: t.weight_decay,
            divergence_patience: t.divergence_patience,
            log_every: t.log_every,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DistillSection {
    /// "none", "lkd", "ilkd", or "skd".
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_nll: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_latent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_synth: Option<f64>,
    /// Explicit (teacher_tap, student_tap) pairs; derived from depth ratio
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taps: Option<Vec<[usize; 2]>>,
    pub skd_batch: usize,
    pub skd_temperature: f64,
    pub skd_warmup_steps: usize,
}

impl Default for DistillSection {
    fn default() -> Self {
        Self {
            mode: "none".into(),
            teacher: None,
            weight_nll: None,
            weight_latent: None,
            weight_synth: None,
            taps: None,
            skd_batch: 256,
            skd_temperature: 1.0,
            skd_warmup_steps: 0,
        }
    }
}

/// Loss-weight presets per distillation mode: pure likelihood for none,
/// (0.9, 0.1, 0) for latent modes (lkd pairs final latents only), and
/// (0.85, 0.075, 0.075) for the synthesized mode.
pub fn preset_weights(mode: &str) -> Result<(f64, f64, f64)> {
    match mode {
        "none" => Ok((1.0, 0.0, 0.0)),
        "lkd" | "ilkd" => Ok((0.9, 0.1, 0.0)),
        "skd" => Ok((0.85, 0.075, 0.075)),
        other => Err(FlowError::Config(format!(
            "distill.mode: unknown value '{}'; expected none, lkd, ilkd, or skd",
            other
        ))),
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            FlowError::Config(format!("cannot read config {}: {}", path.display(), e))
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| FlowError::Config(format!("config parse error: {}", e)))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| FlowError::Config(format!("config serialize error: {}", e)))
    }

    /// Installs a preset's mode and λ weights, overriding the file values.
    pub fn apply_preset(&mut self, preset: &str) -> Result<()> {
        let (nll, latent, synth) = preset_weights(preset)?;
        if preset != "none" && self.distill.teacher.is_none() {
            return Err(FlowError::Config(format!(
                "distill.teacher: required by preset '{}'",
                preset
            )));
        }
        self.distill.mode = preset.to_string();
        self.distill.weight_nll = Some(nll);
        self.distill.weight_latent = Some(latent);
        self.distill.weight_synth = Some(synth);
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(FlowError::Config("name: must not be empty".into()));
        }
        self.model.architecture.parse::<Architecture>().map_err(|_| {
            FlowError::Config(format!(
                "model.architecture: unknown value '{}'; expected glow_tabular or maf",
                self.model.architecture
            ))
        })?;
        if self.model.depth == 0 {
            return Err(FlowError::Config("model.depth: must be ≥ 1".into()));
        }
        if self.model.hidden == 0 {
            return Err(FlowError::Config("model.hidden: must be ≥ 1".into()));
        }

        match self.data.kind.as_str() {
            "toy" => {
                let name = self.data.toy.as_deref().ok_or_else(|| {
                    FlowError::Config("data.toy: required when data.kind = \"toy\"".into())
                })?;
                ToyDensity::by_name(name)
                    .map_err(|_| FlowError::Config(format!("data.toy: unknown density '{}'", name)))?;
            }
            "csv" => {
                if self.data.path.is_none() {
                    return Err(FlowError::Config(
                        "data.path: required when data.kind = \"csv\"".into(),
                    ));
                }
                if let Some(split) = self.data.split {
                    let sum: f64 = split.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(FlowError::Config(format!(
                            "data.split: fractions must sum to 1, got {}",
                            sum
                        )));
                    }
                }
            }
            other => {
                return Err(FlowError::Config(format!(
                    "data.kind: unknown value '{}'; expected toy or csv",
                    other
                )));
            }
        }

        match self.distill.mode.as_str() {
            "none" => {
                if self.distill.teacher.is_some() {
                    return Err(FlowError::Config(
                        "distill.teacher: must be absent when distill.mode = \"none\"".into(),
                    ));
                }
            }
            "lkd" | "ilkd" | "skd" => {
                if self.distill.teacher.is_none() {
                    return Err(FlowError::Config(format!(
                        "distill.teacher: required when distill.mode = \"{}\"",
                        self.distill.mode
                    )));
                }
            }
            other => {
                return Err(FlowError::Config(format!(
                    "distill.mode: unknown value '{}'; expected none, lkd, ilkd, or skd",
                    other
                )));
            }
        }
        let (dn, dl, ds) = self.resolved_weights()?;
        if dn < 0.0 || dl < 0.0 || ds < 0.0 || dn + dl + ds <= 0.0 {
            return Err(FlowError::Config(
                "distill.weight_*: weights must be non-negative with a positive sum".into(),
            ));
        }
        Ok(())
    }

    /// λ weights after filling mode defaults.
    pub fn resolved_weights(&self) -> Result<(f64, f64, f64)> {
        let (dn, dl, ds) = preset_weights(&self.distill.mode)?;
        Ok((
            self.distill.weight_nll.unwrap_or(dn),
            self.distill.weight_latent.unwrap_or(dl),
            self.distill.weight_synth.unwrap_or(ds),
        ))
    }

    pub fn architecture(&self) -> Architecture {
        self.model
            .architecture
            .parse()
            .expect("validated architecture")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.optimizer.iterations,
            batch_size: self.optimizer.batch_size,
            lr: self.optimizer.lr,
            warmup_frac: self.optimizer.warmup_frac,
            clip_norm: self.optimizer.clip_norm,
            weight_decay: self.optimizer.weight_decay,
            seed: self.seed,
            divergence_patience: self.optimizer.divergence_patience,
            log_every: self.optimizer.log_every,
            ..TrainConfig::default()
        }
    }

    /// Builds the event source described by the data section.
    pub fn data_source(&self) -> Result<DataSource> {
        match self.data.kind.as_str() {
            "toy" => {
                let density = ToyDensity::by_name(self.data.toy.as_deref().unwrap())?;
                DataSource::toy(density, self.data.val_events, self.data.test_events, self.seed)
            }
            _ => {
                let path = self.data.path.as_ref().unwrap();
                let split = self
                    .data
                    .split
                    .map(|s| (s[0], s[1], s[2]))
                    .unwrap_or(DEFAULT_SPLIT);
                let mut dataset = load_csv(path, split, self.seed)?;
                dataset.dequantized = self.data.dequantize;
                Ok(DataSource::Table(dataset))
            }
        }
    }

    /// Fresh student/standalone model per the model section.
    pub fn build_model(&self, dim: usize) -> Result<FlowModel> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_f10c);
        let mut model = FlowModel::new(
            dim,
            self.model.depth,
            self.model.hidden,
            self.architecture(),
            &mut rng,
        )?;
        if let Some(taps) = &self.model.taps {
            model.set_tap_indices(taps.clone())?;
        }
        Ok(model)
    }

    /// Loads the teacher and resolves the distillation plan, when any.
    pub fn distillation(
        &self,
        student: &FlowModel,
    ) -> Result<Option<(FlowModel, DistillPlan)>> {
        if self.distill.mode == "none" {
            return Ok(None);
        }
        let teacher_path = self.distill.teacher.as_ref().unwrap();
        let teacher = flowkd::checkpoint::load(teacher_path).map_err(|e| {
            FlowError::Config(format!(
                "distill.teacher: cannot load '{}': {}",
                teacher_path.display(),
                e
            ))
        })?;
        if teacher.architecture() != student.architecture() {
            return Err(FlowError::Config(format!(
                "distill.teacher: architecture {} incompatible with student {}",
                teacher.architecture(),
                student.architecture()
            )));
        }
        if teacher.dim() != student.dim() {
            return Err(FlowError::Config(format!(
                "distill.teacher: event dim {} incompatible with student dim {}",
                teacher.dim(),
                student.dim()
            )));
        }
        let correspondence = match (&self.distill.taps, self.distill.mode.as_str()) {
            (Some(pairs), _) => pairs.iter().map(|p| (p[0], p[1])).collect(),
            (None, "lkd") => {
                // Final latents only.
                vec![(teacher.tap_count() - 1, student.tap_count() - 1)]
            }
            _ => DistillPlan::pair_taps(&teacher, student)?,
        };
        let (weight_nll, weight_latent, weight_synth) = self.resolved_weights()?;
        let plan = DistillPlan {
            correspondence,
            weight_nll,
            weight_latent,
            weight_synth,
            skd_batch: self.distill.skd_batch,
            skd_temperature: self.distill.skd_temperature,
            skd_warmup_steps: self.distill.skd_warmup_steps,
        };
        plan.validate(&teacher, student)?;
        Ok(Some((teacher, plan)))
    }
}

//! Teacher→student distillation objectives over latent representations.
//!
//! Three losses, all mean-absolute (L1) with mean reduction over batch and
//! dimensions so the weights are batch-size invariant:
//!
//! - latent: final latents of the same data events,
//! - intermediate-latent: summed over paired taps (the final latent pair is
//!   just another tap),
//! - synthesized: generated events from shared base-distribution draws,
//!   with gradients traversing the student's inverse chain.
//!
//! The teacher is evaluated off-graph everywhere, so its parameters never
//! receive gradients.

use crate::error::{FlowError, Result};
use crate::flow::FlowModel;
use crate::tensor::Tensor;

/// Step-correspondence map and loss weights for a distillation run.
#[derive(Debug, Clone)]
pub struct DistillPlan {
    /// Pairs of (teacher tap position, student tap position), each indexing
    /// into the respective model's tap list.
    pub correspondence: Vec<(usize, usize)>,
    /// Weight on the student's own negative log-likelihood.
    pub weight_nll: f64,
    /// Weight on the (intermediate-)latent loss.
    pub weight_latent: f64,
    /// Weight on the synthesized-sample loss.
    pub weight_synth: f64,
    /// Base-distribution draws per step for the synthesized loss.
    pub skd_batch: usize,
    /// Temperature of those draws.
    pub skd_temperature: f64,
    /// Steps before the synthesized term is switched on.
    pub skd_warmup_steps: usize,
}

impl Default for DistillPlan {
    fn default() -> Self {
        Self {
            correspondence: Vec::new(),
            weight_nll: 1.0,
            weight_latent: 0.0,
            weight_synth: 0.0,
            skd_batch: 256,
            skd_temperature: 1.0,
            skd_warmup_steps: 0,
        }
    }
}

impl DistillPlan {
    /// Pairs teacher taps with student taps when the teacher has an integer
    /// multiple of the student's tap count: student tap i learns from
    /// teacher tap `ratio·(i+1) - 1`. A depth-2K teacher against a depth-K
    /// student pairs every student block with every other teacher block,
    /// final latents included.
    pub fn pair_taps(teacher: &FlowModel, student: &FlowModel) -> Result<Vec<(usize, usize)>> {
        let t = teacher.tap_count();
        let s = student.tap_count();
        if t == 0 || s == 0 {
            return Err(FlowError::Config(
                "both models need at least one tap for latent pairing".into(),
            ));
        }
        if t % s != 0 {
            return Err(FlowError::Config(format!(
                "teacher tap count {} is not a multiple of student tap count {}; \
                 provide an explicit correspondence",
                t, s
            )));
        }
        let ratio = t / s;
        Ok((0..s).map(|i| (ratio * (i + 1) - 1, i)).collect())
    }

    pub fn validate(&self, teacher: &FlowModel, student: &FlowModel) -> Result<()> {
        if self.weight_nll < 0.0 || self.weight_latent < 0.0 || self.weight_synth < 0.0 {
            return Err(FlowError::Config("loss weights must be non-negative".into()));
        }
        if self.weight_nll + self.weight_latent + self.weight_synth <= 0.0 {
            return Err(FlowError::Config(
                "at least one loss weight must be positive".into(),
            ));
        }
        if teacher.dim() != student.dim() {
            return Err(FlowError::Shape(format!(
                "teacher dim {} vs student dim {}",
                teacher.dim(),
                student.dim()
            )));
        }
        for &(t, s) in &self.correspondence {
            if t >= teacher.tap_count() {
                return Err(FlowError::Config(format!(
                    "teacher tap index {} out of range ({} taps)",
                    t,
                    teacher.tap_count()
                )));
            }
            if s >= student.tap_count() {
                return Err(FlowError::Config(format!(
                    "student tap index {} out of range ({} taps)",
                    s,
                    student.tap_count()
                )));
            }
        }
        Ok(())
    }
}

/// Mean absolute difference, with the reference side detached.
fn mean_abs_to(reference: &Tensor, value: &Tensor) -> Result<Tensor> {
    if reference.shape() != value.shape() {
        return Err(FlowError::Shape(format!(
            "latent shapes differ: {:?} vs {:?}",
            reference.shape(),
            value.shape()
        )));
    }
    value.sub(&reference.detach())?.abs()?.mean_all()
}

/// Final-latent loss on shared data events. Teacher latents are constants;
/// gradients flow only into the student.
pub fn lkd_loss(teacher: &FlowModel, student: &FlowModel, x: &Tensor) -> Result<Tensor> {
    let teacher_latent = teacher.latent_of(&x.detach())?;
    let student_latent = student.latent_of(x)?;
    mean_abs_to(&teacher_latent, &student_latent)
}

/// Sum over paired taps of mean-absolute latent differences.
pub fn ilkd_loss(
    teacher: &FlowModel,
    student: &FlowModel,
    x: &Tensor,
    plan: &DistillPlan,
) -> Result<Tensor> {
    if plan.correspondence.is_empty() {
        return Err(FlowError::Config(
            "intermediate-latent loss needs a non-empty tap correspondence".into(),
        ));
    }
    plan.validate(teacher, student)?;
    let (_, _, teacher_taps) = teacher.forward_with_taps(&x.detach())?;
    let (_, _, student_taps) = student.forward_with_taps(x)?;
    let mut total: Option<Tensor> = None;
    for &(t, s) in &plan.correspondence {
        let term = mean_abs_to(&teacher_taps[t], &student_taps[s])?;
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    Ok(total.expect("non-empty correspondence"))
}

/// Generated-sample loss on shared latent draws `z`. The teacher's
/// generation is a constant; gradients traverse the student's inverse
/// chain. Non-finite generations are reported as instability so the caller
/// can skip the term.
pub fn skd_loss(teacher: &FlowModel, student: &FlowModel, z: &Tensor) -> Result<Tensor> {
    let teacher_gen = teacher.generate(&z.detach())?;
    if !teacher_gen.all_finite() {
        return Err(FlowError::NumericalInstability(
            "teacher generated non-finite values".into(),
        ));
    }
    let student_gen = student.generate(z)?;
    if !student_gen.all_finite() {
        return Err(FlowError::NumericalInstability(
            "student generated non-finite values".into(),
        ));
    }
    let loss = mean_abs_to(&teacher_gen, &student_gen)?;
    if !loss.all_finite() {
        return Err(FlowError::NumericalInstability(
            "synthesized loss is non-finite".into(),
        ));
    }
    Ok(loss)
}

/// Outcome of one combined-loss evaluation.
#[derive(Debug)]
pub struct CombinedLoss {
    pub total: Tensor,
    /// Set when the synthesized term was requested but skipped for
    /// instability this step.
    pub skd_skipped: bool,
}

/// Weighted objective
/// `w_nll·NLL(x) + w_latent·ILKD(x) + w_synth·SKD(z)`.
///
/// Zero-weight terms are not evaluated, so the pure-likelihood setting
/// (1, 0, 0) reproduces `nll_loss` bitwise. A non-finite synthesized term
/// is dropped for the step and flagged instead of aborting.
pub fn combined_loss(
    teacher: &FlowModel,
    student: &FlowModel,
    x: &Tensor,
    z: &Tensor,
    plan: &DistillPlan,
) -> Result<CombinedLoss> {
    plan.validate(teacher, student)?;
    let mut terms: Vec<Tensor> = Vec::with_capacity(3);

    if plan.weight_nll > 0.0 {
        let nll = student.nll_loss(x)?;
        terms.push(if plan.weight_nll == 1.0 {
            nll
        } else {
            nll.mul_scalar(plan.weight_nll)?
        });
    }
    if plan.weight_latent > 0.0 {
        let latent = ilkd_loss(teacher, student, x, plan)?;
        terms.push(latent.mul_scalar(plan.weight_latent)?);
    }
    let mut skd_skipped = false;
    if plan.weight_synth > 0.0 {
        match skd_loss(teacher, student, z) {
            Ok(synth) => terms.push(synth.mul_scalar(plan.weight_synth)?),
            Err(FlowError::NumericalInstability(_)) => skd_skipped = true,
            Err(e) => return Err(e),
        }
    }
    // Every requested term skipped leaves a zero constant so the caller can
    // still step (with no gradient).
    let mut total = Tensor::scalar(0.0);
    for (i, term) in terms.into_iter().enumerate() {
        total = if i == 0 { term } else { total.add(&term)? };
    }
    Ok(CombinedLoss { total, skd_skipped })
}

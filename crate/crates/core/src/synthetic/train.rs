use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::problem::{task_gradients, MultiTaskProblem};
use crate::analysis::{record_similarities, SimilarityRecord};
use crate::engine::{EmaStore, Mode, SurgeryReport, TaskId, VaccineConfig, VaccineEngine};
use crate::error::{Error, Result};
use crate::sampler::{SamplerConfig, TaskSampler, DEFAULT_TEMPERATURE};

/// Losses above this are treated as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// Task sampling for each step's minibatch. Duplicate draws collapse, so a
/// step sees between 1 and `batch_tasks` distinct tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSettings {
    pub temperature: f64,
    pub batch_tasks: usize,
    pub seed: u64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            temperature: DEFAULT_TEMPERATURE,
            batch_tasks: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub step_size: f64,
    pub max_steps: u64,
    pub vaccine: VaccineConfig,
    /// Without a sampler every task contributes at every step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSettings>,
    /// Record similarities every this many steps; 0 disables recording.
    pub record_every: u64,
    pub keep_snapshots: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step_size: 0.01,
            max_steps: 100,
            vaccine: VaccineConfig::default(),
            sampler: None,
            record_every: 1,
            keep_snapshots: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::config("step_size must be finite and > 0"));
        }
        if let Some(s) = &self.sampler {
            if s.batch_tasks == 0 {
                return Err(Error::config("sampler.batch_tasks must be >= 1"));
            }
        }
        self.vaccine.validate()
    }
}

/// Per-step quantities needed to audit a run after the fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: u64,
    pub batch: Vec<TaskId>,
    /// Squared norm of the plain sum of this step's task gradients.
    pub raw_norm_sq: f64,
    /// Squared norm of the combined update actually applied.
    pub update_norm_sq: f64,
    /// Largest `|sin(acos(phi) - acos(target)) / sin(acos(target))|` over the
    /// alignments that fired; 0 when none did.
    pub max_a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub step_size: f64,
    pub mode: Mode,
    /// Joint loss before each step plus the final one: `steps + 1` entries.
    pub losses: Vec<f64>,
    pub stats: Vec<StepStats>,
    pub reports: Vec<SurgeryReport>,
    pub similarities: Vec<SimilarityRecord>,
    /// Parameters before each step plus the final ones, when requested.
    pub snapshots: Vec<Vec<f64>>,
    pub final_theta: Vec<f64>,
    pub ema: EmaStore,
}

impl TrainRun {
    pub fn steps(&self) -> usize {
        self.stats.len()
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("losses always holds the initial value")
    }

    pub fn total_fired(&self) -> u64 {
        self.reports.iter().map(|r| r.fired_total).sum()
    }
}

/// Alignment coefficient between the observed cosine and the target it was
/// moved to.
pub fn alignment_coefficient(phi: f64, target: f64) -> f64 {
    let sin_phi = (1.0 - phi * phi).max(0.0).sqrt();
    let sin_target = (1.0 - target * target).max(0.0).sqrt();
    ((sin_phi * target - phi * sin_target) / sin_target).abs()
}

fn checked_loss(loss: f64, step: u64) -> Result<f64> {
    if !loss.is_finite() || loss > DIVERGENCE_LOSS {
        return Err(Error::Numerical {
            step,
            reason: format!("joint loss {loss} exceeds the divergence threshold {DIVERGENCE_LOSS}"),
        });
    }
    Ok(loss)
}

/// Gradient descent on the joint loss with the combined surgery update
/// `theta <- theta - t * sum_i g'_i`.
pub fn train<P: MultiTaskProblem + ?Sized>(problem: &P, cfg: &TrainConfig) -> Result<TrainRun> {
    cfg.validate()?;
    let partition = problem.partition().clone();
    let tol = cfg.vaccine.tolerances();
    let mut engine = VaccineEngine::new(cfg.vaccine.clone(), partition.clone(), problem.tasks().clone())?;
    let mut sampler = match &cfg.sampler {
        Some(s) => Some((
            TaskSampler::new(&SamplerConfig::new(problem.tasks().sizes(), s.temperature, s.seed)?)?,
            s.batch_tasks,
        )),
        None => None,
    };
    let all: Vec<TaskId> = problem.tasks().ids().collect();

    let mut theta = problem.initial_point();
    if theta.len() != problem.dim() {
        return Err(Error::Dimension {
            expected: problem.dim(),
            actual: theta.len(),
        });
    }
    let steps = usize::try_from(cfg.max_steps).unwrap_or(usize::MAX);
    let mut losses = Vec::with_capacity(steps.saturating_add(1).min(1 << 20));
    let mut stats = Vec::new();
    let mut reports = Vec::new();
    let mut similarities = Vec::new();
    let mut snapshots = Vec::new();
    losses.push(checked_loss(problem.joint_loss(&theta), 0)?);

    for step in 0..cfg.max_steps {
        if cfg.keep_snapshots {
            snapshots.push(theta.clone());
        }
        let batch: Vec<TaskId> = match &mut sampler {
            Some((s, n)) => s
                .sample_minibatch(*n)?
                .into_iter()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            None => all.clone(),
        };
        let bundle = task_gradients(problem, &theta, step, &batch)?;
        if cfg.record_every > 0 && step % cfg.record_every == 0 {
            similarities.push(record_similarities(&bundle, &partition, &tol)?);
        }
        let raw_norm_sq: f64 = partition
            .groups()
            .iter()
            .map(|g| {
                let mut sum = vec![0.0; g.len()];
                for t in &batch {
                    let v = bundle.get(*t, &g.name).expect("bundle built from partition");
                    sum.iter_mut().zip(v.values()).for_each(|(s, x)| *s += x);
                }
                sum.iter().map(|x| x * x).sum::<f64>()
            })
            .sum();

        let out = engine.step(&bundle)?;
        let update = out.combined.flatten(&partition);
        for (p, u) in theta.iter_mut().zip(&update) {
            *p -= cfg.step_size * u;
        }
        let max_a = out
            .report
            .entries
            .iter()
            .filter(|e| e.fired)
            .map(|e| alignment_coefficient(e.observed_phi, e.target))
            .fold(0.0, f64::max);
        stats.push(StepStats {
            step,
            batch,
            raw_norm_sq,
            update_norm_sq: update.iter().map(|x| x * x).sum(),
            max_a,
        });
        reports.push(out.report);
        losses.push(checked_loss(problem.joint_loss(&theta), step)?);
    }
    if cfg.keep_snapshots {
        snapshots.push(theta.clone());
    }

    Ok(TrainRun {
        step_size: cfg.step_size,
        mode: cfg.vaccine.mode,
        losses,
        stats,
        reports,
        similarities,
        snapshots,
        final_theta: theta,
        ema: engine.into_ema(),
    })
}

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ema::check_beta;
use super::task::{TaskId, TaskTable};
use crate::error::{Error, Result};
use crate::geometry::Tolerances;

/// Task size at or above which a task counts as high-resource.
pub const DEFAULT_HRL_THRESHOLD: u64 = 10_000_000;

/// How per-task gradients are combined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Align towards EMA similarity targets.
    Gradvac,
    /// Project away conflicting components (target fixed at zero).
    Pcgrad,
    /// Align towards a constant target instead of the EMA.
    FixedTarget(f64),
    /// Plain sum of task gradients.
    SumBaseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Gradvac => f.write_str("gradvac"),
            Mode::Pcgrad => f.write_str("pcgrad"),
            Mode::FixedTarget(v) => write!(f, "fixed_target({v})"),
            Mode::SumBaseline => f.write_str("sum_baseline"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradvac" => Ok(Mode::Gradvac),
            "pcgrad" => Ok(Mode::Pcgrad),
            "sum" | "sum_baseline" => Ok(Mode::SumBaseline),
            other => {
                let value = other
                    .strip_prefix("fixed:")
                    .or_else(|| other.strip_prefix("fixed_target:"))
                    .ok_or_else(|| Error::config(format!("unknown mode `{other}`")))?;
                value
                    .parse::<f64>()
                    .map(Mode::FixedTarget)
                    .map_err(|_| Error::config(format!("bad fixed target `{value}`")))
            }
        }
    }
}

/// Reference to a task by id or by name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskRef {
    Id(TaskId),
    Name(String),
}

/// Which tasks may have their gradients altered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSubset {
    AllTask,
    Explicit(Vec<TaskRef>),
    HrlOnly,
    LrlOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaccineConfig {
    pub mode: Mode,
    pub task_subset: TaskSubset,
    pub beta: f64,
    pub seed: u64,
    /// Rescale each altered gradient back to its norm before alteration.
    pub preserve_norm: bool,
    /// Read EMA targets but never write them.
    pub freeze_ema: bool,
    pub norm_tolerance: f64,
    pub target_clamp: f64,
    pub hrl_threshold: u64,
}

impl Default for VaccineConfig {
    fn default() -> Self {
        let tol = Tolerances::default();
        VaccineConfig {
            mode: Mode::Gradvac,
            task_subset: TaskSubset::AllTask,
            beta: 1e-2,
            seed: 0,
            preserve_norm: false,
            freeze_ema: false,
            norm_tolerance: tol.norm,
            target_clamp: tol.target_clamp,
            hrl_threshold: DEFAULT_HRL_THRESHOLD,
        }
    }
}

impl VaccineConfig {
    pub fn with_mode(mode: Mode) -> Self {
        VaccineConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            norm: self.norm_tolerance,
            target_clamp: self.target_clamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        self.tolerances().validate()?;
        if let Mode::FixedTarget(v) = self.mode {
            if !(v.is_finite() && v.abs() <= self.target_clamp) {
                return Err(Error::config(format!(
                    "fixed target {v} outside [-{c}, {c}]",
                    c = self.target_clamp
                )));
            }
        }
        Ok(())
    }
}

/// Resolves the configured subset against the registered tasks.
pub fn resolve_task_subset(cfg: &VaccineConfig, tasks: &TaskTable) -> Result<BTreeSet<TaskId>> {
    let resolved: BTreeSet<TaskId> = match &cfg.task_subset {
        TaskSubset::AllTask => tasks.ids().collect(),
        TaskSubset::HrlOnly => tasks
            .iter()
            .filter(|t| t.size >= cfg.hrl_threshold)
            .map(|t| t.id)
            .collect(),
        TaskSubset::LrlOnly => tasks
            .iter()
            .filter(|t| t.size < cfg.hrl_threshold)
            .map(|t| t.id)
            .collect(),
        TaskSubset::Explicit(refs) => refs
            .iter()
            .map(|r| match r {
                TaskRef::Id(id) if id.index() < tasks.len() => Ok(*id),
                TaskRef::Id(id) => Err(Error::config(format!("task subset names unknown task {id}"))),
                TaskRef::Name(name) => tasks
                    .by_name(name)
                    .ok_or_else(|| Error::config(format!("task subset names unknown task `{name}`"))),
            })
            .collect::<Result<_>>()?,
    };
    if resolved.is_empty() {
        return Err(Error::config(format!(
            "task subset {:?} resolves to no tasks",
            cfg.task_subset
        )));
    }
    Ok(resolved)
}

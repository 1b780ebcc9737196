use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::family::{build_family_problem, FamilySpec};
use super::layered::{LayeredLinearModel, LayeredSpec};
use super::problem::MultiTaskProblem;
use super::quadratic::{
    conflict_benchmark, theorem_pair, ConflictSpec, QuadraticProblem, QuadraticTask,
    TheoremPairSpec,
};
use crate::engine::{GroupPartition, PartitionLayout, TaskId, TaskTable};
use crate::error::{Error, Result};

/// Declarative description of a synthetic problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Family(FamilySpec),
    TheoremPair(TheoremPairSpec),
    ConflictBenchmark(ConflictSpec),
    Layered(LayeredSpec),
    Quadratic(QuadraticSpec),
}

/// Explicit quadratic tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub tasks: Vec<QuadraticTaskSpec>,
    /// Defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

/// One quadratic task; give exactly one of `curvature_diag` or `factor`
/// (rows of `F` with curvature `F^T F`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticTaskSpec {
    pub name: String,
    #[serde(default = "default_size")]
    pub size: u64,
    pub center: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature_diag: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<Vec<Vec<f64>>>,
}

fn default_size() -> u64 {
    1000
}

impl QuadraticSpec {
    fn build(&self) -> Result<QuadraticProblem> {
        let first = self
            .tasks
            .first()
            .ok_or_else(|| Error::config("quadratic problem needs at least one task"))?;
        let dim = first.center.len();
        let quads = self
            .tasks
            .iter()
            .map(|t| match (&t.curvature_diag, &t.factor) {
                (Some(d), None) => {
                    if d.len() != t.center.len() {
                        return Err(Error::Dimension {
                            expected: t.center.len(),
                            actual: d.len(),
                        });
                    }
                    QuadraticTask::diagonal(t.center.clone(), d)
                }
                (None, Some(rows)) => {
                    if rows.is_empty() || rows.iter().any(|r| r.len() != t.center.len()) {
                        return Err(Error::config(format!(
                            "factor rows of task `{}` must all have length {}",
                            t.name,
                            t.center.len()
                        )));
                    }
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    QuadraticTask::new(
                        t.center.clone(),
                        DMatrix::from_row_slice(rows.len(), t.center.len(), &flat),
                    )
                }
                _ => Err(Error::config(format!(
                    "task `{}` needs exactly one of curvature_diag or factor",
                    t.name
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        QuadraticProblem::new(
            TaskTable::new(self.tasks.iter().map(|t| (t.name.clone(), t.size)))?,
            quads,
            GroupPartition::whole_model(dim)?,
            self.initial.clone().unwrap_or_else(|| vec![0.0; dim]),
        )
    }
}

impl ProblemSpec {
    pub fn seed(&self) -> Option<u64> {
        match self {
            ProblemSpec::Family(s) => Some(s.seed),
            ProblemSpec::TheoremPair(s) => Some(s.seed),
            ProblemSpec::ConflictBenchmark(s) => Some(s.seed),
            ProblemSpec::Layered(s) => Some(s.seed),
            ProblemSpec::Quadratic(_) => None,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ProblemSpec::Family(s) => s.seed = seed,
            ProblemSpec::TheoremPair(s) => s.seed = seed,
            ProblemSpec::ConflictBenchmark(s) => s.seed = seed,
            ProblemSpec::Layered(s) => s.seed = seed,
            ProblemSpec::Quadratic(_) => {}
        }
    }

    /// Builds the problem, optionally regrouping its parameters.
    pub fn build(&self, layout: Option<&PartitionLayout>) -> Result<BuiltProblem> {
        let (inner, families) = match self {
            ProblemSpec::Family(s) => {
                let set = build_family_problem(s)?;
                (Inner::Quadratic(set.problem), Some(set.families))
            }
            ProblemSpec::TheoremPair(s) => (Inner::Quadratic(theorem_pair(s)?), None),
            ProblemSpec::ConflictBenchmark(s) => (Inner::Quadratic(conflict_benchmark(s)?), None),
            ProblemSpec::Quadratic(s) => (Inner::Quadratic(s.build()?), None),
            ProblemSpec::Layered(s) => (Inner::Layered(LayeredLinearModel::build(s)?), None),
        };
        let native = match &inner {
            Inner::Quadratic(p) => p.partition(),
            Inner::Layered(m) => m.partition(),
        };
        let partition = match layout {
            Some(l) => {
                let p = l.to_partition()?;
                if p.dim() != native.dim() {
                    return Err(Error::Dimension {
                        expected: native.dim(),
                        actual: p.dim(),
                    });
                }
                p
            }
            None => native.clone(),
        };
        Ok(BuiltProblem {
            inner,
            partition,
            families,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Inner {
    Quadratic(QuadraticProblem),
    Layered(LayeredLinearModel),
}

/// A problem built from a [`ProblemSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltProblem {
    inner: Inner,
    partition: GroupPartition,
    families: Option<BTreeMap<TaskId, usize>>,
}

impl BuiltProblem {
    /// Family membership, for problems constructed by family.
    pub fn families(&self) -> Option<&BTreeMap<TaskId, usize>> {
        self.families.as_ref()
    }

    pub fn quadratic(&self) -> Option<&QuadraticProblem> {
        match &self.inner {
            Inner::Quadratic(p) => Some(p),
            Inner::Layered(_) => None,
        }
    }

    /// Joint-gradient Lipschitz constant, known for quadratic problems.
    pub fn lipschitz(&self) -> Option<f64> {
        self.quadratic().map(QuadraticProblem::lipschitz)
    }

    pub fn optimal_loss(&self) -> Option<f64> {
        self.quadratic().map(QuadraticProblem::optimal_loss)
    }
}

impl MultiTaskProblem for BuiltProblem {
    fn tasks(&self) -> &TaskTable {
        match &self.inner {
            Inner::Quadratic(p) => p.tasks(),
            Inner::Layered(m) => m.tasks(),
        }
    }

    fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    fn initial_point(&self) -> Vec<f64> {
        match &self.inner {
            Inner::Quadratic(p) => p.initial_point(),
            Inner::Layered(m) => m.initial_point(),
        }
    }

    fn task_loss(&self, task: TaskId, theta: &[f64]) -> f64 {
        match &self.inner {
            Inner::Quadratic(p) => p.task_loss(task, theta),
            Inner::Layered(m) => m.task_loss(task, theta),
        }
    }

    fn task_gradient(&self, task: TaskId, theta: &[f64]) -> Vec<f64> {
        match &self.inner {
            Inner::Quadratic(p) => p.task_gradient(task, theta),
            Inner::Layered(m) => m.task_gradient(task, theta),
        }
    }
}

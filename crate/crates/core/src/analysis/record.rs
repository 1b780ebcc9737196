use serde::{Deserialize, Serialize};

use crate::engine::{GradientBundle, GroupPartition, TaskId};
use crate::error::Result;
use crate::geometry::Tolerances;

/// Pairwise cosine matrix for one group, row-major over `SimilarityRecord::tasks`.
/// `None` marks pairs involving a degenerate gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSimilarity {
    pub group: String,
    pub values: Vec<Option<f64>>,
}

/// Raw (pre-surgery) pairwise gradient similarities at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub step: u64,
    pub tasks: Vec<TaskId>,
    pub groups: Vec<GroupSimilarity>,
}

impl SimilarityRecord {
    pub fn group(&self, name: &str) -> Option<&GroupSimilarity> {
        self.groups.iter().find(|g| g.group == name)
    }

    fn position(&self, task: TaskId) -> Option<usize> {
        self.tasks.binary_search(&task).ok()
    }

    pub fn get(&self, group: &str, i: TaskId, j: TaskId) -> Option<f64> {
        let n = self.tasks.len();
        let (pi, pj) = (self.position(i)?, self.position(j)?);
        self.group(group)?.values[pi * n + pj]
    }
}

pub fn record_similarities(
    bundle: &GradientBundle,
    partition: &GroupPartition,
    tol: &Tolerances,
) -> Result<SimilarityRecord> {
    bundle.validate(partition, usize::MAX)?;
    let tasks: Vec<TaskId> = bundle.tasks().collect();
    let n = tasks.len();
    let groups = partition
        .groups()
        .iter()
        .map(|spec| {
            let grads: Vec<&[f64]> = tasks
                .iter()
                .map(|t| bundle.get(*t, &spec.name).expect("validated").values())
                .collect();
            let mut values = vec![None; n * n];
            for a in 0..n {
                for b in a..n {
                    let c = tol.cosine_slices(grads[a], grads[b]);
                    let v = if c.degenerate {
                        None
                    } else if a == b {
                        Some(1.0)
                    } else {
                        Some(c.value)
                    };
                    values[a * n + b] = v;
                    values[b * n + a] = v;
                }
            }
            GroupSimilarity {
                group: spec.name.clone(),
                values,
            }
        })
        .collect();
    Ok(SimilarityRecord {
        step: bundle.step,
        tasks,
        groups,
    })
}

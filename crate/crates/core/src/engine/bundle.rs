use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::partition::GroupPartition;
use super::task::TaskId;
use crate::error::{Error, Result};
use crate::geometry::GradVector;

/// Per-task, per-group gradients for one training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub step: u64,
    pub per_task: BTreeMap<TaskId, BTreeMap<String, GradVector>>,
}

impl GradientBundle {
    pub fn new(step: u64) -> Self {
        GradientBundle {
            step,
            per_task: BTreeMap::new(),
        }
    }

    /// Builds a bundle by splitting each task's flat gradient along `partition`.
    pub fn from_flat<'a, I>(step: u64, partition: &GroupPartition, flat: I) -> Result<Self>
    where
        I: IntoIterator<Item = (TaskId, &'a [f64])>,
    {
        let mut bundle = GradientBundle::new(step);
        for (task, grad) in flat {
            let groups = partition
                .split(grad)?
                .into_iter()
                .map(|(name, slice)| {
                    GradVector::new(name, slice.to_vec()).map(|v| (name.to_string(), v))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            if bundle.per_task.insert(task, groups).is_some() {
                return Err(Error::validation(format!("task {task} appears twice in bundle")));
            }
        }
        Ok(bundle)
    }

    pub fn insert(&mut self, task: TaskId, grad: GradVector) {
        self.per_task
            .entry(task)
            .or_default()
            .insert(grad.group().to_string(), grad);
    }

    pub fn tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.per_task.keys().copied()
    }

    pub fn num_tasks(&self) -> usize {
        self.per_task.len()
    }

    pub fn get(&self, task: TaskId, group: &str) -> Option<&GradVector> {
        self.per_task.get(&task).and_then(|g| g.get(group))
    }

    /// Checks that every task provides every group at the declared length and
    /// nothing else, and that task ids are below `num_tasks`.
    pub fn validate(&self, partition: &GroupPartition, num_tasks: usize) -> Result<()> {
        for (task, groups) in &self.per_task {
            if task.index() >= num_tasks {
                return Err(Error::validation(format!(
                    "task {task} is not registered ({num_tasks} tasks known)"
                )));
            }
            for spec in partition.groups() {
                let grad = groups.get(&spec.name).ok_or_else(|| {
                    Error::validation(format!("task {task} has no gradient for group `{}`", spec.name))
                })?;
                if grad.len() != spec.len() {
                    return Err(Error::validation(format!(
                        "task {task} group `{}` has length {} but the partition declares {}",
                        spec.name,
                        grad.len(),
                        spec.len()
                    )));
                }
                if grad.group() != spec.name {
                    return Err(Error::validation(format!(
                        "task {task}: vector filed under `{}` is labelled `{}`",
                        spec.name,
                        grad.group()
                    )));
                }
            }
            if let Some(extra) = groups.keys().find(|name| partition.group(name).is_none()) {
                return Err(Error::validation(format!(
                    "task {task} has gradient for unknown group `{extra}`"
                )));
            }
        }
        Ok(())
    }
}

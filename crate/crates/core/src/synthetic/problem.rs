use crate::engine::{GradientBundle, GroupPartition, TaskId, TaskTable};
use crate::error::{Error, Result};

/// A multi-task problem with analytic per-task losses and gradients over a
/// flat parameter vector.
pub trait MultiTaskProblem {
    fn tasks(&self) -> &TaskTable;

    fn partition(&self) -> &GroupPartition;

    fn initial_point(&self) -> Vec<f64>;

    fn task_loss(&self, task: TaskId, theta: &[f64]) -> f64;

    fn task_gradient(&self, task: TaskId, theta: &[f64]) -> Vec<f64>;

    fn dim(&self) -> usize {
        self.partition().dim()
    }

    fn joint_loss(&self, theta: &[f64]) -> f64 {
        self.tasks().ids().map(|t| self.task_loss(t, theta)).sum()
    }
}

/// Exact gradients of every task in `batch`, split by the problem's partition.
pub fn task_gradients<P: MultiTaskProblem + ?Sized>(
    problem: &P,
    theta: &[f64],
    step: u64,
    batch: &[TaskId],
) -> Result<GradientBundle> {
    if theta.len() != problem.dim() {
        return Err(Error::Dimension {
            expected: problem.dim(),
            actual: theta.len(),
        });
    }
    if let Some(t) = batch.iter().find(|t| t.index() >= problem.tasks().len()) {
        return Err(Error::validation(format!("task {t} is not part of the problem")));
    }
    let grads: Vec<(TaskId, Vec<f64>)> = batch
        .iter()
        .map(|t| (*t, problem.task_gradient(*t, theta)))
        .collect();
    GradientBundle::from_flat(
        step,
        problem.partition(),
        grads.iter().map(|(t, g)| (*t, g.as_slice())),
    )
}

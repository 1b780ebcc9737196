use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::problem::MultiTaskProblem;
use super::quadratic::normal;
use crate::engine::{Granularity, GroupPartition, TaskId, TaskTable};
use crate::error::{Error, Result};

/// Construction parameters for [`LayeredLinearModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayeredSpec {
    /// Input width followed by the output width of every layer.
    pub widths: Vec<usize>,
    pub num_tasks: usize,
    pub samples_per_task: usize,
    /// Scale of each task's deviation from the shared teacher map.
    pub task_spread: f64,
    pub seed: u64,
}

impl Default for LayeredSpec {
    fn default() -> Self {
        LayeredSpec {
            widths: vec![4, 6, 3],
            num_tasks: 3,
            samples_per_task: 16,
            task_spread: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct TaskData {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
}

/// Deep linear network `f(x) = W_L ... W_1 x` fitted to per-task teacher
/// maps with squared error. Each weight matrix is its own parameter group
/// (`layer1`, `layer2`, ...), stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredLinearModel {
    widths: Vec<usize>,
    tasks: TaskTable,
    data: Vec<TaskData>,
    partition: GroupPartition,
    initial: Vec<f64>,
}

impl LayeredLinearModel {
    pub fn build(spec: &LayeredSpec) -> Result<Self> {
        if spec.widths.len() < 3 || spec.widths.contains(&0) {
            return Err(Error::config("layered model needs >= 2 layers of non-zero width"));
        }
        if spec.num_tasks == 0 || spec.samples_per_task == 0 {
            return Err(Error::config("layered model needs tasks and samples"));
        }
        if !(spec.task_spread.is_finite() && spec.task_spread >= 0.0) {
            return Err(Error::config("task_spread must be finite and >= 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let input = spec.widths[0];
        let output = *spec.widths.last().expect("checked length");
        let gaussian = |r: usize, c: usize, scale: f64, rng: &mut ChaCha8Rng| {
            DMatrix::from_fn(r, c, |_, _| scale * normal(rng))
        };
        let teacher = gaussian(output, input, 1.0, &mut rng);
        let mut data = Vec::with_capacity(spec.num_tasks);
        for _ in 0..spec.num_tasks {
            let map = &teacher + gaussian(output, input, spec.task_spread, &mut rng);
            let inputs = gaussian(spec.samples_per_task, input, 1.0, &mut rng);
            let targets = &inputs * map.transpose();
            data.push(TaskData { inputs, targets });
        }
        let mut initial = Vec::new();
        for w in spec.widths.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            initial.extend((0..w[0] * w[1]).map(|_| scale * normal(&mut rng)));
        }
        let partition = GroupPartition::from_lengths(
            Granularity::AllLayer,
            spec.widths
                .windows(2)
                .enumerate()
                .map(|(l, w)| (format!("layer{}", l + 1), w[0] * w[1])),
        )?;
        let tasks = TaskTable::new((1..=spec.num_tasks).map(|i| (format!("task_{i}"), 1000)))?;
        Ok(LayeredLinearModel {
            widths: spec.widths.clone(),
            tasks,
            data,
            partition,
            initial,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn weights(&self, theta: &[f64]) -> Vec<DMatrix<f64>> {
        self.partition
            .groups()
            .iter()
            .zip(self.widths.windows(2))
            .map(|(g, w)| DMatrix::from_row_slice(w[1], w[0], &theta[g.extent.clone()]))
            .collect()
    }

    /// Activations `H_0 = X, H_l = H_{l-1} W_l^T`, one row per sample.
    fn forward(weights: &[DMatrix<f64>], inputs: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![inputs.clone()];
        for w in weights {
            let next = acts.last().expect("non-empty") * w.transpose();
            acts.push(next);
        }
        acts
    }
}

impl MultiTaskProblem for LayeredLinearModel {
    fn tasks(&self) -> &TaskTable {
        &self.tasks
    }

    fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    fn initial_point(&self) -> Vec<f64> {
        self.initial.clone()
    }

    fn task_loss(&self, task: TaskId, theta: &[f64]) -> f64 {
        let d = &self.data[task.index()];
        let acts = Self::forward(&self.weights(theta), &d.inputs);
        let resid = acts.last().expect("non-empty") - &d.targets;
        0.5 * resid.norm_squared() / d.inputs.nrows() as f64
    }

    fn task_gradient(&self, task: TaskId, theta: &[f64]) -> Vec<f64> {
        let d = &self.data[task.index()];
        let weights = self.weights(theta);
        let acts = Self::forward(&weights, &d.inputs);
        let mut delta = (acts.last().expect("non-empty") - &d.targets) / d.inputs.nrows() as f64;
        let mut grads = vec![0.0; theta.len()];
        for l in (0..weights.len()).rev() {
            let gw = delta.transpose() * &acts[l];
            let extent = self.partition.groups()[l].extent.clone();
            for (slot, (r, c)) in grads[extent]
                .iter_mut()
                .zip((0..gw.nrows()).flat_map(|r| (0..gw.ncols()).map(move |c| (r, c))))
            {
                *slot = gw[(r, c)];
            }
            let back = &delta * &weights[l];
            delta = back;
        }
        grads
    }
}

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::problem::MultiTaskProblem;
use crate::engine::{GroupPartition, TaskId, TaskTable};
use crate::error::{Error, Result};

/// `L(theta) = 1/2 (theta - c)^T A (theta - c)` with `A = F^T F`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTask {
    center: DVector<f64>,
    factor: DMatrix<f64>,
    curvature: DMatrix<f64>,
}

impl QuadraticTask {
    /// `factor` is `k x d` for any `k >= 1`; the curvature is `factor^T factor`.
    pub fn new(center: Vec<f64>, factor: DMatrix<f64>) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::validation("quadratic task needs a non-empty center"));
        }
        if factor.ncols() != center.len() || factor.nrows() == 0 {
            return Err(Error::Dimension {
                expected: center.len(),
                actual: factor.ncols(),
            });
        }
        if center.iter().chain(factor.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("quadratic task has non-finite entries"));
        }
        let curvature = factor.transpose() * &factor;
        Ok(QuadraticTask {
            center: DVector::from_vec(center),
            factor,
            curvature,
        })
    }

    /// Diagonal curvature `diag(d)`; entries must be non-negative.
    pub fn diagonal(center: Vec<f64>, diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|d| *d < 0.0) {
            return Err(Error::validation("diagonal curvature must be non-negative"));
        }
        let roots: Vec<f64> = diag.iter().map(|d| d.sqrt()).collect();
        Self::new(center, DMatrix::from_diagonal(&DVector::from_vec(roots)))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let r = &self.factor * (DVector::from_column_slice(theta) - &self.center);
        0.5 * r.norm_squared()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let g = &self.curvature * (DVector::from_column_slice(theta) - &self.center);
        g.data.into()
    }
}

/// A set of quadratic tasks over one shared parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    tasks: TaskTable,
    quads: Vec<QuadraticTask>,
    partition: GroupPartition,
    initial: Vec<f64>,
}

impl QuadraticProblem {
    pub fn new(
        tasks: TaskTable,
        quads: Vec<QuadraticTask>,
        partition: GroupPartition,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if tasks.len() != quads.len() || quads.is_empty() {
            return Err(Error::validation(format!(
                "{} task names for {} quadratic tasks",
                tasks.len(),
                quads.len()
            )));
        }
        let dim = partition.dim();
        for q in quads.iter().map(QuadraticTask::dim).chain([initial.len()]) {
            if q != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: q,
                });
            }
        }
        Ok(QuadraticProblem {
            tasks,
            quads,
            partition,
            initial,
        })
    }

    pub fn with_partition(mut self, partition: GroupPartition) -> Result<Self> {
        if partition.dim() != self.partition.dim() {
            return Err(Error::Dimension {
                expected: self.partition.dim(),
                actual: partition.dim(),
            });
        }
        self.partition = partition;
        Ok(self)
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self> {
        if initial.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: initial.len(),
            });
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn quadratic(&self, task: TaskId) -> &QuadraticTask {
        &self.quads[task.index()]
    }

    /// Hessian of the joint loss, `sum_i A_i`.
    pub fn joint_hessian(&self) -> DMatrix<f64> {
        let d = self.dim();
        self.quads
            .iter()
            .fold(DMatrix::zeros(d, d), |acc, q| acc + q.curvature())
    }

    /// Lipschitz constant of the joint gradient: the largest eigenvalue of the
    /// joint Hessian.
    pub fn lipschitz(&self) -> f64 {
        self.joint_hessian()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    /// Minimiser of the joint loss, from `H theta = sum_i A_i c_i`. Uses the
    /// pseudo-inverse when the joint Hessian is singular.
    pub fn joint_optimum(&self) -> Vec<f64> {
        let h = self.joint_hessian();
        let rhs = self
            .quads
            .iter()
            .fold(DVector::zeros(self.dim()), |acc, q| acc + q.curvature() * q.center());
        let sol = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => h
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .expect("SVD with both factors computed"),
        };
        sol.data.into()
    }

    pub fn optimal_loss(&self) -> f64 {
        self.joint_loss(&self.joint_optimum())
    }
}

impl MultiTaskProblem for QuadraticProblem {
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
        self.quads[task.index()].loss(theta)
    }

    fn task_gradient(&self, task: TaskId, theta: &[f64]) -> Vec<f64> {
        self.quads[task.index()].gradient(theta)
    }
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Two convex quadratics with a shared minimiser and differently oriented
/// diagonal curvature, so their gradients stay positively correlated while
/// the angle between them drifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoremPairSpec {
    pub dim: usize,
    pub seed: u64,
    /// Curvature spectrum spans `[10^-decades, 1]`.
    pub decades: f64,
    /// Standard deviation of the initial offset from the shared minimiser.
    pub init_spread: f64,
}

impl Default for TheoremPairSpec {
    fn default() -> Self {
        TheoremPairSpec {
            dim: 6,
            seed: 0,
            decades: 1.5,
            init_spread: 3.0,
        }
    }
}

pub fn theorem_pair(spec: &TheoremPairSpec) -> Result<QuadraticProblem> {
    if spec.dim < 2 || spec.dim > 64 {
        return Err(Error::config("theorem pair dimension must lie in [2, 64]"));
    }
    if !(spec.decades.is_finite() && spec.decades >= 0.0) {
        return Err(Error::config("decades must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let spectrum: Vec<f64> = (0..d)
        .map(|k| 10f64.powf(-spec.decades * k as f64 / (d - 1) as f64))
        .collect();
    let a1: Vec<f64> = spectrum.iter().map(|e| e * rng.gen_range(0.8..1.2)).collect();
    let a2: Vec<f64> = spectrum.iter().rev().map(|e| e * rng.gen_range(0.8..1.2)).collect();
    let center: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let initial: Vec<f64> = center
        .iter()
        .map(|c| c + spec.init_spread * normal(&mut rng))
        .collect();
    QuadraticProblem::new(
        TaskTable::new([("task_1", 1000), ("task_2", 1000)])?,
        vec![
            QuadraticTask::diagonal(center.clone(), &a1)?,
            QuadraticTask::diagonal(center, &a2)?,
        ],
        GroupPartition::whole_model(d)?,
        initial,
    )
}

/// Two-dimensional benchmark: an anti-correlated pair that disagrees along a
/// stiff axis but shares a soft axis, plus two tasks aligned on the soft axis.
/// Starting at the origin, progress is limited by the soft axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConflictSpec {
    pub seed: u64,
    /// Curvature of the contested axis.
    pub stiff: f64,
    /// Curvature of the shared axis.
    pub soft: f64,
    /// Initial shared-axis gradient magnitude, `soft * target`.
    pub pull: f64,
}

impl Default for ConflictSpec {
    fn default() -> Self {
        ConflictSpec {
            seed: 0,
            stiff: 1.0,
            soft: 0.01,
            pull: 3.0,
        }
    }
}

pub fn conflict_benchmark(spec: &ConflictSpec) -> Result<QuadraticProblem> {
    if !(spec.stiff > 0.0 && spec.soft > 0.0 && spec.pull > 0.0) {
        return Err(Error::config("conflict benchmark curvatures and pull must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offset = 1.0 + 0.2 * normal(&mut rng);
    let soft_pair = spec.soft * rng.gen_range(0.8..1.2);
    let target = spec.pull / spec.soft * rng.gen_range(0.8..1.2);
    let mut quads = vec![
        QuadraticTask::diagonal(vec![offset, target], &[spec.stiff, soft_pair])?,
        QuadraticTask::diagonal(vec![-offset, target], &[spec.stiff, soft_pair])?,
    ];
    for _ in 0..2 {
        let soft = spec.soft * rng.gen_range(0.8..1.2);
        let y = target * (1.0 + 0.02 * normal(&mut rng));
        quads.push(QuadraticTask::diagonal(vec![0.0, y], &[0.0, soft])?);
    }
    QuadraticProblem::new(
        TaskTable::new([
            ("conflict_a", 1000),
            ("conflict_b", 1000),
            ("aligned_a", 1000),
            ("aligned_b", 1000),
        ])?,
        quads,
        GroupPartition::whole_model(2)?,
        vec![0.0, 0.0],
    )
}

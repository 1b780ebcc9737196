use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::quadratic::{normal, QuadraticProblem, QuadraticTask};
use crate::engine::{GroupPartition, TaskId, TaskTable};
use crate::error::{Error, Result};

/// Construction parameters for a set of tasks whose gradients cluster by
/// family.
///
/// Every task is a unit-curvature quadratic centred at
/// `radius * normalize(u_f + n)`, where `u_f` is the unit base direction of its
/// family and `n` is noise confined to a block of dimensions private to that
/// family. Base directions are pairwise at `cross_family_angle_deg`. At the
/// origin each gradient points away from its centre, so the expected cosine
/// is about `1 / (1 + noise^2)` within a family and `cos(angle) / (1 + noise^2)`
/// across families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilySpec {
    pub num_families: usize,
    pub tasks_per_family: usize,
    pub noise_dims_per_family: usize,
    pub within_family_noise: f64,
    pub cross_family_angle_deg: f64,
    pub radius: f64,
    pub seed: u64,
    /// Per-task data sizes in task order; defaults to 1000 for every task.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_sizes: Option<Vec<u64>>,
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec {
            num_families: 3,
            tasks_per_family: 3,
            noise_dims_per_family: 4,
            within_family_noise: 0.3,
            cross_family_angle_deg: 60.0,
            radius: 10.0,
            seed: 0,
            task_sizes: None,
        }
    }
}

impl FamilySpec {
    pub fn num_tasks(&self) -> usize {
        self.num_families * self.tasks_per_family
    }

    pub fn dim(&self) -> usize {
        self.num_families * (1 + self.noise_dims_per_family)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_families < 2 || self.tasks_per_family < 2 {
            return Err(Error::config("family problem needs >= 2 families of >= 2 tasks"));
        }
        if !(self.within_family_noise.is_finite() && self.within_family_noise >= 0.0) {
            return Err(Error::config("within_family_noise must be finite and >= 0"));
        }
        if self.within_family_noise > 0.0 && self.noise_dims_per_family == 0 {
            return Err(Error::config("within_family_noise > 0 needs noise_dims_per_family >= 1"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::config("radius must be finite and > 0"));
        }
        let angle = self.cross_family_angle_deg;
        if !(angle.is_finite() && (0.0..=180.0).contains(&angle)) {
            return Err(Error::config("cross_family_angle_deg must lie in [0, 180]"));
        }
        // Equiangular unit vectors exist only for cos >= -1/(F-1); the
        // boundary itself (and anything within rounding of it) is degenerate.
        let s = angle.to_radians().cos();
        if s <= -1.0 / (self.num_families as f64 - 1.0) + 1e-9 || s >= 1.0 - 1e-9 {
            return Err(Error::config(format!(
                "{} families cannot be pairwise {angle} degrees apart",
                self.num_families
            )));
        }
        if let Some(sizes) = &self.task_sizes {
            if sizes.len() != self.num_tasks() || sizes.contains(&0) {
                return Err(Error::config(format!(
                    "task_sizes needs {} positive entries",
                    self.num_tasks()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyTaskSet {
    pub problem: QuadraticProblem,
    pub spec: FamilySpec,
    /// Family index of every task.
    pub families: BTreeMap<TaskId, usize>,
    /// Unit base direction of each family in parameter space.
    pub base_directions: Vec<Vec<f64>>,
}

pub fn build_family_problem(spec: &FamilySpec) -> Result<FamilyTaskSet> {
    spec.validate()?;
    let nf = spec.num_families;
    let nd = spec.noise_dims_per_family;
    let dim = spec.dim();
    let s = spec.cross_family_angle_deg.to_radians().cos();

    let gram = DMatrix::from_fn(nf, nf, |r, c| if r == c { 1.0 } else { s });
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::config("family Gram matrix is not positive definite"))?;
    let lower = chol.l();
    let base_directions: Vec<Vec<f64>> = (0..nf)
        .map(|f| {
            let mut u = vec![0.0; dim];
            for k in 0..nf {
                u[k] = lower[(f, k)];
            }
            u
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut names = Vec::with_capacity(spec.num_tasks());
    let mut quads = Vec::with_capacity(spec.num_tasks());
    let mut families = BTreeMap::new();
    let scale = if nd > 0 {
        spec.within_family_noise / (nd as f64).sqrt()
    } else {
        0.0
    };
    for (f, base) in base_directions.iter().enumerate() {
        for t in 0..spec.tasks_per_family {
            let mut center = base.clone();
            let block = nf + f * nd;
            for v in &mut center[block..block + nd] {
                *v = scale * normal(&mut rng);
            }
            let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
            center.iter_mut().for_each(|v| *v *= spec.radius / norm);
            families.insert(TaskId(quads.len() as u32), f);
            names.push(format!("f{}_t{}", f + 1, t + 1));
            quads.push(QuadraticTask::diagonal(center, &vec![1.0; dim])?);
        }
    }
    let sizes = spec
        .task_sizes
        .clone()
        .unwrap_or_else(|| vec![1000; spec.num_tasks()]);
    let problem = QuadraticProblem::new(
        TaskTable::new(names.into_iter().zip(sizes))?,
        quads,
        GroupPartition::whole_model(dim)?,
        vec![0.0; dim],
    )?;
    Ok(FamilyTaskSet {
        problem,
        spec: spec.clone(),
        families,
        base_directions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Tolerances;
    use crate::synthetic::MultiTaskProblem;
    use approx::assert_abs_diff_eq;

    fn grads_at_origin(set: &FamilyTaskSet) -> Vec<Vec<f64>> {
        let p = &set.problem;
        p.tasks()
            .ids()
            .map(|t| p.task_gradient(t, &vec![0.0; p.dim()]))
            .collect()
    }

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        Tolerances::default().cosine_slices(a, b).value
    }

    #[test]
    fn noiseless_families_are_identical_within() {
        let spec = FamilySpec {
            num_families: 2,
            tasks_per_family: 2,
            within_family_noise: 0.0,
            ..FamilySpec::default()
        };
        let set = build_family_problem(&spec).unwrap();
        let g = grads_at_origin(&set);
        assert_abs_diff_eq!(cos(&g[0], &g[1]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cos(&g[2], &g[3]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cos(&g[0], &g[2]), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn right_angle_families_are_orthogonal() {
        let spec = FamilySpec {
            cross_family_angle_deg: 90.0,
            ..FamilySpec::default()
        };
        let set = build_family_problem(&spec).unwrap();
        let g = grads_at_origin(&set);
        for i in 0..g.len() {
            for j in 0..g.len() {
                if set.families[&TaskId(i as u32)] != set.families[&TaskId(j as u32)] {
                    assert_abs_diff_eq!(cos(&g[i], &g[j]), 0.0, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn default_spec_clusters_at_origin() {
        let set = build_family_problem(&FamilySpec::default()).unwrap();
        let g = grads_at_origin(&set);
        let (mut within, mut cross) = (Vec::new(), Vec::new());
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                let c = cos(&g[i], &g[j]);
                assert!(c > 0.0);
                if set.families[&TaskId(i as u32)] == set.families[&TaskId(j as u32)] {
                    within.push(c);
                } else {
                    cross.push(c);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&within) > mean(&cross) + 0.2);
        for c in set.problem.tasks().ids().map(|t| set.problem.quadratic(t).center().norm()) {
            assert_abs_diff_eq!(c, 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = build_family_problem(&FamilySpec::default()).unwrap();
        let b = build_family_problem(&FamilySpec::default()).unwrap();
        assert_eq!(a, b);
        let c = build_family_problem(&FamilySpec { seed: 1, ..FamilySpec::default() }).unwrap();
        assert_ne!(a.problem, c.problem);
    }

    #[test]
    fn rejects_invalid_specs() {
        let bad = [
            FamilySpec { num_families: 1, ..FamilySpec::default() },
            FamilySpec { tasks_per_family: 1, ..FamilySpec::default() },
            FamilySpec { noise_dims_per_family: 0, ..FamilySpec::default() },
            FamilySpec { cross_family_angle_deg: 120.0, ..FamilySpec::default() },
            FamilySpec { radius: 0.0, ..FamilySpec::default() },
            FamilySpec { task_sizes: Some(vec![1; 3]), ..FamilySpec::default() },
        ];
        for spec in bad {
            assert!(build_family_problem(&spec).is_err(), "{spec:?}");
        }
        // Two families may point in opposite-ish directions.
        let spec = FamilySpec {
            num_families: 2,
            cross_family_angle_deg: 150.0,
            ..FamilySpec::default()
        };
        assert!(build_family_problem(&spec).is_ok());
    }
}

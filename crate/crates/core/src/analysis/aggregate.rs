use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::record::SimilarityRecord;
use crate::engine::TaskId;
use crate::error::{Error, Result};

/// Task-by-task means over steps for one group, with per-cell sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMatrix {
    pub group: String,
    pub tasks: Vec<TaskId>,
    pub means: Vec<Option<f64>>,
    pub counts: Vec<u64>,
}

impl AggregateMatrix {
    pub fn size(&self) -> usize {
        self.tasks.len()
    }

    pub fn get(&self, i: TaskId, j: TaskId) -> Option<f64> {
        let n = self.size();
        let pi = self.tasks.binary_search(&i).ok()?;
        let pj = self.tasks.binary_search(&j).ok()?;
        self.means[pi * n + pj]
    }
}

/// Cell-wise difference of two aggregate matrices over the same tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastMatrix {
    pub group_a: String,
    pub group_b: String,
    pub tasks: Vec<TaskId>,
    pub values: Vec<Option<f64>>,
}

/// Inclusive step window used to exclude warm-up or late phases.
pub type StepRange = RangeInclusive<u64>;

fn in_range(range: Option<&StepRange>, step: u64) -> bool {
    range.is_none_or(|r| r.contains(&step))
}

/// Arithmetic mean per cell over the records in which the pair is present.
pub fn aggregate_over_steps(
    records: &[SimilarityRecord],
    group: &str,
    range: Option<&StepRange>,
) -> Result<AggregateMatrix> {
    let selected: Vec<&SimilarityRecord> =
        records.iter().filter(|r| in_range(range, r.step)).collect();
    if selected.is_empty() {
        return Err(Error::validation("no similarity records to aggregate"));
    }
    if !selected.iter().any(|r| r.group(group).is_some()) {
        return Err(Error::UnknownGroup(group.to_string()));
    }
    let tasks: Vec<TaskId> = selected
        .iter()
        .flat_map(|r| r.tasks.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<TaskId, usize> = tasks.iter().enumerate().map(|(p, t)| (*t, p)).collect();
    let n = tasks.len();
    let mut sums = vec![0.0; n * n];
    let mut counts = vec![0u64; n * n];
    for rec in &selected {
        let Some(g) = rec.group(group) else { continue };
        let m = rec.tasks.len();
        for (a, ta) in rec.tasks.iter().enumerate() {
            for (b, tb) in rec.tasks.iter().enumerate() {
                if let Some(v) = g.values[a * m + b] {
                    let cell = index[ta] * n + index[tb];
                    sums[cell] += v;
                    counts[cell] += 1;
                }
            }
        }
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| (*c > 0).then(|| s / *c as f64))
        .collect();
    Ok(AggregateMatrix {
        group: group.to_string(),
        tasks,
        means,
        counts,
    })
}

/// `mean(group_a) - mean(group_b)` per cell.
pub fn group_contrast(
    records: &[SimilarityRecord],
    group_a: &str,
    group_b: &str,
    range: Option<&StepRange>,
) -> Result<ContrastMatrix> {
    let a = aggregate_over_steps(records, group_a, range)?;
    let b = aggregate_over_steps(records, group_b, range)?;
    // both aggregates are built from the same records, so their task sets agree
    debug_assert_eq!(a.tasks, b.tasks);
    let values = a
        .means
        .iter()
        .zip(&b.means)
        .map(|(x, y)| Some((*x)? - (*y)?))
        .collect();
    Ok(ContrastMatrix {
        group_a: group_a.to_string(),
        group_b: group_b.to_string(),
        tasks: a.tasks,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub within_mean: f64,
    pub cross_mean: f64,
    pub margin: f64,
    pub within_cells: usize,
    pub cross_cells: usize,
}

/// Contrasts mean similarity of same-family task pairs against pairs from
/// different families. Each unordered pair is counted once.
pub fn clustering_score(
    aggregate: &AggregateMatrix,
    families: &BTreeMap<TaskId, usize>,
) -> Result<ClusterScore> {
    for t in &aggregate.tasks {
        if !families.contains_key(t) {
            return Err(Error::validation(format!("task {t} has no family assignment")));
        }
    }
    let n = aggregate.size();
    let (mut within, mut cross) = (Vec::new(), Vec::new());
    for a in 0..n {
        for b in a + 1..n {
            let Some(v) = aggregate.means[a * n + b] else { continue };
            if families[&aggregate.tasks[a]] == families[&aggregate.tasks[b]] {
                within.push(v);
            } else {
                cross.push(v);
            }
        }
    }
    if within.is_empty() {
        return Err(Error::validation(
            "no same-family pairs: every family has fewer than two observed tasks",
        ));
    }
    if cross.is_empty() {
        return Err(Error::validation("no cross-family pairs"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let within_mean = mean(&within);
    let cross_mean = mean(&cross);
    Ok(ClusterScore {
        within_mean,
        cross_mean,
        margin: within_mean - cross_mean,
        within_cells: within.len(),
        cross_cells: cross.len(),
    })
}

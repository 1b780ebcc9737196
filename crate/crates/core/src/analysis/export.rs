//! Byte-stable text exports. Floats use Rust's shortest round-trip formatting.

use serde::Serialize;

use super::activity::ActivitySeries;
use super::aggregate::{AggregateMatrix, ContrastMatrix};
use super::record::SimilarityRecord;
use crate::engine::{TaskId, TaskTable};
use crate::error::{Error, Result};

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Serde(e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

/// Long format: one row per unordered task pair per group per step.
/// Pairs with a degenerate gradient are omitted.
pub fn similarities_csv(records: &[SimilarityRecord], tasks: &TaskTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "group", "task_i", "task_j", "cosine"])
        .map_err(csv_err)?;
    for rec in records {
        let n = rec.tasks.len();
        for g in &rec.groups {
            for a in 0..n {
                for b in a + 1..n {
                    if let Some(v) = g.values[a * n + b] {
                        w.write_record([
                            rec.step.to_string(),
                            g.group.clone(),
                            tasks.name(rec.tasks[a]).to_string(),
                            tasks.name(rec.tasks[b]).to_string(),
                            v.to_string(),
                        ])
                        .map_err(csv_err)?;
                    }
                }
            }
        }
    }
    finish(w)
}

/// Columns `step,loss`.
pub fn loss_csv(losses: &[f64]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "loss"]).map_err(csv_err)?;
    for (step, loss) in losses.iter().enumerate() {
        w.write_record([step.to_string(), loss.to_string()])
            .map_err(csv_err)?;
    }
    finish(w)
}

/// Columns `mode,step,fired,windowed` where `windowed` is the sum of the
/// window starting at that step (empty once fewer than `window` steps remain).
pub fn activity_csv(series: &[ActivitySeries]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mode", "step", "fired", "windowed"])
        .map_err(csv_err)?;
    for s in series {
        for (k, (step, fired)) in s.steps.iter().zip(&s.fired).enumerate() {
            let windowed = s.windowed.get(k).map(u64::to_string).unwrap_or_default();
            w.write_record([s.mode.to_string(), step.to_string(), fired.to_string(), windowed])
                .map_err(csv_err)?;
        }
    }
    finish(w)
}

#[derive(Serialize)]
struct MatrixDoc<'a> {
    kind: &'a str,
    group: String,
    tasks: Vec<&'a str>,
    values: Vec<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<Vec<u64>>>,
}

fn rows<T: Clone>(flat: &[T], n: usize) -> Vec<Vec<T>> {
    flat.chunks(n.max(1)).map(|c| c.to_vec()).collect()
}

fn names<'a>(ids: &[TaskId], tasks: &'a TaskTable) -> Vec<&'a str> {
    ids.iter().map(|t| tasks.name(*t)).collect()
}

pub fn aggregate_json(agg: &AggregateMatrix, tasks: &TaskTable) -> Result<String> {
    let n = agg.size();
    let doc = MatrixDoc {
        kind: "aggregate",
        group: agg.group.clone(),
        tasks: names(&agg.tasks, tasks),
        values: rows(&agg.means, n),
        counts: Some(rows(&agg.counts, n)),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn contrast_json(contrast: &ContrastMatrix, tasks: &TaskTable) -> Result<String> {
    let doc = MatrixDoc {
        kind: "contrast",
        group: format!("{} - {}", contrast.group_a, contrast.group_b),
        tasks: names(&contrast.tasks, tasks),
        values: rows(&contrast.values, contrast.tasks.len()),
        counts: None,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

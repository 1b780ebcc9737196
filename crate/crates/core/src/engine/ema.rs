use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::partition::GroupPartition;
use super::task::TaskId;
use crate::error::{Error, Result};

/// Current version of the EMA snapshot document.
pub const EMA_SNAPSHOT_VERSION: u32 = 1;

/// Directed key: similarity of task `i`'s (running) gradient against task `j`
/// within group `group`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmaKey {
    pub i: TaskId,
    pub j: TaskId,
    pub group: String,
}

impl EmaKey {
    pub fn new(i: TaskId, j: TaskId, group: impl Into<String>) -> Self {
        EmaKey {
            i,
            j,
            group: group.into(),
        }
    }
}

/// Exponential moving averages of observed gradient cosines, one per
/// ordered task pair and parameter group. Missing keys read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaStore {
    beta: f64,
    values: BTreeMap<EmaKey, f64>,
}

impl EmaStore {
    pub fn new(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(EmaStore {
            beta,
            values: BTreeMap::new(),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: TaskId, j: TaskId, group: &str) -> f64 {
        self.values
            .get(&EmaKey::new(i, j, group))
            .copied()
            .unwrap_or(0.0)
    }

    /// Applies one step of the moving-average recursion and returns the new value.
    pub fn update(&mut self, i: TaskId, j: TaskId, group: &str, observed: f64) -> f64 {
        let next = ema_step(self.get(i, j, group), observed, self.beta);
        self.values.insert(EmaKey::new(i, j, group), next);
        next
    }

    pub fn set(&mut self, key: EmaKey, value: f64) -> Result<()> {
        check_value(value)?;
        self.values.insert(key, value);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EmaKey, f64)> {
        self.values.iter().map(|(k, v)| (k, *v))
    }

    /// Checks that every stored key refers to a known task and group.
    pub fn check_compatible(&self, partition: &GroupPartition, num_tasks: usize) -> Result<()> {
        for key in self.values.keys() {
            if partition.group(&key.group).is_none() {
                return Err(Error::validation(format!(
                    "EMA entry refers to group `{}` which is not in the partition",
                    key.group
                )));
            }
            if key.i.index() >= num_tasks || key.j.index() >= num_tasks {
                return Err(Error::validation(format!(
                    "EMA entry ({}, {}) refers to a task outside [0, {num_tasks})",
                    key.i, key.j
                )));
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> EmaSnapshot {
        EmaSnapshot {
            version: EMA_SNAPSHOT_VERSION,
            beta: self.beta,
            entries: self
                .values
                .iter()
                .map(|(k, v)| EmaEntry {
                    i: k.i,
                    j: k.j,
                    group: k.group.clone(),
                    value: *v,
                })
                .collect(),
        }
    }

    pub fn restore(snapshot: EmaSnapshot) -> Result<Self> {
        if snapshot.version != EMA_SNAPSHOT_VERSION {
            return Err(Error::validation(format!(
                "unsupported EMA snapshot version {} (expected {EMA_SNAPSHOT_VERSION})",
                snapshot.version
            )));
        }
        let mut store = EmaStore::new(snapshot.beta)?;
        for e in snapshot.entries {
            let key = EmaKey::new(e.i, e.j, e.group);
            if store.values.contains_key(&key) {
                return Err(Error::validation(format!(
                    "duplicate EMA entry ({}, {}, {})",
                    key.i, key.j, key.group
                )));
            }
            store.set(key, e.value)?;
        }
        Ok(store)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.snapshot())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::restore(serde_json::from_str(text)?)
    }
}

/// Versioned on-disk form of an [`EmaStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmaSnapshot {
    pub version: u32,
    pub beta: f64,
    pub entries: Vec<EmaEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmaEntry {
    pub i: TaskId,
    pub j: TaskId,
    pub group: String,
    pub value: f64,
}

/// `(1 - beta) * prev + beta * observed`, kept inside [-1, 1].
pub fn ema_step(prev: f64, observed: f64, beta: f64) -> f64 {
    ((1.0 - beta) * prev + beta * observed).clamp(-1.0, 1.0)
}

/// Closed-form value of the moving average after observing `history`
/// starting from zero: `beta * sum_s (1 - beta)^(t - s) * history[s]`.
pub fn ema_closed_form(history: &[f64], beta: f64) -> f64 {
    let t = history.len();
    history
        .iter()
        .enumerate()
        .map(|(s, phi)| beta * (1.0 - beta).powi((t - 1 - s) as i32) * phi)
        .sum()
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("EMA decay beta must lie in (0, 1], got {beta}")))
    }
}

fn check_value(value: f64) -> Result<()> {
    if value.is_finite() && (-1.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::validation(format!("EMA value {value} outside [-1, 1]")))
    }
}

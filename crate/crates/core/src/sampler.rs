//! Temperature-based task sampling over unbalanced task sizes.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::TaskId;
use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub task_sizes: BTreeMap<TaskId, u64>,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(task_sizes: BTreeMap<TaskId, u64>, temperature: f64, seed: u64) -> Result<Self> {
        let cfg = SamplerConfig {
            temperature,
            task_sizes,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 1.0) {
            return Err(Error::config(format!(
                "temperature must be finite and >= 1, got {}",
                self.temperature
            )));
        }
        if self.task_sizes.is_empty() {
            return Err(Error::config("sampler needs at least one task"));
        }
        if let Some((id, _)) = self.task_sizes.iter().find(|(_, s)| **s == 0) {
            return Err(Error::config(format!("task {id} has size 0")));
        }
        Ok(())
    }
}

/// `p_i` proportional to `(L_i / sum_j L_j)^(1/T)`, renormalised.
pub fn sampling_distribution(cfg: &SamplerConfig) -> Result<BTreeMap<TaskId, f64>> {
    cfg.validate()?;
    let total: f64 = cfg.task_sizes.values().map(|s| *s as f64).sum();
    let inv_t = 1.0 / cfg.temperature;
    let weights: Vec<(TaskId, f64)> = cfg
        .task_sizes
        .iter()
        .map(|(id, size)| (*id, (*size as f64 / total).powf(inv_t)))
        .collect();
    let norm: f64 = weights.iter().map(|(_, w)| w).sum();
    Ok(weights.into_iter().map(|(id, w)| (id, w / norm)).collect())
}

/// Draws task minibatches i.i.d. from the temperature distribution.
#[derive(Debug, Clone)]
pub struct TaskSampler {
    ids: Vec<TaskId>,
    probs: Vec<f64>,
    index: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl TaskSampler {
    pub fn new(cfg: &SamplerConfig) -> Result<Self> {
        let dist = sampling_distribution(cfg)?;
        let (ids, probs): (Vec<TaskId>, Vec<f64>) = dist.into_iter().unzip();
        let index = WeightedIndex::new(&probs)
            .map_err(|e| Error::config(format!("invalid sampling weights: {e}")))?;
        Ok(TaskSampler {
            ids,
            probs,
            index,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn probability(&self, id: TaskId) -> Option<f64> {
        self.ids.iter().position(|t| *t == id).map(|p| self.probs[p])
    }

    /// Draws `batch_tasks` task ids with replacement.
    pub fn sample_minibatch(&mut self, batch_tasks: usize) -> Result<Vec<TaskId>> {
        if batch_tasks == 0 {
            return Err(Error::config("batch_tasks must be >= 1"));
        }
        Ok((0..batch_tasks)
            .map(|_| self.ids[self.index.sample(&mut self.rng)])
            .collect())
    }
}

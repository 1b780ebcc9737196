//! On-disk document formats.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gradvac_core::analysis::SimilarityRecord;
use gradvac_core::engine::{GradientBundle, PartitionLayout, SurgeryReport};
use gradvac_core::synthetic::{ProblemSpec, SamplerSettings, TrainConfig};
use gradvac_core::{GradVector, GroupPartition, TaskId, TaskTable, VaccineConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Version written to, and required in, every document.
pub const SPEC_VERSION: u32 = 1;

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

pub(crate) fn check_version(path: &Path, version: u32) -> CliResult<()> {
    if version != SPEC_VERSION {
        return Err(CliError::invalid(format!(
            "{}: unsupported spec_version {version} (expected {SPEC_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

fn default_record_every() -> u64 {
    1
}

fn default_window() -> usize {
    10
}

/// Experiment specification for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub spec_version: u32,
    pub problem: ProblemSpec,
    /// Regroups the problem's parameters; the problem's own grouping otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionLayout>,
    pub step_size: f64,
    pub steps: u64,
    #[serde(default)]
    pub vaccine: VaccineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSettings>,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub keep_snapshots: bool,
    #[serde(default = "default_window")]
    pub activity_window: usize,
    /// Used when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentFile {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            step_size: self.step_size,
            max_steps: self.steps,
            vaccine: self.vaccine.clone(),
            sampler: self.sampler.clone(),
            record_every: self.record_every,
            keep_snapshots: self.keep_snapshots,
        }
    }

    /// Applies a `--seed` override to every seeded component.
    pub fn set_seed(&mut self, seed: u64) {
        self.problem.set_seed(seed);
        self.vaccine.seed = seed;
        if let Some(s) = &mut self.sampler {
            s.seed = seed;
        }
    }
}

/// Surgery settings for `combine`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombineFile {
    pub spec_version: u32,
    #[serde(default)]
    pub vaccine: VaccineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpTask {
    pub name: String,
    pub size: u64,
    pub groups: BTreeMap<String, Vec<f64>>,
}

/// Per-task gradients of one training step, exchanged with external trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientDumpFile {
    pub spec_version: u32,
    pub step: u64,
    pub partition: PartitionLayout,
    pub tasks: Vec<DumpTask>,
}

/// A dump checked against its own partition declaration.
#[derive(Debug, Clone)]
pub struct LoadedDump {
    pub partition: GroupPartition,
    pub tasks: TaskTable,
    pub bundle: GradientBundle,
}

impl GradientDumpFile {
    pub fn load(path: &Path) -> CliResult<LoadedDump> {
        let dump: GradientDumpFile = read_json(path)?;
        check_version(path, dump.spec_version)?;
        dump.validate().map_err(|e| CliError::core(path, e))
    }

    pub fn validate(&self) -> gradvac_core::Result<LoadedDump> {
        let partition = self.partition.to_partition()?;
        let tasks = TaskTable::new(self.tasks.iter().map(|t| (t.name.clone(), t.size)))?;
        if tasks.is_empty() {
            return Err(gradvac_core::Error::Validation("dump lists no tasks".into()));
        }
        let mut bundle = GradientBundle::new(self.step);
        for (k, task) in self.tasks.iter().enumerate() {
            if let Some(extra) = task.groups.keys().find(|g| partition.group(g).is_none()) {
                return Err(gradvac_core::Error::UnknownGroup(format!(
                    "{extra} (task `{}`)",
                    task.name
                )));
            }
            if let Some(missing) = partition.names().find(|g| !task.groups.contains_key(*g)) {
                return Err(gradvac_core::Error::Validation(format!(
                    "task `{}` has no gradient for group `{missing}`",
                    task.name
                )));
            }
            for (group, values) in &task.groups {
                bundle.insert(TaskId(k as u32), GradVector::new(group.clone(), values.clone())?);
            }
        }
        bundle.validate(&partition, tasks.len())?;
        Ok(LoadedDump {
            partition,
            tasks,
            bundle,
        })
    }

    pub fn from_groups(
        step: u64,
        partition: &GroupPartition,
        tasks: Vec<(String, u64, Vec<&GradVector>)>,
    ) -> Self {
        GradientDumpFile {
            spec_version: SPEC_VERSION,
            step,
            partition: PartitionLayout::from_partition(partition),
            tasks: tasks
                .into_iter()
                .map(|(name, size, groups)| DumpTask {
                    name,
                    size,
                    groups: groups
                        .into_iter()
                        .map(|g| (g.group().to_string(), g.values().to_vec()))
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    pub size: u64,
}

/// Similarity records of a run, with the context needed to analyze them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordsFile {
    pub spec_version: u32,
    pub tasks: Vec<TaskEntry>,
    pub partition: PartitionLayout,
    /// Family index per task name, for family problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub families: Option<BTreeMap<String, usize>>,
    pub records: Vec<SimilarityRecord>,
}

impl RecordsFile {
    pub fn task_table(&self) -> gradvac_core::Result<TaskTable> {
        TaskTable::new(self.tasks.iter().map(|t| (t.name.clone(), t.size)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeryFile {
    pub spec_version: u32,
    pub tasks: Vec<String>,
    pub reports: Vec<SurgeryReport>,
}

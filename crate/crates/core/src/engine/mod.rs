//! Multi-task gradient surgery engine: per-group alignment with EMA
//! similarity targets, task subsets and seeded inner ordering.

mod bundle;
mod combine;
mod config;
mod ema;
mod partition;
mod task;

pub use bundle::GradientBundle;
pub use combine::{
    combine_step, CombinedGradient, EngineRng, PairRecord, StepOutput, SurgeryReport,
    VaccineEngine,
};
pub use config::{
    resolve_task_subset, Mode, TaskRef, TaskSubset, VaccineConfig, DEFAULT_HRL_THRESHOLD,
};
pub use ema::{ema_closed_form, ema_step, EmaEntry, EmaKey, EmaSnapshot, EmaStore, EMA_SNAPSHOT_VERSION};
pub use partition::{Granularity, GroupLength, GroupPartition, GroupSpec, PartitionLayout};
pub use task::{TaskId, TaskInfo, TaskTable};

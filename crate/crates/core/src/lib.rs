//! Multi-task gradient combination.
//!
//! The crate provides the geometry kernels for gradient surgery (PCGrad
//! projection and GradVac alignment), a stateful engine that applies them per
//! parameter group with EMA similarity targets, temperature-based task
//! sampling, synthetic multi-task problems with analytic gradients, and tools
//! to measure and aggregate pairwise gradient similarities along a run.

/// Version of this library, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod analysis;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod sampler;
pub mod synthetic;

pub use engine::{
    combine_step, ema_closed_form, resolve_task_subset, CombinedGradient, EmaStore, EngineRng,
    GradientBundle, Granularity, GroupPartition, Mode, StepOutput, SurgeryReport, TaskId,
    TaskSubset, TaskTable, VaccineConfig, VaccineEngine,
};
pub use error::{Error, Result};
pub use geometry::{cosine, pcgrad_project, rescale_to_norm, vaccine_align, GradVector, Tolerances};

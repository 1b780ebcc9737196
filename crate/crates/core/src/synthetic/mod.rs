//! Synthetic multi-task problems with analytic gradients and a deterministic
//! training loop.

mod family;
mod layered;
mod problem;
mod quadratic;
mod spec;
mod theory;
mod train;

pub use family::{build_family_problem, FamilySpec, FamilyTaskSet};
pub use layered::{LayeredLinearModel, LayeredSpec};
pub use problem::{task_gradients, MultiTaskProblem};
pub use quadratic::{
    conflict_benchmark, theorem_pair, ConflictSpec, QuadraticProblem, QuadraticTask,
    TheoremPairSpec,
};
pub use spec::{BuiltProblem, ProblemSpec, QuadraticSpec, QuadraticTaskSpec};
pub use theory::{audit_descent, DescentAudit, DESCENT_FLOOR, DESCENT_SLACK};
pub use train::{
    alignment_coefficient, train, SamplerSettings, StepStats, TrainConfig, TrainRun,
    DIVERGENCE_LOSS,
};

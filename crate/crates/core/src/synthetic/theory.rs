use serde::{Deserialize, Serialize};

use super::train::TrainRun;

/// Relative slack on the loss when checking the per-step descent bound, to
/// absorb rounding in the loss evaluation itself.
pub const DESCENT_SLACK: f64 = 1e-12;

/// Once a run has converged the loss only moves at the rounding floor of its
/// evaluation, which scales with the initial loss rather than the current one.
pub const DESCENT_FLOOR: f64 = 1e-24;

/// Check of the per-step decrease
/// `L(theta+) <= L(theta) - (t - (1 + a^2) L t^2 / 2) ||g||^2`
/// along a recorded run, with `a` taken from that step's fired alignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentAudit {
    pub step_size: f64,
    pub lipschitz: f64,
    /// Largest alignment coefficient observed over the run.
    pub max_a: f64,
    /// `t < min(2 / (L (1 + a^2)), 1 / L)` with the run's `max_a`.
    pub precondition_holds: bool,
    /// Steps whose decrease fell short of the bound by more than the slack.
    pub violations: Vec<u64>,
    /// Largest `L(theta+) - bound` over the run, normalised by `max(L(theta), 1)`.
    pub worst_excess: f64,
}

impl DescentAudit {
    pub fn holds(&self) -> bool {
        self.precondition_holds && self.violations.is_empty()
    }
}

pub fn audit_descent(run: &TrainRun, lipschitz: f64) -> DescentAudit {
    let t = run.step_size;
    let max_a = run.stats.iter().map(|s| s.max_a).fold(0.0, f64::max);
    let limit = (2.0 / (lipschitz * (1.0 + max_a * max_a))).min(1.0 / lipschitz);
    let mut violations = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    let floor = DESCENT_FLOOR * run.losses[0].abs();
    for (k, s) in run.stats.iter().enumerate() {
        let (before, after) = (run.losses[k], run.losses[k + 1]);
        let a2 = s.max_a * s.max_a;
        let bound = before - (t - (1.0 + a2) * lipschitz * t * t / 2.0) * s.raw_norm_sq;
        let excess = after - bound;
        worst_excess = worst_excess.max(excess / before.abs().max(1.0));
        if excess > DESCENT_SLACK * before.abs() + floor {
            violations.push(s.step);
        }
    }
    DescentAudit {
        step_size: t,
        lipschitz,
        max_a,
        precondition_holds: t < limit,
        violations,
        worst_excess,
    }
}

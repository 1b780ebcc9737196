use serde::{Deserialize, Serialize};

use crate::engine::{Mode, SurgeryReport};

/// Firing counts for one surgery mode along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySeries {
    pub mode: Mode,
    pub steps: Vec<u64>,
    pub fired: Vec<u64>,
    pub window: usize,
    /// Sums over every full sliding window; entry `k` covers `fired[k..k + window]`.
    pub windowed: Vec<u64>,
}

impl ActivitySeries {
    pub fn total(&self) -> u64 {
        self.fired.iter().sum()
    }
}

/// Per-step and windowed firing counts, one series per mode in order of
/// first appearance. A window of zero is treated as one.
pub fn activity_counts(reports: &[SurgeryReport], window: usize) -> Vec<ActivitySeries> {
    let window = window.max(1);
    let mut series: Vec<ActivitySeries> = Vec::new();
    for r in reports {
        let pos = match series.iter().position(|s| s.mode == r.mode) {
            Some(p) => p,
            None => {
                series.push(ActivitySeries {
                    mode: r.mode,
                    steps: Vec::new(),
                    fired: Vec::new(),
                    window,
                    windowed: Vec::new(),
                });
                series.len() - 1
            }
        };
        series[pos].steps.push(r.step);
        series[pos].fired.push(r.fired_total);
    }
    for s in &mut series {
        s.windowed = s.fired.windows(window).map(|w| w.iter().sum()).collect();
    }
    series
}

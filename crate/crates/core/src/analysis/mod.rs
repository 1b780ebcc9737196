//! Measurement of pairwise gradient similarities along a run: per-step
//! matrices, averages over steps, group contrasts, family clustering scores
//! and surgery activity counts.

mod activity;
mod aggregate;
pub mod export;
mod record;

pub use activity::{activity_counts, ActivitySeries};
pub use aggregate::{
    aggregate_over_steps, clustering_score, group_contrast, AggregateMatrix, ClusterScore,
    ContrastMatrix, StepRange,
};
pub use record::{record_similarities, GroupSimilarity, SimilarityRecord};

#[cfg(test)]
mod tests;

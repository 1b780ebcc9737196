//! Fixtures shared by the benchmarks.

use gradvac_core::{GradientBundle, GroupPartition, Granularity, TaskId, TaskTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random gradients for `num_tasks` tasks over `groups` equal-sized groups.
pub fn random_bundle(
    num_tasks: usize,
    groups: usize,
    group_len: usize,
    seed: u64,
) -> (GradientBundle, GroupPartition, TaskTable) {
    let partition = GroupPartition::from_lengths(
        Granularity::AllLayer,
        (0..groups).map(|g| (format!("layer{}", g + 1), group_len)),
    )
    .expect("non-empty groups");
    let tasks = TaskTable::new((0..num_tasks).map(|i| (format!("task_{i}"), 1000 + i as u64)))
        .expect("unique names");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat: Vec<Vec<f64>> = (0..num_tasks)
        .map(|_| (0..partition.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let bundle = GradientBundle::from_flat(
        0,
        &partition,
        flat.iter().enumerate().map(|(i, g)| (TaskId(i as u32), g.as_slice())),
    )
    .expect("consistent shapes");
    (bundle, partition, tasks)
}

/// A pair of random vectors of length `dim`.
pub fn random_pair(dim: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    (draw(), draw())
}

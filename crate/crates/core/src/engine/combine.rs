use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bundle::GradientBundle;
use super::config::{resolve_task_subset, Mode, VaccineConfig};
use super::ema::EmaStore;
use super::partition::GroupPartition;
use super::task::{TaskId, TaskTable};
use crate::error::{Error, Result};
use crate::geometry::{self, GradVector, Tolerances};

/// Seedable generator driving the inner-loop task order.
///
/// Each step draws one 64-bit word from the main stream; every group then
/// shuffles from its own ChaCha stream keyed by that word and a hash of the
/// group name, so group results do not depend on processing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineRng {
    inner: ChaCha8Rng,
}

impl EngineRng {
    pub const ALGORITHM: &'static str = "chacha8/rand_chacha-0.3+fnv1a-group-streams";

    pub fn new(seed: u64) -> Self {
        EngineRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn group_streams(&mut self) -> GroupStreams {
        GroupStreams {
            step_key: self.inner.next_u64(),
        }
    }
}

struct GroupStreams {
    step_key: u64,
}

impl GroupStreams {
    fn for_group(&self, name: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.step_key);
        rng.set_stream(fnv1a(name.as_bytes()));
        rng
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// One visited (i, j, group) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: TaskId,
    pub j: TaskId,
    pub group: String,
    /// Cosine of task i's running gradient against task j's original gradient.
    /// Zero when `skipped`.
    pub observed_phi: f64,
    /// EMA value read before this pair was processed (gradvac mode only).
    pub ema_before: Option<f64>,
    /// Target handed to the alignment kernel.
    pub target: f64,
    pub fired: bool,
    /// A norm fell below tolerance; no alteration and no EMA update.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryReport {
    pub step: u64,
    pub mode: Mode,
    pub entries: Vec<PairRecord>,
    pub fired_total: u64,
    pub eligible_total: u64,
    pub skipped_total: u64,
    /// Alignments whose EMA target had to be clamped before use.
    pub clamped_targets: u64,
}

impl SurgeryReport {
    fn empty(step: u64, mode: Mode) -> Self {
        SurgeryReport {
            step,
            mode,
            entries: Vec::new(),
            fired_total: 0,
            eligible_total: 0,
            skipped_total: 0,
            clamped_targets: 0,
        }
    }
}

/// Combined update, one vector per group in partition order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedGradient {
    pub groups: Vec<GradVector>,
}

impl CombinedGradient {
    pub fn group(&self, name: &str) -> Option<&GradVector> {
        self.groups.iter().find(|g| g.group() == name)
    }

    /// Reassembles the flat parameter-space vector.
    pub fn flatten(&self, partition: &GroupPartition) -> Vec<f64> {
        let mut flat = vec![0.0; partition.dim()];
        for spec in partition.groups() {
            if let Some(g) = self.group(&spec.name) {
                flat[spec.extent.clone()].copy_from_slice(g.values());
            }
        }
        flat
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub combined: CombinedGradient,
    pub report: SurgeryReport,
}

/// Runs one step of gradient surgery over every group of `partition`.
///
/// Per group: each task in `subset` that is present in the bundle (ascending
/// id) visits every other present task in a freshly shuffled order, aligning
/// its running gradient against the other task's original gradient whenever
/// the observed cosine falls below the target. The combined update is the sum
/// of the running gradients. `ema` and `rng` are only touched after the bundle
/// has been validated.
pub fn combine_step(
    bundle: &GradientBundle,
    partition: &GroupPartition,
    num_tasks: usize,
    subset: &BTreeSet<TaskId>,
    ema: &mut EmaStore,
    cfg: &VaccineConfig,
    rng: &mut EngineRng,
) -> Result<StepOutput> {
    cfg.validate()?;
    bundle.validate(partition, num_tasks)?;
    if bundle.num_tasks() == 0 {
        return Err(Error::validation("bundle contains no tasks"));
    }
    if cfg.mode == Mode::Gradvac && ema.beta() != cfg.beta {
        log::debug!("EMA store beta {} differs from config beta {}", ema.beta(), cfg.beta);
    }

    let streams = rng.group_streams();
    let tol = cfg.tolerances();
    let tasks: Vec<TaskId> = bundle.tasks().collect();
    let mut report = SurgeryReport::empty(bundle.step, cfg.mode);
    let mut combined = Vec::with_capacity(partition.len());

    for spec in partition.groups() {
        let originals: Vec<&[f64]> = tasks
            .iter()
            .map(|t| bundle.get(*t, &spec.name).expect("validated").values())
            .collect();
        let mut group_rng = streams.for_group(&spec.name);
        let outcome = surgery_for_group(
            &spec.name,
            &tasks,
            &originals,
            subset,
            ema,
            cfg,
            &tol,
            &mut group_rng,
        );
        if !(cfg.freeze_ema || cfg.mode != Mode::Gradvac) {
            for (i, j, phi) in outcome.ema_writes {
                ema.update(i, j, &spec.name, phi);
            }
        }
        report.clamped_targets += outcome.clamped;
        report.entries.extend(outcome.entries);
        combined.push(GradVector::from_parts(spec.name.clone(), outcome.combined));
    }

    for e in &report.entries {
        if e.skipped {
            report.skipped_total += 1;
        } else {
            report.eligible_total += 1;
        }
        if e.fired {
            report.fired_total += 1;
        }
    }

    Ok(StepOutput {
        combined: CombinedGradient { groups: combined },
        report,
    })
}

struct GroupOutcome {
    combined: Vec<f64>,
    entries: Vec<PairRecord>,
    ema_writes: Vec<(TaskId, TaskId, f64)>,
    clamped: u64,
}

#[allow(clippy::too_many_arguments)]
fn surgery_for_group(
    group: &str,
    tasks: &[TaskId],
    originals: &[&[f64]],
    subset: &BTreeSet<TaskId>,
    ema: &EmaStore,
    cfg: &VaccineConfig,
    tol: &Tolerances,
    rng: &mut ChaCha8Rng,
) -> GroupOutcome {
    let dim = originals[0].len();
    let mut outcome = GroupOutcome {
        combined: vec![0.0; dim],
        entries: Vec::new(),
        ema_writes: Vec::new(),
        clamped: 0,
    };

    if cfg.mode == Mode::SumBaseline {
        for g in originals {
            geometry::axpy(1.0, g, &mut outcome.combined);
        }
        return outcome;
    }

    for (pos_i, &i) in tasks.iter().enumerate() {
        let mut running = originals[pos_i].to_vec();
        if subset.contains(&i) {
            let mut order: Vec<usize> = (0..tasks.len()).filter(|&p| p != pos_i).collect();
            order.shuffle(rng);
            for pos_j in order {
                let j = tasks[pos_j];
                let g_j = originals[pos_j];
                let phi = tol.cosine_slices(&running, g_j);
                let mut record = PairRecord {
                    i,
                    j,
                    group: group.to_string(),
                    observed_phi: phi.value,
                    ema_before: None,
                    target: 0.0,
                    fired: false,
                    skipped: phi.degenerate,
                };
                let (target, fire) = match cfg.mode {
                    Mode::Gradvac => {
                        let current = ema.get(i, j, group);
                        record.ema_before = Some(current);
                        let used = tol.clamp_target(current);
                        (used, phi.value < current && phi.value < used)
                    }
                    Mode::FixedTarget(v) => (v, phi.value < v),
                    Mode::Pcgrad => (0.0, phi.value < 0.0),
                    Mode::SumBaseline => unreachable!(),
                };
                record.target = target;
                if !phi.degenerate {
                    if fire {
                        let before = geometry::norm(&running);
                        let applied = if cfg.mode == Mode::Pcgrad {
                            tol.project_in_place(&mut running, g_j)
                        } else {
                            tol.align_in_place(&mut running, g_j, target)
                        };
                        debug_assert!(applied);
                        if cfg.preserve_norm {
                            tol.rescale_in_place(&mut running, before);
                        }
                        if record.ema_before.is_some_and(|e| e != target) {
                            outcome.clamped += 1;
                        }
                        record.fired = true;
                    }
                    if cfg.mode == Mode::Gradvac {
                        outcome.ema_writes.push((i, j, phi.value));
                    }
                }
                outcome.entries.push(record);
            }
        }
        geometry::axpy(1.0, &running, &mut outcome.combined);
    }
    outcome
}

/// Stateful driver: owns the EMA store and RNG across steps.
#[derive(Debug, Clone)]
pub struct VaccineEngine {
    cfg: VaccineConfig,
    partition: GroupPartition,
    tasks: TaskTable,
    subset: BTreeSet<TaskId>,
    ema: EmaStore,
    rng: EngineRng,
}

impl VaccineEngine {
    pub fn new(cfg: VaccineConfig, partition: GroupPartition, tasks: TaskTable) -> Result<Self> {
        cfg.validate()?;
        let subset = resolve_task_subset(&cfg, &tasks)?;
        let ema = EmaStore::new(cfg.beta)?;
        let rng = EngineRng::new(cfg.seed);
        Ok(VaccineEngine {
            cfg,
            partition,
            tasks,
            subset,
            ema,
            rng,
        })
    }

    /// Replaces the EMA state, e.g. from a snapshot.
    pub fn with_ema(mut self, ema: EmaStore) -> Result<Self> {
        ema.check_compatible(&self.partition, self.tasks.len())?;
        self.ema = ema;
        Ok(self)
    }

    pub fn step(&mut self, bundle: &GradientBundle) -> Result<StepOutput> {
        combine_step(
            bundle,
            &self.partition,
            self.tasks.len(),
            &self.subset,
            &mut self.ema,
            &self.cfg,
            &mut self.rng,
        )
    }

    pub fn config(&self) -> &VaccineConfig {
        &self.cfg
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn tasks(&self) -> &TaskTable {
        &self.tasks
    }

    pub fn subset(&self) -> &BTreeSet<TaskId> {
        &self.subset
    }

    pub fn ema(&self) -> &EmaStore {
        &self.ema
    }

    pub fn ema_mut(&mut self) -> &mut EmaStore {
        &mut self.ema
    }

    pub fn into_ema(self) -> EmaStore {
        self.ema
    }
}

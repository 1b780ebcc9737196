use std::collections::BTreeMap;
use std::path::PathBuf;

use gradvac_core::analysis::export::{activity_csv, loss_csv, similarities_csv};
use gradvac_core::analysis::activity_counts;
use gradvac_core::engine::PartitionLayout;
use gradvac_core::synthetic::{
    audit_descent, train, DescentAudit, MultiTaskProblem, ProblemSpec, TrainRun,
};
use gradvac_core::{EngineRng, Mode, TaskTable};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::files::{
    check_version, read_json, to_json, ExperimentFile, RecordsFile, SurgeryFile, TaskEntry,
    SPEC_VERSION,
};
use crate::output::OutputSet;

#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
}

#[derive(Serialize)]
struct Seeds {
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<u64>,
    engine: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampler: Option<u64>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    spec_version: u32,
    cli_version: &'static str,
    core_version: &'static str,
    rng_algorithm: &'static str,
    /// SHA-256 of `config` serialized as compact JSON.
    config_sha256: String,
    seeds: Seeds,
    mode: Mode,
    steps: usize,
    initial_loss: f64,
    final_loss: f64,
    total_fired: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimal_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lipschitz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    descent_audit: Option<DescentAudit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    families: Option<BTreeMap<String, usize>>,
    config: &'a ExperimentFile,
}

fn family_names(
    families: Option<&BTreeMap<gradvac_core::TaskId, usize>>,
    tasks: &TaskTable,
) -> Option<BTreeMap<String, usize>> {
    families.map(|f| f.iter().map(|(t, fam)| (tasks.name(*t).to_string(), *fam)).collect())
}

fn steps_csv(run: &TrainRun) -> String {
    let mut out = String::from("step,batch_tasks,raw_norm_sq,update_norm_sq,max_a,fired\n");
    for (s, r) in run.stats.iter().zip(&run.reports) {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.step,
            s.batch.len(),
            s.raw_norm_sq,
            s.update_norm_sq,
            s.max_a,
            r.fired_total
        ));
    }
    out
}

/// The descent bound concerns a pair of convex quadratics.
fn audit_applies(problem: &ProblemSpec, run: &TrainRun) -> bool {
    let pair = match problem {
        ProblemSpec::TheoremPair(_) => true,
        ProblemSpec::Quadratic(q) => q.tasks.len() == 2,
        _ => false,
    };
    pair && run.steps() > 0
}

/// Loads the experiment and applies command-line overrides. The returned
/// config has `out_dir` cleared so it hashes the same wherever it is written.
fn resolve(args: &SimulateArgs) -> CliResult<(ExperimentFile, PathBuf)> {
    let mut exp: ExperimentFile = read_json(&args.config)?;
    check_version(&args.config, exp.spec_version)?;
    if let Some(seed) = args.seed {
        exp.set_seed(seed);
    }
    if let Some(mode) = args.mode {
        exp.vaccine.mode = mode;
    }
    let out = args
        .out
        .clone()
        .or_else(|| exp.out_dir.take())
        .ok_or_else(|| CliError::invalid("no output directory: pass --out or set out_dir"))?;
    exp.out_dir = None;
    Ok((exp, out))
}

/// Runs the experiment and renders every artifact without touching the disk.
pub fn render(args: &SimulateArgs) -> CliResult<(OutputSet, PathBuf)> {
    let (exp, out) = resolve(args)?;
    let ctx = args.config.as_path();
    let cfg = exp.train_config();
    cfg.validate().map_err(|e| CliError::core(ctx, e))?;
    let problem = exp
        .problem
        .build(exp.partition.as_ref())
        .map_err(|e| CliError::core(ctx, e))?;
    log::info!(
        "simulating {} tasks over {} parameters in {} groups, mode {}",
        problem.tasks().len(),
        problem.dim(),
        problem.partition().len(),
        cfg.vaccine.mode
    );
    let run = train(&problem, &cfg).map_err(|e| CliError::core(ctx, e))?;
    let tasks = problem.tasks();
    let core_err = |e| CliError::core(ctx, e);

    let mut files = OutputSet::default();
    files.add("loss.csv", loss_csv(&run.losses).map_err(core_err)?);
    files.add("similarities.csv", similarities_csv(&run.similarities, tasks).map_err(core_err)?);
    files.add("steps.csv", steps_csv(&run));
    let families = family_names(problem.families(), tasks);
    files.add(
        "records.json",
        to_json(&RecordsFile {
            spec_version: SPEC_VERSION,
            tasks: tasks
                .iter()
                .map(|t| TaskEntry {
                    name: t.name.clone(),
                    size: t.size,
                })
                .collect(),
            partition: PartitionLayout::from_partition(problem.partition()),
            families: families.clone(),
            records: run.similarities.clone(),
        }),
    );
    files.add(
        "surgery.json",
        to_json(&SurgeryFile {
            spec_version: SPEC_VERSION,
            tasks: tasks.iter().map(|t| t.name.clone()).collect(),
            reports: run.reports.clone(),
        }),
    );
    files.add("ema.json", run.ema.to_json().map_err(core_err)? + "\n");
    files.add(
        "activity.csv",
        activity_csv(&activity_counts(&run.reports, exp.activity_window)).map_err(core_err)?,
    );
    if cfg.keep_snapshots {
        files.add("snapshots.json", to_json(&run.snapshots));
    }

    let compact = serde_json::to_vec(&exp).expect("config serializes");
    let lipschitz = problem.lipschitz();
    let metadata = Metadata {
        spec_version: SPEC_VERSION,
        cli_version: env!("CARGO_PKG_VERSION"),
        core_version: gradvac_core::VERSION,
        rng_algorithm: EngineRng::ALGORITHM,
        config_sha256: hex::encode(Sha256::digest(&compact)),
        seeds: Seeds {
            problem: exp.problem.seed(),
            engine: exp.vaccine.seed,
            sampler: exp.sampler.as_ref().map(|s| s.seed),
        },
        mode: cfg.vaccine.mode,
        steps: run.steps(),
        initial_loss: run.losses[0],
        final_loss: run.final_loss(),
        total_fired: run.total_fired(),
        optimal_loss: problem.optimal_loss(),
        lipschitz,
        descent_audit: lipschitz.filter(|_| audit_applies(&exp.problem, &run)).map(|l| audit_descent(&run, l)),
        families,
        config: &exp,
    };
    files.add("metadata.json", to_json(&metadata));
    Ok((files, out))
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let (files, out) = render(args)?;
    files.write(&out)?;
    log::info!("wrote run to {}", out.display());
    Ok(())
}

use std::fs;
use std::path::PathBuf;

use gradvac_core::{
    combine_step, resolve_task_subset, EmaStore, EngineRng, Mode, VaccineConfig,
};

use crate::error::{CliError, CliResult};
use crate::files::{check_version, read_json, to_json, CombineFile, GradientDumpFile, SPEC_VERSION};
use crate::output::OutputSet;

#[derive(Debug, Clone, Default)]
pub struct CombineArgs {
    pub dump: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub ema_in: Option<PathBuf>,
    /// Defaults to `ema.json` inside `out`.
    pub ema_out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
}

#[derive(serde::Serialize)]
struct ReportFile<'a> {
    spec_version: u32,
    tasks: Vec<&'a str>,
    report: &'a gradvac_core::SurgeryReport,
}

/// Inner-loop order for a single externally supplied step: the seed and the
/// dump's step index together select the stream, so consecutive steps of one
/// run do not replay the same shuffles.
fn step_rng(seed: u64, step: u64) -> EngineRng {
    EngineRng::new(seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn load_config(args: &CombineArgs) -> CliResult<VaccineConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let file: CombineFile = read_json(path)?;
            check_version(path, file.spec_version)?;
            file.vaccine
        }
        None => VaccineConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    let ctx = args.config.as_deref().unwrap_or(args.dump.as_path());
    cfg.validate().map_err(|e| CliError::core(ctx, e))?;
    Ok(cfg)
}

pub fn render(args: &CombineArgs) -> CliResult<OutputSet> {
    let cfg = load_config(args)?;
    let dump = GradientDumpFile::load(&args.dump)?;
    let ema = match &args.ema_in {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let ema = EmaStore::from_json(&text).map_err(|e| CliError::core(path, e))?;
            ema.check_compatible(&dump.partition, dump.tasks.len())
                .map_err(|e| CliError::core(path, e))?;
            if ema.beta() != cfg.beta {
                return Err(CliError::invalid(format!(
                    "{}: EMA snapshot has beta {} but the config asks for {}",
                    path.display(),
                    ema.beta(),
                    cfg.beta
                )));
            }
            ema
        }
        None => EmaStore::new(cfg.beta).map_err(|e| CliError::core(&args.dump, e))?,
    };
    if args.ema_in.is_some() && args.ema_in == args.ema_out {
        log::warn!("EMA input and output are the same file; it will be overwritten");
    }

    let mut ema = ema;
    let mut rng = step_rng(cfg.seed, dump.bundle.step);
    let subset = resolve_task_subset(&cfg, &dump.tasks).map_err(|e| CliError::core(&args.dump, e))?;
    let out = combine_step(
        &dump.bundle,
        &dump.partition,
        dump.tasks.len(),
        &subset,
        &mut ema,
        &cfg,
        &mut rng,
    )
    .map_err(|e| CliError::core(&args.dump, e))?;

    let total_size = dump.tasks.iter().map(|t| t.size).sum();
    let combined = GradientDumpFile::from_groups(
        dump.bundle.step,
        &dump.partition,
        vec![("combined".to_string(), total_size, out.combined.groups.iter().collect())],
    );
    let mut files = OutputSet::default();
    files.add("combined.json", to_json(&combined));
    files.add(
        "report.json",
        to_json(&ReportFile {
            spec_version: SPEC_VERSION,
            tasks: dump.tasks.iter().map(|t| t.name.as_str()).collect(),
            report: &out.report,
        }),
    );
    let ema_path = match &args.ema_out {
        Some(p) if p.is_relative() => std::env::current_dir()
            .map_err(|e| CliError::io(p, e))?
            .join(p),
        Some(p) => p.clone(),
        None => PathBuf::from("ema.json"),
    };
    files.add(ema_path, ema.to_json().map_err(|e| CliError::core(&args.dump, e))? + "\n");
    Ok(files)
}

pub fn combine(args: &CombineArgs) -> CliResult<()> {
    render(args)?.write(&args.out)
}

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use gradvac_core::analysis::export::{activity_csv, aggregate_json, contrast_json};
use gradvac_core::analysis::{
    activity_counts, aggregate_over_steps, clustering_score, group_contrast, ClusterScore,
    StepRange,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::files::{check_version, read_json, to_json, RecordsFile, SurgeryFile, SPEC_VERSION};
use crate::output::OutputSet;

#[derive(Debug, Clone, Default)]
pub struct AnalyzeArgs {
    /// Output directory of a `simulate` run.
    pub records_dir: PathBuf,
    pub out: PathBuf,
    pub from_step: Option<u64>,
    pub to_step: Option<u64>,
    pub window: usize,
    /// Group pairs `(a, b)` to contrast as `mean(a) - mean(b)`.
    pub contrasts: Vec<(String, String)>,
}

#[derive(Serialize)]
struct ClusteringFile {
    spec_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    from_step: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    to_step: Option<u64>,
    groups: BTreeMap<String, ClusterScore>,
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn read_optional<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Option<T>> {
    match std::fs::metadata(path) {
        Ok(_) => read_json(path).map(Some),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CliError::io(path, e)),
    }
}

pub fn render(args: &AnalyzeArgs) -> CliResult<OutputSet> {
    let records_path = args.records_dir.join("records.json");
    let records: RecordsFile = read_optional(&records_path)?.ok_or_else(|| {
        CliError::invalid(format!("{}: no similarity records found", records_path.display()))
    })?;
    check_version(&records_path, records.spec_version)?;
    if records.records.is_empty() {
        return Err(CliError::invalid(format!(
            "{}: the run recorded no similarities",
            records_path.display()
        )));
    }
    let ctx = records_path.as_path();
    let tasks = records.task_table().map_err(|e| CliError::core(ctx, e))?;
    let partition = records.partition.to_partition().map_err(|e| CliError::core(ctx, e))?;
    let range: Option<StepRange> = match (args.from_step, args.to_step) {
        (None, None) => None,
        (from, to) => Some(from.unwrap_or(0)..=to.unwrap_or(u64::MAX)),
    };

    let mut files = OutputSet::default();
    let mut aggregates = Vec::new();
    for group in partition.names() {
        let agg = aggregate_over_steps(&records.records, group, range.as_ref())
            .map_err(|e| CliError::core(ctx, e))?;
        files.add(
            format!("aggregate_{}.json", file_stem(group)),
            aggregate_json(&agg, &tasks).map_err(|e| CliError::core(ctx, e))? + "\n",
        );
        aggregates.push(agg);
    }
    for (a, b) in &args.contrasts {
        let c = group_contrast(&records.records, a, b, range.as_ref())
            .map_err(|e| CliError::core(ctx, e))?;
        files.add(
            format!("contrast_{}_{}.json", file_stem(a), file_stem(b)),
            contrast_json(&c, &tasks).map_err(|e| CliError::core(ctx, e))? + "\n",
        );
    }
    if let Some(names) = &records.families {
        let mut families = BTreeMap::new();
        for (name, fam) in names {
            let id = tasks
                .by_name(name)
                .ok_or_else(|| CliError::invalid(format!("{}: unknown task `{name}` in families", ctx.display())))?;
            families.insert(id, *fam);
        }
        let groups = aggregates
            .iter()
            .map(|agg| {
                clustering_score(agg, &families)
                    .map(|s| (agg.group.clone(), s))
                    .map_err(|e| CliError::core(ctx, e))
            })
            .collect::<CliResult<_>>()?;
        files.add(
            "clustering.json",
            to_json(&ClusteringFile {
                spec_version: SPEC_VERSION,
                from_step: args.from_step,
                to_step: args.to_step,
                groups,
            }),
        );
    }
    let surgery_path = args.records_dir.join("surgery.json");
    if let Some(surgery) = read_optional::<SurgeryFile>(&surgery_path)? {
        check_version(&surgery_path, surgery.spec_version)?;
        let reports: Vec<_> = surgery
            .reports
            .into_iter()
            .filter(|r| range.as_ref().is_none_or(|rg| rg.contains(&r.step)))
            .collect();
        files.add(
            "activity.csv",
            activity_csv(&activity_counts(&reports, args.window))
                .map_err(|e| CliError::core(&surgery_path, e))?,
        );
    }
    Ok(files)
}

pub fn analyze(args: &AnalyzeArgs) -> CliResult<()> {
    render(args)?.write(&args.out)
}

//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gradvac_cli::files::GradientDumpFile;
use gradvac_core::analysis::{activity_counts, aggregate_over_steps, clustering_score};
use gradvac_core::engine::ema_step;
use gradvac_core::sampler::{sampling_distribution, SamplerConfig, TaskSampler};
use gradvac_core::synthetic::{
    audit_descent, build_family_problem, conflict_benchmark, theorem_pair, train, ConflictSpec,
    FamilySpec, TheoremPairSpec, TrainConfig,
};
use gradvac_core::{
    cosine, ema_closed_form, pcgrad_project, vaccine_align, EmaStore, GradVector, Mode, TaskId,
    VaccineConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    ensure(start.elapsed() < budget, || {
        format!("took {:.2?}, budget {budget:?}", start.elapsed())
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

const GEOMETRY_PAIRS: usize = 10_000;

/// Pairs with a spread of cosines: `b = c * a/|a| * |n| + n` for random `c`.
fn random_pair(rng: &mut ChaCha8Rng) -> (GradVector, GradVector) {
    let dim = (2f64.powf(rng.gen_range(1.0..12.0))).round() as usize;
    let a: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    let n: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let c = rng.gen_range(-3.0..3.0) * nn / na;
    let b: Vec<f64> = a.iter().zip(&n).map(|(x, y)| c * x + y).collect();
    (
        GradVector::new("all", a).unwrap(),
        GradVector::new("all", b).unwrap(),
    )
}

fn criterion_geometry() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut conflicting, mut aligned, mut worst_pc, mut worst_va) = (0, 0, 0.0f64, 0.0f64);
    for _ in 0..GEOMETRY_PAIRS {
        let (a, b) = random_pair(&mut rng);
        let phi = cosine(&a, &b).unwrap();
        ensure(!phi.degenerate, || "degenerate pair generated".into())?;
        if phi.value < 0.0 {
            conflicting += 1;
            let out = pcgrad_project(&a, &b).unwrap();
            let c = cosine(&out.vector, &b).unwrap().value;
            worst_pc = worst_pc.max(c.abs());
            ensure(c.abs() <= 1e-10, || format!("pcgrad cosine {c:e}"))?;
        }
        if phi.value < 0.99 {
            aligned += 1;
            let target = rng.gen_range(phi.value..0.99).clamp(-0.99, 0.99);
            if target <= phi.value {
                continue;
            }
            let out = vaccine_align(&a, &b, target).unwrap();
            let c = cosine(&out.vector, &b).unwrap().value;
            worst_va = worst_va.max((c - target).abs());
            ensure((c - target).abs() <= 1e-8, || format!("aligned cosine {c} vs target {target}"))?;
        }
    }
    ensure(conflicting >= GEOMETRY_PAIRS / 4, || format!("only {conflicting} conflicting pairs"))?;
    within_budget(start, Duration::from_secs(10))?;
    Ok(format!(
        "{GEOMETRY_PAIRS} pairs, {conflicting} conflicting (max |cos| {worst_pc:.1e}), {aligned} aligned (max err {worst_va:.1e}), {:.2?}",
        start.elapsed()
    ))
}

fn criterion_pcgrad_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..GEOMETRY_PAIRS {
        let (a, b) = random_pair(&mut rng);
        let pc = pcgrad_project(&a, &b).unwrap().vector;
        let va = vaccine_align(&a, &b, 0.0).unwrap().vector;
        for (x, y) in pc.values().iter().zip(va.values()) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(worst <= 1e-10, || format!("max componentwise difference {worst:e}"))?;
    Ok(format!("{GEOMETRY_PAIRS} pairs, max componentwise difference {worst:.1e}"))
}

fn criterion_descent() -> Outcome {
    let start = Instant::now();
    let mut fired = 0;
    let mut worst_gap = 0.0f64;
    let mut max_a = 0.0f64;
    for seed in 0..10 {
        let p = theorem_pair(&TheoremPairSpec {
            seed,
            ..TheoremPairSpec::default()
        })
        .map_err(|e| e.to_string())?;
        let l = p.lipschitz();
        let mut vaccine = VaccineConfig::with_mode(Mode::Gradvac);
        vaccine.beta = 0.1;
        let cfg = TrainConfig {
            step_size: 0.5 / l,
            max_steps: 1000,
            vaccine,
            record_every: 0,
            ..TrainConfig::default()
        };
        let run = train(&p, &cfg).map_err(|e| e.to_string())?;
        let audit = audit_descent(&run, l);
        ensure(audit.precondition_holds, || format!("seed {seed}: step size above bound, a = {}", audit.max_a))?;
        ensure(audit.violations.is_empty(), || {
            format!("seed {seed}: bound violated at steps {:?}", audit.violations)
        })?;
        let gap = (run.final_loss() - p.optimal_loss()).abs();
        ensure(gap <= 1e-6, || format!("seed {seed}: final gap {gap:e}"))?;
        worst_gap = worst_gap.max(gap);
        max_a = max_a.max(audit.max_a);
        fired += run.total_fired();
    }
    ensure(fired > 0, || "no alignment fired on any seed".into())?;
    within_budget(start, Duration::from_secs(30))?;
    Ok(format!(
        "10 seeds x 1000 steps, {fired} firings, max a {max_a:.3}, worst final gap {worst_gap:.1e}, {:.2?}",
        start.elapsed()
    ))
}

fn criterion_ema() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut histories = 0;
    for beta in [1e-1, 1e-2, 1e-3] {
        let mut lengths = vec![1, 2, 10, 100, 1000, 10_000];
        lengths.extend((0..10).map(|_| rng.gen_range(1..=10_000)));
        for len in lengths {
            let history: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut store = EmaStore::new(beta).map_err(|e| e.to_string())?;
            let mut plain = 0.0;
            for phi in &history {
                store.update(TaskId(0), TaskId(1), "all", *phi);
                plain = ema_step(plain, *phi, beta);
            }
            let closed = ema_closed_form(&history, beta);
            let got = store.get(TaskId(0), TaskId(1), "all");
            worst = worst.max((got - closed).abs()).max((plain - closed).abs());
            histories += 1;
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("{histories} histories, max deviation {worst:.1e}"))
}

fn family_train(mode: Mode, seed: u64) -> Result<gradvac_core::synthetic::TrainRun, String> {
    let set = build_family_problem(&FamilySpec {
        seed,
        ..FamilySpec::default()
    })
    .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        step_size: 5e-5,
        max_steps: 1000,
        vaccine: VaccineConfig::with_mode(mode),
        ..TrainConfig::default()
    };
    train(&set.problem, &cfg).map_err(|e| e.to_string())
}

fn criterion_activity() -> Outcome {
    let pc = family_train(Mode::Pcgrad, 0)?;
    let min_cos = pc
        .similarities
        .iter()
        .flat_map(|r| r.groups.iter().flat_map(|g| g.values.iter().flatten().copied()))
        .fold(1.0f64, f64::min);
    ensure(min_cos > 0.0, || format!("constructed similarities reach {min_cos}"))?;
    let pc_count = activity_counts(&pc.reports, 10)[0].total();
    ensure(pc_count == 0, || format!("pcgrad fired {pc_count} times"))?;

    let gv = family_train(Mode::Gradvac, 0)?;
    let gv_count = activity_counts(&gv.reports, 10)[0].total();
    let recount = gv
        .reports
        .iter()
        .flat_map(|r| &r.entries)
        .filter(|e| !e.skipped && e.ema_before.is_some_and(|ema| e.observed_phi < ema))
        .count() as u64;
    ensure(gv_count == recount, || format!("gradvac fired {gv_count}, predicate recount {recount}"))?;
    Ok(format!(
        "1000 steps, min raw cosine {min_cos:.3}, pcgrad 0 firings, gradvac {gv_count} firings = recount {recount}"
    ))
}

fn criterion_clustering() -> Outcome {
    let mut margins = Vec::new();
    for seed in 0..10 {
        let set = build_family_problem(&FamilySpec {
            seed,
            ..FamilySpec::default()
        })
        .map_err(|e| e.to_string())?;
        let run = family_train(Mode::Gradvac, seed)?;
        let agg = aggregate_over_steps(&run.similarities, "all", None).map_err(|e| e.to_string())?;
        let score = clustering_score(&agg, &set.families).map_err(|e| e.to_string())?;
        ensure(score.margin > 0.0, || format!("seed {seed}: margin {}", score.margin))?;
        margins.push(format!("{:.3}", score.margin));
    }
    Ok(format!("margins [{}]", margins.join(", ")))
}

fn criterion_ordering() -> Outcome {
    const SLACK: f64 = 1e-9;
    let start = Instant::now();
    let mut lines = Vec::new();
    for seed in 0..10 {
        let p = conflict_benchmark(&ConflictSpec {
            seed,
            ..ConflictSpec::default()
        })
        .map_err(|e| e.to_string())?;
        let mut losses = Vec::new();
        for mode in [Mode::Gradvac, Mode::Pcgrad, Mode::SumBaseline] {
            let cfg = TrainConfig {
                step_size: 0.4,
                max_steps: 100,
                vaccine: VaccineConfig::with_mode(mode),
                record_every: 0,
                ..TrainConfig::default()
            };
            losses.push(train(&p, &cfg).map_err(|e| e.to_string())?.final_loss());
        }
        let (gv, pc, sum) = (losses[0], losses[1], losses[2]);
        ensure(gv <= pc + SLACK && pc <= sum + SLACK, || {
            format!("seed {seed}: gradvac {gv}, pcgrad {pc}, sum {sum}")
        })?;
        lines.push(format!("{gv:.1}/{pc:.1}/{sum:.1}"));
    }
    within_budget(start, Duration::from_secs(120))?;
    Ok(format!("gradvac/pcgrad/sum final losses [{}], {:.2?}", lines.join(", "), start.elapsed()))
}

fn gradvac(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gradvac"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("gradvac {args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn dir_contents(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = fs::read(entry.path()).map_err(|e| e.to_string())?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(files)
}

fn criterion_round_trips() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let config = root.join("experiment.json");
    fs::write(
        &config,
        r#"{"spec_version": 1, "problem": {"kind": "family", "seed": 3},
            "step_size": 5e-5, "steps": 300,
            "vaccine": {"mode": "gradvac", "beta": 0.01},
            "sampler": {"temperature": 5.0, "batch_tasks": 6, "seed": 3}}"#,
    )
    .map_err(|e| e.to_string())?;
    let (a, b) = (root.join("run_a"), root.join("run_b"));
    for dir in [&a, &b] {
        gradvac(&["simulate", "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()])?;
    }
    let (fa, fb) = (dir_contents(&a)?, dir_contents(&b)?);
    ensure(fa == fb, || "simulate outputs differ between identical runs".into())?;

    let text = String::from_utf8(fa["ema.json"].clone()).map_err(|e| e.to_string())?;
    let ema = EmaStore::from_json(&text).map_err(|e| e.to_string())?;
    let again = EmaStore::from_json(&ema.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(ema == again && !ema.is_empty(), || "EMA snapshot does not round-trip".into())?;
    ensure(ema.to_json().map_err(|e| e.to_string())? + "\n" == text, || "EMA snapshot text changed".into())?;

    let dump = root.join("dump.json");
    fs::write(
        &dump,
        r#"{"spec_version": 1, "step": 7,
            "partition": {"groups": [{"name": "enc", "length": 2}, {"name": "dec", "length": 3}]},
            "tasks": [
              {"name": "de", "size": 100, "groups": {"enc": [1.0, 0.5], "dec": [0.0, -1.0, 2.0]}},
              {"name": "fr", "size": 40, "groups": {"enc": [-1.0, 0.25], "dec": [1.0, 1.0, -0.5]}},
              {"name": "hi", "size": 5, "groups": {"enc": [0.3, -2.0], "dec": [-1.0, 0.0, 0.1]}}]}"#,
    )
    .map_err(|e| e.to_string())?;
    let c1 = root.join("combine_1");
    let ema_1 = c1.join("ema.json");
    gradvac(&["combine", dump.to_str().unwrap(), "--out", c1.to_str().unwrap()])?;
    let combined = GradientDumpFile::load(&c1.join("combined.json")).map_err(|e| e.to_string())?;
    ensure(combined.tasks.len() == 1 && combined.bundle.step == 7, || "combined dump malformed".into())?;
    let c2 = root.join("combine_2");
    gradvac(&[
        "combine",
        dump.to_str().unwrap(),
        "--ema-in",
        ema_1.to_str().unwrap(),
        "--out",
        c2.to_str().unwrap(),
    ])?;
    let c3 = root.join("combine_3");
    gradvac(&["combine", c1.join("combined.json").to_str().unwrap(), "--out", c3.to_str().unwrap()])?;
    let first = fs::read(c1.join("combined.json")).map_err(|e| e.to_string())?;
    let third = fs::read(c3.join("combined.json")).map_err(|e| e.to_string())?;
    ensure(first == third, || "single-task combine is not a pass-through".into())?;
    Ok(format!(
        "{} simulate artifacts byte-identical, EMA with {} entries round-trips, dump -> combine -> dump validates",
        fa.len(),
        ema.len()
    ))
}

fn criterion_sampler() -> Outcome {
    let sizes: BTreeMap<TaskId, u64> = [(TaskId(0), 16), (TaskId(1), 1)].into();
    let cfg = SamplerConfig::new(sizes.clone(), 4.0, 9).map_err(|e| e.to_string())?;
    let p = sampling_distribution(&cfg).map_err(|e| e.to_string())?;
    let dev = (p[&TaskId(0)] - 2.0 / 3.0).abs().max((p[&TaskId(1)] - 1.0 / 3.0).abs());
    ensure(dev <= 1e-12, || format!("T=4 deviation {dev:e}"))?;

    let uneven: BTreeMap<TaskId, u64> = [(TaskId(0), 7), (TaskId(1), 300), (TaskId(2), 12_345)].into();
    let total: u64 = uneven.values().sum();
    let prop = sampling_distribution(&SamplerConfig::new(uneven.clone(), 1.0, 0).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let prop_dev = uneven
        .iter()
        .map(|(t, s)| (prop[t] - *s as f64 / total as f64).abs())
        .fold(0.0, f64::max);
    ensure(prop_dev <= 1e-15, || format!("T=1 deviation {prop_dev:e}"))?;

    let mut sampler = TaskSampler::new(&cfg).map_err(|e| e.to_string())?;
    let draws = sampler.sample_minibatch(30_000).map_err(|e| e.to_string())?;
    let freq = draws.iter().filter(|t| **t == TaskId(0)).count() as f64 / draws.len() as f64;
    ensure((freq - 2.0 / 3.0).abs() <= 0.01, || format!("empirical frequency {freq}"))?;
    Ok(format!(
        "T=4 deviation {dev:.1e}, T=1 deviation {prop_dev:.1e}, empirical p(16) = {freq:.4} over 30000 draws"
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("geometric post-conditions", criterion_geometry),
        ("pcgrad as zero-target alignment", criterion_pcgrad_reduction),
        ("descent bound on two quadratics", criterion_descent),
        ("EMA recursion vs closed form", criterion_ema),
        ("surgery activity on positive similarities", criterion_activity),
        ("family clustering margin", criterion_clustering),
        ("method ordering on conflict benchmark", criterion_ordering),
        ("determinism and round-trips", criterion_round_trips),
        ("temperature sampler", criterion_sampler),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

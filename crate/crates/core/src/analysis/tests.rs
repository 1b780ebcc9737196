use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::engine::{GradientBundle, GroupPartition, Granularity, Mode, PairRecord, SurgeryReport, TaskId};
use crate::geometry::Tolerances;

fn bundle(grads: &[&[f64]], partition: &GroupPartition) -> GradientBundle {
    GradientBundle::from_flat(
        0,
        partition,
        grads.iter().enumerate().map(|(i, g)| (TaskId(i as u32), *g)),
    )
    .unwrap()
}

/// Record with a single group holding the given symmetric matrix.
fn record(step: u64, group: &str, m: &[Vec<Option<f64>>]) -> SimilarityRecord {
    let n = m.len();
    SimilarityRecord {
        step,
        tasks: (0..n as u32).map(TaskId).collect(),
        groups: vec![GroupSimilarity {
            group: group.into(),
            values: m.iter().flatten().copied().collect(),
        }],
    }
}

fn uniform(n: usize, off: f64) -> Vec<Vec<Option<f64>>> {
    (0..n)
        .map(|a| (0..n).map(|b| Some(if a == b { 1.0 } else { off })).collect())
        .collect()
}

#[test]
fn record_examples() {
    let p = GroupPartition::whole_model(2).unwrap();
    let tol = Tolerances::default();
    let r = record_similarities(&bundle(&[&[1.0, 2.0], &[1.0, 2.0]], &p), &p, &tol).unwrap();
    assert_abs_diff_eq!(r.get("all", TaskId(0), TaskId(1)).unwrap(), 1.0, epsilon = 1e-15);
    let r = record_similarities(&bundle(&[&[1.0, 0.0], &[0.0, 1.0]], &p), &p, &tol).unwrap();
    assert_eq!(r.get("all", TaskId(0), TaskId(1)), Some(0.0));
    assert_eq!(r.get("all", TaskId(1), TaskId(1)), Some(1.0));
    let r = record_similarities(&bundle(&[&[0.0, 0.0], &[0.0, 1.0]], &p), &p, &tol).unwrap();
    assert_eq!(r.get("all", TaskId(0), TaskId(1)), None);
    assert_eq!(r.get("all", TaskId(0), TaskId(0)), None);
}

#[test]
fn record_matches_brute_force_per_group() {
    let p = GroupPartition::from_lengths(Granularity::EncDec, [("enc", 3), ("dec", 2)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grads: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
    let r = record_similarities(&bundle(&refs, &p), &p, &Tolerances::default()).unwrap();
    for (name, range) in [("enc", 0..3), ("dec", 3..5)] {
        for a in 0..3 {
            for b in 0..3 {
                let x = &grads[a][range.clone()];
                let y = &grads[b][range.clone()];
                let d: f64 = x.iter().zip(y).map(|(u, v)| u * v).sum();
                let nx: f64 = x.iter().map(|u| u * u).sum::<f64>().sqrt();
                let ny: f64 = y.iter().map(|u| u * u).sum::<f64>().sqrt();
                let got = r.get(name, TaskId(a as u32), TaskId(b as u32)).unwrap();
                assert_abs_diff_eq!(got, d / (nx * ny), epsilon = 1e-14);
            }
        }
    }
}

#[test]
fn aggregate_examples() {
    let m = uniform(3, 0.3);
    let recs = vec![record(0, "g", &m), record(1, "g", &m)];
    let agg = aggregate_over_steps(&recs, "g", None).unwrap();
    assert_eq!(agg.means, m.iter().flatten().copied().collect::<Vec<_>>());

    let recs = vec![record(0, "g", &uniform(2, 0.2)), record(1, "g", &uniform(2, 0.6))];
    let agg = aggregate_over_steps(&recs, "g", None).unwrap();
    assert_abs_diff_eq!(agg.get(TaskId(0), TaskId(1)).unwrap(), 0.4, epsilon = 1e-15);
    assert_eq!(agg.counts[1], 2);

    let only_late = aggregate_over_steps(&recs, "g", Some(&(1..=5))).unwrap();
    assert_eq!(only_late.get(TaskId(0), TaskId(1)), Some(0.6));

    assert!(aggregate_over_steps(&[], "g", None).is_err());
    assert!(matches!(
        aggregate_over_steps(&recs, "h", None),
        Err(crate::Error::UnknownGroup(_))
    ));
}

#[test]
fn aggregate_single_record_is_identity_and_missing_stays_missing() {
    let mut m = uniform(3, 0.1);
    m[0][2] = None;
    m[2][0] = None;
    let rec = record(4, "g", &m);
    let agg = aggregate_over_steps(std::slice::from_ref(&rec), "g", None).unwrap();
    assert_eq!(agg.means, rec.groups[0].values);
    assert_eq!(agg.counts[2], 0);
}

#[test]
fn aggregate_matches_summation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 4;
    let recs: Vec<SimilarityRecord> = (0..50)
        .map(|s| {
            let mut m = vec![vec![None; n]; n];
            for a in 0..n {
                for b in a..n {
                    let v = if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(-1.0..1.0)) };
                    m[a][b] = v;
                    m[b][a] = v;
                }
            }
            record(s, "g", &m)
        })
        .collect();
    let agg = aggregate_over_steps(&recs, "g", None).unwrap();
    for a in 0..n {
        for b in 0..n {
            let vals: Vec<f64> = recs.iter().filter_map(|r| r.groups[0].values[a * n + b]).collect();
            let expect = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            match (agg.means[a * n + b], expect) {
                (Some(x), Some(y)) => assert_abs_diff_eq!(x, y, epsilon = 1e-12),
                (x, y) => assert_eq!(x, y),
            }
        }
    }
}

#[test]
fn contrast_examples() {
    let two_groups = |step, a: f64, b: f64| SimilarityRecord {
        step,
        tasks: vec![TaskId(0), TaskId(1)],
        groups: vec![
            GroupSimilarity { group: "enc".into(), values: vec![Some(1.0), Some(a), Some(a), Some(1.0)] },
            GroupSimilarity { group: "dec".into(), values: vec![Some(1.0), Some(b), Some(b), Some(1.0)] },
        ],
    };
    let recs = vec![two_groups(0, 0.5, 0.3), two_groups(1, 0.5, 0.3)];
    let c = group_contrast(&recs, "enc", "dec", None).unwrap();
    assert_abs_diff_eq!(c.values[1].unwrap(), 0.2, epsilon = 1e-15);
    assert_eq!(c.values[0], Some(0.0));
    let same = group_contrast(&recs, "enc", "enc", None).unwrap();
    assert!(same.values.iter().all(|v| *v == Some(0.0)));
    assert!(group_contrast(&recs, "enc", "mid", None).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let recs: Vec<_> = (0..20)
        .map(|s| two_groups(s, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let c = group_contrast(&recs, "enc", "dec", None).unwrap();
    let a = aggregate_over_steps(&recs, "enc", None).unwrap();
    let b = aggregate_over_steps(&recs, "dec", None).unwrap();
    assert_eq!(c.values[1], Some(a.means[1].unwrap() - b.means[1].unwrap()));
}

fn families(assign: &[usize]) -> BTreeMap<TaskId, usize> {
    assign.iter().enumerate().map(|(i, f)| (TaskId(i as u32), *f)).collect()
}

#[test]
fn clustering_examples() {
    let fam = [0, 0, 1, 1];
    let block: Vec<Vec<Option<f64>>> = (0..4)
        .map(|a| (0..4).map(|b| Some(if fam[a] == fam[b] { 1.0 } else { 0.0 })).collect())
        .collect();
    let agg = aggregate_over_steps(&[record(0, "g", &block)], "g", None).unwrap();
    let s = clustering_score(&agg, &families(&fam)).unwrap();
    assert_eq!((s.within_mean, s.cross_mean, s.margin), (1.0, 0.0, 1.0));

    let agg = aggregate_over_steps(&[record(0, "g", &uniform(4, 0.3))], "g", None).unwrap();
    assert_abs_diff_eq!(clustering_score(&agg, &families(&fam)).unwrap().margin, 0.0, epsilon = 1e-15);

    assert!(clustering_score(&agg, &families(&[0, 1, 2, 3])).is_err());
    assert!(clustering_score(&agg, &families(&[0, 0, 1])).is_err());
}

fn report(step: u64, mode: Mode, fired: u64) -> SurgeryReport {
    SurgeryReport {
        step,
        mode,
        entries: (0..fired)
            .map(|_| PairRecord {
                i: TaskId(0),
                j: TaskId(1),
                group: "all".into(),
                observed_phi: -0.5,
                ema_before: None,
                target: 0.0,
                fired: true,
                skipped: false,
            })
            .collect(),
        fired_total: fired,
        eligible_total: fired,
        skipped_total: 0,
        clamped_targets: 0,
    }
}

#[test]
fn activity_examples() {
    let none: Vec<_> = (0..5).map(|s| report(s, Mode::Pcgrad, 0)).collect();
    let a = activity_counts(&none, 2);
    assert_eq!(a.len(), 1);
    assert!(a[0].fired.iter().all(|f| *f == 0));
    assert!(a[0].windowed.iter().all(|f| *f == 0));

    let ones: Vec<_> = (0..25).map(|s| report(s, Mode::Gradvac, 1)).collect();
    let a = activity_counts(&ones, 10);
    assert_eq!(a[0].windowed.len(), 16);
    assert!(a[0].windowed.iter().all(|f| *f == 10));
    assert_eq!(a[0].total(), 25);

    let mut mixed = none.clone();
    mixed.extend(ones);
    let a = activity_counts(&mixed, 0);
    assert_eq!(a.len(), 2);
    assert_eq!(a[1].mode, Mode::Gradvac);
    assert_eq!(a[1].windowed, a[1].fired);
}

proptest! {
    #[test]
    fn clustering_invariant_under_relabel_and_reorder(
        seed in any::<u64>(),
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let fam = [0usize, 0, 1, 1, 2, 2];
        let mut m = vec![vec![Some(1.0); n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let v = Some(rng.gen_range(-1.0..1.0));
                m[a][b] = v;
                m[b][a] = v;
            }
        }
        let agg = aggregate_over_steps(&[record(0, "g", &m)], "g", None).unwrap();
        let base = clustering_score(&agg, &families(&fam)).unwrap();

        // relabel families
        let relabel: Vec<usize> = fam.iter().map(|f| [7, 3, 5][*f]).collect();
        let s = clustering_score(&agg, &families(&relabel)).unwrap();
        prop_assert!((s.margin - base.margin).abs() < 1e-12);

        // reorder tasks: task p in the new order is old task perm[p]
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let pm: Vec<Vec<Option<f64>>> = (0..n).map(|a| (0..n).map(|b| m[perm[a]][perm[b]]).collect()).collect();
        let pfam: Vec<usize> = perm.iter().map(|p| fam[*p]).collect();
        let agg = aggregate_over_steps(&[record(0, "g", &pm)], "g", None).unwrap();
        let s = clustering_score(&agg, &families(&pfam)).unwrap();
        prop_assert!((s.margin - base.margin).abs() < 1e-12);
    }
}

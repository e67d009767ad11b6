mod common;

use std::collections::BTreeSet;

use common::concordance_auc;
use mrsdistill::analyze::{crosstab, kmeans};
use mrsdistill::augment::{augment_set, AugmentConfig, Strategy as Mix};
use mrsdistill::distill::{certain_from_probs, CertainSet};
use mrsdistill::eval::{auc, auc_from_scores, roc_curve};
use mrsdistill::rng;
use mrsdistill::spectra::{
    oversample_minority, read_dataset, split_leave_subjects_out, write_dataset, Class, Dataset, Spectrum,
};
use proptest::prelude::*;

fn class_of(b: bool) -> Class {
    if b {
        Class::Tumor
    } else {
        Class::Healthy
    }
}

fn spectra_strategy(max: usize) -> impl Strategy<Value = Vec<(Vec<f64>, bool, u8)>> {
    prop::collection::vec(
        (prop::collection::vec(-5.0f64..5.0, 288), any::<bool>(), 0u8..8),
        2..max,
    )
}

fn to_dataset(rows: &[(Vec<f64>, bool, u8)]) -> Dataset {
    let spectra = rows
        .iter()
        .map(|(v, t, p)| Spectrum::new(v.clone(), format!("P{p}"), class_of(*t)))
        .collect();
    Dataset::new("prop", spectra).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition_patients(rows in spectra_strategy(40), seed in any::<u64>()) {
        let ds = to_dataset(&rows);
        let n_pat = ds.patients().len();
        for k in 2..=n_pat {
            let folds = split_leave_subjects_out(&ds, k, &mut rng::seeded(seed)).unwrap();
            let mut seen = vec![0usize; ds.len()];
            let mut all_patients = BTreeSet::new();
            let sizes: Vec<usize> = folds.iter().map(|f| f.test_patients.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in &folds {
                let test: BTreeSet<&str> = f.test.iter().map(|&i| ds.spectra[i].patient_id.as_str()).collect();
                for &i in &f.train {
                    prop_assert!(!test.contains(ds.spectra[i].patient_id.as_str()));
                }
                prop_assert_eq!(f.train.len() + f.test.len(), ds.len());
                for &i in &f.test {
                    seen[i] += 1;
                }
                for p in &f.test_patients {
                    prop_assert!(all_patients.insert(p.clone()), "patient in two test folds");
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            prop_assert_eq!(all_patients.len(), n_pat);
        }
    }

    #[test]
    fn smote_balances_with_convex_points(rows in spectra_strategy(30), seed in any::<u64>()) {
        let ds = to_dataset(&rows);
        prop_assume!(ds.has_both_classes());
        let out = oversample_minority(&ds, &mut rng::seeded(seed)).unwrap();
        let c = out.class_counts();
        prop_assert_eq!(c[0], c[1]);
        prop_assert_eq!(&out.spectra[..ds.len()], &ds.spectra[..]);
        let minority = out.spectra[ds.len()..].first().map(|s| s.label);
        let members: Vec<&Spectrum> = ds.spectra.iter().filter(|s| Some(s.label) == minority).collect();
        for s in &out.spectra[ds.len()..] {
            prop_assert!(s.synthetic && s.true_label.is_none());
            // some pair (a, b) of real minority points with s = a + g (b - a), g in [0, 1]
            let found = members.iter().any(|a| {
                members.iter().any(|b| {
                    if members.len() == 1 {
                        return a.values == s.values;
                    }
                    let (num, den) = a.values.iter().zip(&b.values).zip(&s.values)
                        .fold((0.0, 0.0), |(n, d), ((x, y), z)| (n + (z - x) * (y - x), d + (y - x) * (y - x)));
                    if den == 0.0 {
                        return false;
                    }
                    let g = num / den;
                    (-1e-12..=1.0 + 1e-12).contains(&g)
                        && a.values.iter().zip(&b.values).zip(&s.values)
                            .all(|((x, y), z)| (x + g * (y - x) - z).abs() < 1e-9)
                })
            });
            prop_assert!(found);
        }
    }

    #[test]
    fn auc_matches_concordance(
        scores in prop::collection::vec(0u8..12, 2..50),
        labels in prop::collection::vec(any::<bool>(), 50),
    ) {
        let labels: Vec<Class> = labels[..scores.len()].iter().map(|&b| class_of(b)).collect();
        prop_assume!(labels.contains(&Class::Tumor) && labels.contains(&Class::Healthy));
        let s: Vec<f64> = scores.iter().map(|&v| v as f64 / 10.0).collect();
        let roc = roc_curve(&s, &labels).unwrap();
        prop_assert_eq!(roc[0], (0.0, 0.0));
        prop_assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
        prop_assert!(roc.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        let a = auc(&roc);
        prop_assert!((a - concordance_auc(&s, &labels)).abs() < 1e-12);
        // strictly increasing transform
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp()).collect();
        prop_assert!((auc_from_scores(&t, &labels).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn auc_label_flip_complements(perm in Just((0..30).collect::<Vec<usize>>()).prop_shuffle(),
                                  labels in prop::collection::vec(any::<bool>(), 30)) {
        let labels: Vec<Class> = labels.iter().map(|&b| class_of(b)).collect();
        prop_assume!(labels.contains(&Class::Tumor) && labels.contains(&Class::Healthy));
        let s: Vec<f64> = perm.iter().map(|&p| p as f64).collect();
        let flipped: Vec<Class> = labels.iter().map(|c| c.opposite()).collect();
        let sum = auc_from_scores(&s, &labels).unwrap() + auc_from_scores(&s, &flipped).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn augmentation_invariants(
        rows in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 288), any::<bool>()), 4..12),
        alpha in 0.05f64..1.0,
        factor in 0usize..4,
        strat in prop::sample::select(vec![Mix::Same, Mix::Other, Mix::Both]),
        seed in any::<u64>(),
    ) {
        let certain: Vec<Spectrum> = rows.iter().enumerate()
            .map(|(i, (v, t))| Spectrum::new(v.clone(), format!("P{i}"), class_of(*t)))
            .collect();
        let cfg = AugmentConfig { strategy: strat, alpha, factor, noise_sigma: None, seed };
        let counts = [0, 1].map(|k| certain.iter().filter(|s| s.label.index() == k).count());
        let res = augment_set(&certain, &cfg);
        let feasible = factor == 0 || match strat {
            Mix::Same => counts.iter().all(|&c| c != 1),
            Mix::Other => counts.iter().all(|&c| c > 0),
            _ => true,
        };
        prop_assert_eq!(res.is_ok(), feasible);
        let Ok(aug) = res else { return Ok(()); };
        prop_assert_eq!(aug.samples.len(), factor * certain.len());
        let mut expected: Vec<Class> = (0..factor).flat_map(|_| certain.iter().map(|s| s.label)).collect();
        let mut got: Vec<Class> = aug.samples.iter().map(|s| s.label).collect();
        expected.sort();
        got.sort();
        prop_assert_eq!(expected, got);
        for (s, p) in aug.samples.iter().zip(&aug.provenance) {
            let t = &certain[p.target];
            let q = &certain[p.partner.unwrap()];
            prop_assert_ne!(p.target, p.partner.unwrap());
            for ((m, a), b) in s.values.iter().zip(&t.values).zip(&q.values) {
                prop_assert!(*m >= a.min(*b) - 1e-12 && *m <= a.max(*b) + 1e-12);
            }
            // solve the mixing equation for the partner and find it in the pool
            let rec: Vec<f64> = s.values.iter().zip(&t.values).map(|(m, a)| (m - (1.0 - alpha) * a) / alpha).collect();
            let hit = certain.iter().position(|c| c.values.iter().zip(&rec).all(|(x, y)| (x - y).abs() < 1e-6));
            prop_assert!(hit.is_some());
            let partner_label = certain[hit.unwrap()].label;
            match strat {
                Mix::Same => prop_assert_eq!(partner_label, t.label),
                Mix::Other => prop_assert_ne!(partner_label, t.label),
                _ => {}
            }
        }
        prop_assert_eq!(augment_set(&certain, &cfg).unwrap(), aug);
    }

    #[test]
    fn crosstab_columns_sum_to_100(assign in prop::collection::vec(0usize..5, 1..60), seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let labels: Vec<Class> = assign.iter().map(|_| class_of(rand::Rng::random_bool(&mut r, 0.5))).collect();
        let t = crosstab(&assign, &labels, 5).unwrap();
        for class in 0..2 {
            let col: Vec<Option<f64>> = t.percent.iter().map(|row| row[class]).collect();
            if labels.iter().any(|l| l.index() == class) {
                let s: f64 = col.iter().map(|v| v.unwrap()).sum();
                prop_assert!((s - 100.0).abs() < 1e-9);
            } else {
                prop_assert!(col.iter().all(Option::is_none));
            }
        }
    }

    #[test]
    fn certainty_threshold_monotone(
        p in prop::collection::vec(0.0f64..=1.0, 1..80),
        t1 in 0.5f64..=1.0,
        t2 in 0.5f64..=1.0,
    ) {
        let probs: Vec<[f64; 2]> = p.iter().map(|&x| [1.0 - x, x]).collect();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a: BTreeSet<usize> = certain_from_probs(&probs, lo).into_iter().collect();
        let b: BTreeSet<usize> = certain_from_probs(&probs, hi).into_iter().collect();
        prop_assert!(b.is_subset(&a));
        for (i, q) in probs.iter().enumerate() {
            prop_assert_eq!(a.contains(&i), q[0].max(q[1]) >= lo);
        }
    }

    #[test]
    fn certain_union_is_cumulative(epochs in prop::collection::vec(prop::collection::vec(0usize..50, 0..20), 1..8)) {
        let set = CertainSet::from_epochs(&epochs);
        let union: BTreeSet<usize> = epochs.iter().flatten().copied().collect();
        prop_assert_eq!(set.member_indices.clone(), union.into_iter().collect::<Vec<_>>());
        prop_assert!(set.cumulative_counts.windows(2).all(|w| w[0] <= w[1]));
        for e in 1..=epochs.len() {
            let u: BTreeSet<usize> = epochs[..e].iter().flatten().copied().collect();
            prop_assert_eq!(set.truncated(e).member_indices, u.into_iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn kmeans_inertia_is_consistent(pts in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 3..25),
                                    k in 1usize..4, seed in any::<u64>()) {
        let Ok(r) = kmeans(&pts, k, seed, 100, 0.0) else { return Ok(()); };
        prop_assert!(r.assignments.iter().all(|&a| a < k));
        let recomputed: f64 = pts.iter().zip(&r.assignments)
            .map(|(p, &a)| p.iter().zip(&r.centroids[a]).map(|(x, c)| (x - c) * (x - c)).sum::<f64>())
            .sum();
        prop_assert!((recomputed - r.inertia).abs() < 1e-9 * r.inertia.max(1.0));
        prop_assert_eq!(kmeans(&pts, k, seed, 100, 0.0).unwrap(), r);
    }

    #[test]
    fn csv_roundtrip(rows in spectra_strategy(10), truth in any::<bool>()) {
        let mut ds = to_dataset(&rows);
        if truth {
            for s in &mut ds.spectra { s.true_label = Some(s.label.opposite()); }
        }
        ds.spectra[0].synthetic = true;
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), "prop").unwrap();
        prop_assert_eq!(back, ds);
    }
}

use proptest::prelude::*;
use rocmi_core::mi::{
    adaptive_round, impute, impute_logreg, impute_pmm, ImputationSpec, OmegaScope, StudyDataset, Technique,
};
use rocmi_core::rng::stream;
use rocmi_core::roc::{placements, placements_reference, AucStatistics, ConfidenceInterval};
use rocmi_core::study::{evaluate, AnalysisArm, ReplicateResult, ScenarioKey};
use rocmi_core::{auc_hat, GroupedScores, VarianceMethod};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(1000)
}

// Small integer scores so ties are common.
fn tied_scores() -> impl Strategy<Value = GroupedScores> {
    (
        prop::collection::vec(0i32..8, 1..25),
        prop::collection::vec(0i32..8, 1..25),
    )
        .prop_map(|(x, y)| {
            GroupedScores::new(
                x.into_iter().map(f64::from).collect(),
                y.into_iter().map(f64::from).collect(),
            )
            .unwrap()
        })
}

fn mixed_scores() -> impl Strategy<Value = GroupedScores> {
    prop_oneof![
        tied_scores(),
        (
            prop::collection::vec(-50.0f64..50.0, 1..40),
            prop::collection::vec(-50.0f64..50.0, 1..40),
        )
            .prop_map(|(x, y)| GroupedScores::new(x, y).unwrap()),
    ]
}

/// A simulation-shaped dataset: complete T, binary D with gaps, two covariates.
fn incomplete_dataset() -> impl Strategy<Value = StudyDataset> {
    (12usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(prop::bool::weighted(0.4), n),
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(-2.0f64..2.0, n),
        )
            .prop_filter_map("need both classes observed", |(t, d, missing, z1, z2)| {
                let mut d = d;
                let mut missing = missing;
                // Pin two observed rows, one per class, so every fit is possible.
                d[0] = false;
                d[1] = true;
                missing[0] = false;
                missing[1] = false;
                let t: Vec<f64> = t
                    .iter()
                    .zip(&d)
                    .map(|(v, &di)| v + if di { 1.0 } else { 0.0 })
                    .collect();
                StudyDataset::from_simulation(&t, &d, &missing, &[z1, z2]).ok()
            })
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn swap_symmetry(s in mixed_scores()) {
        prop_assert_eq!(auc_hat(&s) + auc_hat(&s.swapped()), 1.0);
    }

    #[test]
    fn rank_invariance(s in tied_scores()) {
        // v ↦ v³ + 7v is strictly increasing and exact on small integers.
        let f = |v: &f64| v * v * v + 7.0 * v;
        let t = GroupedScores::new(s.x().iter().map(f).collect(), s.y().iter().map(f).collect()).unwrap();
        let a = AucStatistics::new(&s);
        let b = AucStatistics::new(&t);
        prop_assert_eq!(a.theta(), b.theta());
        for m in [VarianceMethod::Bamber, VarianceMethod::HanleyMcNeil1, VarianceMethod::DeLong] {
            prop_assert_eq!(a.variance(m).ok(), b.variance(m).ok());
        }
    }

    #[test]
    fn sorted_placements_match_reference(s in mixed_scores()) {
        let fast = placements(&s);
        let slow = placements_reference(&s);
        prop_assert_eq!(fast.v_row(), slow.v_row());
        prop_assert_eq!(fast.v_col(), slow.v_col());
        prop_assert_eq!(fast.tied_pairs(), slow.tied_pairs());
    }

    #[test]
    fn coverage_partition(
        theta in 0.5f64..1.0,
        cis in prop::collection::vec((0.0f64..1.0, 0.0f64..0.5), 1..80),
    ) {
        let key = ScenarioKey { scenario_id: 1, theta, phi: 0.5, rho: 0.7, n: 50 };
        let results: Vec<ReplicateResult> = cis
            .iter()
            .enumerate()
            .map(|(r, &(point, half))| ReplicateResult {
                scenario_id: 1,
                replicate: r as u64,
                arm: AnalysisArm::Complete,
                method: VarianceMethod::DeLong,
                point,
                raw_variance: half * half,
                ci: Some(ConfidenceInterval {
                    point,
                    variance: half * half,
                    lower: point - half,
                    upper: point + half,
                    level: 0.95,
                    df: f64::INFINITY,
                }),
                failure_reason: None,
            })
            .collect();
        let s = &evaluate(&results, &[key])[0];
        prop_assert!((s.cp + s.lncp + s.rncp - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pmm_imputes_observed_values(data in incomplete_dataset(), seed in any::<u64>()) {
        let d = data.disease();
        let preds = [data.biomarker().values(), data.column(2).values()];
        let out = impute_pmm(d.values(), d.observed(), &preds, 5, &mut stream(seed, &[])).unwrap();
        let donors: Vec<f64> = d.observed_values().collect();
        for (i, v) in out.iter().enumerate() {
            if !d.observed()[i] {
                prop_assert!(donors.contains(v));
            }
        }
    }

    #[test]
    fn binary_imputations_stay_binary(data in incomplete_dataset(), seed in any::<u64>()) {
        let d = data.disease();
        let preds = [data.biomarker().values(), data.column(2).values(), data.column(3).values()];
        let lr = impute_logreg(d.values(), d.observed(), &preds, &mut stream(seed, &[])).unwrap();
        prop_assert!(lr.iter().all(|&v| v == 0.0 || v == 1.0));

        // Continuous draws in and around [0, 1], as a normal model produces.
        let mut rng = stream(seed, &[1]);
        let raw: Vec<f64> = d
            .values()
            .iter()
            .zip(d.observed())
            .map(|(&v, &o)| if o { v } else { rand::Rng::random_range(&mut rng, -0.5..1.5) })
            .collect();
        for scope in [OmegaScope::AllEntries, OmegaScope::ImputedOnly] {
            let r = adaptive_round(&raw, d.observed(), scope);
            prop_assert!(r.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn observed_entries_preserved(data in incomplete_dataset(), seed in any::<u64>(), tech in 0usize..3) {
        let mut spec = ImputationSpec::new(Technique::ALL[tech], seed);
        spec.m = 2;
        spec.iterations = 2;
        spec.burn_in = 5;
        for completed in impute(&data, &spec).unwrap() {
            prop_assert!(completed.is_complete());
            for (orig, filled) in data.columns().iter().zip(completed.columns()) {
                for i in 0..orig.len() {
                    if orig.observed()[i] {
                        prop_assert_eq!(orig.values()[i], filled.values()[i]);
                    } else if orig.kind == rocmi_core::mi::ColumnKind::Binary {
                        prop_assert!(filled.values()[i] == 0.0 || filled.values()[i] == 1.0);
                    }
                }
            }
        }
    }
}

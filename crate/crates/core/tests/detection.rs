mod common;

use std::collections::BTreeSet;

use afm_doctor::detector::{detect, detect_naive, expand_aftereffects, AnomalyKind, DetectOptions};
use afm_doctor::{fixtures, parser, reduce};

use common::{brute_force, small_model};

fn kinds(m: &afm_doctor::FeatureModel) -> (BTreeSet<AnomalyKind>, BTreeSet<AnomalyKind>) {
    let opts = DetectOptions::default();
    let naive = detect_naive(m, &opts).kinds();
    let fast = expand_aftereffects(m, &detect(m, &opts)).kinds();
    (naive, fast)
}

#[test]
fn robot_matches_enumeration() {
    let m = parser::parse(fixtures::ROBOT).unwrap();
    let oracle = brute_force(&m);
    assert_eq!(oracle, BTreeSet::from([AnomalyKind::dead_value("Motor", "pwr", 10)]));
    let (naive, fast) = kinds(&m);
    assert_eq!(naive, oracle);
    assert_eq!(fast, oracle);
}

#[test]
fn robot_without_glue_matches_enumeration() {
    let m = parser::parse(fixtures::ROBOT_NO_GLUE).unwrap();
    let oracle = brute_force(&m);
    assert!(oracle.contains(&AnomalyKind::FalseOptionalFeature { feature: "Protective_grid".into() }));
    assert!(oracle.contains(&AnomalyKind::dead_value("Motor", "pwr", 20)));
    let (naive, fast) = kinds(&m);
    assert_eq!(naive, oracle);
    assert_eq!(fast, oracle);
}

#[test]
fn modular_robot_matches_enumeration() {
    let m = parser::parse(fixtures::ROBOT_MODULAR).unwrap();
    let (naive, fast) = kinds(&m);
    assert_eq!(naive, brute_force(&m));
    assert_eq!(fast, naive);
}

#[test]
fn random_models_agree_with_enumeration() {
    for seed in 0..120 {
        let m = small_model(seed);
        let oracle = brute_force(&m);
        let (naive, fast) = kinds(&m);
        assert_eq!(naive, oracle, "naive, seed {seed}\n{}", parser::serialize(&m));
        assert_eq!(fast, oracle, "detect, seed {seed}\n{}", parser::serialize(&m));
    }
}

#[test]
fn reduced_verdicts_survive() {
    for seed in 0..120 {
        let m = small_model(seed);
        let r = reduce::reduce(&m);
        let full = brute_force(&m);
        let kept: BTreeSet<AnomalyKind> = full
            .into_iter()
            .filter(|k| match k {
                AnomalyKind::VoidModel => true,
                AnomalyKind::DeadFeature { feature } | AnomalyKind::FalseOptionalFeature { feature } => {
                    r.find(feature).is_some()
                }
                AnomalyKind::DeadAttributeValue { feature, attr, .. }
                | AnomalyKind::FalseOptionalAttributeValue { feature, attr, .. } => {
                    r.find(feature).is_some_and(|f| r.feature(f).attribute(attr).is_some())
                }
            })
            .collect();
        assert_eq!(brute_force(&r), kept, "seed {seed}\n{}", parser::serialize(&m));
    }
}

#[test]
fn check_sets_partition_variation_points() {
    for seed in 0..120 {
        let m = small_model(seed);
        let report = detect(&m, &DetectOptions::default());
        let Some(sets) = &report.initial_sets else {
            assert!(report.is_void());
            continue;
        };
        let r = reduce::reduce(&m);
        for f in r.variation_points() {
            let name = r.name(f).to_string();
            let a = sets.check_dead.contains(&name);
            let b = sets.check_false_opt.contains(&name);
            assert!(a ^ b, "seed {seed}: {name}");
        }
        let naive = detect_naive(&m, &DetectOptions::default());
        assert!(report.checks_performed <= naive.checks_performed, "seed {seed}");
    }
}

#[test]
fn single_thread_matches_parallel() {
    let m = small_model(11);
    let one = detect_naive(&m, &DetectOptions { threads: Some(1), ..Default::default() });
    let many = detect_naive(&m, &DetectOptions { threads: Some(4), ..Default::default() });
    assert_eq!(one.kinds(), many.kinds());
    assert_eq!(one.checks_performed, many.checks_performed);
}

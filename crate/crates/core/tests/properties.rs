mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use afm_doctor::compiler::{compile, Csp, VarId, VarKind};
use afm_doctor::detector::{detect, detect_naive, expand_aftereffects, DetectOptions};
use afm_doctor::generate::{generate, CtcMode, GeneratorSpec};
use afm_doctor::quickxplain::{check_bound, quickxplain};
use afm_doctor::solver::{propagate, solve, LabelingOptions};
use afm_doctor::{parser, reduce, FeatureModel};

use common::{small_model, tree_products, Product};

fn assignment(csp: &Csp, p: &Product) -> Vec<i64> {
    csp.vars
        .iter()
        .map(|v| match &v.kind {
            VarKind::Feature(f) => p.present[f.0] as i64,
            VarKind::Attribute { feature, attr } => p.value(*feature, attr).unwrap_or(csp.nil),
        })
        .collect()
}

fn satisfies(csp: &Csp, values: &[i64]) -> bool {
    let value = |v: VarId| values[v.0];
    csp.constraints.iter().all(|c| c.form.holds(&value, csp.nil))
}

fn medium_spec() -> impl Strategy<Value = GeneratorSpec> {
    (1usize..40, 0usize..20, 0usize..4, 0usize..8, 0usize..4, any::<u64>(), any::<bool>()).prop_map(
        |(features, attributes, groups, ctcs, modules, seed, random)| GeneratorSpec {
            features,
            attributes,
            alternative_groups: groups,
            ctcs,
            modules,
            seed,
            mode: if random { CtcMode::Random } else { CtcMode::Safe },
            ..Default::default()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compiled_csp_agrees_with_model_semantics(seed in 0u64..10_000) {
        let m = small_model(seed);
        let csp = compile(&m);
        for p in tree_products(&m).iter().take(400) {
            let model_ok = m.constraints.iter().all(|c| common::eval(&m, p, &c.expr));
            prop_assert_eq!(satisfies(&csp, &assignment(&csp, p)), model_ok);
        }
    }

    #[test]
    fn propagation_keeps_every_product(seed in 0u64..10_000) {
        let m = small_model(seed);
        let csp = compile(&m);
        let initial: Vec<_> = csp.vars.iter().map(|v| v.domain.clone()).collect();
        let products = common::products(&m);
        match propagate(&csp, &initial) {
            None => prop_assert!(products.is_empty()),
            Some(domains) => {
                for p in &products {
                    for (d, v) in domains.iter().zip(assignment(&csp, p)) {
                        prop_assert!(d.contains(v));
                    }
                }
            }
        }
    }

    #[test]
    fn solutions_satisfy_every_constraint(seed in 0u64..10_000) {
        let m = small_model(seed);
        let csp = compile(&m);
        let (sol, _) = solve(&csp, &LabelingOptions::default());
        match sol {
            Some(s) => prop_assert!(satisfies(&csp, &s.values)),
            None => prop_assert!(common::products(&m).is_empty()),
        }
    }

    #[test]
    fn detect_agrees_with_naive(seed in 0u64..10_000) {
        let m = small_model(seed);
        let opts = DetectOptions::default();
        let naive = detect_naive(&m, &opts);
        let fast = detect(&m, &opts);
        prop_assert_eq!(expand_aftereffects(&m, &fast).kinds(), naive.kinds());
        prop_assert!(fast.checks_performed <= naive.checks_performed);
    }

    #[test]
    fn reduce_is_idempotent(seed in 0u64..10_000) {
        let m = small_model(seed);
        let once = reduce::reduce(&m);
        prop_assert_eq!(reduce::reduce(&once), once);
    }

    #[test]
    fn generated_models_round_trip(spec in medium_spec()) {
        let (m, _) = generate(&spec);
        prop_assert!(m.validate().is_empty());
        let text = parser::serialize(&m);
        let back: FeatureModel = parser::parse(&text).unwrap();
        prop_assert_eq!(back.without_spans(), m.without_spans());
        prop_assert_eq!(parser::serialize(&back), text);
        prop_assert_eq!(generate(&spec).0, m);
    }

    #[test]
    fn quickxplain_is_minimal_and_bounded(
        n in 1usize..60,
        planted in prop::collection::vec(prop::collection::btree_set(0usize..60, 1..=6), 1..4),
        background in prop::collection::btree_set(0usize..60, 0..4),
    ) {
        // consistent iff no planted set lies inside
        let planted: Vec<BTreeSet<usize>> =
            planted.into_iter().map(|s| s.into_iter().map(|x| x % n).collect()).collect();
        let bg: Vec<usize> = background.into_iter().map(|x| x % n).collect::<BTreeSet<_>>().into_iter().collect();
        let candidates: Vec<usize> = (0..n).filter(|x| !bg.contains(x)).collect();
        let consistent = |s: &[usize]| {
            let s: BTreeSet<usize> = s.iter().copied().collect();
            !planted.iter().any(|p| p.is_subset(&s))
        };
        let (res, stats) = quickxplain(&bg, &candidates, consistent);
        let conflict = res.expect("some planted set is always inside the full set");
        prop_assert!(stats.checks <= stats.bound(), "{:?}", stats);
        prop_assert!(stats.checks <= check_bound(stats.n, stats.k), "{:?}", stats);
        let with_bg = |c: &[usize]| bg.iter().chain(c).copied().collect::<Vec<_>>();
        prop_assert!(!consistent(&with_bg(&conflict)));
        for i in 0..conflict.len() {
            let mut rest = conflict.clone();
            rest.remove(i);
            prop_assert!(consistent(&with_bg(&rest)));
        }
    }
}

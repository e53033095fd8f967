use std::collections::BTreeSet;

use proptest::prelude::*;
use wgtune::bench::*;
use wgtune::simoracle::{collect, OracleConfig};
use wgtune::synthgen::fixture_scenarios;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kfold_tests_every_id_once(n in 2usize..60, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let splits = partition_kfold(&ids, k, seed).unwrap();
        prop_assert_eq!(splits.len(), k);
        let mut tested = Vec::new();
        for s in &splits {
            let train: BTreeSet<_> = s.train.iter().collect();
            prop_assert!(s.test.iter().all(|t| !train.contains(t)));
            prop_assert_eq!(s.train.len() + s.test.len(), n);
            prop_assert!(!s.test.is_empty());
            tested.extend(s.test.iter().cloned());
        }
        tested.sort();
        let mut all = ids.clone();
        all.sort();
        prop_assert_eq!(tested, all);
    }
}

#[test]
fn leave_one_out_holds_out_one_value() {
    let f = fixture_scenarios(20, 6, 2).unwrap();
    for dim in [Dimension::Device, Dimension::Kernel, Dimension::Dataset] {
        let key = |id: &str| {
            let s = f.iter().find(|s| s.id == id).unwrap();
            match dim {
                Dimension::Device => s.device.id.clone(),
                Dimension::Kernel => s.kernel.name.clone(),
                Dimension::Dataset => s.dataset.key(),
            }
        };
        let splits = partition_leave_one_out(&f, dim).unwrap();
        let values: BTreeSet<String> = f.iter().map(|s| key(&s.id)).collect();
        assert_eq!(splits.len(), values.len());
        for s in &splits {
            let held: BTreeSet<String> = s.test.iter().map(|id| key(id)).collect();
            assert_eq!(held.len(), 1);
            assert!(s.train.iter().all(|id| !held.contains(&key(id))));
            assert_eq!(s.train.len() + s.test.len(), f.len());
        }
    }
}

#[test]
fn evaluation_metric_identities() {
    let f = fixture_scenarios(14, 4, 5).unwrap();
    let cfg = OracleConfig {
        min_samples: 5,
        ..OracleConfig::default()
    };
    let corpus = Corpus::from_collection(f.clone(), collect(&f, &cfg).unwrap());
    let ids: Vec<String> = corpus.scenarios.keys().cloned().collect();
    let splits = partition_kfold(&ids, 3, 1).unwrap();
    let eval = EvalConfig::default();

    let mut techniques = Technique::autotuners();
    techniques.extend([Technique::Oracle, Technique::Baseline]);
    for t in techniques {
        let rows = evaluate_splits(t, &splits, &corpus, &eval).unwrap();
        assert_eq!(rows.len(), ids.len());
        for r in &rows {
            assert!(r.performance > 0.0 && r.performance <= 1.0, "{r:?}");
            if r.accuracy == 1 {
                assert_eq!(r.performance, 1.0, "{r:?}");
            }
            assert!(r.speedup > 0.0);
            let w = r.wgsize.unwrap();
            let ctx = corpus.context(&r.scenario_id).unwrap();
            assert!(ctx.is_legal(w), "{t} chose illegal {w} for {}", r.scenario_id);
        }
        match t {
            Technique::Oracle => assert!(rows.iter().all(|r| r.accuracy == 1)),
            Technique::Baseline => assert!(rows.iter().all(|r| r.speedup == 1.0)),
            _ => {}
        }
    }
}

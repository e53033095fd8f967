use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use wgtune::features::FeatureSchema;
use wgtune::learn::TargetMode;
use wgtune::space::{enumerate_space, ConstraintContext};
use wgtune::tuner::*;
use wgtune::{FeatureVector, Result, WorkgroupSize};

struct Fixed(WorkgroupSize);

impl LabelPredictor for Fixed {
    fn predict_label(&self, _: &FeatureVector) -> Result<WorkgroupSize> {
        Ok(self.0)
    }
}

/// Predicts runtime as a fixed pseudo-random function of the size.
struct Hashy(u64);

impl ValuePredictor for Hashy {
    fn target_mode(&self) -> TargetMode {
        TargetMode::Runtime
    }

    fn predict_values(&self, _: &FeatureVector, ws: &[WorkgroupSize]) -> Result<Vec<f64>> {
        Ok(ws
            .iter()
            .map(|w| {
                let h = (u64::from(w.cols) * 2654435761 + u64::from(w.rows) * 40503) ^ self.0;
                1.0 + (h % 1000) as f64
            })
            .collect())
    }
}

fn empty_features() -> FeatureVector {
    FeatureVector::new(Arc::new(FeatureSchema::new("none", vec![])), vec![]).unwrap()
}

/// A target that refuses `hidden` and anything above `max`.
fn target(max: u32, hidden: &BTreeSet<WorkgroupSize>) -> impl FnMut(WorkgroupSize) -> ProbeOutcome + '_ {
    move |w| {
        if w.area() > u64::from(max) {
            ProbeOutcome::Oversized
        } else if hidden.contains(&w) {
            ProbeOutcome::Refused
        } else {
            ProbeOutcome::Legal
        }
    }
}

fn strategies() -> Vec<FallbackStrategy> {
    vec![
        FallbackStrategy::Baseline {
            ranked: vec![WorkgroupSize::new(4, 4), WorkgroupSize::new(2, 2)],
        },
        FallbackStrategy::Random { seed: 9 },
        FallbackStrategy::NearestNeighbour,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn tuners_return_legal_sizes(
        max in 16u32..400,
        (pc, pr) in (1u32..40, 1u32..40),
        known in prop::collection::btree_set((1u32..16, 1u32..16), 0..8),
        hidden in prop::collection::btree_set((1u32..16, 1u32..16), 0..12),
        salt in any::<u64>(),
    ) {
        let fits = |&(c, r): &(u32, u32)| c * r * 4 <= max && (c, r) != (1, 1);
        let known: Vec<WorkgroupSize> = known.iter().filter(|x| fits(x)).map(|&(c, r)| WorkgroupSize::new(2 * c, 2 * r)).collect();
        let hidden: BTreeSet<WorkgroupSize> = hidden.iter().filter(|x| fits(x)).map(|&(c, r)| WorkgroupSize::new(2 * c, 2 * r)).collect();
        let ctx = ConstraintContext::new(1024, max, known.iter().copied()).unwrap();
        let f = empty_features();
        let all_refused: BTreeSet<WorkgroupSize> = known.iter().copied().chain(hidden.iter().copied()).collect();

        let check = |res: Result<Tuned>| -> std::result::Result<(), TestCaseError> {
            match res {
                Ok(t) => {
                    prop_assert!(t.wgsize.area() <= u64::from(max));
                    prop_assert!(!all_refused.contains(&t.wgsize));
                }
                // Only possible when nothing legal is left.
                Err(_) => {
                    let left = enumerate_space(max).unwrap().into_iter().filter(|w| !all_refused.contains(w)).count();
                    prop_assert_eq!(left, 0);
                }
            }
            Ok(())
        };

        for strategy in strategies() {
            let model = Fixed(WorkgroupSize::new(2 * pc, 2 * pr));
            check(tune_classify_features(&model, &f, &ctx, &strategy, target(max, &hidden)))?;
        }
        check(tune_regress_features(&Hashy(salt), &f, &ctx, FitnessMode::RuntimeReciprocal, target(max, &hidden)))?;
    }

    #[test]
    fn nearest_neighbour_is_brute_force_nearest(
        (tc, tr) in (1u32..64, 1u32..64),
        cands in prop::collection::btree_set((1u32..64, 1u32..64), 1..30),
    ) {
        let target = WorkgroupSize::new(tc, tr);
        let cands: Vec<WorkgroupSize> = cands.iter().map(|&(c, r)| WorkgroupSize::new(c, r)).collect();
        let got = nearest_neighbour(target, cands.iter().copied()).unwrap();
        let d = |w: &WorkgroupSize| {
            let dc = f64::from(w.cols) - f64::from(tc);
            let dr = f64::from(w.rows) - f64::from(tr);
            (dc * dc + dr * dr).sqrt()
        };
        let best = cands.iter().map(d).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(d(&got), best);
    }
}

//! Choosing a workgroup size for an unseen scenario.
//!
//! A classifier proposes one size and a fallback strategy repairs it when it
//! proves illegal. A regressor scores every candidate and the best-scoring
//! one is tried first, dropping refused candidates until one is accepted.
//!
//! Both procedures are exposed as episodes that propose a size and accept
//! refusal reports, so they can be driven by a local probe or by a remote
//! client.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureVector};
use crate::learn::{Classifier, Regressor, TargetMode};
use crate::scenario::Scenario;
use crate::space::{enumerate_space, ConstraintContext, WorkgroupSize};

/// What happened when a size was tried on the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOutcome {
    Legal,
    Refused,
    Oversized,
}

pub trait LabelPredictor {
    fn predict_label(&self, f: &FeatureVector) -> Result<WorkgroupSize>;
}

impl LabelPredictor for Classifier {
    fn predict_label(&self, f: &FeatureVector) -> Result<WorkgroupSize> {
        Classifier::predict_label(self, f)
    }
}

pub trait ValuePredictor {
    fn target_mode(&self) -> TargetMode;

    /// One prediction per size in `ws`.
    fn predict_values(&self, f: &FeatureVector, ws: &[WorkgroupSize]) -> Result<Vec<f64>>;
}

impl ValuePredictor for Regressor {
    fn target_mode(&self) -> TargetMode {
        self.mode
    }

    fn predict_values(&self, f: &FeatureVector, ws: &[WorkgroupSize]) -> Result<Vec<f64>> {
        self.predict_many(f, ws)
    }
}

/// How to replace a classifier prediction that turned out illegal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum FallbackStrategy {
    /// Safe sizes best first; the first one not known to be illegal is used.
    Baseline { ranked: Vec<WorkgroupSize> },
    /// Uniform draws from sizes under the maximum not known to be refused.
    Random { seed: u64 },
    /// The closest size under the maximum not known to be refused.
    NearestNeighbour,
}

impl FallbackStrategy {
    pub fn baseline(w: WorkgroupSize) -> Self {
        FallbackStrategy::Baseline { ranked: vec![w] }
    }

    /// Short name used on the command line.
    pub fn short_name(&self) -> &'static str {
        match self {
            FallbackStrategy::Baseline { .. } => "baseline",
            FallbackStrategy::Random { .. } => "random",
            FallbackStrategy::NearestNeighbour => "nn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    /// Prefer the smallest predicted runtime.
    RuntimeReciprocal,
    /// Prefer the largest predicted speedup.
    Speedup,
}

impl FitnessMode {
    /// The regression target a model must have been trained on.
    pub fn target_mode(self) -> TargetMode {
        match self {
            FitnessMode::RuntimeReciprocal => TargetMode::Runtime,
            FitnessMode::Speedup => TargetMode::Speedup,
        }
    }

    pub fn for_target(mode: TargetMode) -> Self {
        match mode {
            TargetMode::Runtime => FitnessMode::RuntimeReciprocal,
            TargetMode::Speedup => FitnessMode::Speedup,
        }
    }
}

/// Maps a regressor output to a score to maximise.
pub fn fitness(mode: FitnessMode, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidPrediction(x));
    }
    match mode {
        FitnessMode::RuntimeReciprocal if x <= 0.0 => Err(Error::InvalidPrediction(x)),
        FitnessMode::RuntimeReciprocal => Ok(1.0 / x),
        FitnessMode::Speedup => Ok(x),
    }
}

fn squared_distance(a: WorkgroupSize, b: WorkgroupSize) -> u64 {
    let dc = i64::from(a.cols) - i64::from(b.cols);
    let dr = i64::from(a.rows) - i64::from(b.rows);
    (dc * dc + dr * dr) as u64
}

/// The candidate closest to `target` in Euclidean distance. Ties go to the
/// lexicographically smallest candidate.
pub fn nearest_neighbour(
    target: WorkgroupSize,
    candidates: impl IntoIterator<Item = WorkgroupSize>,
) -> Option<WorkgroupSize> {
    candidates
        .into_iter()
        .min_by_key(|&c| (squared_distance(c, target), c))
}

/// The result of a tuning episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tuned {
    pub wgsize: WorkgroupSize,
    /// What the model chose before any correction.
    pub first: WorkgroupSize,
    /// Fallback steps (classifiers) or rejected candidates (regressors).
    pub iterations: u32,
}

/// A classifier episode. The model's prediction is proposed first; every
/// time the current size is known or reported to be illegal the fallback
/// strategy picks another.
#[derive(Debug, Clone)]
pub struct ClassifyEpisode {
    prediction: WorkgroupSize,
    current: WorkgroupSize,
    ctx: ConstraintContext,
    /// Sizes found illegal for reasons other than a refusal on record.
    rejected: BTreeSet<WorkgroupSize>,
    strategy: FallbackStrategy,
    rng: ChaCha8Rng,
    iterations: u32,
}

impl ClassifyEpisode {
    pub fn new(
        model: &impl LabelPredictor,
        f: &FeatureVector,
        ctx: &ConstraintContext,
        strategy: &FallbackStrategy,
    ) -> Result<Self> {
        let prediction = model.predict_label(f)?;
        let seed = match strategy {
            FallbackStrategy::Random { seed } => *seed,
            _ => 0,
        };
        Ok(Self {
            prediction,
            current: prediction,
            ctx: ctx.clone(),
            rejected: BTreeSet::new(),
            strategy: strategy.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            iterations: 0,
        })
    }

    pub fn prediction(&self) -> WorkgroupSize {
        self.prediction
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn context(&self) -> &ConstraintContext {
        &self.ctx
    }

    fn known_illegal(&self, w: WorkgroupSize) -> bool {
        !self.ctx.is_legal(w) || self.rejected.contains(&w)
    }

    /// The size to try next.
    pub fn propose(&mut self) -> Result<WorkgroupSize> {
        while self.known_illegal(self.current) {
            self.current = self.fallback()?;
            self.iterations += 1;
        }
        Ok(self.current)
    }

    /// Records that `w` was refused or oversized on the target.
    pub fn reject(&mut self, w: WorkgroupSize) {
        if self.ctx.within_max(w) {
            self.ctx.add_refused(w).expect("size is within the maximum");
        } else {
            self.rejected.insert(w);
        }
    }

    fn open_candidates(&self) -> Result<Vec<WorkgroupSize>> {
        Ok(enumerate_space(self.ctx.effective_max())?
            .into_iter()
            .filter(|&w| !self.known_illegal(w))
            .collect())
    }

    fn fallback(&mut self) -> Result<WorkgroupSize> {
        let exhausted = || Error::NoLegalParameter("fallback found no legal size".into());
        match &self.strategy {
            FallbackStrategy::Baseline { ranked } => ranked
                .iter()
                .copied()
                .find(|&w| !self.known_illegal(w))
                .ok_or_else(exhausted),
            FallbackStrategy::Random { .. } => {
                let open = self.open_candidates()?;
                open.choose(&mut self.rng).copied().ok_or_else(exhausted)
            }
            FallbackStrategy::NearestNeighbour => {
                nearest_neighbour(self.current, self.open_candidates()?).ok_or_else(exhausted)
            }
        }
    }
}

/// A regressor episode: candidates under the maximum and not known to be
/// refused, tried in decreasing order of fitness.
#[derive(Debug, Clone)]
pub struct RegressEpisode {
    order: Vec<WorkgroupSize>,
    next: usize,
    refused: BTreeSet<WorkgroupSize>,
    rejections: u32,
}

impl RegressEpisode {
    pub fn new(
        model: &impl ValuePredictor,
        f: &FeatureVector,
        ctx: &ConstraintContext,
        mode: FitnessMode,
    ) -> Result<Self> {
        if model.target_mode() != mode.target_mode() {
            return Err(Error::InvalidArgument(format!(
                "fitness mode {mode:?} needs a {} regressor, got {}",
                mode.target_mode(),
                model.target_mode()
            )));
        }
        let candidates: Vec<WorkgroupSize> = enumerate_space(ctx.effective_max())?
            .into_iter()
            .filter(|w| !ctx.refused().contains(w))
            .collect();
        let values = model.predict_values(f, &candidates)?;
        let mut scored = candidates
            .into_iter()
            .zip(values)
            .map(|(w, x)| Ok((w, fitness(mode, x)?)))
            .collect::<Result<Vec<_>>>()?;
        // Stable sort over the lexicographic enumeration breaks ties.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(Self {
            order: scored.into_iter().map(|(w, _)| w).collect(),
            next: 0,
            refused: ctx.refused().clone(),
            rejections: 0,
        })
    }

    pub fn rejections(&self) -> u32 {
        self.rejections
    }

    /// Candidates in the order they will be proposed.
    pub fn ranking(&self) -> &[WorkgroupSize] {
        &self.order
    }

    /// The best candidate not yet refused.
    pub fn propose(&mut self) -> Result<WorkgroupSize> {
        while let Some(&w) = self.order.get(self.next) {
            if !self.refused.contains(&w) {
                return Ok(w);
            }
            self.next += 1;
        }
        Err(Error::NoLegalParameter(
            "every candidate was refused".into(),
        ))
    }

    /// Removes `w` from the candidates.
    pub fn reject(&mut self, w: WorkgroupSize) {
        if self.refused.insert(w) {
            self.rejections += 1;
        }
    }
}

pub fn tune_classify(
    model: &impl LabelPredictor,
    s: &Scenario,
    ctx: &ConstraintContext,
    strategy: &FallbackStrategy,
    probe: impl FnMut(WorkgroupSize) -> ProbeOutcome,
) -> Result<Tuned> {
    tune_classify_features(model, &features::extract(s), ctx, strategy, probe)
}

pub fn tune_classify_features(
    model: &impl LabelPredictor,
    f: &FeatureVector,
    ctx: &ConstraintContext,
    strategy: &FallbackStrategy,
    mut probe: impl FnMut(WorkgroupSize) -> ProbeOutcome,
) -> Result<Tuned> {
    let mut ep = ClassifyEpisode::new(model, f, ctx, strategy)?;
    loop {
        let w = ep.propose()?;
        match probe(w) {
            ProbeOutcome::Legal => {
                return Ok(Tuned {
                    wgsize: w,
                    first: ep.prediction(),
                    iterations: ep.iterations(),
                })
            }
            ProbeOutcome::Refused | ProbeOutcome::Oversized => ep.reject(w),
        }
    }
}

pub fn tune_regress(
    model: &impl ValuePredictor,
    s: &Scenario,
    ctx: &ConstraintContext,
    mode: FitnessMode,
    probe: impl FnMut(WorkgroupSize) -> ProbeOutcome,
) -> Result<Tuned> {
    tune_regress_features(model, &features::extract(s), ctx, mode, probe)
}

pub fn tune_regress_features(
    model: &impl ValuePredictor,
    f: &FeatureVector,
    ctx: &ConstraintContext,
    mode: FitnessMode,
    mut probe: impl FnMut(WorkgroupSize) -> ProbeOutcome,
) -> Result<Tuned> {
    let mut ep = RegressEpisode::new(model, f, ctx, mode)?;
    let first = ep.propose()?;
    loop {
        let w = ep.propose()?;
        match probe(w) {
            ProbeOutcome::Legal => {
                return Ok(Tuned {
                    wgsize: w,
                    first,
                    iterations: ep.rejections(),
                })
            }
            ProbeOutcome::Refused | ProbeOutcome::Oversized => ep.reject(w),
        }
    }
}

/// A trained tuner as stored on disk and loaded by the daemon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TunerModel {
    Classifier {
        model: Classifier,
        fallback: FallbackStrategy,
    },
    Regressor {
        model: Regressor,
        fitness: FitnessMode,
    },
}

impl TunerModel {
    /// Starts an episode for one scenario.
    pub fn episode(&self, f: &FeatureVector, ctx: &ConstraintContext) -> Result<Episode> {
        Ok(match self {
            TunerModel::Classifier { model, fallback } => {
                Episode::Classify(Box::new(ClassifyEpisode::new(model, f, ctx, fallback)?))
            }
            TunerModel::Regressor { model, fitness } => {
                Episode::Regress(RegressEpisode::new(model, f, ctx, *fitness)?)
            }
        })
    }
}

#[derive(Debug, Clone)]
pub enum Episode {
    Classify(Box<ClassifyEpisode>),
    Regress(RegressEpisode),
}

impl Episode {
    pub fn propose(&mut self) -> Result<WorkgroupSize> {
        match self {
            Episode::Classify(e) => e.propose(),
            Episode::Regress(e) => e.propose(),
        }
    }

    pub fn reject(&mut self, w: WorkgroupSize) {
        match self {
            Episode::Classify(e) => e.reject(w),
            Episode::Regress(e) => e.reject(w),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::features::FeatureSchema;
    use crate::space::{baseline_param, safe_set, SampleTable};

    fn w(c: u32, r: u32) -> WorkgroupSize {
        WorkgroupSize::new(c, r)
    }

    fn fv() -> FeatureVector {
        let s = Arc::new(FeatureSchema::new("none", vec![]));
        FeatureVector::new(s, vec![]).unwrap()
    }

    struct Fixed(WorkgroupSize);

    impl LabelPredictor for Fixed {
        fn predict_label(&self, _: &FeatureVector) -> Result<WorkgroupSize> {
            Ok(self.0)
        }
    }

    struct Table(TargetMode, BTreeMap<WorkgroupSize, f64>);

    impl ValuePredictor for Table {
        fn target_mode(&self) -> TargetMode {
            self.0
        }

        fn predict_values(&self, _: &FeatureVector, ws: &[WorkgroupSize]) -> Result<Vec<f64>> {
            Ok(ws.iter().map(|w| self.1[w]).collect())
        }
    }

    fn ctx(max: u32, refused: &[WorkgroupSize]) -> ConstraintContext {
        ConstraintContext::new(max, max, refused.iter().copied()).unwrap()
    }

    fn probe_with(refused: &[WorkgroupSize], max: u64) -> impl FnMut(WorkgroupSize) -> ProbeOutcome {
        let refused: BTreeSet<_> = refused.iter().copied().collect();
        move |w| {
            if w.area() > max {
                ProbeOutcome::Oversized
            } else if refused.contains(&w) {
                ProbeOutcome::Refused
            } else {
                ProbeOutcome::Legal
            }
        }
    }

    #[test]
    fn fitness_examples() {
        assert_eq!(fitness(FitnessMode::RuntimeReciprocal, 10.0).unwrap(), 0.1);
        assert_eq!(fitness(FitnessMode::Speedup, 1.33).unwrap(), 1.33);
        assert!(matches!(
            fitness(FitnessMode::RuntimeReciprocal, 0.0),
            Err(Error::InvalidPrediction(_))
        ));
        assert!(matches!(
            fitness(FitnessMode::RuntimeReciprocal, -2.0),
            Err(Error::InvalidPrediction(_))
        ));
        let f = |x| fitness(FitnessMode::RuntimeReciprocal, x).unwrap();
        assert!(f(1.0) > f(2.0) && f(2.0) > f(100.0));
    }

    #[test]
    fn legal_prediction_is_returned_unchanged() {
        for strategy in [
            FallbackStrategy::baseline(w(4, 4)),
            FallbackStrategy::Random { seed: 3 },
            FallbackStrategy::NearestNeighbour,
        ] {
            let t = tune_classify_features(
                &Fixed(w(16, 8)),
                &fv(),
                &ctx(256, &[]),
                &strategy,
                probe_with(&[], 256),
            )
            .unwrap();
            assert_eq!((t.wgsize, t.iterations, t.first), (w(16, 8), 0, w(16, 8)));
        }
    }

    #[test]
    fn nearest_neighbour_example() {
        assert_eq!(nearest_neighbour(w(64, 4), [w(16, 4), w(60, 4)]), Some(w(60, 4)));
        assert_eq!(nearest_neighbour(w(8, 8), [w(8, 6), w(6, 8)]), Some(w(6, 8)));
        assert_eq!(nearest_neighbour(w(8, 8), []), None);
    }

    #[test]
    fn nearest_neighbour_fallback_walks_from_the_last_refusal() {
        // (64,4) is oversized at max 240. (64,2) is closest and refused,
        // then (62,2) is closest to that and refused, then (60,2). Measuring
        // from the original prediction would pick (66,2) instead.
        let refused = [w(64, 2), w(62, 2)];
        let t = tune_classify_features(
            &Fixed(w(64, 4)),
            &fv(),
            &ctx(240, &[]),
            &FallbackStrategy::NearestNeighbour,
            probe_with(&refused, 240),
        )
        .unwrap();
        assert_eq!(t.wgsize, w(60, 2));
        assert_eq!(t.iterations, 3);
        assert_eq!(t.first, w(64, 4));
    }

    #[test]
    fn baseline_fallback_uses_the_geometric_mean_best() {
        // Two scenarios over three safe sizes; w1 = (4,2) has performance
        // {1, 0.9}, (2,2) has {0.5, 1} and (2,4) has {0.8, 0.8}. Geometric
        // means 0.949, 0.707, 0.8.
        let mut t = SampleTable::new();
        for (s, rts) in [("a", [2.0, 1.0, 1.25]), ("b", [1.0, 1.0 / 0.9, 1.25])] {
            for (size, rt) in [w(2, 2), w(4, 2), w(2, 4)].into_iter().zip(rts) {
                t.insert(s, size, vec![rt]).unwrap();
            }
        }
        let space = [w(2, 2), w(2, 4), w(4, 2)];
        let safe = safe_set(&[ctx(8, &[]), ctx(8, &[])], &space).unwrap();
        let base = baseline_param(&["a", "b"], &t, &safe).unwrap();
        assert_eq!(base, w(4, 2));
        let r = tune_classify_features(
            &Fixed(w(32, 4)),
            &fv(),
            &ctx(64, &[]),
            &FallbackStrategy::baseline(base),
            probe_with(&[], 64),
        )
        .unwrap();
        assert_eq!((r.wgsize, r.iterations), (w(4, 2), 1));
    }

    #[test]
    fn random_fallback_avoids_known_refusals() {
        let space = enumerate_space(16).unwrap();
        let known: Vec<_> = space.iter().copied().filter(|&x| x != w(2, 6)).collect();
        let t = tune_classify_features(
            &Fixed(w(32, 32)),
            &fv(),
            &ctx(16, &known),
            &FallbackStrategy::Random { seed: 1 },
            probe_with(&[], 16),
        )
        .unwrap();
        assert_eq!((t.wgsize, t.iterations), (w(2, 6), 1));

        let all = ctx(16, &space);
        assert!(matches!(
            tune_classify_features(
                &Fixed(w(2, 2)),
                &fv(),
                &all,
                &FallbackStrategy::Random { seed: 1 },
                probe_with(&[], 16)
            ),
            Err(Error::NoLegalParameter(_))
        ));
    }

    fn runtime_table() -> Table {
        let mut m = BTreeMap::new();
        m.insert(w(2, 2), 10.0);
        m.insert(w(4, 2), 5.0);
        m.insert(w(2, 4), 8.0);
        Table(TargetMode::Runtime, m)
    }

    #[test]
    fn regression_examples() {
        let r = tune_regress_features(
            &runtime_table(),
            &fv(),
            &ctx(8, &[]),
            FitnessMode::RuntimeReciprocal,
            probe_with(&[], 8),
        )
        .unwrap();
        assert_eq!((r.wgsize, r.iterations), (w(4, 2), 0));

        let r = tune_regress_features(
            &runtime_table(),
            &fv(),
            &ctx(8, &[]),
            FitnessMode::RuntimeReciprocal,
            probe_with(&[w(4, 2)], 8),
        )
        .unwrap();
        assert_eq!((r.wgsize, r.iterations, r.first), (w(2, 4), 1, w(4, 2)));

        let mut m = BTreeMap::new();
        m.insert(w(2, 2), 1.1);
        m.insert(w(2, 4), 2.0);
        m.insert(w(4, 2), 0.5);
        let r = tune_regress_features(
            &Table(TargetMode::Speedup, m),
            &fv(),
            &ctx(8, &[]),
            FitnessMode::Speedup,
            probe_with(&[], 8),
        )
        .unwrap();
        assert_eq!(r.wgsize, w(2, 4));
    }

    #[test]
    fn regression_mode_must_match() {
        assert!(matches!(
            tune_regress_features(
                &runtime_table(),
                &fv(),
                &ctx(8, &[]),
                FitnessMode::Speedup,
                probe_with(&[], 8)
            ),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn regression_exhaustion() {
        let r = tune_regress_features(
            &runtime_table(),
            &fv(),
            &ctx(8, &[]),
            FitnessMode::RuntimeReciprocal,
            probe_with(&[w(2, 2), w(2, 4), w(4, 2)], 8),
        );
        assert!(matches!(r, Err(Error::NoLegalParameter(_))));
    }

    #[test]
    fn regression_ties_are_lexicographic() {
        let mut m = BTreeMap::new();
        for x in enumerate_space(8).unwrap() {
            m.insert(x, 3.0);
        }
        let r = tune_regress_features(
            &Table(TargetMode::Runtime, m),
            &fv(),
            &ctx(8, &[]),
            FitnessMode::RuntimeReciprocal,
            probe_with(&[], 8),
        )
        .unwrap();
        assert_eq!(r.wgsize, w(2, 2));
    }

    #[test]
    fn tuner_model_round_trips() {
        let m = TunerModel::Classifier {
            model: Classifier::ZeroR {
                schema: FeatureSchema::new("none", vec![]),
                label: w(8, 8),
            },
            fallback: FallbackStrategy::Baseline {
                ranked: vec![w(4, 4), w(2, 2)],
            },
        };
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<TunerModel>(&json).unwrap(), m);
        let mut ep = m.episode(&fv(), &ctx(32, &[])).unwrap();
        assert_eq!(ep.propose().unwrap(), w(4, 4));
        ep.reject(w(4, 4));
        assert_eq!(ep.propose().unwrap(), w(2, 2));
    }
}

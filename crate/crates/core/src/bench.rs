//! Evaluation: partitioning scenarios into training and test sets, running a
//! tuning technique on the test scenarios and summarising the outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureVector};
use crate::learn::{
    self, Algorithm, ForestConfig, LabelledDataset, RegressionDataset, TargetMode,
};
use crate::scenario::Scenario;
use crate::simoracle::{self, Collection};
use crate::space::{
    self, enumerate_space, safe_set, ConstraintContext, RefusedRecord, SampleTable, WorkgroupSize,
};
use crate::synthgen;
use crate::tuner::{self, FallbackStrategy, FitnessMode, ProbeOutcome, Tuned, TunerModel};

/// One training/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// `k` folds over a seeded shuffle of `ids`; fold `i` tests on every `k`-th
/// shuffled id starting at `i`.
pub fn partition_kfold(ids: &[String], k: usize, seed: u64) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k} is below 2")));
    }
    if k > ids.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} scenarios",
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..k)
        .map(|fold| {
            let (test, train): (Vec<_>, Vec<_>) = shuffled
                .iter()
                .enumerate()
                .partition(|(i, _)| i % k == fold);
            Split {
                train: train.into_iter().map(|(_, s)| s.clone()).collect(),
                test: test.into_iter().map(|(_, s)| s.clone()).collect(),
            }
        })
        .collect())
}

/// Trains on synthetic-kernel scenarios and tests on the rest.
pub fn partition_synthetic_real(scenarios: &[Scenario]) -> Result<Split> {
    let (train, test): (Vec<&Scenario>, Vec<&Scenario>) = scenarios
        .iter()
        .partition(|s| synthgen::is_synthetic(&s.kernel));
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidPartition(format!(
            "{} synthetic and {} real scenarios; both must be present",
            train.len(),
            test.len()
        )));
    }
    Ok(Split {
        train: train.into_iter().map(|s| s.id.clone()).collect(),
        test: test.into_iter().map(|s| s.id.clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Device,
    Kernel,
    Dataset,
}

impl Dimension {
    fn key(self, s: &Scenario) -> String {
        match self {
            Dimension::Device => s.device.id.clone(),
            Dimension::Kernel => s.kernel.name.clone(),
            Dimension::Dataset => s.dataset.key(),
        }
    }
}

/// One split per distinct device, kernel or dataset, testing on the
/// scenarios that share it. Splits come in sorted order of the held-out value.
pub fn partition_leave_one_out(scenarios: &[Scenario], dim: Dimension) -> Result<Vec<Split>> {
    let values: BTreeSet<String> = scenarios.iter().map(|s| dim.key(s)).collect();
    if values.len() < 2 {
        return Err(Error::InvalidPartition(format!(
            "need at least two distinct {dim:?} values, found {}",
            values.len()
        )));
    }
    Ok(values
        .into_iter()
        .map(|v| {
            let (test, train): (Vec<&Scenario>, Vec<&Scenario>) =
                scenarios.iter().partition(|s| dim.key(s) == v);
            Split {
                train: train.into_iter().map(|s| s.id.clone()).collect(),
                test: test.into_iter().map(|s| s.id.clone()).collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FallbackKind {
    Baseline,
    Random,
    NearestNeighbour,
}

impl FallbackKind {
    pub const ALL: [FallbackKind; 3] = [
        FallbackKind::Baseline,
        FallbackKind::Random,
        FallbackKind::NearestNeighbour,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            FallbackKind::Baseline => "baseline",
            FallbackKind::Random => "random",
            FallbackKind::NearestNeighbour => "nn",
        }
    }
}

/// A way of choosing workgroup sizes for test scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Technique {
    Classify {
        algorithm: Algorithm,
        fallback: FallbackKind,
    },
    Regress(TargetMode),
    /// The best size for each scenario, read from the samples.
    Oracle,
    /// The fixed baseline size.
    Baseline,
}

impl Technique {
    /// Every classifier/fallback pair and both regressors.
    pub fn autotuners() -> Vec<Technique> {
        let mut out = Vec::new();
        for algorithm in Algorithm::ALL {
            for fallback in FallbackKind::ALL {
                out.push(Technique::Classify {
                    algorithm,
                    fallback,
                });
            }
        }
        out.push(Technique::Regress(TargetMode::Runtime));
        out.push(Technique::Regress(TargetMode::Speedup));
        out
    }

    pub fn is_classifier(self) -> bool {
        matches!(self, Technique::Classify { .. })
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Technique::Classify {
                algorithm,
                fallback,
            } => write!(f, "{}-{}", algorithm.short_name(), fallback.short_name()),
            Technique::Regress(mode) => write!(f, "{mode}-reg"),
            Technique::Oracle => f.write_str("oracle"),
            Technique::Baseline => f.write_str("baseline"),
        }
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::InvalidArgument(format!("unknown technique `{s}`"));
        match s {
            "oracle" => return Ok(Technique::Oracle),
            "baseline" => return Ok(Technique::Baseline),
            "runtime-reg" => return Ok(Technique::Regress(TargetMode::Runtime)),
            "speedup-reg" => return Ok(Technique::Regress(TargetMode::Speedup)),
            _ => {}
        }
        let (algo, fallback) = s.split_once('-').ok_or_else(unknown)?;
        let algorithm = algo.parse().map_err(|_| unknown())?;
        let fallback = FallbackKind::ALL
            .into_iter()
            .find(|f| f.short_name() == fallback)
            .ok_or_else(unknown)?;
        Ok(Technique::Classify {
            algorithm,
            fallback,
        })
    }
}

/// Scenarios with their exhaustive samples and recorded refusals.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub scenarios: BTreeMap<String, Scenario>,
    pub table: SampleTable,
    pub refused: RefusedRecord,
}

impl Corpus {
    pub fn new(scenarios: Vec<Scenario>, table: SampleTable, refused: RefusedRecord) -> Self {
        Self {
            scenarios: scenarios.into_iter().map(|s| (s.id.clone(), s)).collect(),
            table,
            refused,
        }
    }

    pub fn from_collection(scenarios: Vec<Scenario>, c: Collection) -> Self {
        Self::new(scenarios, c.table, c.refused)
    }

    pub fn scenario(&self, id: &str) -> Result<&Scenario> {
        self.scenarios
            .get(id)
            .ok_or_else(|| Error::UnknownScenario(id.to_string()))
    }

    /// Scenarios that have samples, in id order.
    pub fn sampled(&self) -> Vec<Scenario> {
        self.scenarios
            .values()
            .filter(|s| self.table.contains_scenario(&s.id))
            .cloned()
            .collect()
    }

    pub fn refused_for(&self, id: &str) -> BTreeSet<WorkgroupSize> {
        self.refused.get(id).cloned().unwrap_or_default()
    }

    /// The scenario's limits with every refusal on record.
    pub fn context(&self, id: &str) -> Result<ConstraintContext> {
        let s = self.scenario(id)?;
        let ctx = simoracle::context(s, [])?;
        let refused: Vec<_> = self
            .refused_for(id)
            .into_iter()
            .filter(|&w| ctx.within_max(w))
            .collect();
        simoracle::context(s, refused)
    }

    /// Fails unless every legal even-grid size of `id` has samples.
    pub fn check_complete(&self, id: &str) -> Result<()> {
        let ctx = self.context(id)?;
        for w in enumerate_space(ctx.effective_max())? {
            if ctx.is_legal(w) && self.table.get(id, w).is_none() {
                return Err(Error::IncompleteSpace {
                    scenario: id.to_string(),
                    wgsize: w,
                });
            }
        }
        Ok(())
    }

    /// What trying `w` on scenario `id` would report.
    pub fn probe(&self, id: &str, w: WorkgroupSize) -> Result<ProbeOutcome> {
        let ctx = self.context(id)?;
        Ok(if !ctx.within_max(w) {
            ProbeOutcome::Oversized
        } else if ctx.refused().contains(&w) {
            ProbeOutcome::Refused
        } else {
            ProbeOutcome::Legal
        })
    }

    /// Refusals seen in training scenarios on the same device and kernel,
    /// limited to sizes under the maximum of `id`.
    pub fn prior_context(&self, id: &str, train: &[String]) -> Result<ConstraintContext> {
        let s = self.scenario(id)?;
        let base = simoracle::context(s, [])?;
        let mut prior = BTreeSet::new();
        for t in train {
            let ts = self.scenario(t)?;
            if ts.device.id == s.device.id && ts.kernel.name == s.kernel.name {
                prior.extend(self.refused_for(t));
            }
        }
        prior.retain(|&w| base.within_max(w));
        simoracle::context(s, prior)
    }

    /// Safe sizes over `ids` ranked best first by geometric-mean performance
    /// over `train`.
    pub fn baseline_ranking(&self, train: &[String], ids: &[String]) -> Result<Vec<WorkgroupSize>> {
        let contexts = ids
            .iter()
            .map(|id| self.context(id))
            .collect::<Result<Vec<_>>>()?;
        let emax = contexts
            .iter()
            .map(ConstraintContext::effective_max)
            .min()
            .ok_or_else(|| Error::InvalidArgument("no scenarios".into()))?;
        let safe = safe_set(&contexts, &enumerate_space(emax)?)?;
        let train: Vec<&str> = train.iter().map(String::as_str).collect();
        Ok(space::rank_safe_params(&train, &self.table, &safe)?
            .into_iter()
            .map(|(w, _)| w)
            .collect())
    }
}

/// Settings shared by every evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub seed: u64,
    /// Use this size as the baseline instead of the geometric-mean best.
    pub baseline: Option<WorkgroupSize>,
    pub classifier: ForestConfig,
    pub regressor: ForestConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            baseline: None,
            classifier: ForestConfig::classifier(),
            regressor: ForestConfig::regressor(),
        }
    }
}

/// Per-prediction outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub technique: String,
    pub scenario_id: String,
    pub time_ms: f64,
    pub accuracy: u8,
    pub validity: u8,
    pub refused: u8,
    pub performance: f64,
    pub speedup: f64,
    pub fallback_iterations: u32,
    /// The size finally returned; not part of the CSV.
    #[serde(skip)]
    pub wgsize: Option<WorkgroupSize>,
}

pub const METRICS_HEADER: &str =
    "technique,scenario_id,time_ms,accuracy,validity,refused,performance,speedup,fallback_iterations";

/// Trains the model for a technique on `train`. Oracle and baseline need no
/// model and give `None`.
pub fn train_model(
    technique: Technique,
    corpus: &Corpus,
    train: &[String],
    ranked_baseline: &[WorkgroupSize],
    cfg: &EvalConfig,
) -> Result<Option<TunerModel>> {
    let baseline = cfg
        .baseline
        .or_else(|| ranked_baseline.first().copied())
        .ok_or(Error::NoSafeParameter)?;
    Ok(match technique {
        Technique::Oracle | Technique::Baseline => None,
        Technique::Classify {
            algorithm,
            fallback,
        } => {
            let mut data = LabelledDataset::new(features::schema());
            for id in train {
                data.push(
                    features::extract(corpus.scenario(id)?),
                    space::oracle(id, &corpus.table)?,
                )?;
            }
            let model = learn::train_classifier_with(algorithm, &data, cfg.seed, &cfg.classifier)?;
            let fallback = match fallback {
                FallbackKind::Baseline => {
                    let mut ranked = vec![baseline];
                    ranked.extend(ranked_baseline.iter().filter(|&&w| w != baseline));
                    FallbackStrategy::Baseline { ranked }
                }
                FallbackKind::Random => FallbackStrategy::Random { seed: cfg.seed },
                FallbackKind::NearestNeighbour => FallbackStrategy::NearestNeighbour,
            };
            Some(TunerModel::Classifier { model, fallback })
        }
        Technique::Regress(mode) => {
            let mut data = RegressionDataset::new(features::schema(), mode);
            for id in train {
                let f = features::extract(corpus.scenario(id)?);
                let base_mean = match mode {
                    TargetMode::Speedup => corpus.table.mean_runtime(id, baseline)?,
                    TargetMode::Runtime => 0.0,
                };
                for (&w, case) in corpus.table.cases(id)? {
                    let target = match mode {
                        TargetMode::Runtime => case.mean(),
                        TargetMode::Speedup => base_mean / case.mean(),
                    };
                    data.push(f.clone(), w, target)?;
                }
            }
            let model = learn::train_regressor_with(&data, cfg.seed, &cfg.regressor)?;
            Some(TunerModel::Regressor {
                model,
                fitness: FitnessMode::for_target(mode),
            })
        }
    })
}

fn run_model(
    model: &TunerModel,
    f: &FeatureVector,
    ctx: &ConstraintContext,
    id: &str,
    seed: u64,
    probe: impl FnMut(WorkgroupSize) -> ProbeOutcome,
) -> Result<Tuned> {
    match model {
        TunerModel::Classifier { model, fallback } => {
            // Each scenario gets its own random stream.
            let fallback = match fallback {
                FallbackStrategy::Random { .. } => FallbackStrategy::Random {
                    seed: seed ^ simoracle::stable_hash(&[b"fallback", id.as_bytes()]),
                },
                other => other.clone(),
            };
            tuner::tune_classify_features(model, f, ctx, &fallback, probe)
        }
        TunerModel::Regressor { model, fitness } => {
            tuner::tune_regress_features(model, f, ctx, *fitness, probe)
        }
    }
}

/// Trains `technique` on `train` and scores its choice for each of `test`.
pub fn evaluate(
    technique: Technique,
    train: &[String],
    test: &[String],
    corpus: &Corpus,
    cfg: &EvalConfig,
) -> Result<Vec<MetricsRow>> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let overlap: Vec<_> = test.iter().filter(|t| train.contains(t)).collect();
    if let Some(id) = overlap.first() {
        return Err(Error::InvalidPartition(format!(
            "scenario `{id}` is on both sides"
        )));
    }
    for id in train.iter().chain(test) {
        corpus.check_complete(id)?;
    }
    let everything: Vec<String> = train.iter().chain(test).cloned().collect();
    let ranked = corpus.baseline_ranking(train, &everything)?;
    let baseline = cfg.baseline.unwrap_or(ranked[0]);
    let model = train_model(technique, corpus, train, &ranked, cfg)?;
    let name = technique.to_string();

    let mut rows = Vec::with_capacity(test.len());
    for id in test {
        let s = corpus.scenario(id)?;
        let f = features::extract(s);
        let ctx = corpus.prior_context(id, train)?;
        let truth = corpus.context(id)?;
        let probe = |w: WorkgroupSize| {
            if !truth.within_max(w) {
                ProbeOutcome::Oversized
            } else if truth.refused().contains(&w) {
                ProbeOutcome::Refused
            } else {
                ProbeOutcome::Legal
            }
        };

        let start = Instant::now();
        let tuned = match (&model, technique) {
            (Some(m), _) => run_model(m, &f, &ctx, id, cfg.seed, probe)?,
            (None, Technique::Oracle) => {
                let w = space::oracle(id, &corpus.table)?;
                Tuned {
                    wgsize: w,
                    first: w,
                    iterations: 0,
                }
            }
            (None, _) => Tuned {
                wgsize: baseline,
                first: baseline,
                iterations: 0,
            },
        };
        let time_ms = start.elapsed().as_secs_f64() * 1e3;

        let w = tuned.wgsize;
        let (validity, refused) = if technique.is_classifier() {
            let raw = tuned.first;
            (truth.within_max(raw), truth.refused().contains(&raw))
        } else {
            (true, false)
        };
        let oracle = space::oracle(id, &corpus.table)?;
        rows.push(MetricsRow {
            technique: name.clone(),
            scenario_id: id.clone(),
            time_ms,
            accuracy: u8::from(w == oracle),
            validity: u8::from(validity),
            refused: u8::from(refused),
            performance: space::performance(id, w, &corpus.table)?,
            speedup: space::speedup(id, w, baseline, &corpus.table)?,
            fallback_iterations: tuned.iterations,
            wgsize: Some(w),
        });
    }
    Ok(rows)
}

/// Evaluates every split in order and concatenates the rows.
pub fn evaluate_splits(
    technique: Technique,
    splits: &[Split],
    corpus: &Corpus,
    cfg: &EvalConfig,
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for split in splits {
        rows.extend(evaluate(technique, &split.train, &split.test, corpus, cfg)?);
    }
    Ok(rows)
}

pub fn write_metrics<W: Write>(rows: &[MetricsRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_write_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_write_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::InvalidArgument(format!("{kind:?}")),
    }
}

fn csv_read_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_read_err)?.iter().collect::<Vec<_>>().join(",");
    if header != METRICS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{METRICS_HEADER}`"),
        });
    }
    rdr.deserialize()
        .map(|r| r.map_err(csv_read_err))
        .collect()
}

/// Per-technique aggregate of metrics rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub technique: String,
    pub n: usize,
    pub accuracy: f64,
    pub validity: f64,
    pub refused: f64,
    pub fallback_rate: f64,
    pub mean_performance: f64,
    pub median_performance: f64,
    pub q1_performance: f64,
    pub q3_performance: f64,
    pub mean_speedup: f64,
    pub median_speedup: f64,
    pub q1_speedup: f64,
    pub q3_speedup: f64,
    pub max_speedup: f64,
    pub mean_time_ms: f64,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Summaries in order of first appearance of each technique.
pub fn report(rows: &[MetricsRow]) -> Result<Vec<Summary>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no metrics rows to report".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.technique.as_str()) {
            order.push(&r.technique);
        }
    }
    Ok(order
        .into_iter()
        .map(|t| {
            let rs: Vec<&MetricsRow> = rows.iter().filter(|r| r.technique == t).collect();
            let col = |f: fn(&MetricsRow) -> f64| {
                let mut v: Vec<f64> = rs.iter().map(|r| f(r)).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let perf = col(|r| r.performance);
            let speed = col(|r| r.speedup);
            Summary {
                technique: t.to_string(),
                n: rs.len(),
                accuracy: mean(&col(|r| f64::from(r.accuracy))),
                validity: mean(&col(|r| f64::from(r.validity))),
                refused: mean(&col(|r| f64::from(r.refused))),
                fallback_rate: mean(&col(|r| f64::from(u8::from(r.fallback_iterations > 0)))),
                mean_performance: mean(&perf),
                median_performance: quantile(&perf, 0.5),
                q1_performance: quantile(&perf, 0.25),
                q3_performance: quantile(&perf, 0.75),
                mean_speedup: mean(&speed),
                median_speedup: quantile(&speed, 0.5),
                q1_speedup: quantile(&speed, 0.25),
                q3_speedup: quantile(&speed, 0.75),
                max_speedup: speed[speed.len() - 1],
                mean_time_ms: mean(&col(|r| r.time_ms)),
            }
        })
        .collect())
}

/// Aligned text table of summaries.
pub fn format_summaries(summaries: &[Summary]) -> String {
    let header = [
        "technique", "n", "accuracy", "perf", "perf(med)", "speedup", "speedup(med)",
        "fallback", "time(ms)",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for s in summaries {
        cells.push(vec![
            s.technique.clone(),
            s.n.to_string(),
            format!("{:.1}%", 100.0 * s.accuracy),
            format!("{:.1}%", 100.0 * s.mean_performance),
            format!("{:.1}%", 100.0 * s.median_performance),
            format!("{:.3}", s.mean_speedup),
            format!("{:.3}", s.median_speedup),
            format!("{:.1}%", 100.0 * s.fallback_rate),
            format!("{:.3}", s.mean_time_ms),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| cells.iter().map(|r| r[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn write_summaries<W: Write>(summaries: &[Summary], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in summaries {
        out.serialize(s).map_err(csv_write_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summaries<R: Read>(r: R) -> Result<Vec<Summary>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|r| r.map_err(csv_read_err))
        .collect()
}

/// The size a human expert picked for every scenario.
pub const EXPERT_WGSIZE: WorkgroupSize = WorkgroupSize { cols: 32, rows: 4 };

/// Speedup of each technique's chosen sizes over a fixed expert choice.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertComparison {
    pub technique: String,
    /// Rows where the expert size is legal.
    pub n: usize,
    pub excluded: usize,
    pub mean_speedup: f64,
    pub median_speedup: f64,
}

/// Compares chosen sizes against `expert`, skipping scenarios where the
/// expert size has no samples (it is illegal there).
pub fn compare_to_expert(
    rows: &[MetricsRow],
    table: &SampleTable,
    expert: WorkgroupSize,
) -> Result<Vec<ExpertComparison>> {
    let mut out: Vec<ExpertComparison> = Vec::new();
    let mut speedups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut excluded: BTreeMap<String, usize> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in rows {
        if !order.contains(&r.technique) {
            order.push(r.technique.clone());
        }
        let w = r.wgsize.ok_or_else(|| {
            Error::InvalidArgument("metrics row has no workgroup size".into())
        })?;
        if table.get(&r.scenario_id, expert).is_some() {
            speedups
                .entry(r.technique.clone())
                .or_default()
                .push(space::speedup(&r.scenario_id, w, expert, table)?);
        } else {
            *excluded.entry(r.technique.clone()).or_default() += 1;
        }
    }
    for t in order {
        let v = speedups.remove(&t).unwrap_or_default();
        out.push(ExpertComparison {
            n: v.len(),
            excluded: excluded.get(&t).copied().unwrap_or(0),
            mean_speedup: if v.is_empty() { f64::NAN } else { mean(&v) },
            median_speedup: if v.is_empty() { f64::NAN } else { median(&v) },
            technique: t,
        });
    }
    Ok(out)
}

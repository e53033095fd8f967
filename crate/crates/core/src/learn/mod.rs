//! Classifiers that map scenario features to a workgroup size, and a random
//! forest regressor over (features, workgroup size) pairs.
//!
//! Models are plain data: they serialise to JSON with trees as nested
//! `split`/`leaf` nodes and carry the feature schema they were trained on.

pub mod bayes;
pub mod tree;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, FeatureVector};
use crate::space::WorkgroupSize;

pub use bayes::GaussianNb;
pub use tree::{gini, Node};

use tree::{GrowParams, LeafStat, Ranked, Target};

fn check_schema(expected: &FeatureSchema, got: &FeatureVector) -> Result<()> {
    if got.schema().as_ref() != expected {
        return Err(Error::Schema(format!(
            "model expects schema `{}` ({} features), got `{}` ({} features)",
            expected.id,
            expected.len(),
            got.schema().id,
            got.schema().len()
        )));
    }
    Ok(())
}

fn check_finite(fv: &FeatureVector) -> Result<()> {
    if let Some((name, v)) = fv.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "feature `{name}` is not finite: {v}"
        )));
    }
    Ok(())
}

/// Feature vectors labelled with their oracle workgroup size.
#[derive(Debug, Clone)]
pub struct LabelledDataset {
    schema: Arc<FeatureSchema>,
    rows: Vec<(FeatureVector, WorkgroupSize)>,
}

impl LabelledDataset {
    pub fn new(schema: Arc<FeatureSchema>) -> Self {
        Self {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, features: FeatureVector, label: WorkgroupSize) -> Result<()> {
        check_schema(&self.schema, &features)?;
        check_finite(&features)?;
        self.rows.push((features, label));
        Ok(())
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn rows(&self) -> &[(FeatureVector, WorkgroupSize)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// What a regression target measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    /// Mean runtime in milliseconds.
    Runtime,
    /// Speedup over a baseline workgroup size.
    Speedup,
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetMode::Runtime => "runtime",
            TargetMode::Speedup => "speedup",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRow {
    pub features: FeatureVector,
    pub w: WorkgroupSize,
    pub target: f64,
}

/// `(features, workgroup size, target)` rows sharing one schema and mode.
#[derive(Debug, Clone)]
pub struct RegressionDataset {
    schema: Arc<FeatureSchema>,
    mode: TargetMode,
    rows: Vec<RegressionRow>,
}

impl RegressionDataset {
    pub fn new(schema: Arc<FeatureSchema>, mode: TargetMode) -> Self {
        Self {
            schema,
            mode,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, features: FeatureVector, w: WorkgroupSize, target: f64) -> Result<()> {
        check_schema(&self.schema, &features)?;
        check_finite(&features)?;
        if !target.is_finite() || (self.mode == TargetMode::Runtime && target <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid {} target {target}",
                self.mode
            )));
        }
        self.rows.push(RegressionRow {
            features,
            w,
            target,
        });
        Ok(())
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn mode(&self) -> TargetMode {
        self.mode
    }

    pub fn rows(&self) -> &[RegressionRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    ZeroR,
    NaiveBayes,
    DecisionTree,
    RandomForest,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::ZeroR,
        Algorithm::NaiveBayes,
        Algorithm::DecisionTree,
        Algorithm::RandomForest,
    ];

    /// Short name used on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            Algorithm::ZeroR => "zeror",
            Algorithm::NaiveBayes => "nb",
            Algorithm::DecisionTree => "tree",
            Algorithm::RandomForest => "forest",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.short_name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown classifier `{s}`")))
    }
}

/// Tree and forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` picks the usual default for the
    /// task (square root for classification, a third for regression).
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl ForestConfig {
    pub fn classifier() -> Self {
        Self {
            n_trees: 50,
            max_depth: 16,
            min_leaf: 2,
            max_features: None,
            bootstrap: true,
        }
    }

    pub fn regressor() -> Self {
        Self {
            n_trees: 50,
            max_depth: 16,
            min_leaf: 5,
            max_features: None,
            bootstrap: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::InvalidArgument(
                "n_trees, max_depth and min_leaf must be positive".into(),
            ));
        }
        if self.max_features == Some(0) {
            return Err(Error::InvalidArgument("max_features must be positive".into()));
        }
        Ok(())
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn bootstrap_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1.0;
    }
    w
}

/// A trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm")]
pub enum Classifier {
    ZeroR {
        schema: FeatureSchema,
        label: WorkgroupSize,
    },
    NaiveBayes {
        schema: FeatureSchema,
        model: GaussianNb,
    },
    DecisionTree {
        schema: FeatureSchema,
        tree: Node<WorkgroupSize>,
    },
    RandomForest {
        schema: FeatureSchema,
        trees: Vec<Node<WorkgroupSize>>,
    },
}

pub fn train_classifier(algo: Algorithm, data: &LabelledDataset, seed: u64) -> Result<Classifier> {
    train_classifier_with(algo, data, seed, &ForestConfig::classifier())
}

/// Like [`train_classifier`] with explicit tree settings. The single decision
/// tree uses `max_depth` and `min_leaf` and ignores the forest fields.
pub fn train_classifier_with(
    algo: Algorithm,
    data: &LabelledDataset,
    seed: u64,
    cfg: &ForestConfig,
) -> Result<Classifier> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    cfg.validate()?;
    let schema = data.schema().as_ref().clone();

    let mut labels: Vec<WorkgroupSize> = data.rows().iter().map(|(_, l)| *l).collect();
    labels.sort_unstable();
    labels.dedup();
    let y: Vec<usize> = data
        .rows()
        .iter()
        .map(|(_, l)| labels.binary_search(l).expect("label is present"))
        .collect();
    let x: Vec<Vec<f64>> = data.rows().iter().map(|(f, _)| f.values().to_vec()).collect();
    let d = schema.len();

    let to_label = |s: LeafStat| match s {
        LeafStat::Class(k) => labels[k],
        LeafStat::Value(_) => unreachable!("classification leaves hold classes"),
    };

    Ok(match algo {
        Algorithm::ZeroR => {
            let mut counts = vec![0usize; labels.len()];
            for &k in &y {
                counts[k] += 1;
            }
            let mut best = 0;
            for (k, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = k;
                }
            }
            Classifier::ZeroR {
                schema,
                label: labels[best],
            }
        }
        Algorithm::NaiveBayes => Classifier::NaiveBayes {
            model: GaussianNb::fit(&x, &y, &labels),
            schema,
        },
        Algorithm::DecisionTree => {
            let ranked = Ranked::new(&x, d);
            let params = GrowParams {
                max_depth: cfg.max_depth,
                min_leaf: cfg.min_leaf as f64,
                max_features: None,
            };
            let target = Target::Classes {
                y: &y,
                n_classes: labels.len(),
            };
            let tree = tree::grow(
                &ranked,
                &target,
                &vec![1.0; x.len()],
                params,
                &mut tree_rng(seed, 0),
            );
            Classifier::DecisionTree {
                schema,
                tree: tree.map(&to_label),
            }
        }
        Algorithm::RandomForest => {
            let ranked = Ranked::new(&x, d);
            let params = GrowParams {
                max_depth: cfg.max_depth,
                min_leaf: cfg.min_leaf as f64,
                max_features: Some(
                    cfg.max_features
                        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize),
                ),
            };
            let target = Target::Classes {
                y: &y,
                n_classes: labels.len(),
            };
            let trees = (0..cfg.n_trees)
                .map(|t| {
                    let mut rng = tree_rng(seed, t);
                    let weights = if cfg.bootstrap {
                        bootstrap_weights(x.len(), &mut rng)
                    } else {
                        vec![1.0; x.len()]
                    };
                    tree::grow(&ranked, &target, &weights, params, &mut rng).map(&to_label)
                })
                .collect();
            Classifier::RandomForest { schema, trees }
        }
    })
}

/// The most frequent label, ties going to the lexicographically smallest.
pub fn plurality(votes: &[WorkgroupSize]) -> Option<WorkgroupSize> {
    let mut sorted = votes.to_vec();
    sorted.sort_unstable();
    let mut best: Option<(WorkgroupSize, usize)> = None;
    for chunk in sorted.chunk_by(|a, b| a == b) {
        if best.is_none_or(|(_, n)| chunk.len() > n) {
            best = Some((chunk[0], chunk.len()));
        }
    }
    best.map(|(w, _)| w)
}

impl Classifier {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Classifier::ZeroR { .. } => Algorithm::ZeroR,
            Classifier::NaiveBayes { .. } => Algorithm::NaiveBayes,
            Classifier::DecisionTree { .. } => Algorithm::DecisionTree,
            Classifier::RandomForest { .. } => Algorithm::RandomForest,
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        match self {
            Classifier::ZeroR { schema, .. }
            | Classifier::NaiveBayes { schema, .. }
            | Classifier::DecisionTree { schema, .. }
            | Classifier::RandomForest { schema, .. } => schema,
        }
    }

    pub fn predict_label(&self, f: &FeatureVector) -> Result<WorkgroupSize> {
        check_schema(self.schema(), f)?;
        let x = f.values();
        Ok(match self {
            Classifier::ZeroR { label, .. } => *label,
            Classifier::NaiveBayes { model, .. } => model.predict(x),
            Classifier::DecisionTree { tree, .. } => *tree.predict(x),
            Classifier::RandomForest { trees, .. } => {
                let votes: Vec<_> = trees.iter().map(|t| *t.predict(x)).collect();
                plurality(&votes).expect("a forest has trees")
            }
        })
    }

    /// Each tree's prediction for a forest; a single-element list otherwise.
    pub fn votes(&self, f: &FeatureVector) -> Result<Vec<WorkgroupSize>> {
        check_schema(self.schema(), f)?;
        match self {
            Classifier::RandomForest { trees, .. } => {
                Ok(trees.iter().map(|t| *t.predict(f.values())).collect())
            }
            _ => Ok(vec![self.predict_label(f)?]),
        }
    }
}

/// Number of columns appended to the scenario features for a regressor:
/// columns, rows and area of the workgroup size.
pub const WGSIZE_COLUMNS: usize = 3;

fn regression_input(f: &[f64], w: WorkgroupSize, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(f);
    out.extend([f64::from(w.cols), f64::from(w.rows), w.area() as f64]);
}

/// Random forest of variance-reduction regression trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub schema: FeatureSchema,
    pub mode: TargetMode,
    pub config: ForestConfig,
    pub trees: Vec<Node<f64>>,
}

pub fn train_regressor(data: &RegressionDataset, seed: u64) -> Result<Regressor> {
    train_regressor_with(data, seed, &ForestConfig::regressor())
}

pub fn train_regressor_with(
    data: &RegressionDataset,
    seed: u64,
    cfg: &ForestConfig,
) -> Result<Regressor> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    cfg.validate()?;
    let d = data.schema().len() + WGSIZE_COLUMNS;
    let x: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .map(|r| {
            let mut v = Vec::with_capacity(d);
            regression_input(r.features.values(), r.w, &mut v);
            v
        })
        .collect();
    let y: Vec<f64> = data.rows().iter().map(|r| r.target).collect();
    let ranked = Ranked::new(&x, d);
    let params = GrowParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf as f64,
        max_features: Some(cfg.max_features.unwrap_or(d.div_ceil(3))),
    };
    let target = Target::Values { y: &y };
    let to_value = |s: LeafStat| match s {
        LeafStat::Value(v) => v,
        LeafStat::Class(_) => unreachable!("regression leaves hold values"),
    };
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let weights = if cfg.bootstrap {
                bootstrap_weights(x.len(), &mut rng)
            } else {
                vec![1.0; x.len()]
            };
            tree::grow(&ranked, &target, &weights, params, &mut rng).map(&to_value)
        })
        .collect();
    Ok(Regressor {
        schema: data.schema().as_ref().clone(),
        mode: data.mode(),
        config: *cfg,
        trees,
    })
}

/// Mean of the tree outputs, kept inside their range so rounding cannot
/// leave the hull of the training targets.
fn hull_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut n, mut sum) = (0usize, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        n += 1;
        sum += v;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        return lo;
    }
    (sum / n as f64).clamp(lo, hi)
}

impl Regressor {
    pub fn predict_value(&self, f: &FeatureVector, w: WorkgroupSize) -> Result<f64> {
        Ok(self.predict_many(f, &[w])?[0])
    }

    /// Predictions for each size in `ws`, in order.
    pub fn predict_many(&self, f: &FeatureVector, ws: &[WorkgroupSize]) -> Result<Vec<f64>> {
        check_schema(&self.schema, f)?;
        let mut x = Vec::with_capacity(self.schema.len() + WGSIZE_COLUMNS);
        Ok(ws
            .iter()
            .map(|&w| {
                regression_input(f.values(), w, &mut x);
                hull_mean(self.trees.iter().map(|t| *t.predict(&x)))
            })
            .collect())
    }
}

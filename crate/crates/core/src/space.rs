//! The workgroup size parameter space.
//!
//! A workgroup size is a `(columns, rows)` pair. Whether a size may be used
//! for a scenario depends on two things: its area must not exceed the
//! effective maximum (the smaller of the device and kernel limits), and it
//! must not be one of the sizes the runtime refuses for that scenario.
//!
//! This module also owns the sample table of observed runtimes and the
//! arithmetic built on top of it: the oracle size, relative performance,
//! speedup, and the baseline parameter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Refused sizes per scenario id.
pub type RefusedRecord = BTreeMap<String, BTreeSet<WorkgroupSize>>;

/// A 2D workgroup size. Ordering is lexicographic on `(cols, rows)`, which
/// is the tie-break order used by every argmin/argmax in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WorkgroupSize {
    #[serde(rename = "w_c")]
    pub cols: u32,
    #[serde(rename = "w_r")]
    pub rows: u32,
}

impl WorkgroupSize {
    /// Panics if either dimension is zero; use [`WorkgroupSize::try_new`]
    /// for untrusted input.
    pub fn new(cols: u32, rows: u32) -> Self {
        Self::try_new(cols, rows).expect("workgroup dimensions must be positive")
    }

    pub fn try_new(cols: u32, rows: u32) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(Error::InvalidArgument(format!(
                "workgroup size {cols}x{rows} has a zero dimension"
            )));
        }
        Ok(Self { cols, rows })
    }

    /// Number of work-items in the group.
    pub fn area(&self) -> u64 {
        u64::from(self.cols) * u64::from(self.rows)
    }
}

impl fmt::Display for WorkgroupSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.cols, self.rows)
    }
}

impl FromStr for WorkgroupSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed workgroup size `{s}`"));
        let (c, r) = s.split_once('x').ok_or_else(bad)?;
        let cols = c.parse().map_err(|_| bad())?;
        let rows = r.parse().map_err(|_| bad())?;
        Self::try_new(cols, rows)
    }
}

/// All even `(cols, rows)` pairs whose area fits in `effective_max`, in
/// lexicographic order.
pub fn enumerate_space(effective_max: u32) -> Result<Vec<WorkgroupSize>> {
    if effective_max < 4 {
        return Err(Error::EmptySpace(effective_max));
    }
    let max = u64::from(effective_max);
    let mut out = Vec::new();
    for cols in (2..=effective_max / 2).step_by(2) {
        for rows in (2..).step_by(2) {
            if u64::from(cols) * u64::from(rows) > max {
                break;
            }
            out.push(WorkgroupSize { cols, rows });
        }
    }
    Ok(out)
}

/// The limits that decide legality of a size for one scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintContext {
    pub device_max: u32,
    pub kernel_max: u32,
    refused: BTreeSet<WorkgroupSize>,
}

impl ConstraintContext {
    pub fn new(
        device_max: u32,
        kernel_max: u32,
        refused: impl IntoIterator<Item = WorkgroupSize>,
    ) -> Result<Self> {
        if device_max == 0 || kernel_max == 0 {
            return Err(Error::InvalidArgument(
                "workgroup size limits must be positive".into(),
            ));
        }
        let mut ctx = Self {
            device_max,
            kernel_max,
            refused: BTreeSet::new(),
        };
        for w in refused {
            ctx.add_refused(w)?;
        }
        Ok(ctx)
    }

    pub fn effective_max(&self) -> u32 {
        self.device_max.min(self.kernel_max)
    }

    pub fn refused(&self) -> &BTreeSet<WorkgroupSize> {
        &self.refused
    }

    /// Records a refusal. Oversized sizes are illegal rather than refused,
    /// so they are rejected here.
    pub fn add_refused(&mut self, w: WorkgroupSize) -> Result<()> {
        if w.area() > u64::from(self.effective_max()) {
            return Err(Error::IllegalWorkgroupSize {
                wgsize: w,
                max: self.effective_max(),
            });
        }
        self.refused.insert(w);
        Ok(())
    }

    pub fn within_max(&self, w: WorkgroupSize) -> bool {
        w.area() <= u64::from(self.effective_max())
    }

    pub fn is_legal(&self, w: WorkgroupSize) -> bool {
        is_legal(w, self)
    }
}

pub fn is_legal(w: WorkgroupSize, ctx: &ConstraintContext) -> bool {
    ctx.within_max(w) && !ctx.refused.contains(&w)
}

/// Sizes from `space` that are legal under every context.
pub fn safe_set(
    contexts: &[ConstraintContext],
    space: &[WorkgroupSize],
) -> Result<BTreeSet<WorkgroupSize>> {
    if contexts.is_empty() {
        return Err(Error::InvalidArgument(
            "safe set needs at least one context".into(),
        ));
    }
    Ok(space
        .iter()
        .copied()
        .filter(|&w| contexts.iter().all(|ctx| is_legal(w, ctx)))
        .collect())
}

/// Observed runtimes of one test case, in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    runtimes: Vec<f64>,
    mean: f64,
}

impl TestCase {
    fn new(runtimes: Vec<f64>) -> Result<Self> {
        validate_runtimes(&runtimes)?;
        let mean = runtimes.iter().sum::<f64>() / runtimes.len() as f64;
        Ok(Self { runtimes, mean })
    }

    pub fn runtimes(&self) -> &[f64] {
        &self.runtimes
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }
}

fn validate_runtimes(runtimes: &[f64]) -> Result<()> {
    if runtimes.is_empty() {
        return Err(Error::InvalidArgument("test case has no runtimes".into()));
    }
    if let Some(bad) = runtimes.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "runtime {bad} is not a positive finite number"
        )));
    }
    Ok(())
}

/// Runtimes observed for `(scenario, workgroup size)` test cases. At most one
/// entry exists per pair; iteration is ordered by scenario id, then size.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleTable {
    scenarios: BTreeMap<String, BTreeMap<WorkgroupSize, TestCase>>,
}

impl SampleTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a new test case. Fails if the pair is already present.
    pub fn insert(
        &mut self,
        scenario: impl Into<String>,
        w: WorkgroupSize,
        runtimes: Vec<f64>,
    ) -> Result<()> {
        let scenario = scenario.into();
        let case = TestCase::new(runtimes)?;
        let sizes = self.scenarios.entry(scenario.clone()).or_default();
        if sizes.contains_key(&w) {
            return Err(Error::DuplicateTestCase {
                scenario,
                wgsize: w,
            });
        }
        sizes.insert(w, case);
        Ok(())
    }

    /// Appends observations to a test case, creating it if needed.
    pub fn append(
        &mut self,
        scenario: impl Into<String>,
        w: WorkgroupSize,
        runtimes: &[f64],
    ) -> Result<()> {
        validate_runtimes(runtimes)?;
        let sizes = self.scenarios.entry(scenario.into()).or_default();
        let mut all = sizes.remove(&w).map(|c| c.runtimes).unwrap_or_default();
        all.extend_from_slice(runtimes);
        sizes.insert(w, TestCase::new(all)?);
        Ok(())
    }

    /// Number of test cases.
    pub fn len(&self) -> usize {
        self.scenarios.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scenario_ids(&self) -> impl Iterator<Item = &str> {
        self.scenarios.keys().map(String::as_str)
    }

    pub fn contains_scenario(&self, scenario: &str) -> bool {
        self.scenarios.contains_key(scenario)
    }

    pub fn cases(&self, scenario: &str) -> Result<&BTreeMap<WorkgroupSize, TestCase>> {
        self.scenarios
            .get(scenario)
            .ok_or_else(|| Error::UnknownScenario(scenario.to_string()))
    }

    pub fn get(&self, scenario: &str, w: WorkgroupSize) -> Option<&TestCase> {
        self.scenarios.get(scenario)?.get(&w)
    }

    pub fn mean_runtime(&self, scenario: &str, w: WorkgroupSize) -> Result<f64> {
        self.get(scenario, w)
            .map(TestCase::mean)
            .ok_or_else(|| Error::UnknownTestCase {
                scenario: scenario.to_string(),
                wgsize: w,
            })
    }

    /// All test cases in canonical order.
    pub fn rows(&self) -> impl Iterator<Item = (&str, WorkgroupSize, &TestCase)> {
        self.scenarios.iter().flat_map(|(id, sizes)| {
            sizes.iter().map(move |(w, case)| (id.as_str(), *w, case))
        })
    }

    /// Moves every test case of `other` into `self`.
    pub fn merge(&mut self, other: SampleTable) -> Result<()> {
        for (id, sizes) in other.scenarios {
            for (w, case) in sizes {
                self.insert(id.clone(), w, case.runtimes)?;
            }
        }
        Ok(())
    }
}

/// The size with the lowest mean runtime for `scenario`.
pub fn oracle(scenario: &str, table: &SampleTable) -> Result<WorkgroupSize> {
    let cases = table.cases(scenario)?;
    // BTreeMap iterates in lexicographic order, so keeping the first strict
    // minimum implements the tie-break.
    let mut best: Option<(WorkgroupSize, f64)> = None;
    for (w, case) in cases {
        match best {
            Some((_, m)) if case.mean() >= m => {}
            _ => best = Some((*w, case.mean())),
        }
    }
    best.map(|(w, _)| w)
        .ok_or_else(|| Error::UnknownScenario(scenario.to_string()))
}

/// Oracle mean runtime over `w`'s mean runtime, in `(0, 1]`.
pub fn performance(scenario: &str, w: WorkgroupSize, table: &SampleTable) -> Result<f64> {
    let best = oracle(scenario, table)?;
    Ok(table.mean_runtime(scenario, best)? / table.mean_runtime(scenario, w)?)
}

/// Speedup of `w` over `base`.
pub fn speedup(
    scenario: &str,
    w: WorkgroupSize,
    base: WorkgroupSize,
    table: &SampleTable,
) -> Result<f64> {
    Ok(table.mean_runtime(scenario, base)? / table.mean_runtime(scenario, w)?)
}

/// Safe sizes ranked by the geometric mean of their performance over the
/// training scenarios, best first. The score is the mean log-performance.
pub fn rank_safe_params(
    training: &[&str],
    table: &SampleTable,
    safe: &BTreeSet<WorkgroupSize>,
) -> Result<Vec<(WorkgroupSize, f64)>> {
    if safe.is_empty() {
        return Err(Error::NoSafeParameter);
    }
    if training.is_empty() {
        return Err(Error::InvalidArgument(
            "baseline needs at least one training scenario".into(),
        ));
    }
    let oracle_means = training
        .iter()
        .map(|s| oracle(s, table).and_then(|o| table.mean_runtime(s, o)))
        .collect::<Result<Vec<_>>>()?;

    let mut ranked = Vec::with_capacity(safe.len());
    for &w in safe {
        let mut log_sum = 0.0;
        for (s, best) in training.iter().zip(&oracle_means) {
            log_sum += (best / table.mean_runtime(s, w)?).ln();
        }
        ranked.push((w, log_sum / training.len() as f64));
    }
    // Stable sort keeps lexicographic order among equal scores.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ranked)
}

/// The safe size with the best geometric-mean performance over the training
/// scenarios: the best single fixed workgroup size.
pub fn baseline_param(
    training: &[&str],
    table: &SampleTable,
    safe: &BTreeSet<WorkgroupSize>,
) -> Result<WorkgroupSize> {
    Ok(rank_safe_params(training, table, safe)?[0].0)
}

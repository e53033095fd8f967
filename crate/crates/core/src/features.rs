//! Scenario feature extraction.
//!
//! The `fv1` schema has 29 features in a fixed order: 10 describing the
//! device, 14 the kernel and 5 the dataset. Instruction counts enter as
//! densities (count over total). No scaling is applied.

use std::sync::{Arc, LazyLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{DeviceType, InstructionCounts, Scenario};

/// Ordered feature names, shared by every vector built against it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub id: String,
    pub names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(id: impl Into<String>, names: Vec<String>) -> Self {
        Self {
            id: id.into(),
            names,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

pub const SCHEMA_ID: &str = "fv1";

pub const FEATURE_NAMES: [&str; 29] = [
    "compute_units",
    "frequency_mhz",
    "local_mem_kb",
    "global_cache_kb",
    "global_mem_mb",
    "device_max_wgsize",
    "simd_width",
    "is_cpu",
    "is_gpu",
    "vendor_class",
    "north",
    "south",
    "east",
    "west",
    "total_instructions",
    "load_density",
    "store_density",
    "int_arith_density",
    "float_arith_density",
    "branch_density",
    "vector_density",
    "call_density",
    "other_density",
    "complexity",
    "width",
    "height",
    "in_type_size_bytes",
    "out_type_size_bytes",
    "element_count",
];

static SCHEMA: LazyLock<Arc<FeatureSchema>> = LazyLock::new(|| {
    Arc::new(FeatureSchema::new(
        SCHEMA_ID,
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    ))
});

/// The `fv1` schema.
pub fn schema() -> Arc<FeatureSchema> {
    SCHEMA.clone()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    schema: Arc<FeatureSchema>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: Arc<FeatureSchema>, values: Vec<f64>) -> Result<Self> {
        if schema.len() != values.len() {
            return Err(Error::Schema(format!(
                "schema `{}` has {} features, got {} values",
                schema.id,
                schema.len(),
                values.len()
            )));
        }
        Ok(Self { schema, values })
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let i = self.schema.names.iter().position(|n| n == name)?;
        Some(self.values[i])
    }

    /// `(name, value)` pairs in schema order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.schema
            .names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }
}

/// Per-category densities `count / total`, in [`InstructionCounts::CATEGORIES`]
/// order.
pub fn densities(counts: &InstructionCounts, total: u64) -> Result<[f64; 8]> {
    if total == 0 {
        return Err(Error::InvalidArgument(
            "instruction total must be positive".into(),
        ));
    }
    let sum = counts.sum();
    if sum != total {
        return Err(Error::InconsistentCounts { sum, total });
    }
    Ok(counts.as_array().map(|c| c as f64 / total as f64))
}

pub fn extract(s: &Scenario) -> FeatureVector {
    let d = &s.device;
    let k = &s.kernel;
    let ds = &s.dataset;
    // Scenario construction validated the counts.
    let dens = densities(&k.instr_counts, k.total_instructions)
        .expect("scenario kernels have consistent instruction counts");
    let flag = |b: bool| if b { 1.0 } else { 0.0 };

    let mut v = Vec::with_capacity(FEATURE_NAMES.len());
    v.extend([
        f64::from(d.compute_units),
        f64::from(d.frequency_mhz),
        f64::from(d.local_mem_kb),
        f64::from(d.global_cache_kb),
        f64::from(d.global_mem_mb),
        f64::from(d.device_max_wgsize),
        f64::from(d.simd_width),
        flag(d.device_type == DeviceType::Cpu),
        flag(d.device_type == DeviceType::Gpu),
        f64::from(d.vendor_class.ordinal()),
    ]);
    v.extend(k.borders().map(f64::from));
    v.push(k.total_instructions as f64);
    v.extend(dens);
    v.push(flag(k.complexity));
    v.extend([
        f64::from(ds.width),
        f64::from(ds.height),
        f64::from(ds.in_type.size_bytes()),
        f64::from(ds.out_type.size_bytes()),
        ds.elements() as f64,
    ]);
    FeatureVector {
        schema: schema(),
        values: v,
    }
}

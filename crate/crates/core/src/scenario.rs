//! Device, kernel and dataset descriptors, and the scenarios built from them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DeviceType {
    Cpu,
    Gpu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VendorClass {
    IntelCpu,
    AmdGpu,
    NvidiaGpu,
    Other,
}

impl VendorClass {
    /// Stable ordinal used as a feature value.
    pub fn ordinal(self) -> u32 {
        match self {
            VendorClass::IntelCpu => 0,
            VendorClass::AmdGpu => 1,
            VendorClass::NvidiaGpu => 2,
            VendorClass::Other => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceDescriptor {
    pub id: String,
    pub device_type: DeviceType,
    pub vendor_class: VendorClass,
    pub compute_units: u32,
    pub frequency_mhz: u32,
    pub local_mem_kb: u32,
    pub global_cache_kb: u32,
    pub global_mem_mb: u32,
    pub device_max_wgsize: u32,
    pub simd_width: u32,
}

impl DeviceDescriptor {
    pub fn validate(&self) -> Result<()> {
        check_name("device id", &self.id)?;
        let positive = [
            ("compute_units", self.compute_units),
            ("frequency_mhz", self.frequency_mhz),
            ("local_mem_kb", self.local_mem_kb),
            ("global_mem_mb", self.global_mem_mb),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(invalid(format!("device `{}`: {field} must be positive", self.id)));
            }
        }
        if !self.device_max_wgsize.is_power_of_two() || self.device_max_wgsize < 64 {
            return Err(invalid(format!(
                "device `{}`: device_max_wgsize {} must be a power of two >= 64",
                self.id, self.device_max_wgsize
            )));
        }
        if ![8, 16, 32, 64].contains(&self.simd_width) {
            return Err(invalid(format!(
                "device `{}`: simd_width {} not in {{8, 16, 32, 64}}",
                self.id, self.simd_width
            )));
        }
        Ok(())
    }
}

/// Static instruction counts by category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionCounts {
    pub load: u64,
    pub store: u64,
    pub int_arith: u64,
    pub float_arith: u64,
    pub branch: u64,
    pub vector: u64,
    pub call: u64,
    pub other: u64,
}

impl InstructionCounts {
    pub const CATEGORIES: [&'static str; 8] = [
        "load",
        "store",
        "int_arith",
        "float_arith",
        "branch",
        "vector",
        "call",
        "other",
    ];

    /// Counts in [`Self::CATEGORIES`] order.
    pub fn as_array(&self) -> [u64; 8] {
        [
            self.load,
            self.store,
            self.int_arith,
            self.float_arith,
            self.branch,
            self.vector,
            self.call,
            self.other,
        ]
    }

    pub fn from_array(a: [u64; 8]) -> Self {
        Self {
            load: a[0],
            store: a[1],
            int_arith: a[2],
            float_arith: a[3],
            branch: a[4],
            vector: a[5],
            call: a[6],
            other: a[7],
        }
    }

    pub fn sum(&self) -> u64 {
        self.as_array().iter().sum()
    }

    /// Loads and stores.
    pub fn memory(&self) -> u64 {
        self.load + self.store
    }

    /// Everything that is not a load or store.
    pub fn compute(&self) -> u64 {
        self.sum() - self.memory()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelDescriptor {
    pub name: String,
    pub north: u32,
    pub south: u32,
    pub east: u32,
    pub west: u32,
    pub instr_counts: InstructionCounts,
    pub total_instructions: u64,
    pub complexity: bool,
}

pub const MAX_BORDER: u32 = 64;

impl KernelDescriptor {
    pub fn validate(&self) -> Result<()> {
        check_name("kernel name", &self.name)?;
        if self.total_instructions == 0 {
            return Err(invalid(format!(
                "kernel `{}`: total_instructions must be positive",
                self.name
            )));
        }
        let sum = self.instr_counts.sum();
        if sum != self.total_instructions {
            return Err(invalid(format!(
                "kernel `{}`: instruction counts sum to {sum}, total is {}",
                self.name, self.total_instructions
            )));
        }
        if self.borders().iter().any(|&b| b > MAX_BORDER) {
            return Err(invalid(format!(
                "kernel `{}`: border exceeds {MAX_BORDER}",
                self.name
            )));
        }
        Ok(())
    }

    /// `[north, south, east, west]`.
    pub fn borders(&self) -> [u32; 4] {
        [self.north, self.south, self.east, self.west]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DataType {
    Int32,
    Float32,
    Float64,
}

impl DataType {
    pub fn size_bytes(self) -> u32 {
        match self {
            DataType::Int32 | DataType::Float32 => 4,
            DataType::Float64 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Int32 => "INT32",
            DataType::Float32 => "FLOAT32",
            DataType::Float64 => "FLOAT64",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "INT32" => Ok(DataType::Int32),
            "FLOAT32" => Ok(DataType::Float32),
            "FLOAT64" => Ok(DataType::Float64),
            _ => Err(invalid(format!("unknown data type `{s}`"))),
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDescriptor {
    pub width: u32,
    pub height: u32,
    pub in_type: DataType,
    pub out_type: DataType,
}

impl DatasetDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid(format!(
                "dataset {}x{} has a zero dimension",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn elements(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    /// `<width>x<height>/<in>-<out>`, the dataset part of a scenario id.
    pub fn key(&self) -> String {
        format!(
            "{}x{}/{}-{}",
            self.width, self.height, self.in_type, self.out_type
        )
    }

    /// Inverse of [`DatasetDescriptor::key`].
    pub fn parse_key(key: &str) -> Result<Self> {
        let bad = || invalid(format!("malformed dataset key `{key}`"));
        let (dims, types) = key.split_once('/').ok_or_else(bad)?;
        let (w, h) = dims.split_once('x').ok_or_else(bad)?;
        let (i, o) = types.split_once('-').ok_or_else(bad)?;
        let d = Self {
            width: w.parse().map_err(|_| bad())?,
            height: h.parse().map_err(|_| bad())?,
            in_type: DataType::parse(i)?,
            out_type: DataType::parse(o)?,
        };
        d.validate()?;
        Ok(d)
    }
}

/// A (device, kernel, dataset) combination: the unit a workgroup size is
/// predicted for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub device: DeviceDescriptor,
    pub kernel: KernelDescriptor,
    pub dataset: DatasetDescriptor,
}

impl Scenario {
    pub fn new(
        device: DeviceDescriptor,
        kernel: KernelDescriptor,
        dataset: DatasetDescriptor,
    ) -> Result<Self> {
        device.validate()?;
        kernel.validate()?;
        dataset.validate()?;
        Ok(Self {
            id: scenario_id(&device.id, &kernel.name, &dataset),
            device,
            kernel,
            dataset,
        })
    }
}

pub fn make_scenario(
    device: DeviceDescriptor,
    kernel: KernelDescriptor,
    dataset: DatasetDescriptor,
) -> Result<Scenario> {
    Scenario::new(device, kernel, dataset)
}

pub fn scenario_id(device_id: &str, kernel_name: &str, dataset: &DatasetDescriptor) -> String {
    format!("{device_id}/{kernel_name}/{}", dataset.key())
}

/// Splits a scenario id into `(device id, kernel name, dataset)`.
pub fn parse_scenario_id(id: &str) -> Result<(&str, &str, DatasetDescriptor)> {
    let mut parts = id.splitn(3, '/');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(d), Some(k), Some(rest)) if !d.is_empty() && !k.is_empty() => {
            Ok((d, k, DatasetDescriptor::parse_key(rest)?))
        }
        _ => Err(invalid(format!("malformed scenario id `{id}`"))),
    }
}

// Names end up inside scenario ids, CSV cells and file names.
fn check_name(what: &str, name: &str) -> Result<()> {
    if name.is_empty()
        || name
            .chars()
            .any(|c| c == '/' || c == ',' || c == '"' || c.is_whitespace() || c.is_control())
    {
        return Err(invalid(format!("{what} `{name}` is empty or contains a reserved character")));
    }
    Ok(())
}

fn invalid(msg: String) -> Error {
    Error::InvalidDescriptor(msg)
}

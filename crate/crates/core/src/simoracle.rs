//! Simulated execution of stencil kernels.
//!
//! Stands in for real OpenCL hardware. Runtimes come from a closed-form
//! performance model multiplied by lognormal timer noise, and refusals from
//! a hash of `(device, kernel, size)` so that the refused set of a scenario
//! is the same on every run.
//!
//! The model, per scenario and workgroup size `(c, r)`:
//!
//! ```text
//! halo      = (c + east + west)(r + north + south) / (c r)
//! simd_pad  = ceil(c / simd) simd / c                       (SIMD lanes run along a row)
//! row       = 1 + row_cost / c                              (short rows coalesce poorly)
//! pressure  = 1 + lmem_pressure * tile_bytes / local_bytes
//! per_elem  = (compute_instr + memory_instr * halo * row) * simd_pad
//! groups    = elements / (c r)
//! work      = (elements * per_elem * pressure + groups * launch_cost)
//!             * (1 + sched_slots / groups)
//! runtime   = work * 1e-3 / (compute_units * frequency_mhz)   [ms]
//! ```
//!
//! `row_cost`, `lmem_pressure`, `launch_cost` and `sched_slots` depend on the
//! vendor class. Every factor grows with the instruction counts, so adding
//! instructions never makes a kernel faster, and compute units only enter
//! through the final division.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::{DeviceDescriptor, KernelDescriptor, Scenario, VendorClass};
use crate::space::{enumerate_space, ConstraintContext, RefusedRecord, SampleTable, WorkgroupSize};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Scale of the multiplicative lognormal noise. Zero disables noise.
    pub noise_sigma: f64,
    pub seed: u64,
    pub min_samples: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.05,
            seed: 0,
            min_samples: 30,
        }
    }
}

impl OracleConfig {
    pub fn noiseless() -> Self {
        Self {
            noise_sigma: 0.0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma {} must be finite and non-negative",
                self.noise_sigma
            )));
        }
        if self.min_samples == 0 {
            return Err(Error::InvalidArgument(
                "at least one sample per test case is required".into(),
            ));
        }
        Ok(())
    }
}

/// Bytes per element assumed when a tile must be sized without a dataset.
const KERNEL_MAX_ELEMENT_BYTES: u64 = 4;

/// The per-kernel maximum workgroup size on `device`. Starts from the device
/// maximum, halves once for kernels over 400 instructions and once more if a
/// `(device_max, 1)` tile of 4-byte elements does not fit in local memory.
pub fn kernel_max_wgsize(device: &DeviceDescriptor, kernel: &KernelDescriptor) -> u32 {
    let device_max = device.device_max_wgsize;
    let mut max = device_max;
    if kernel.total_instructions > 400 {
        max /= 2;
    }
    let tile = (u64::from(device_max) + u64::from(kernel.east + kernel.west))
        * (1 + u64::from(kernel.north + kernel.south))
        * KERNEL_MAX_ELEMENT_BYTES;
    if tile > local_mem_bytes(device) {
        max /= 2;
    }
    max.max(64).min(device_max)
}

/// The constraint context of a scenario with a given set of known refusals.
pub fn context(
    s: &Scenario,
    refused: impl IntoIterator<Item = WorkgroupSize>,
) -> Result<ConstraintContext> {
    ConstraintContext::new(
        s.device.device_max_wgsize,
        kernel_max_wgsize(&s.device, &s.kernel),
        refused,
    )
}

fn local_mem_bytes(device: &DeviceDescriptor) -> u64 {
    u64::from(device.local_mem_kb) * 1024
}

fn tile_elements(kernel: &KernelDescriptor, w: WorkgroupSize) -> u64 {
    (u64::from(w.cols) + u64::from(kernel.east + kernel.west))
        * (u64::from(w.rows) + u64::from(kernel.north + kernel.south))
}

fn tile_bytes(s: &Scenario, w: WorkgroupSize) -> u64 {
    tile_elements(&s.kernel, w) * u64::from(s.dataset.out_type.size_bytes())
}

/// Sizes with at most this many work-items never hit a driver refusal.
pub const ALWAYS_ACCEPTED_AREA: u64 = 16;

/// Base refusal probability per vendor class, before the multiple-of-eight
/// reduction.
pub fn refusal_rate(vendor: VendorClass) -> f64 {
    match vendor {
        VendorClass::IntelCpu => 0.08,
        VendorClass::NvidiaGpu => 0.03,
        VendorClass::AmdGpu => 0.0,
        VendorClass::Other => 0.02,
    }
}

/// Whether the simulated runtime rejects `w` for scenario `s`.
///
/// AMD devices never refuse. Elsewhere a size is refused if its tile does
/// not fit in local memory, or, for sizes above 16 work-items, with a
/// vendor-dependent probability that is four times lower when both
/// dimensions are multiples of eight.
pub fn is_refused(s: &Scenario, w: WorkgroupSize) -> bool {
    let vendor = s.device.vendor_class;
    if vendor == VendorClass::AmdGpu {
        return false;
    }
    if tile_bytes(s, w) > local_mem_bytes(&s.device) {
        return true;
    }
    if w.area() <= ALWAYS_ACCEPTED_AREA {
        return false;
    }
    let mut rate = refusal_rate(vendor);
    if w.cols.is_multiple_of(8) && w.rows.is_multiple_of(8) {
        rate /= 4.0;
    }
    let h = stable_hash(&[
        b"refuse",
        s.device.id.as_bytes(),
        s.kernel.name.as_bytes(),
        &w.cols.to_le_bytes(),
        &w.rows.to_le_bytes(),
    ]);
    unit_interval(h) < rate
}

struct DeviceModel {
    row_cost: f64,
    lmem_pressure: f64,
    launch_cost: f64,
    sched_slots: f64,
}

fn device_model(vendor: VendorClass) -> DeviceModel {
    let (row_cost, lmem_pressure, launch_cost, sched_slots) = match vendor {
        VendorClass::IntelCpu => (4.0, 0.3, 4000.0, 8.0),
        VendorClass::AmdGpu => (16.0, 1.2, 400.0, 64.0),
        VendorClass::NvidiaGpu => (32.0, 0.8, 300.0, 96.0),
        VendorClass::Other => (8.0, 0.5, 1000.0, 16.0),
    };
    DeviceModel {
        row_cost,
        lmem_pressure,
        launch_cost,
        sched_slots,
    }
}

/// Noise-free runtime of `w` in milliseconds. Does not check legality.
pub fn model_runtime(s: &Scenario, w: WorkgroupSize) -> f64 {
    let m = device_model(s.device.vendor_class);
    let k = &s.kernel;
    let elements = s.dataset.elements() as f64;
    let c = f64::from(w.cols);
    let area = w.area() as f64;

    let halo = tile_elements(k, w) as f64 / area;
    let simd = f64::from(s.device.simd_width);
    let simd_pad = (c / simd).ceil() * simd / c;
    let row = 1.0 + m.row_cost / c;
    let pressure =
        1.0 + m.lmem_pressure * tile_bytes(s, w) as f64 / local_mem_bytes(&s.device) as f64;

    let per_elem = (k.instr_counts.compute() as f64
        + k.instr_counts.memory() as f64 * halo * row)
        * simd_pad;
    let groups = elements / area;
    let work = (elements * per_elem * pressure + groups * m.launch_cost)
        * (1.0 + m.sched_slots / groups);
    let throughput = f64::from(s.device.compute_units) * f64::from(s.device.frequency_mhz);
    work * 1e-3 / throughput
}

/// `cfg.min_samples` simulated runtimes of `w`, in milliseconds.
pub fn run(s: &Scenario, w: WorkgroupSize, cfg: &OracleConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let max = s.device.device_max_wgsize.min(kernel_max_wgsize(&s.device, &s.kernel));
    if w.area() > u64::from(max) {
        return Err(Error::IllegalWorkgroupSize { wgsize: w, max });
    }
    if is_refused(s, w) {
        return Err(Error::RefusedParameter(w));
    }
    Ok(sample(s, w, cfg))
}

fn sample(s: &Scenario, w: WorkgroupSize, cfg: &OracleConfig) -> Vec<f64> {
    let base = model_runtime(s, w);
    if cfg.noise_sigma == 0.0 {
        return vec![base; cfg.min_samples];
    }
    let seed = stable_hash(&[
        b"noise",
        &cfg.seed.to_le_bytes(),
        s.id.as_bytes(),
        &w.cols.to_le_bytes(),
        &w.rows.to_le_bytes(),
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.min_samples)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            base * (cfg.noise_sigma * z).exp()
        })
        .collect()
}

/// Output of an exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    pub table: SampleTable,
    /// Refused sizes per scenario; every collected scenario has an entry.
    pub refused: RefusedRecord,
}

/// Runs every even-grid size within each scenario's maximum, recording
/// refusals instead of failing on them.
pub fn collect(scenarios: &[Scenario], cfg: &OracleConfig) -> Result<Collection> {
    cfg.validate()?;
    if scenarios.is_empty() {
        return Err(Error::InvalidArgument("no scenarios to collect".into()));
    }
    let mut table = SampleTable::new();
    let mut refused = BTreeMap::new();
    for s in scenarios {
        if refused.contains_key(&s.id) {
            return Err(Error::InvalidArgument(format!(
                "scenario `{}` listed twice",
                s.id
            )));
        }
        let ctx = context(s, [])?;
        let mut rejected = BTreeSet::new();
        for w in enumerate_space(ctx.effective_max())? {
            if is_refused(s, w) {
                rejected.insert(w);
            } else {
                table.insert(s.id.clone(), w, sample(s, w, cfg))?;
            }
        }
        refused.insert(s.id.clone(), rejected);
    }
    Ok(Collection { table, refused })
}

pub(crate) fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

//! Synthetic stencil benchmarks, the reference kernels and devices, and the
//! scenario fixtures built from them.
//!
//! Synthetic kernels come in two flavours selected by `complexity`:
//! lightweight kernels (67 to 137 instructions, weighted towards loads and
//! stores) and compute-intensive kernels (592 to 706 instructions, weighted
//! towards float arithmetic and loads). Borders are drawn from 1 to 30 cells
//! in each direction.

use std::collections::BTreeSet;

use rand::distr::{Distribution, weighted::WeightedIndex};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scenario::{
    DataType, DatasetDescriptor, DeviceDescriptor, DeviceType, InstructionCounts,
    KernelDescriptor, Scenario, VendorClass,
};

pub const SYNTHETIC_PREFIX: &str = "synthetic-";

pub const SYNTHETIC_BORDER: (u32, u32) = (1, 30);
pub const LIGHT_INSTRUCTIONS: (u64, u64) = (67, 137);
pub const HEAVY_INSTRUCTIONS: (u64, u64) = (592, 706);

// Category weights in `InstructionCounts::CATEGORIES` order.
const LIGHT_WEIGHTS: [f64; 8] = [0.35, 0.15, 0.20, 0.10, 0.08, 0.04, 0.02, 0.06];
const HEAVY_WEIGHTS: [f64; 8] = [0.25, 0.05, 0.15, 0.35, 0.06, 0.08, 0.02, 0.04];

pub fn generate_kernels(n: usize, seed: u64) -> Result<Vec<KernelDescriptor>> {
    if n < 1 {
        return Err(Error::InvalidArgument(
            "need at least one kernel".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let light = WeightedIndex::new(LIGHT_WEIGHTS).expect("valid weights");
    let heavy = WeightedIndex::new(HEAVY_WEIGHTS).expect("valid weights");

    let kernels = (0..n)
        .map(|k| {
            let complexity = rng.random_bool(0.5);
            let (lo, hi) = SYNTHETIC_BORDER;
            let mut border = || rng.random_range(lo..=hi);
            let (north, south, east, west) = (border(), border(), border(), border());
            let (lo, hi) = if complexity {
                HEAVY_INSTRUCTIONS
            } else {
                LIGHT_INSTRUCTIONS
            };
            let total = rng.random_range(lo..=hi);
            let split = if complexity { &heavy } else { &light };
            let mut counts = [0u64; 8];
            for _ in 0..total {
                counts[split.sample(&mut rng)] += 1;
            }
            KernelDescriptor {
                name: format!("{SYNTHETIC_PREFIX}{seed}-{k}"),
                north,
                south,
                east,
                west,
                instr_counts: InstructionCounts::from_array(counts),
                total_instructions: total,
                complexity,
            }
        })
        .collect();
    Ok(kernels)
}

pub fn is_synthetic(kernel: &KernelDescriptor) -> bool {
    kernel.name.starts_with(SYNTHETIC_PREFIX)
}

pub const DEFAULT_GAUSSIAN_BORDER: u32 = 5;

/// The six real-world stencil kernels with the default gaussian border.
pub fn reference_kernels() -> Vec<KernelDescriptor> {
    reference_kernels_with(DEFAULT_GAUSSIAN_BORDER).expect("default border is in range")
}

/// The six real-world stencil kernels; the gaussian blur radius is
/// configurable from 1 to 10. Per-category splits are fixture values that sum
/// to the published totals.
pub fn reference_kernels_with(gaussian_border: u32) -> Result<Vec<KernelDescriptor>> {
    if !(1..=10).contains(&gaussian_border) {
        return Err(Error::InvalidArgument(format!(
            "gaussian border {gaussian_border} outside 1..=10"
        )));
    }
    let kernel = |name: &str, border: u32, counts: [u64; 8]| {
        let instr_counts = InstructionCounts::from_array(counts);
        KernelDescriptor {
            name: name.to_string(),
            north: border,
            south: border,
            east: border,
            west: border,
            total_instructions: instr_counts.sum(),
            instr_counts,
            complexity: false,
        }
    };
    Ok(vec![
        kernel("gaussian", gaussian_border, [26, 2, 16, 24, 6, 0, 2, 6]),
        kernel("gol", 1, [40, 12, 70, 0, 30, 0, 4, 34]),
        kernel("he", 1, [22, 4, 20, 40, 8, 0, 2, 17]),
        kernel("nms", 1, [48, 10, 52, 44, 36, 0, 6, 28]),
        kernel("sobel", 1, [54, 8, 58, 70, 20, 4, 8, 24]),
        kernel("threshold", 0, [6, 4, 12, 8, 6, 0, 2, 8]),
    ])
}

pub const DATASET_SIZES: [u32; 4] = [512, 1024, 2048, 4096];

/// Square datasets of each size crossed with the three same-type pairs.
pub fn generate_datasets() -> Vec<DatasetDescriptor> {
    let mut out = Vec::with_capacity(12);
    for size in DATASET_SIZES {
        for ty in [DataType::Int32, DataType::Float32, DataType::Float64] {
            out.push(DatasetDescriptor {
                width: size,
                height: size,
                in_type: ty,
                out_type: ty,
            });
        }
    }
    out
}

/// Seven OpenCL devices modelled on a mixed CPU/GPU test bed: three Intel
/// CPUs, one AMD GPU and three Nvidia GPUs.
///
/// Maximum workgroup sizes and SIMD widths are simulator inputs; the CPU
/// maximum is kept at 1024 so the exhaustive enumeration stays small.
pub fn reference_devices() -> Vec<DeviceDescriptor> {
    let dev = |id: &str,
               device_type,
               vendor_class,
               compute_units,
               frequency_mhz,
               local_mem_kb,
               global_cache_kb,
               global_mem_mb,
               device_max_wgsize,
               simd_width| DeviceDescriptor {
        id: id.to_string(),
        device_type,
        vendor_class,
        compute_units,
        frequency_mhz,
        local_mem_kb,
        global_cache_kb,
        global_mem_mb,
        device_max_wgsize,
        simd_width,
    };
    use DeviceType::{Cpu, Gpu};
    use VendorClass::{AmdGpu, IntelCpu, NvidiaGpu};
    vec![
        dev("i5-2430M", Cpu, IntelCpu, 4, 2400, 32, 256, 7937, 1024, 8),
        dev("i5-4570", Cpu, IntelCpu, 4, 3200, 32, 256, 7901, 1024, 8),
        dev("i7-3820", Cpu, IntelCpu, 8, 1200, 32, 256, 7944, 1024, 8),
        dev("tahiti-7970", Gpu, AmdGpu, 32, 1000, 32, 16, 2959, 256, 64),
        dev("gtx-590", Gpu, NvidiaGpu, 1, 1215, 48, 256, 1536, 1024, 32),
        dev("gtx-690", Gpu, NvidiaGpu, 8, 1019, 48, 128, 2048, 1024, 32),
        dev("gtx-titan", Gpu, NvidiaGpu, 14, 980, 48, 224, 6144, 1024, 32),
    ]
}

/// Builds `n_synthetic` scenarios over synthetic kernels and `n_real` over
/// the reference kernels. Devices are assigned round-robin so every device
/// appears once there are at least seven scenarios of a kind; datasets are
/// drawn at random. No scenario id repeats.
pub fn fixture_scenarios(n_synthetic: usize, n_real: usize, seed: u64) -> Result<Vec<Scenario>> {
    let devices = reference_devices();
    let datasets = generate_datasets();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1c7);
    let synthetic = generate_kernels(n_synthetic.div_ceil(2).max(1), seed)?;
    let real = reference_kernels();

    let capacity = |kernels: usize| kernels * devices.len() * datasets.len();
    if n_synthetic > capacity(synthetic.len()) || n_real > capacity(real.len()) {
        return Err(Error::InvalidArgument(
            "more scenarios requested than distinct combinations".into(),
        ));
    }

    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n_synthetic + n_real);
    pick(&synthetic, n_synthetic, &mut rng, &mut seen, &mut out)?;
    pick(&real, n_real, &mut rng, &mut seen, &mut out)?;
    Ok(out)
}

/// `n` distinct scenarios over `kernels`, the reference devices and the
/// generated datasets, chosen the same way as [`fixture_scenarios`].
pub fn generate_scenarios(
    kernels: &[KernelDescriptor],
    n: usize,
    seed: u64,
) -> Result<Vec<Scenario>> {
    if kernels.is_empty() && n > 0 {
        return Err(Error::InvalidArgument("no kernels to build scenarios from".into()));
    }
    if n > kernels.len() * reference_devices().len() * generate_datasets().len() {
        return Err(Error::InvalidArgument(
            "more scenarios requested than distinct combinations".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1c7);
    let mut out = Vec::with_capacity(n);
    pick(kernels, n, &mut rng, &mut BTreeSet::new(), &mut out)?;
    Ok(out)
}

fn pick(
    kernels: &[KernelDescriptor],
    count: usize,
    rng: &mut ChaCha8Rng,
    seen: &mut BTreeSet<String>,
    out: &mut Vec<Scenario>,
) -> Result<()> {
    let devices = reference_devices();
    let datasets = generate_datasets();
    let mut made = 0;
    let mut i = 0usize;
    while made < count {
        let device = &devices[i % devices.len()];
        let kernel = &kernels[(i / devices.len() + i) % kernels.len()];
        let dataset = *datasets.choose(rng).expect("non-empty");
        i += 1;
        let s = Scenario::new(device.clone(), kernel.clone(), dataset)?;
        if seen.insert(s.id.clone()) {
            out.push(s);
            made += 1;
        }
    }
    Ok(())
}

pub const STANDARD_FIXTURE_SEED: u64 = 7;

/// The 50-scenario fixture: 40 synthetic-kernel and 10 real-kernel
/// scenarios across all seven devices.
pub fn standard_fixture() -> Vec<Scenario> {
    fixture_scenarios(40, 10, STANDARD_FIXTURE_SEED).expect("fixture parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_are_seeded() {
        let a = generate_kernels(5, 42).unwrap();
        assert_eq!(a, generate_kernels(5, 42).unwrap());
        assert_ne!(a, generate_kernels(5, 43).unwrap());
        assert!(generate_kernels(0, 1).is_err());
        assert!(a.iter().all(is_synthetic));
        assert_eq!(a[3].name, "synthetic-42-3");
    }

    #[test]
    fn reference_kernel_table() {
        let ks = reference_kernels();
        assert_eq!(ks.len(), 6);
        let get = |n: &str| ks.iter().find(|k| k.name == n).unwrap();
        assert_eq!(get("gol").borders(), [1, 1, 1, 1]);
        assert_eq!(get("gol").total_instructions, 190);
        assert_eq!(get("threshold").borders(), [0, 0, 0, 0]);
        assert_eq!(get("threshold").total_instructions, 46);
        assert_eq!(get("gaussian").total_instructions, 82);
        assert_eq!(get("gaussian").borders(), [5; 4]);
        assert_eq!(get("he").total_instructions, 113);
        assert_eq!(get("nms").total_instructions, 224);
        assert_eq!(get("sobel").total_instructions, 246);
        for k in &ks {
            k.validate().unwrap();
            assert!(!is_synthetic(k));
        }
        let g = reference_kernels_with(10).unwrap();
        assert_eq!(g[0].borders(), [10; 4]);
        assert!(reference_kernels_with(11).is_err());
    }

    #[test]
    fn datasets() {
        let ds = generate_datasets();
        assert_eq!(ds.len(), 12);
        assert!(ds.iter().all(|d| d.width == d.height));
        assert!(ds.contains(&DatasetDescriptor {
            width: 512,
            height: 512,
            in_type: DataType::Float32,
            out_type: DataType::Float32,
        }));
    }

    #[test]
    fn devices_are_valid() {
        let ds = reference_devices();
        assert_eq!(ds.len(), 7);
        for d in &ds {
            d.validate().unwrap();
        }
    }

    #[test]
    fn standard_fixture_shape() {
        let f = standard_fixture();
        assert_eq!(f.len(), 50);
        let synth = f.iter().filter(|s| is_synthetic(&s.kernel)).count();
        assert_eq!(synth, 40);
        let devices: BTreeSet<_> = f.iter().map(|s| s.device.id.as_str()).collect();
        assert_eq!(devices.len(), 7);
        let ids: BTreeSet<_> = f.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids.len(), 50);
        assert_eq!(f, standard_fixture());
    }
}

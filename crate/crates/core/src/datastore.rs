//! Files on disk.
//!
//! * Samples: CSV `scenario_id,w_c,w_r,runtime_ms`, one line per observed
//!   runtime. Lines of one test case must be adjacent.
//! * Refused sizes: CSV `scenario_id,w_c,w_r`.
//! * Descriptors: one JSON document each under `devices/`, `kernels/` and
//!   `datasets/` of a descriptor directory, plus `scenarios.json`, a JSON
//!   array of the scenario ids built from them.
//! * External measurements: CSV
//!   `device,kernel,width,height,in_type,out_type,w_c,w_r,runtime_ms`, where
//!   device and kernel name registered descriptors. Repeated test cases are
//!   merged.
//! * Models: JSON.
//!
//! Runtimes are written in the shortest decimal form that parses back to the
//! same `f64`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{
    parse_scenario_id, DataType, DatasetDescriptor, DeviceDescriptor, KernelDescriptor, Scenario,
};
use crate::space::{RefusedRecord, SampleTable, WorkgroupSize};

pub const SAMPLES_HEADER: [&str; 4] = ["scenario_id", "w_c", "w_r", "runtime_ms"];
pub const REFUSED_HEADER: [&str; 3] = ["scenario_id", "w_c", "w_r"];
pub const EXTERNAL_HEADER: [&str; 9] = [
    "device",
    "kernel",
    "width",
    "height",
    "in_type",
    "out_type",
    "w_c",
    "w_r",
    "runtime_ms",
];

pub const DEVICES_DIR: &str = "devices";
pub const KERNELS_DIR: &str = "kernels";
pub const DATASETS_DIR: &str = "datasets";
pub const MANIFEST: &str = "scenarios.json";

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => parse_err(line, format!("{kind:?}")),
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(r)
}

/// Iterates data records after checking the header, yielding line numbers.
fn records<R: Read>(
    r: R,
    header: &[&str],
) -> Result<impl Iterator<Item = Result<(u64, csv::StringRecord)>>> {
    let mut rdr = reader(r);
    let mut it = rdr.records();
    match it.next() {
        None => return Err(parse_err(1, "missing header")),
        Some(rec) => {
            let rec = rec.map_err(csv_err)?;
            if rec.iter().ne(header.iter().copied()) {
                return Err(parse_err(
                    1,
                    format!("expected header `{}`", header.join(",")),
                ));
            }
        }
    }
    let n = header.len();
    Ok(rdr.into_records().map(move |rec| {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != n {
            return Err(parse_err(
                line,
                format!("expected {n} fields, found {}", rec.len()),
            ));
        }
        Ok((line, rec))
    }))
}

fn field_u32(line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<u32> {
    rec[i]
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{name} `{}` is not a non-negative integer", &rec[i])))
}

fn field_wgsize(line: u64, rec: &csv::StringRecord, c: usize, r: usize) -> Result<WorkgroupSize> {
    let cols = field_u32(line, rec, c, "w_c")?;
    let rows = field_u32(line, rec, r, "w_r")?;
    WorkgroupSize::try_new(cols, rows).map_err(|e| parse_err(line, e.to_string()))
}

fn field_runtime(line: u64, rec: &csv::StringRecord, i: usize) -> Result<f64> {
    let t: f64 = rec[i]
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("runtime `{}` is not a number", &rec[i])))?;
    if !(t.is_finite() && t > 0.0) {
        return Err(parse_err(line, format!("runtime {t} is not positive and finite")));
    }
    Ok(t)
}

pub fn write_samples<W: Write>(table: &SampleTable, w: W) -> Result<()> {
    let mut out = BufWriter::new(w);
    writeln!(out, "{}", SAMPLES_HEADER.join(","))?;
    for (id, size, case) in table.rows() {
        for t in case.runtimes() {
            writeln!(out, "{id},{},{},{t}", size.cols, size.rows)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_samples<R: Read>(r: R) -> Result<SampleTable> {
    let mut table = SampleTable::new();
    let mut current: Option<(String, WorkgroupSize, Vec<f64>)> = None;
    let mut seen: BTreeSet<(String, WorkgroupSize)> = BTreeSet::new();

    let flush = |table: &mut SampleTable, group: Option<(String, WorkgroupSize, Vec<f64>)>| {
        if let Some((id, w, ts)) = group {
            table.insert(id, w, ts)?;
        }
        Ok::<_, Error>(())
    };

    for rec in records(r, &SAMPLES_HEADER)? {
        let (line, rec) = rec?;
        let id = &rec[0];
        if id.is_empty() {
            return Err(parse_err(line, "empty scenario id"));
        }
        let w = field_wgsize(line, &rec, 1, 2)?;
        let t = field_runtime(line, &rec, 3)?;
        match &mut current {
            Some((cid, cw, ts)) if cid == id && *cw == w => ts.push(t),
            _ => {
                if !seen.insert((id.to_string(), w)) {
                    return Err(Error::DuplicateTestCase {
                        scenario: id.to_string(),
                        wgsize: w,
                    });
                }
                flush(&mut table, current.take())?;
                current = Some((id.to_string(), w, vec![t]));
            }
        }
    }
    flush(&mut table, current)?;
    Ok(table)
}

pub fn save_samples(table: &SampleTable, path: impl AsRef<Path>) -> Result<()> {
    write_samples(table, File::create(path)?)
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<SampleTable> {
    read_samples(BufReader::new(File::open(path)?))
}

pub fn write_refused<W: Write>(record: &RefusedRecord, w: W) -> Result<()> {
    let mut out = BufWriter::new(w);
    writeln!(out, "{}", REFUSED_HEADER.join(","))?;
    for (id, sizes) in record {
        for size in sizes {
            writeln!(out, "{id},{},{}", size.cols, size.rows)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_refused<R: Read>(r: R) -> Result<RefusedRecord> {
    let mut record = RefusedRecord::new();
    for rec in records(r, &REFUSED_HEADER)? {
        let (line, rec) = rec?;
        if rec[0].is_empty() {
            return Err(parse_err(line, "empty scenario id"));
        }
        let w = field_wgsize(line, &rec, 1, 2)?;
        record.entry(rec[0].to_string()).or_default().insert(w);
    }
    Ok(record)
}

pub fn save_refused(record: &RefusedRecord, path: impl AsRef<Path>) -> Result<()> {
    write_refused(record, File::create(path)?)
}

pub fn load_refused(path: impl AsRef<Path>) -> Result<RefusedRecord> {
    read_refused(BufReader::new(File::open(path)?))
}

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

fn dataset_file_stem(d: &DatasetDescriptor) -> String {
    d.key().replace('/', "_")
}

/// Device, kernel and dataset descriptors keyed by id, name and dataset key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescriptorStore {
    pub devices: BTreeMap<String, DeviceDescriptor>,
    pub kernels: BTreeMap<String, KernelDescriptor>,
    pub datasets: BTreeMap<String, DatasetDescriptor>,
    /// Scenario ids from the manifest, in file order.
    pub scenario_ids: Vec<String>,
}

impl DescriptorStore {
    /// Registers the descriptors of `scenarios` and lists them in the
    /// manifest.
    pub fn from_scenarios(scenarios: &[Scenario]) -> Self {
        let mut store = Self::default();
        for s in scenarios {
            store.devices.insert(s.device.id.clone(), s.device.clone());
            store.kernels.insert(s.kernel.name.clone(), s.kernel.clone());
            store.datasets.insert(s.dataset.key(), s.dataset);
            store.scenario_ids.push(s.id.clone());
        }
        store
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for sub in [DEVICES_DIR, KERNELS_DIR, DATASETS_DIR] {
            fs::create_dir_all(dir.join(sub))?;
        }
        for (id, d) in &self.devices {
            save_json(d, dir.join(DEVICES_DIR).join(format!("{id}.json")))?;
        }
        for (name, k) in &self.kernels {
            save_json(k, dir.join(KERNELS_DIR).join(format!("{name}.json")))?;
        }
        for d in self.datasets.values() {
            save_json(
                d,
                dir.join(DATASETS_DIR)
                    .join(format!("{}.json", dataset_file_stem(d))),
            )?;
        }
        save_json(&self.scenario_ids, dir.join(MANIFEST))
    }

    /// Reads every descriptor in `dir`. A missing manifest means no
    /// scenarios are listed.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("descriptor directory {} not found", dir.display()),
            )));
        }
        let mut store = Self::default();
        for d in load_all::<DeviceDescriptor>(&dir.join(DEVICES_DIR))? {
            d.validate()?;
            store.devices.insert(d.id.clone(), d);
        }
        for k in load_all::<KernelDescriptor>(&dir.join(KERNELS_DIR))? {
            k.validate()?;
            store.kernels.insert(k.name.clone(), k);
        }
        for d in load_all::<DatasetDescriptor>(&dir.join(DATASETS_DIR))? {
            d.validate()?;
            store.datasets.insert(d.key(), d);
        }
        let manifest = dir.join(MANIFEST);
        if manifest.exists() {
            store.scenario_ids = load_json(manifest)?;
        }
        Ok(store)
    }

    /// Builds the scenario named by `id` from registered descriptors.
    pub fn resolve(&self, id: &str) -> Result<Scenario> {
        let (device, kernel, dataset) =
            parse_scenario_id(id).map_err(|_| Error::UnknownScenario(id.to_string()))?;
        self.build(device, kernel, dataset)
            .map_err(|_| Error::UnknownScenario(id.to_string()))
    }

    fn build(&self, device: &str, kernel: &str, dataset: DatasetDescriptor) -> Result<Scenario> {
        let unknown = || Error::UnknownScenario(format!("{device}/{kernel}/{}", dataset.key()));
        let d = self.devices.get(device).ok_or_else(unknown)?;
        let k = self.kernels.get(kernel).ok_or_else(unknown)?;
        Scenario::new(d.clone(), k.clone(), dataset)
    }

    /// The scenarios listed in the manifest.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        self.scenario_ids.iter().map(|id| self.resolve(id)).collect()
    }
}

fn load_all<T: DeserializeOwned>(dir: &Path) -> Result<Vec<T>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths.into_iter().map(load_json).collect()
}

/// Reads externally measured runtimes, keyed to scenarios whose device and
/// kernel are registered in `descriptor_dir`.
pub fn import_external(path: impl AsRef<Path>, descriptor_dir: impl AsRef<Path>) -> Result<SampleTable> {
    let store = DescriptorStore::load(descriptor_dir)?;
    read_external(BufReader::new(File::open(path)?), &store)
}

pub fn read_external<R: Read>(r: R, store: &DescriptorStore) -> Result<SampleTable> {
    let mut table = SampleTable::new();
    for rec in records(r, &EXTERNAL_HEADER)? {
        let (line, rec) = rec?;
        let dataset = DatasetDescriptor {
            width: field_u32(line, &rec, 2, "width")?,
            height: field_u32(line, &rec, 3, "height")?,
            in_type: DataType::parse(rec[4].trim()).map_err(|e| parse_err(line, e.to_string()))?,
            out_type: DataType::parse(rec[5].trim()).map_err(|e| parse_err(line, e.to_string()))?,
        };
        dataset
            .validate()
            .map_err(|e| parse_err(line, e.to_string()))?;
        let w = field_wgsize(line, &rec, 6, 7)?;
        let t = field_runtime(line, &rec, 8)?;
        let s = store.build(rec[0].trim(), rec[1].trim(), dataset)?;
        table.append(s.id, w, &[t])?;
    }
    Ok(table)
}

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::{json, Value};
use tempfile::TempDir;
use wgtune::bench::read_metrics;
use wgtune::datastore::{self, load_json, DescriptorStore};
use wgtune::features::extract;
use wgtune::space::enumerate_space;
use wgtune::tuner::{fitness, TunerModel};
use wgtune::WorkgroupSize;

fn wgtune(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wgtune"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = wgtune(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Descriptors and noisy samples for 16 synthetic and 4 real scenarios.
fn corpus() -> TempDir {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["generate", "--kernels", "4", "--scenarios", "16", "--real", "4", "--seed", "3", "--out", "desc"]);
    ok(tmp.path(), &["collect", "--scenarios", "desc", "--out", "samples.csv"]);
    tmp
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push((entry.clone(), fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn generate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["generate", "--kernels", "10", "--seed", "1", "--out", "a"]);
    ok(tmp.path(), &["generate", "--kernels", "10", "--seed", "1", "--out", "b"]);
    assert_eq!(fs::read_dir(tmp.path().join("a/kernels")).unwrap().count(), 10);
    assert_eq!(fs::read_dir(tmp.path().join("a/devices")).unwrap().count(), 7);
    let strip = |root: &str| {
        files(&tmp.path().join(root))
            .into_iter()
            .map(|(p, b)| (p.strip_prefix(tmp.path().join(root)).unwrap().to_path_buf(), b))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip("a"), strip("b"));
}

#[test]
fn generate_into_unwritable_path_is_input_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("blocker"), "").unwrap();
    let out = wgtune(tmp.path(), &["generate", "--kernels", "2", "--out", "blocker/sub"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn collect_defaults_and_reruns() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--kernels", "2", "--scenarios", "5", "--seed", "4", "--out", "desc"]);
    ok(dir, &["collect", "--scenarios", "desc", "--out", "s.csv"]);
    let table = datastore::load_samples(dir.join("s.csv")).unwrap();
    assert!(table.rows().all(|(_, _, case)| case.runtimes().len() >= 30));

    let refused = datastore::load_refused(dir.join("refused.csv")).unwrap();
    for (id, sizes) in &refused {
        for w in sizes {
            assert!(table.get(id, *w).is_none());
        }
    }

    let quiet = ["collect", "--scenarios", "desc", "--noise", "0", "--samples", "3"];
    ok(dir, &[&quiet[..], &["--out", "q1.csv", "--refused", "r1.csv"]].concat());
    ok(dir, &[&quiet[..], &["--out", "q2.csv", "--refused", "r2.csv"]].concat());
    assert_eq!(fs::read(dir.join("q1.csv")).unwrap(), fs::read(dir.join("q2.csv")).unwrap());
    assert_eq!(fs::read(dir.join("r1.csv")).unwrap(), fs::read(dir.join("r2.csv")).unwrap());
}

#[test]
fn collect_without_descriptors_fails() {
    let tmp = TempDir::new().unwrap();
    let out = wgtune(tmp.path(), &["collect", "--scenarios", "missing", "--out", "s.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

fn mean_performance(dir: &Path, csv: &str) -> f64 {
    let rows = read_metrics(fs::File::open(dir.join(csv)).unwrap()).unwrap();
    rows.iter().map(|r| r.performance).sum::<f64>() / rows.len() as f64
}

#[test]
fn evaluate_writes_metrics() {
    let tmp = corpus();
    let dir = tmp.path();
    let base = ["evaluate", "--partition", "kfold", "--scenarios", "desc", "--samples", "samples.csv"];
    let stdout = ok(dir, &[&base[..], &["--technique", "tree-nn", "--out", "tree.csv"]].concat());
    assert!(stdout.contains("tree-nn"));
    let rows = read_metrics(fs::File::open(dir.join("tree.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 20);

    ok(dir, &[&base[..], &["--technique", "speedup-reg", "--out", "reg.csv"]].concat());
    ok(dir, &[&base[..], &["--technique", "zeror-baseline", "--out", "zeror.csv"]].concat());
    assert!(mean_performance(dir, "reg.csv") >= mean_performance(dir, "zeror.csv"));
}

#[test]
fn evaluate_other_partitions() {
    let tmp = corpus();
    let dir = tmp.path();
    for p in ["synthreal", "loo-device", "loo-kernel", "loo-dataset"] {
        ok(dir, &["evaluate", "--technique", "forest-nn,baseline", "--partition", p, "--scenarios", "desc", "--samples", "samples.csv", "--out", "m.csv"]);
    }
}

#[test]
fn evaluate_usage_errors() {
    let tmp = corpus();
    let dir = tmp.path();
    let out = wgtune(dir, &["evaluate", "--technique", "svm-nn", "--partition", "kfold", "--scenarios", "desc", "--samples", "samples.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown technique"));

    ok(dir, &["generate", "--kernels", "1", "--scenarios", "1", "--out", "one"]);
    ok(dir, &["collect", "--scenarios", "one", "--samples", "2", "--out", "one.csv", "--refused", "one-refused.csv"]);
    let out = wgtune(dir, &["evaluate", "--technique", "tree-nn", "--partition", "loo-device", "--scenarios", "one", "--samples", "one.csv", "--refused", "one-refused.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid partition"));
}

#[test]
fn train_rejects_model_free_techniques() {
    let tmp = corpus();
    let out = wgtune(tmp.path(), &["train", "--technique", "oracle", "--scenarios", "desc", "--samples", "samples.csv", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn import_external_runtimes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--kernels", "1", "--scenarios", "1", "--out", "desc"]);
    let store = DescriptorStore::load(dir.join("desc")).unwrap();
    let s = store.scenarios().unwrap().remove(0);
    let mut csv = String::from("device,kernel,width,height,in_type,out_type,w_c,w_r,runtime_ms\n");
    for t in [1.5, 2.5] {
        csv += &format!(
            "{},{},{},{},{},{},4,2,{t}\n",
            s.device.id, s.kernel.name, s.dataset.width, s.dataset.height, s.dataset.in_type, s.dataset.out_type
        );
    }
    fs::write(dir.join("ext.csv"), csv).unwrap();
    ok(dir, &["import", "--input", "ext.csv", "--scenarios", "desc", "--out", "s.csv"]);
    let table = datastore::load_samples(dir.join("s.csv")).unwrap();
    assert_eq!(table.mean_runtime(&s.id, WorkgroupSize::new(4, 2)).unwrap(), 2.0);
}

struct Daemon {
    child: Child,
    addr: String,
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_daemon(dir: &Path, model: &str) -> Daemon {
    let mut child = Command::new(env!("CARGO_BIN_EXE_wgtune"))
        .current_dir(dir)
        .args(["serve", "--model", model, "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    Daemon { child, addr }
}

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    fn connect(addr: &str) -> Self {
        let s = TcpStream::connect(addr).unwrap();
        Self {
            reader: BufReader::new(s.try_clone().unwrap()),
            writer: s,
        }
    }

    fn send(&mut self, msg: &str) -> Value {
        self.writer.write_all(msg.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap()
    }
}

fn size(v: &Value) -> WorkgroupSize {
    assert_eq!(v["type"], "wgsize", "{v}");
    WorkgroupSize::new(v["w_c"].as_u64().unwrap() as u32, v["w_r"].as_u64().unwrap() as u32)
}

fn refuse(id: &str, w: WorkgroupSize) -> String {
    json!({"type": "refused", "scenario_id": id, "w_c": w.cols, "w_r": w.rows}).to_string()
}

#[test]
fn daemon_round_trips() {
    let tmp = corpus();
    let dir = tmp.path();
    ok(dir, &["train", "--technique", "forest-nn", "--scenarios", "desc", "--samples", "samples.csv", "--out", "model.json"]);
    let daemon = start_daemon(dir, "model.json");
    let s = DescriptorStore::load(dir.join("desc")).unwrap().scenarios().unwrap().remove(0);
    let predict = json!({"type": "predict", "scenario": s, "max_wgsize": 256, "refused": []}).to_string();

    let mut a = Client::connect(&daemon.addr);
    let mut b = Client::connect(&daemon.addr);
    let first = size(&a.send(&predict));
    assert_eq!(size(&b.send(&predict)), first);
    assert!(first.area() <= 256);

    let second = size(&a.send(&refuse(&s.id, first)));
    assert_ne!(second, first);
    assert!(second.area() <= 256);

    // Refusals stay with the connection that reported them.
    assert_eq!(size(&b.send(&predict)), first);

    assert_eq!(a.send("{oops")["type"], "error");
    assert_eq!(a.send(&refuse("no/such/scenario", first))["type"], "error");
    let third = size(&a.send(&refuse(&s.id, second)));
    assert!(third != first && third != second);
}

#[test]
fn daemon_self_correction_count() {
    let tmp = corpus();
    let dir = tmp.path();
    ok(dir, &["train", "--technique", "speedup-reg", "--scenarios", "desc", "--samples", "samples.csv", "--out", "reg.json"]);
    let model: TunerModel = load_json(dir.join("reg.json")).unwrap();
    let TunerModel::Regressor { model: reg, fitness: mode } = &model else {
        panic!("expected a regressor");
    };
    let s = DescriptorStore::load(dir.join("desc")).unwrap().scenarios().unwrap().remove(3);
    let max = 256.min(s.device.device_max_wgsize);
    let candidates = enumerate_space(max).unwrap();
    let values = reg.predict_many(&extract(&s), &candidates).unwrap();
    let mut ranked: Vec<(f64, WorkgroupSize)> = values
        .iter()
        .zip(&candidates)
        .map(|(&x, &w)| (fitness(*mode, x).unwrap(), w))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let daemon = start_daemon(dir, "reg.json");
    let predict = json!({"type": "predict", "scenario": s, "max_wgsize": 256}).to_string();
    for k in [0usize, 1, 2, 5] {
        // The client refuses the k sizes the model likes best.
        let bad: BTreeSet<WorkgroupSize> = ranked[..k].iter().map(|r| r.1).collect();
        let mut c = Client::connect(&daemon.addr);
        let mut w = size(&c.send(&predict));
        let mut proposals = 1;
        while bad.contains(&w) {
            w = size(&c.send(&refuse(&s.id, w)));
            proposals += 1;
            assert!(proposals <= k + 1);
        }
        assert_eq!(proposals, k + 1);
        assert_eq!(w, ranked[k].1);
    }
}

#[test]
fn busy_port_exits_with_usage_error() {
    let tmp = corpus();
    let dir = tmp.path();
    ok(dir, &["train", "--technique", "tree-baseline", "--scenarios", "desc", "--samples", "samples.csv", "--out", "model.json"]);
    let holder = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port().to_string();
    let out = wgtune(dir, &["serve", "--model", "model.json", "--port", &port]);
    assert_eq!(out.status.code(), Some(2));
}

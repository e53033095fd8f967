//! `wgtune` command-line tool.
//!
//! Exit codes: 0 on success, 1 on an internal error, 2 on bad usage or
//! unusable input.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wgtune::bench::{self, Corpus, Dimension, EvalConfig, Split, Technique};
use wgtune::datastore::{self, DescriptorStore};
use wgtune::simoracle::{self, OracleConfig};
use wgtune::space::RefusedRecord;
use wgtune::synthgen;
use wgtune::tuner::TunerModel;
use wgtune::{serve, Error};

#[derive(Parser)]
#[command(name = "wgtune", version, about = "Workgroup size autotuning for stencil kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write device, kernel and dataset descriptors plus a scenario list.
    Generate(GenerateArgs),
    /// Run every scenario exhaustively on the simulated oracle.
    Collect(CollectArgs),
    /// Train a tuner on every sampled scenario and save it as JSON.
    Train(TrainArgs),
    /// Cross-validate techniques and report their metrics.
    Evaluate(EvaluateArgs),
    /// Answer workgroup size requests over TCP.
    Serve(ServeArgs),
    /// Convert externally measured runtimes into a samples file.
    Import(ImportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of synthetic kernels.
    #[arg(long)]
    kernels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenarios over synthetic kernels [default: 4 per kernel]
    #[arg(long)]
    scenarios: Option<usize>,
    /// Scenarios over the reference (non-synthetic) kernels.
    #[arg(long, default_value_t = 0)]
    real: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CollectArgs {
    /// Descriptor directory written by `generate`.
    #[arg(long)]
    scenarios: PathBuf,
    #[arg(long, default_value_t = 30)]
    samples: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write refused sizes [default: refused.csv next to --out]
    #[arg(long)]
    refused: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    scenarios: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    /// Refused sizes from `collect` [default: refused.csv next to --samples, if present]
    #[arg(long)]
    refused: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// e.g. forest-nn, tree-baseline, speedup-reg.
    #[arg(long)]
    technique: String,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Partition {
    Kfold,
    Synthreal,
    LooDevice,
    LooKernel,
    LooDataset,
}

#[derive(Args)]
struct EvaluateArgs {
    /// A technique name, a comma-separated list, or `all`.
    #[arg(long)]
    technique: String,
    #[arg(long, value_enum)]
    partition: Partition,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-scenario metrics CSV.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 0)]
    port: u16,
}

#[derive(Args)]
struct ImportArgs {
    /// CSV with header device,kernel,width,height,in_type,out_type,w_c,w_r,runtime_ms.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    scenarios: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NoLegalParameter(_) | Error::InvalidPrediction(_) => {
                Failure::Internal(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Collect(a) => collect(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Serve(a) => run_server(a),
        Command::Import(a) => import(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn generate(a: GenerateArgs) -> CmdResult {
    let kernels = synthgen::generate_kernels(a.kernels, a.seed)?;
    let n = a.scenarios.unwrap_or(4 * a.kernels);
    let mut scenarios = synthgen::generate_scenarios(&kernels, n, a.seed)?;
    if a.real > 0 {
        let real = synthgen::reference_kernels();
        scenarios.extend(synthgen::generate_scenarios(&real, a.real, a.seed)?);
    }
    let mut store = DescriptorStore::from_scenarios(&scenarios);
    for d in synthgen::reference_devices() {
        store.devices.insert(d.id.clone(), d);
    }
    for k in kernels {
        store.kernels.insert(k.name.clone(), k);
    }
    for d in synthgen::generate_datasets() {
        store.datasets.insert(d.key(), d);
    }
    store.save(&a.out)?;
    println!(
        "wrote {} devices, {} kernels, {} datasets and {} scenarios to {}",
        store.devices.len(),
        store.kernels.len(),
        store.datasets.len(),
        store.scenario_ids.len(),
        a.out.display()
    );
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn collect(a: CollectArgs) -> CmdResult {
    let store = DescriptorStore::load(&a.scenarios)?;
    let scenarios = store.scenarios()?;
    if scenarios.is_empty() {
        return Err(Failure::Usage(format!(
            "no scenarios listed in {}",
            a.scenarios.display()
        )));
    }
    let cfg = OracleConfig {
        noise_sigma: a.noise,
        seed: a.seed,
        min_samples: a.samples,
    };
    let c = simoracle::collect(&scenarios, &cfg)?;
    let refused_path = a.refused.unwrap_or_else(|| sibling(&a.out, "refused.csv"));
    datastore::save_samples(&c.table, &a.out)?;
    datastore::save_refused(&c.refused, &refused_path)?;
    println!(
        "{} test cases over {} scenarios; refusals in {}",
        c.table.len(),
        scenarios.len(),
        refused_path.display()
    );
    Ok(())
}

fn load_corpus(a: &CorpusArgs) -> Result<Corpus, Failure> {
    let store = DescriptorStore::load(&a.scenarios)?;
    let table = datastore::load_samples(&a.samples)?;
    let refused: RefusedRecord = match &a.refused {
        Some(p) => datastore::load_refused(p)?,
        None => {
            let p = sibling(&a.samples, "refused.csv");
            if p.exists() {
                datastore::load_refused(p)?
            } else {
                RefusedRecord::new()
            }
        }
    };
    let scenarios = table
        .scenario_ids()
        .map(|id| store.resolve(id))
        .collect::<wgtune::Result<Vec<_>>>()?;
    Ok(Corpus::new(scenarios, table, refused))
}

fn parse_technique(s: &str) -> Result<Technique, Failure> {
    s.parse().map_err(|_| {
        Failure::Usage(format!(
            "unknown technique `{s}`; expected {{zeror,nb,tree,forest}}-{{baseline,random,nn}}, \
             runtime-reg, speedup-reg, oracle, baseline or all"
        ))
    })
}

fn train(a: TrainArgs) -> CmdResult {
    let technique = parse_technique(&a.technique)?;
    let corpus = load_corpus(&a.corpus)?;
    let ids: Vec<String> = corpus.scenarios.keys().cloned().collect();
    let ranked = corpus.baseline_ranking(&ids, &ids)?;
    let cfg = EvalConfig {
        seed: a.seed,
        ..EvalConfig::default()
    };
    let model = bench::train_model(technique, &corpus, &ids, &ranked, &cfg)?
        .ok_or_else(|| Failure::Usage(format!("technique `{technique}` has no model to train")))?;
    datastore::save_json(&model, &a.out)?;
    println!("trained {technique} on {} scenarios", ids.len());
    Ok(())
}

fn splits(p: Partition, corpus: &Corpus, folds: usize, seed: u64) -> wgtune::Result<Vec<Split>> {
    let scenarios = corpus.sampled();
    let ids: Vec<String> = scenarios.iter().map(|s| s.id.clone()).collect();
    match p {
        Partition::Kfold => bench::partition_kfold(&ids, folds, seed),
        Partition::Synthreal => Ok(vec![bench::partition_synthetic_real(&scenarios)?]),
        Partition::LooDevice => bench::partition_leave_one_out(&scenarios, Dimension::Device),
        Partition::LooKernel => bench::partition_leave_one_out(&scenarios, Dimension::Kernel),
        Partition::LooDataset => bench::partition_leave_one_out(&scenarios, Dimension::Dataset),
    }
}

fn evaluate(a: EvaluateArgs) -> CmdResult {
    let techniques: Vec<Technique> = if a.technique == "all" {
        let mut all = Technique::autotuners();
        all.extend([Technique::Baseline, Technique::Oracle]);
        all
    } else {
        a.technique
            .split(',')
            .map(|t| parse_technique(t.trim()))
            .collect::<Result<_, _>>()?
    };
    let corpus = load_corpus(&a.corpus)?;
    let splits = splits(a.partition, &corpus, a.folds, a.seed)?;
    let cfg = EvalConfig {
        seed: a.seed,
        ..EvalConfig::default()
    };
    let mut rows = Vec::new();
    for t in techniques {
        rows.extend(bench::evaluate_splits(t, &splits, &corpus, &cfg)?);
    }
    let file = fs::File::create(&a.out)?;
    bench::write_metrics(&rows, io::BufWriter::new(file))?;
    print!("{}", bench::format_summaries(&bench::report(&rows)?));
    Ok(())
}

fn run_server(a: ServeArgs) -> CmdResult {
    let model: TunerModel = datastore::load_json(&a.model)?;
    let listener = serve::bind(a.port)
        .map_err(|e| Failure::Usage(format!("cannot listen on port {}: {e}", a.port)))?;
    let addr = listener.local_addr()?;
    println!("listening on {addr}");
    io::stdout().flush()?;
    serve::serve(listener, Arc::new(model)).map_err(|e| Failure::Internal(e.to_string()))
}

fn import(a: ImportArgs) -> CmdResult {
    let table = datastore::import_external(&a.input, &a.scenarios)?;
    datastore::save_samples(&table, &a.out)?;
    println!("imported {} test cases", table.len());
    Ok(())
}

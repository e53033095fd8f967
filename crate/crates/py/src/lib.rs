//! Python bindings. Scenarios and models cross the boundary as JSON
//! strings, workgroup sizes as `(cols, rows)` tuples.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use wgtune::bench::{self, Corpus, EvalConfig, Technique};
use wgtune::simoracle::{self, OracleConfig};
use wgtune::tuner::TunerModel;
use wgtune::{features, serve, space, synthgen, Scenario, WorkgroupSize};

fn err(e: wgtune::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_scenario(json: &str) -> PyResult<Scenario> {
    let s: Scenario = serde_json::from_str(json).map_err(json_err)?;
    Scenario::new(s.device, s.kernel, s.dataset).map_err(err)
}

fn size(w_c: u32, w_r: u32) -> PyResult<WorkgroupSize> {
    WorkgroupSize::try_new(w_c, w_r).map_err(err)
}

/// JSON list of `n_synthetic + n_real` simulated scenarios.
#[pyfunction]
#[pyo3(signature = (n_synthetic=40, n_real=10, seed=7))]
fn fixture_scenarios(n_synthetic: usize, n_real: usize, seed: u64) -> PyResult<String> {
    let f = synthgen::fixture_scenarios(n_synthetic, n_real, seed).map_err(err)?;
    serde_json::to_string(&f).map_err(json_err)
}

#[pyfunction]
fn feature_names() -> Vec<String> {
    features::schema().names.clone()
}

#[pyfunction]
fn extract_features(scenario: &str) -> PyResult<Vec<f64>> {
    Ok(features::extract(&parse_scenario(scenario)?).values().to_vec())
}

/// Even-grid sizes with area at most `max_wgsize`, in lexicographic order.
#[pyfunction]
fn enumerate_space(max_wgsize: u32) -> PyResult<Vec<(u32, u32)>> {
    Ok(space::enumerate_space(max_wgsize)
        .map_err(err)?
        .into_iter()
        .map(|w| (w.cols, w.rows))
        .collect())
}

#[pyfunction]
fn is_refused(scenario: &str, w_c: u32, w_r: u32) -> PyResult<bool> {
    Ok(simoracle::is_refused(&parse_scenario(scenario)?, size(w_c, w_r)?))
}

/// Simulated runtimes in milliseconds. Raises ValueError for oversized or
/// refused sizes.
#[pyfunction]
#[pyo3(signature = (scenario, w_c, w_r, noise=0.05, seed=0, samples=30))]
fn simulate(
    scenario: &str,
    w_c: u32,
    w_r: u32,
    noise: f64,
    seed: u64,
    samples: usize,
) -> PyResult<Vec<f64>> {
    let cfg = OracleConfig {
        noise_sigma: noise,
        seed,
        min_samples: samples,
    };
    simoracle::run(&parse_scenario(scenario)?, size(w_c, w_r)?, &cfg).map_err(err)
}

fn fixture_corpus(n_synthetic: usize, n_real: usize, seed: u64) -> PyResult<Corpus> {
    let f = synthgen::fixture_scenarios(n_synthetic, n_real, seed).map_err(err)?;
    let c = simoracle::collect(&f, &OracleConfig::default()).map_err(err)?;
    Ok(Corpus::from_collection(f, c))
}

fn parse_technique(t: &str) -> PyResult<Technique> {
    t.parse().map_err(err)
}

/// Cross-validates `technique` on a simulated fixture. Returns the metrics
/// rows as JSON.
#[pyfunction]
#[pyo3(signature = (technique, folds=10, n_synthetic=40, n_real=10, seed=7))]
fn evaluate_fixture(
    technique: &str,
    folds: usize,
    n_synthetic: usize,
    n_real: usize,
    seed: u64,
) -> PyResult<String> {
    let technique = parse_technique(technique)?;
    let corpus = fixture_corpus(n_synthetic, n_real, seed)?;
    let ids: Vec<String> = corpus.scenarios.keys().cloned().collect();
    let splits = bench::partition_kfold(&ids, folds, seed).map_err(err)?;
    let rows = bench::evaluate_splits(technique, &splits, &corpus, &EvalConfig::default())
        .map_err(err)?;
    serde_json::to_string(&rows).map_err(json_err)
}

/// A trained tuner.
#[pyclass]
struct Tuner {
    model: Arc<TunerModel>,
}

#[pymethods]
impl Tuner {
    #[new]
    fn new(model_json: &str) -> PyResult<Self> {
        let model: TunerModel = serde_json::from_str(model_json).map_err(json_err)?;
        Ok(Self {
            model: Arc::new(model),
        })
    }

    /// Trains `technique` on every scenario of a simulated fixture.
    #[staticmethod]
    #[pyo3(signature = (technique, n_synthetic=40, n_real=10, seed=7))]
    fn train(technique: &str, n_synthetic: usize, n_real: usize, seed: u64) -> PyResult<Self> {
        let technique = parse_technique(technique)?;
        let corpus = fixture_corpus(n_synthetic, n_real, seed)?;
        let ids: Vec<String> = corpus.scenarios.keys().cloned().collect();
        let ranked = corpus.baseline_ranking(&ids, &ids).map_err(err)?;
        let cfg = EvalConfig {
            seed,
            ..EvalConfig::default()
        };
        let model = bench::train_model(technique, &corpus, &ids, &ranked, &cfg)
            .map_err(err)?
            .ok_or_else(|| PyValueError::new_err(format!("{technique} has no model")))?;
        Ok(Self {
            model: Arc::new(model),
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&*self.model).map_err(json_err)
    }

    /// Proposes sizes until `probe(cols, rows)` returns True. Returns the
    /// accepted size and the number of proposals made.
    #[pyo3(signature = (scenario, max_wgsize, probe, refused=Vec::new()))]
    fn tune(
        &self,
        scenario: &str,
        max_wgsize: u32,
        probe: Bound<'_, PyAny>,
        refused: Vec<(u32, u32)>,
    ) -> PyResult<((u32, u32), u32)> {
        let s = parse_scenario(scenario)?;
        let mut ctx = space::ConstraintContext::new(s.device.device_max_wgsize, max_wgsize, [])
            .map_err(err)?;
        for (c, r) in refused {
            let w = size(c, r)?;
            if ctx.within_max(w) {
                ctx.add_refused(w).map_err(err)?;
            }
        }
        let mut episode = self
            .model
            .episode(&features::extract(&s), &ctx)
            .map_err(err)?;
        let mut proposals = 0;
        loop {
            let w = episode.propose().map_err(err)?;
            proposals += 1;
            if probe.call1((w.cols, w.rows))?.extract::<bool>()? {
                return Ok(((w.cols, w.rows), proposals));
            }
            episode.reject(w);
        }
    }

    /// A daemon session answering protocol lines in-process.
    fn session(&self) -> Session {
        Session {
            model: Arc::clone(&self.model),
            inner: serve::Session::new(),
        }
    }
}

#[pyclass]
struct Session {
    model: Arc<TunerModel>,
    inner: serve::Session,
}

#[pymethods]
impl Session {
    fn handle_line(&mut self, line: &str) -> PyResult<String> {
        let response = self.inner.handle_line(&self.model, line);
        serde_json::to_string(&response).map_err(json_err)
    }
}

#[pymodule]
fn pywgtune(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fixture_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_space, m)?)?;
    m.add_function(wrap_pyfunction!(is_refused, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_fixture, m)?)?;
    m.add_class::<Tuner>()?;
    m.add_class::<Session>()?;
    Ok(())
}

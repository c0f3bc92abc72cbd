//! Python bindings for the core types and operations: scene I/O and
//! generation, instance-level noise injection, dbscan clustering, history
//! confidence and vote selection, segmentation metrics, and the file-level
//! experiment commands.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use pnal_core::cluster::{dbscan as dbscan_rs, DbscanParams};
use pnal_core::data::LabelStore;
use pnal_core::experiment::{
    cmd_eval, cmd_gen_data, cmd_inject_noise, cmd_report, cmd_train, ExperimentConfig, Method,
};
use pnal_core::io::{read_scene, write_scene};
use pnal_core::metrics::{mean_iou as mean_iou_rs, overall_accuracy as oa_rs};
use pnal_core::noise::{inject_symmetric, measure_noise};
use pnal_core::pnal::{
    confidence_of_distribution, pick_winner as pick_winner_rs, select_reliable, HistoryBuffer,
    VoteTally,
};
use pnal_core::seed::{rng, Stream};
use pnal_core::synth::{build_benchmark, BenchmarkSpec};
use pnal_core::Error;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::MissingInput(_) | Error::Io(_) => PyIOError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// An immutable labeled point cloud.
#[pyclass(name = "Scene")]
struct PyScene {
    inner: pnal_core::data::Scene,
}

#[pymethods]
impl PyScene {
    /// Reads a PNTS v1 file.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyScene {
            inner: read_scene(&path).map_err(to_py_err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_scene(&self.inner, &path).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    fn positions(&self) -> Vec<[f64; 3]> {
        self.inner.points().iter().map(|p| p.position).collect()
    }

    fn colors(&self) -> Vec<[f64; 3]> {
        self.inner.points().iter().map(|p| p.color).collect()
    }

    fn gt_labels(&self) -> Vec<usize> {
        self.inner.points().iter().map(|p| p.gt_label).collect()
    }

    fn instance_ids(&self) -> Vec<u32> {
        self.inner.points().iter().map(|p| p.instance_id).collect()
    }

    /// Corrupts instance labels symmetrically at rate tau; returns the noisy
    /// label per point plus the measured (instance_rate, point_rate).
    fn inject_symmetric_noise(&self, tau: f64, seed: u64) -> PyResult<(Vec<usize>, f64, f64)> {
        let mut r = rng(seed, Stream::Noise, 0, 0);
        let store = inject_symmetric(&self.inner, tau, &mut r).map_err(to_py_err)?;
        let labels = self
            .inner
            .points()
            .iter()
            .map(|p| store.label(p.global_id))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py_err)?;
        let measured = measure_noise(&self.inner, &store).map_err(to_py_err)?;
        Ok((labels, measured.instance_rate, measured.point_rate))
    }
}

/// Generates the benchmark scene family; returns (train, test) scene lists.
#[pyfunction]
#[pyo3(signature = (seed, train_scenes=40, test_scenes=10))]
fn benchmark_scenes(
    seed: u64,
    train_scenes: usize,
    test_scenes: usize,
) -> PyResult<(Vec<PyScene>, Vec<PyScene>)> {
    let mut spec = BenchmarkSpec::new(seed);
    spec.train_scenes = train_scenes;
    spec.test_scenes = test_scenes;
    let (train, test) = build_benchmark(&spec).map_err(to_py_err)?;
    Ok((
        train.into_iter().map(|inner| PyScene { inner }).collect(),
        test.into_iter().map(|inner| PyScene { inner }).collect(),
    ))
}

/// Dbscan over 3d points; returns one cluster id per point, -1 for noise.
#[pyfunction]
fn dbscan(points: Vec<[f64; 3]>, eps: f64, min_pts: usize) -> PyResult<Vec<i64>> {
    if eps <= 0.0 || min_pts == 0 {
        return Err(PyValueError::new_err("eps must be > 0 and min_pts >= 1"));
    }
    let assignment = dbscan_rs(&points, &DbscanParams { eps, min_pts });
    Ok(assignment
        .cluster_of
        .iter()
        .map(|c| c.map_or(-1, |v| v as i64))
        .collect())
}

/// Confidence of a full prediction history: 1 - entropy / ln(num_classes).
#[pyfunction]
fn history_confidence(history: Vec<usize>, num_classes: usize) -> PyResult<f64> {
    if history.is_empty() || num_classes < 2 {
        return Err(PyValueError::new_err(
            "history must be non-empty and num_classes >= 2",
        ));
    }
    let mut counts = vec![0usize; num_classes];
    for &label in &history {
        if label >= num_classes {
            return Err(PyValueError::new_err(format!(
                "label {label} out of range"
            )));
        }
        counts[label] += 1;
    }
    let q = history.len() as f64;
    let dist: Vec<f64> = counts.iter().map(|&c| c as f64 / q).collect();
    Ok(confidence_of_distribution(&dist, num_classes))
}

/// Reliable ids among `histories` (id -> list of last q predictions): ids
/// with full history and confidence >= sigma, mapped to their history mode.
#[pyfunction]
fn reliable_labels(
    histories: HashMap<u64, Vec<usize>>,
    q: usize,
    sigma: f64,
    num_classes: usize,
) -> PyResult<HashMap<u64, usize>> {
    let mut buffer = HistoryBuffer::new(q).map_err(to_py_err)?;
    let mut ids: Vec<u64> = histories.keys().copied().collect();
    ids.sort_unstable();
    for (&id, labels) in &histories {
        for &label in labels {
            buffer.record_predictions(&[id], &[label]);
        }
    }
    let set = select_reliable(&buffer, &ids, sigma, num_classes);
    Ok(ids
        .into_iter()
        .filter_map(|id| set.reliable_label(id).map(|m| (id, m)))
        .collect())
}

/// Draws the winner label from vote counts: uniform over classes whose count
/// reaches max(occs) / gamma.
#[pyfunction]
fn pick_winner(occs: Vec<usize>, gamma: f64, seed: u64) -> PyResult<usize> {
    if gamma < 1.0 {
        return Err(PyValueError::new_err("gamma must be >= 1"));
    }
    let top = occs.iter().copied().max().unwrap_or(0);
    let tally = VoteTally { occs, top };
    let mut r = rng(seed, Stream::Winner, 0, 0);
    pick_winner_rs(&tally, gamma, &mut r).map_err(to_py_err)
}

#[pyfunction]
fn overall_accuracy(pred: Vec<usize>, gt: Vec<usize>) -> PyResult<f64> {
    if pred.len() != gt.len() {
        return Err(PyValueError::new_err("pred and gt lengths differ"));
    }
    Ok(oa_rs(&pred, &gt))
}

#[pyfunction]
fn mean_iou(pred: Vec<usize>, gt: Vec<usize>, num_classes: usize) -> PyResult<f64> {
    if pred.len() != gt.len() {
        return Err(PyValueError::new_err("pred and gt lengths differ"));
    }
    Ok(mean_iou_rs(&pred, &gt, num_classes))
}

/// Measured instance/point noise rates of a label list against the scene's
/// ground truth.
#[pyfunction]
fn noise_rates(scene: &PyScene, labels: Vec<usize>) -> PyResult<(f64, f64)> {
    if labels.len() != scene.inner.len() {
        return Err(PyValueError::new_err("one label per scene point required"));
    }
    let map: HashMap<u64, usize> = scene
        .inner
        .points()
        .iter()
        .zip(&labels)
        .map(|(p, &label)| (p.global_id, label))
        .collect();
    let store = LabelStore::from_labels(&scene.inner, &map).map_err(to_py_err)?;
    let m = measure_noise(&scene.inner, &store).map_err(to_py_err)?;
    Ok((m.instance_rate, m.point_rate))
}

fn parse_config(config_path: &Path, seed: Option<u64>) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_toml_path(config_path).map_err(to_py_err)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// `gen-data` command: writes benchmark PNTS files plus the split manifest.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir, seed=None))]
fn gen_data(config_path: PathBuf, out_dir: PathBuf, seed: Option<u64>) -> PyResult<usize> {
    let cfg = parse_config(&config_path, seed)?;
    Ok(cmd_gen_data(&cfg, &out_dir).map_err(to_py_err)?.len())
}

/// `inject-noise` command: returns the mean instance noise rate.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir, seed=None))]
fn inject_noise(config_path: PathBuf, out_dir: PathBuf, seed: Option<u64>) -> PyResult<f64> {
    let cfg = parse_config(&config_path, seed)?;
    let outcomes = cmd_inject_noise(&cfg, &out_dir).map_err(to_py_err)?;
    Ok(outcomes.iter().map(|o| o.instance_rate).sum::<f64>() / outcomes.len() as f64)
}

/// `train` command: returns the final (test_oa, test_miou).
#[pyfunction]
#[pyo3(signature = (config_path, method, out_dir, seed=None))]
fn train(
    config_path: PathBuf,
    method: &str,
    out_dir: PathBuf,
    seed: Option<u64>,
) -> PyResult<(f64, f64)> {
    let cfg = parse_config(&config_path, seed)?;
    let method: Method = method.parse().map_err(to_py_err)?;
    let outputs = cmd_train(&cfg, method, &out_dir).map_err(to_py_err)?;
    let last = outputs.log.last().expect("at least one epoch");
    Ok((last.test_oa, last.test_miou))
}

/// `eval` command: returns (oa, miou) of a checkpoint on one split.
#[pyfunction]
#[pyo3(signature = (config_path, checkpoint, split, out_dir, seed=None))]
fn evaluate(
    config_path: PathBuf,
    checkpoint: PathBuf,
    split: &str,
    out_dir: PathBuf,
    seed: Option<u64>,
) -> PyResult<(f64, f64)> {
    let cfg = parse_config(&config_path, seed)?;
    let report = cmd_eval(&cfg, &checkpoint, split, &out_dir).map_err(to_py_err)?;
    Ok((report.oa, report.miou))
}

/// `report` command: inputs are (name, metrics_csv_path) pairs; returns the
/// comparison table text.
#[pyfunction]
fn report(inputs: Vec<(String, PathBuf)>, out_dir: PathBuf) -> PyResult<String> {
    Ok(cmd_report(&inputs, &out_dir).map_err(to_py_err)?.table)
}

#[pymodule]
fn pnal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_function(wrap_pyfunction!(benchmark_scenes, m)?)?;
    m.add_function(wrap_pyfunction!(dbscan, m)?)?;
    m.add_function(wrap_pyfunction!(history_confidence, m)?)?;
    m.add_function(wrap_pyfunction!(reliable_labels, m)?)?;
    m.add_function(wrap_pyfunction!(pick_winner, m)?)?;
    m.add_function(wrap_pyfunction!(overall_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(mean_iou, m)?)?;
    m.add_function(wrap_pyfunction!(noise_rates, m)?)?;
    m.add_function(wrap_pyfunction!(gen_data, m)?)?;
    m.add_function(wrap_pyfunction!(inject_noise, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}

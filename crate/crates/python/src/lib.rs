//! Python bindings. Tensors cross the boundary as nested lists of floats:
//! input sequences are `N×2×T`, poses are `N×3`.

use std::fmt::Display;
use std::path::PathBuf;

use ::mgtnet as core;
use core::metrics::{self, EvalOptions};
use core::skeleton::{hop_distances, k_adjacency, normalize_adjacency};
use core::training::{self, HistoryRow};
use core::{Checkpoint, MetricReport, MgtNet, ModelConfig, PoseDataset, SkeletonGraph, Standardizer, Tensor, TrainConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn data_err(e: core::DataError) -> PyErr {
    match e {
        core::DataError::Io { .. } => PyIOError::new_err(e.to_string()),
        e => value_err(e),
    }
}

fn model_err(e: core::ModelError) -> PyErr {
    match e {
        core::ModelError::Io { .. } => PyIOError::new_err(e.to_string()),
        e => value_err(e),
    }
}

fn pose_tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    if rows.iter().any(|r| r.len() != 3) {
        return Err(PyValueError::new_err("each joint needs exactly 3 coordinates"));
    }
    Tensor::from_rows(&rows).map_err(value_err)
}

fn sequence_tensor(joints: Vec<Vec<Vec<f64>>>) -> PyResult<Tensor> {
    let n = joints.len();
    let t = joints.first().and_then(|j| j.first()).map_or(0, Vec::len);
    let mut data = Vec::with_capacity(n * 2 * t);
    for joint in &joints {
        if joint.len() != 2 || joint.iter().any(|c| c.len() != t) {
            return Err(PyValueError::new_err(format!(
                "input must be N×2×T with a common T (T = {t} from the first joint)"
            )));
        }
        data.extend(joint.iter().flatten());
    }
    Tensor::new(&[n, 2, t], data).map_err(value_err)
}

fn pose_rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.data().chunks(t.shape()[1]).map(<[f64]>::to_vec).collect()
}

fn sequence_lists(t: &Tensor) -> Vec<Vec<Vec<f64>>> {
    let frames = t.shape()[2];
    t.data()
        .chunks(2 * frames)
        .map(|j| j.chunks(frames).map(<[f64]>::to_vec).collect())
        .collect()
}

fn matrix_rows(t: &Tensor) -> Vec<Vec<f64>> {
    let n = t.shape()[0];
    (0..n).map(|i| t.row(i).to_vec()).collect()
}

/// A connected joint graph with a root joint.
#[pyclass(name = "Skeleton", module = "mgtnet", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySkeleton {
    inner: SkeletonGraph,
}

#[pymethods]
impl PySkeleton {
    #[new]
    fn new(joint_names: Vec<String>, edges: Vec<(usize, usize)>, root: usize) -> PyResult<Self> {
        let inner = SkeletonGraph::new(joint_names, edges, root).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// The 17-joint Human3.6M skeleton.
    #[staticmethod]
    fn human36m() -> Self {
        Self {
            inner: SkeletonGraph::human36m(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = SkeletonGraph::from_toml_str(text).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn joint_names(&self) -> Vec<String> {
        self.inner.joint_names().to_vec()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    #[getter]
    fn root(&self) -> usize {
        self.inner.root()
    }

    fn __len__(&self) -> usize {
        self.inner.num_joints()
    }

    /// Shortest-path hop counts between every pair of joints.
    fn hop_distances(&self) -> Vec<Vec<usize>> {
        let d = hop_distances(&self.inner);
        let n = d.len();
        (0..n)
            .map(|i| (0..n).map(|j| d.get(i, j).unwrap_or(usize::MAX)).collect())
            .collect()
    }

    /// Indicator of joint pairs exactly `k` hops apart, optionally
    /// symmetrically normalized.
    #[pyo3(signature = (k, normalized = false))]
    fn k_adjacency(&self, k: usize, normalized: bool) -> PyResult<Vec<Vec<f64>>> {
        let a = k_adjacency(&hop_distances(&self.inner), k);
        let a = if normalized {
            normalize_adjacency(&a).map_err(value_err)?
        } else {
            a
        };
        Ok(matrix_rows(&a))
    }

    fn __repr__(&self) -> String {
        format!(
            "Skeleton({} joints, root {:?})",
            self.inner.num_joints(),
            self.inner.joint_names()[self.inner.root()]
        )
    }
}

/// Paired 2D input sequences and root-relative 3D target poses.
#[pyclass(name = "Dataset", module = "mgtnet", frozen)]
struct PyDataset {
    inner: PoseDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (skeleton, inputs, targets, actions = None, unit = "m"))]
    fn new(
        skeleton: &PySkeleton,
        inputs: Vec<Vec<Vec<Vec<f64>>>>,
        targets: Vec<Vec<Vec<f64>>>,
        actions: Option<Vec<String>>,
        unit: &str,
    ) -> PyResult<Self> {
        if inputs.len() != targets.len() {
            return Err(PyValueError::new_err(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let actions = actions.unwrap_or_else(|| vec![String::from("unknown"); inputs.len()]);
        if actions.len() != inputs.len() {
            return Err(PyValueError::new_err("one action label per sample is required"));
        }
        let mut samples = Vec::with_capacity(inputs.len());
        for ((input, target), action) in inputs.into_iter().zip(targets).zip(actions) {
            samples.push(core::Sample {
                input: sequence_tensor(input)?,
                target: pose_tensor(target)?,
                action,
            });
        }
        let frames = samples.first().map_or(1, |s| s.input.shape()[2]);
        let inner = PoseDataset::new(skeleton.inner.clone(), unit, frames, samples).map_err(data_err)?;
        Ok(Self { inner })
    }

    /// Seeded synthetic sequences from a kinematic generator, in metres.
    #[staticmethod]
    #[pyo3(signature = (skeleton = None, count = 32, frames = 3, seed = 0, noise = 0.0, amplitude = 1.0))]
    fn synthesize(
        skeleton: Option<&PySkeleton>,
        count: usize,
        frames: usize,
        seed: u64,
        noise: f64,
        amplitude: f64,
    ) -> PyResult<Self> {
        if frames == 0 || !noise.is_finite() || noise < 0.0 || !amplitude.is_finite() {
            return Err(PyValueError::new_err(
                "frames must be positive, noise non-negative and amplitude finite",
            ));
        }
        let g = skeleton.map_or_else(SkeletonGraph::human36m, |s| s.inner.clone());
        let cfg = core::SynthConfig {
            count,
            frames,
            seed,
            noise_sigma: noise,
            amplitude,
        };
        Ok(Self {
            inner: core::synthesize(&g, &cfg),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = PoseDataset::load(&path).map_err(data_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(data_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn joints(&self) -> usize {
        self.inner.joints()
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.frames()
    }

    #[getter]
    fn unit(&self) -> String {
        self.inner.unit().to_string()
    }

    #[getter]
    fn skeleton(&self) -> PySkeleton {
        PySkeleton {
            inner: self.inner.skeleton().clone(),
        }
    }

    fn inputs(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        self.inner.samples().iter().map(|s| sequence_lists(&s.input)).collect()
    }

    fn targets(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.samples().iter().map(|s| pose_rows(&s.target)).collect()
    }

    fn actions(&self) -> Vec<String> {
        self.inner.actions()
    }

    /// The trailing `frames` frames of every sequence.
    fn last_frames(&self, frames: usize) -> PyResult<Self> {
        let inner = self.inner.last_frames(frames).map_err(data_err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} samples, N={}, T={}, unit {:?})",
            self.inner.len(),
            self.inner.joints(),
            self.inner.frames(),
            self.inner.unit()
        )
    }
}

fn history_dict<'py>(py: Python<'py>, r: &HistoryRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("epoch", r.epoch)?;
    d.set_item("lr", r.lr)?;
    d.set_item("train_loss", r.train_loss)?;
    d.set_item("eval_mpjpe", r.eval_mpjpe)?;
    d.set_item("eval_pa_mpjpe", r.eval_pa_mpjpe)?;
    Ok(d)
}

/// The pose-lifting network together with its input standardizer.
#[pyclass(name = "Model", module = "mgtnet")]
struct PyModel {
    inner: Checkpoint,
}

#[pymethods]
impl PyModel {
    /// Builds an untrained network from a preset (`toy`, `paper-default`
    /// or `gt-ablation`), optionally overriding the frame and hop counts.
    #[new]
    #[pyo3(signature = (preset = "toy", skeleton = None, frames = None, hops = None, seed = 0))]
    fn new(
        preset: &str,
        skeleton: Option<&PySkeleton>,
        frames: Option<usize>,
        hops: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let mut cfg = ModelConfig::preset(preset).ok_or_else(|| {
            PyValueError::new_err(format!(
                "unknown preset `{preset}` (expected toy, paper-default or gt-ablation)"
            ))
        })?;
        let g = skeleton.map_or_else(SkeletonGraph::human36m, |s| s.inner.clone());
        cfg.joints = g.num_joints();
        cfg.frames = frames.unwrap_or(cfg.frames);
        cfg.hops = hops.unwrap_or(cfg.hops);
        let net = MgtNet::new(cfg, &g, seed).map_err(model_err)?;
        Ok(Self {
            inner: Checkpoint::new(net, "m", None),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = Checkpoint::load(&path).map_err(model_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(model_err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.net.param_count()
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.net.config().frames
    }

    #[getter]
    fn joints(&self) -> usize {
        self.inner.net.config().joints
    }

    /// Trains in place and returns one dict per epoch. Settings default to
    /// the `toy` training preset.
    #[pyo3(signature = (dataset, epochs = None, lr0 = None, batch_size = None, seed = None, standardize = true))]
    #[allow(clippy::too_many_arguments)]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        dataset: &PyDataset,
        epochs: Option<usize>,
        lr0: Option<f64>,
        batch_size: Option<usize>,
        seed: Option<u64>,
        standardize: bool,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let ds = &dataset.inner;
        let defaults = TrainConfig::toy();
        let cfg = TrainConfig {
            epochs: epochs.unwrap_or(defaults.epochs),
            lr0: lr0.unwrap_or(defaults.lr0),
            batch_size: batch_size.unwrap_or(defaults.batch_size),
            seed: seed.unwrap_or(defaults.seed),
            ..defaults
        };
        let (input, standardizer) = if standardize {
            let s = Standardizer::fit(ds).map_err(data_err)?;
            (s.apply(ds).map_err(data_err)?, Some(s))
        } else {
            (ds.clone(), None)
        };
        let mut net = self.inner.net.clone();
        let history = py
            .detach(|| training::train(&mut net, &input, None, &cfg))
            .map_err(value_err)?;
        self.inner = Checkpoint::new(net, ds.unit(), standardizer);
        history.rows.iter().map(|r| history_dict(py, r)).collect()
    }

    /// Predicts the `N×3` pose for one raw `N×2×T` input sequence.
    fn predict(&self, input: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
        let pred = self.inner.predict(&sequence_tensor(input)?).map_err(model_err)?;
        Ok(pose_rows(&pred))
    }

    /// Per-action and aggregate metrics; the aggregate row is labelled `all`.
    fn evaluate<'py>(&self, py: Python<'py>, dataset: &PyDataset) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let ds = &dataset.inner;
        let preds = ds
            .samples()
            .iter()
            .map(|s| self.inner.predict(&s.input))
            .collect::<Result<Vec<_>, _>>()
            .map_err(model_err)?;
        let report = MetricReport::compute(
            &preds,
            &ds.targets(),
            &ds.actions(),
            ds.unit(),
            &EvalOptions::for_unit(ds.unit()),
        )
        .map_err(value_err)?;
        report
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("action", &r.action)?;
                d.set_item("mpjpe", r.mpjpe)?;
                d.set_item("pa_mpjpe", r.pa_mpjpe)?;
                d.set_item("pck", r.pck)?;
                d.set_item("auc", r.auc)?;
                d.set_item("n", r.count)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        let c = self.inner.net.config();
        format!(
            "Model(N={}, T={}, F={}, L={}, K={}, {} parameters)",
            c.joints,
            c.frames,
            c.hidden,
            c.layers,
            c.hops,
            self.inner.net.param_count()
        )
    }
}

/// Mean per-joint position error between two `N×3` poses.
#[pyfunction]
fn mpjpe(pred: Vec<Vec<f64>>, gt: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::mpjpe(&pose_tensor(pred)?, &pose_tensor(gt)?).map_err(value_err)
}

/// MPJPE after similarity (Procrustes) alignment of `pred` to `gt`.
#[pyfunction]
fn pa_mpjpe(pred: Vec<Vec<f64>>, gt: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::pa_mpjpe(&pose_tensor(pred)?, &pose_tensor(gt)?).map_err(value_err)
}

#[pyfunction]
fn procrustes_align(pred: Vec<Vec<f64>>, gt: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let aligned = metrics::procrustes_align(&pose_tensor(pred)?, &pose_tensor(gt)?).map_err(value_err)?;
    Ok(pose_rows(&aligned))
}

#[pymodule]
fn mgtnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySkeleton>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(mpjpe, m)?)?;
    m.add_function(wrap_pyfunction!(pa_mpjpe, m)?)?;
    m.add_function(wrap_pyfunction!(procrustes_align, m)?)?;
    Ok(())
}

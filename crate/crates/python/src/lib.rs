use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use memprop::data::{ImageDataset, IdxTensor};
use memprop::device::{rk4_reference, simulate_neuron, DeviceConfig, SpikeEvent, Traces};
use memprop::hwcost::{count_cells as hw_count_cells, estimate, HwConfig};
use memprop::network::{ModelConfig, MsnnModel, Stimulus};
use memprop::train::{self, Checkpoint, Readout, TrainConfig, TrainError};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn train_err(e: TrainError) -> PyErr {
    match e {
        TrainError::Io { .. } | TrainError::Checkpoint(_) => PyIOError::new_err(e.to_string()),
        TrainError::NonFinite(_) | TrainError::Diverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn device_config(dt: f64, substeps: usize, integrator: &str) -> PyResult<DeviceConfig> {
    let mut cfg = DeviceConfig::default();
    cfg.dt = dt;
    cfg.substeps = substeps;
    cfg.integrator = integrator.parse().map_err(value_err)?;
    Ok(cfg)
}

fn traces_dict<'py>(py: Python<'py>, t: &Traces) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("v", t.v.clone())?;
    d.set_item("x1", t.x1.clone())?;
    d.set_item("x2", t.x2.clone())?;
    d.set_item("i", t.i.clone())?;
    Ok(d)
}

fn schedule(spikes: Vec<(usize, f64)>) -> Vec<SpikeEvent> {
    spikes.into_iter().map(|(s, w)| SpikeEvent::new(s, w)).collect()
}

/// Simulate one MIF neuron from rest. Returns a dict of `v`, `x1`, `x2`, `i`.
#[pyfunction]
#[pyo3(signature = (steps=1000, spikes=vec![(100, 3e-5)], dt=1e-5, substeps=10, integrator="expeuler"))]
fn simulate<'py>(
    py: Python<'py>,
    steps: usize,
    spikes: Vec<(usize, f64)>,
    dt: f64,
    substeps: usize,
    integrator: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = device_config(dt, substeps, integrator)?;
    let t = simulate_neuron(&cfg.mif(), &cfg.alpha(), &schedule(spikes), steps, &cfg.step())
        .map_err(value_err)?;
    traces_dict(py, &t)
}

/// RK4 integration of the same protocol with `inner` substeps per step.
#[pyfunction]
#[pyo3(signature = (steps=1000, spikes=vec![(100, 3e-5)], dt=1e-5, inner=10))]
fn rk4<'py>(
    py: Python<'py>,
    steps: usize,
    spikes: Vec<(usize, f64)>,
    dt: f64,
    inner: usize,
) -> PyResult<Bound<'py, PyDict>> {
    if inner == 0 {
        return Err(PyValueError::new_err("inner must be >= 1"));
    }
    let cfg = device_config(dt, 1, "expeuler")?;
    let t = rk4_reference(&cfg.mif(), &cfg.alpha(), &schedule(spikes), steps, &cfg.step(), dt / inner as f64)
        .map_err(value_err)?;
    traces_dict(py, &t)
}

/// `(synapses, cells, tiles)` for a dense network.
#[pyfunction]
#[pyo3(signature = (layers, devices_per_weight=2, tile_dim=128))]
fn count_cells(layers: Vec<usize>, devices_per_weight: usize, tile_dim: usize) -> PyResult<(usize, usize, usize)> {
    if tile_dim == 0 {
        return Err(PyValueError::new_err("tile_dim must be >= 1"));
    }
    let c = hw_count_cells(&layers, devices_per_weight, tile_dim);
    Ok((c.synapses, c.cells, c.tiles))
}

/// Area (mm^2), power (W) and latency (s) of ours vs the mixed-signal design.
#[pyfunction]
#[pyo3(signature = (layers=vec![784, 100, 10], activity=0.02, steps=1000))]
fn hwcost<'py>(py: Python<'py>, layers: Vec<usize>, activity: f64, steps: usize) -> PyResult<Bound<'py, PyDict>> {
    let cfg = HwConfig {
        layers,
        activity,
        steps,
        ..HwConfig::default()
    };
    let r = estimate(&cfg).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("tiles", r.cells.tiles)?;
    d.set_item("power_per_tile", r.power.per_tile)?;
    for (name, c) in [("area", r.area), ("power", r.power.total), ("latency", r.latency.total)] {
        d.set_item(format!("{name}_ours"), c.ours)?;
        d.set_item(format!("{name}_mixed"), c.mixed)?;
        d.set_item(format!("{name}_improvement"), c.improvement())?;
    }
    Ok(d)
}

/// Load an unsigned-byte IDX file as `(dims, data)`.
#[pyfunction]
fn load_idx(path: PathBuf) -> PyResult<(Vec<usize>, Vec<u8>)> {
    let t = memprop::data::load_idx(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok((t.dims, t.data))
}

/// Write an unsigned-byte IDX file.
#[pyfunction]
fn write_idx(path: PathBuf, dims: Vec<usize>, data: Vec<u8>) -> PyResult<()> {
    let t = IdxTensor::new(dims, data).map_err(value_err)?;
    memprop::data::write_idx(&path, &t).map_err(|e| PyIOError::new_err(e.to_string()))
}

fn images(images: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<ImageDataset> {
    let n = images.first().map_or(0, Vec::len);
    ImageDataset::new(images, labels, 1, n).map_err(value_err)
}

/// A dense memristive spiking network with crossbar weights.
#[pyclass(name = "Model", module = "memprop")]
struct PyModel {
    inner: MsnnModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (layers, seed=0))]
    fn new(layers: Vec<usize>, seed: u64) -> PyResult<Self> {
        let inner = MsnnModel::new(ModelConfig::new(layers), seed).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = Checkpoint::load(&path).map_err(train_err)?;
        Ok(Self {
            inner: ckpt.to_model().map_err(train_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::from_model(&self.inner, None, vec![])
            .save(&path)
            .map_err(train_err)
    }

    #[getter]
    fn layers(&self) -> Vec<usize> {
        self.inner.config.layers.clone()
    }

    /// Crossbar weights, one row-major list per crossbar.
    fn weights(&self) -> Vec<Vec<f64>> {
        self.inner.weights().iter().map(|w| w.to_vec()).collect()
    }

    fn set_weights(&mut self, weights: Vec<Vec<f64>>) -> PyResult<()> {
        let inner = MsnnModel::from_weights(self.inner.config.clone(), weights).map_err(value_err)?;
        self.inner = inner;
        Ok(())
    }

    /// Output membrane potential per step for static input intensities.
    #[pyo3(signature = (x, steps=100))]
    fn forward(&self, x: Vec<f64>, steps: usize) -> PyResult<Vec<Vec<f64>>> {
        let tr = self.inner.forward(&Stimulus::Static(&x), steps, false).map_err(value_err)?;
        Ok(tr.v_out)
    }

    #[pyo3(signature = (x, steps=100))]
    fn predict(&self, x: Vec<f64>, steps: usize) -> PyResult<usize> {
        let (class, _) =
            train::predict(&self.inner, &Stimulus::Static(&x), steps, Readout::Membrane).map_err(value_err)?;
        Ok(class)
    }

    /// Worst relative error between tape and finite-difference gradients.
    #[pyo3(signature = (x, label, steps=20, eps=1e-6))]
    fn gradcheck(&self, x: Vec<f64>, label: usize, steps: usize, eps: f64) -> PyResult<f64> {
        let r = train::gradcheck_model(&self.inner, &Stimulus::Static(&x), label, steps, 100.0, eps, 1e-4)
            .map_err(value_err)?;
        Ok(r.max_rel_err)
    }

    /// Train on flattened images in `[0, 1]`. Returns the epoch history as
    /// `(epoch, train_loss, val_acc)` tuples.
    #[pyo3(signature = (images_, labels, epochs=10, batch_size=128, lr=1e-4, steps=100, seed=0, patience=5, eval_fraction=0.1))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &mut self,
        py: Python<'_>,
        images_: Vec<Vec<f64>>,
        labels: Vec<usize>,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        steps: usize,
        seed: u64,
        patience: usize,
        eval_fraction: f64,
    ) -> PyResult<Vec<(usize, Option<f64>, f64)>> {
        let data = images(images_, labels)?;
        let cfg = TrainConfig {
            epochs,
            batch_size,
            lr,
            steps,
            seed,
            patience,
            eval_fraction,
            ..TrainConfig::default()
        };
        let model = &mut self.inner;
        let out = py.detach(|| train::train(model, &data, &cfg)).map_err(train_err)?;
        Ok(out.history.iter().map(|r| (r.epoch, r.train_loss, r.val_acc)).collect())
    }

    /// Accuracy on flattened images.
    #[pyo3(signature = (images_, labels, steps=100))]
    fn evaluate(&self, images_: Vec<Vec<f64>>, labels: Vec<usize>, steps: usize) -> PyResult<f64> {
        let data = images(images_, labels)?;
        let r = train::evaluate(&self.inner, &data, steps, Readout::Membrane).map_err(value_err)?;
        Ok(r.accuracy)
    }

    fn __repr__(&self) -> String {
        format!("Model(layers={:?})", self.inner.config.layers)
    }
}

/// Two-class synthetic images: `(images, labels)`.
#[pyfunction]
#[pyo3(signature = (n=40, side=8, seed=0))]
fn toy_dataset(n: usize, side: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = memprop::data::toy_two_class(n, side, seed);
    (d.images, d.labels)
}

#[pymodule]
#[pyo3(name = "memprop")]
fn memprop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(rk4, m)?)?;
    m.add_function(wrap_pyfunction!(count_cells, m)?)?;
    m.add_function(wrap_pyfunction!(hwcost, m)?)?;
    m.add_function(wrap_pyfunction!(load_idx, m)?)?;
    m.add_function(wrap_pyfunction!(write_idx, m)?)?;
    m.add_function(wrap_pyfunction!(toy_dataset, m)?)?;
    Ok(())
}

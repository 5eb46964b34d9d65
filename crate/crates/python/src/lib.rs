//! Python bindings: the accelerator configuration, layer shapes, the analytic
//! cost model, the golden convolution and the cycle engine.
//!
//! Tensors cross the boundary as flat lists in channel-major order; filters
//! as flat `m * ic * fh * fl` weight lists plus `m` biases.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sacc_core::arch::{validate_arch, validate_layer, RawArch, RawLayer};
use sacc_core::io::{compare_to_paper as compare, emit_report, ReportFormat};
use sacc_core::{
    golden_conv as golden, network_cost as cost_of, run_layer, EngineOptions, FilterSet,
    NetworkLayer, NetworkSpec, Tensor,
};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "ArchConfig", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyArch(sacc_core::ArchConfig);

#[pymethods]
impl PyArch {
    #[new]
    #[pyo3(signature = (
        u = 64,
        n = 3,
        sram_depth = 448,
        sram_word_bits = 32,
        data_bits = 16,
        clock_hz = 200_000_000,
        drain_words_per_cycle = 1.0,
        out_shift = 8
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        u: usize,
        n: usize,
        sram_depth: usize,
        sram_word_bits: u32,
        data_bits: u32,
        clock_hz: u64,
        drain_words_per_cycle: f64,
        out_shift: u32,
    ) -> PyResult<Self> {
        validate_arch(RawArch {
            u,
            n,
            sram_depth,
            sram_word_bits,
            data_bits,
            clock_hz,
            drain_words_per_cycle,
            out_shift,
        })
        .map(PyArch)
        .map_err(err)
    }

    #[getter]
    fn u(&self) -> usize {
        self.0.u
    }
    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }
    #[getter]
    fn sram_depth(&self) -> usize {
        self.0.sram_depth
    }
    #[getter]
    fn out_shift(&self) -> u32 {
        self.0.out_shift
    }
    #[getter]
    fn clock_hz(&self) -> u64 {
        self.0.clock_hz
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyclass(name = "LayerShape", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyLayer(sacc_core::LayerShape);

#[pymethods]
impl PyLayer {
    #[new]
    #[pyo3(signature = (il, ic, m, fl = 3, fh = 3, z = 1, s = 1))]
    fn new(
        il: usize,
        ic: usize,
        m: usize,
        fl: usize,
        fh: usize,
        z: usize,
        s: usize,
    ) -> PyResult<Self> {
        validate_layer(RawLayer {
            il,
            ic,
            fl,
            fh,
            z,
            s,
            m,
        })
        .map(PyLayer)
        .map_err(err)
    }

    #[getter]
    fn il(&self) -> usize {
        self.0.il
    }
    #[getter]
    fn ic(&self) -> usize {
        self.0.ic
    }
    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }
    #[getter]
    fn z(&self) -> usize {
        self.0.z
    }
    #[getter]
    fn ol(&self) -> usize {
        self.0.ol
    }
    #[getter]
    fn oc(&self) -> usize {
        self.0.oc
    }
    fn nominal_macs(&self) -> u64 {
        self.0.nominal_macs()
    }

    fn __repr__(&self) -> String {
        format!("LayerShape({})", self.0)
    }
}

fn arch_or_default(arch: Option<&PyArch>) -> sacc_core::ArchConfig {
    arch.map_or_else(sacc_core::ArchConfig::default, |a| a.0)
}

/// The 13 VGG-16 conv layers as `(name, LayerShape)` pairs.
#[pyfunction]
fn vgg16_layers() -> Vec<(String, PyLayer)> {
    sacc_core::vgg16_conv_preset()
        .layers()
        .iter()
        .map(|l| (l.name.clone(), PyLayer(l.shape)))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (layer, arch = None))]
fn analytic_cycles(layer: &PyLayer, arch: Option<&PyArch>) -> PyResult<u64> {
    sacc_core::analytic_cycles(&layer.0, &arch_or_default(arch)).map_err(err)
}

/// DRAM bytes of one layer as a dict with `weights`, `inputs`, `outputs`, `total`.
#[pyfunction]
#[pyo3(signature = (layer, arch = None))]
fn analytic_traffic<'py>(
    py: Python<'py>,
    layer: &PyLayer,
    arch: Option<&PyArch>,
) -> PyResult<Bound<'py, PyDict>> {
    let t = sacc_core::analytic_traffic(&layer.0, &arch_or_default(arch)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("weights", t.weights_read)?;
    d.set_item("inputs", t.inputs_read)?;
    d.set_item("outputs", t.outputs_written)?;
    d.set_item("total", t.total)?;
    Ok(d)
}

/// Cost report of a network as the same dict the JSON report holds. With no
/// layers given, VGG-16 is used.
#[pyfunction]
#[pyo3(signature = (layers = None, arch = None))]
fn network_cost<'py>(
    py: Python<'py>,
    layers: Option<Vec<(String, PyLayer)>>,
    arch: Option<&PyArch>,
) -> PyResult<Bound<'py, PyAny>> {
    let net = match layers {
        None => sacc_core::vgg16_conv_preset(),
        Some(list) => NetworkSpec::new(
            list.into_iter()
                .map(|(name, l)| NetworkLayer {
                    name,
                    shape: l.0,
                    host_op: sacc_core::HostOp::None,
                })
                .collect(),
        )
        .map_err(err)?,
    };
    let report = cost_of(&net, &arch_or_default(arch)).map_err(err)?;
    let text = emit_report(&report, ReportFormat::Json).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn tensors(
    layer: &PyLayer,
    input: Vec<i16>,
    weights: Vec<i16>,
    biases: Vec<i32>,
) -> PyResult<(Tensor, FilterSet)> {
    let l = &layer.0;
    let input = Tensor::new(l.ic, l.il, l.il, input).map_err(err)?;
    let filters = FilterSet::new(l.m, l.ic, l.fh, l.fl, weights, biases).map_err(err)?;
    Ok((input, filters))
}

/// Reference convolution; returns the flat `m * ol * ol` output.
#[pyfunction]
#[pyo3(signature = (layer, input, weights, biases, arch = None))]
fn golden_conv(
    layer: &PyLayer,
    input: Vec<i16>,
    weights: Vec<i16>,
    biases: Vec<i32>,
    arch: Option<&PyArch>,
) -> PyResult<Vec<i16>> {
    let (input, filters) = tensors(layer, input, weights, biases)?;
    let rules = arch_or_default(arch).rules();
    Ok(golden(&layer.0, &input, &filters, &rules)
        .map_err(err)?
        .into_data())
}

/// Cycle-accurate run of one layer. Returns a dict with the flat `output`,
/// `cycles`, `stall_cycles`, DRAM bytes per category and `utilization`.
#[pyfunction]
#[pyo3(signature = (layer, input, weights, biases, arch = None, threads = 1, checked = false))]
#[allow(clippy::too_many_arguments)]
fn simulate_layer<'py>(
    py: Python<'py>,
    layer: &PyLayer,
    input: Vec<i16>,
    weights: Vec<i16>,
    biases: Vec<i32>,
    arch: Option<&PyArch>,
    threads: usize,
    checked: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let (input, filters) = tensors(layer, input, weights, biases)?;
    let arch = arch_or_default(arch);
    let options = EngineOptions {
        checked,
        threads,
        ..EngineOptions::default()
    };
    let run = py
        .detach(|| run_layer(&arch, &layer.0, &input, &filters, options))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("cycles", run.cycles)?;
    d.set_item("stall_cycles", run.stall_cycles)?;
    d.set_item("weights_bytes", run.trace.weights_read)?;
    d.set_item("inputs_bytes", run.trace.inputs_read)?;
    d.set_item("outputs_bytes", run.trace.outputs_written)?;
    d.set_item("utilization", run.utilization)?;
    d.set_item("output", run.output.into_data())?;
    Ok(d)
}

/// Checks the VGG-16 cost against the published reference figures. Returns
/// `(passed, [(metric, ours, reference, rel_error, passed), ...])`.
#[pyfunction]
#[pyo3(signature = (arch = None))]
#[allow(clippy::type_complexity)]
fn compare_to_paper(arch: Option<&PyArch>) -> PyResult<(bool, Vec<(String, f64, f64, f64, bool)>)> {
    let report = cost_of(&sacc_core::vgg16_conv_preset(), &arch_or_default(arch)).map_err(err)?;
    let cmp = compare(&report).map_err(err)?;
    let rows = cmp
        .rows
        .iter()
        .map(|r| {
            (
                r.metric.to_string(),
                r.ours,
                r.reference,
                r.rel_error,
                r.pass,
            )
        })
        .collect();
    Ok((cmp.pass, rows))
}

#[pymodule]
fn sacc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyArch>()?;
    m.add_class::<PyLayer>()?;
    m.add_function(wrap_pyfunction!(vgg16_layers, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_traffic, m)?)?;
    m.add_function(wrap_pyfunction!(network_cost, m)?)?;
    m.add_function(wrap_pyfunction!(golden_conv, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_layer, m)?)?;
    m.add_function(wrap_pyfunction!(compare_to_paper, m)?)?;
    Ok(())
}

//! Python bindings: the main types and operations of the engine.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use tdcnn::densify;
use tdcnn::flops;
use tdcnn::graph::{self, LayerSpec, NetworkSpec, Shape};
use tdcnn::oracle;
use tdcnn::sbn::{self, SbnConfig, SbnSpec};
use tdcnn::tensor::Tensor3;

fn to_py_err(e: tdcnn::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Dense 3-axis f32 array: feature maps x frequency x time.
#[pyclass(name = "Tensor3")]
#[derive(Clone)]
struct PyTensor3 {
    inner: Tensor3,
}

#[pymethods]
impl PyTensor3 {
    #[staticmethod]
    fn zeros(fmaps: usize, freq: usize, time: usize) -> PyResult<Self> {
        Ok(PyTensor3 { inner: Tensor3::zeros(fmaps, freq, time).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn seeded_random(fmaps: usize, freq: usize, time: usize, seed: u64) -> PyResult<Self> {
        Ok(PyTensor3 {
            inner: Tensor3::seeded_random(fmaps, freq, time, seed).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn from_values(fmaps: usize, freq: usize, time: usize, values: Vec<f32>) -> PyResult<Self> {
        Ok(PyTensor3 { inner: Tensor3::from_vec(fmaps, freq, time, values).map_err(to_py_err)? })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.shape()
    }

    fn get(&self, m: usize, f: usize, t: usize) -> PyResult<f32> {
        let (fm, fr, ti) = self.inner.shape();
        if m >= fm || f >= fr || t >= ti {
            return Err(PyValueError::new_err(format!(
                "index ({m}, {f}, {t}) out of range for {fm} x {fr} x {ti}"
            )));
        }
        Ok(self.inner.get(m, f, t))
    }

    fn slice_time(&self, start: usize, length: usize) -> PyResult<Self> {
        Ok(PyTensor3 { inner: self.inner.slice_time(start, length).map_err(to_py_err)? })
    }

    fn pad_time(&self, left: usize, right: usize) -> PyResult<Self> {
        Ok(PyTensor3 { inner: self.inner.pad_time(left, right).map_err(to_py_err)? })
    }

    fn to_values(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_dump(path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyTensor3 { inner: Tensor3::load_dump(path).map_err(to_py_err)? })
    }

    fn __repr__(&self) -> String {
        let (m, f, t) = self.inner.shape();
        format!("Tensor3({m} x {f} x {t})")
    }
}

/// Equivalence check outcome.
#[pyclass(name = "EquivalenceReport")]
struct PyEquivalenceReport {
    #[pyo3(get)]
    positions: usize,
    #[pyo3(get)]
    max_abs_diff: f64,
    #[pyo3(get)]
    max_rel_diff: f64,
    #[pyo3(get)]
    argmax_agreement: f64,
    #[pyo3(get)]
    tolerance: f64,
    #[pyo3(get)]
    passed: bool,
}

#[pymethods]
impl PyEquivalenceReport {
    fn __repr__(&self) -> String {
        format!(
            "EquivalenceReport(positions={}, max_abs_diff={}, argmax_agreement={}, passed={})",
            self.positions, self.max_abs_diff, self.argmax_agreement, self.passed
        )
    }
}

/// Spliced vs dense multiply-accumulate totals.
#[pyclass(name = "CostReport")]
struct PyCostReport {
    #[pyo3(get)]
    utterance_time: usize,
    #[pyo3(get)]
    window: usize,
    #[pyo3(get)]
    spliced_macs: u128,
    #[pyo3(get)]
    dense_macs: u128,
    #[pyo3(get)]
    ratio: Option<f64>,
}

#[pymethods]
impl PyCostReport {
    fn __repr__(&self) -> String {
        format!(
            "CostReport(utterance_time={}, spliced_macs={}, dense_macs={}, ratio={:?})",
            self.utterance_time, self.spliced_macs, self.dense_macs, self.ratio
        )
    }
}

/// An ordered layer list with declared input shape and evaluation mode.
#[pyclass(name = "Network")]
#[derive(Clone)]
struct PyNetwork {
    inner: NetworkSpec,
}

#[pymethods]
impl PyNetwork {
    /// The reference VGG-style architecture (3 x 64 x 48 window).
    #[staticmethod]
    #[pyo3(signature = (outputs = 32000, seed = 1))]
    fn table1(outputs: usize, seed: u64) -> Self {
        PyNetwork { inner: graph::build_table1(outputs, seed) }
    }

    /// The conv3 / pool2-stride-2 / conv3 toy on an 8-frame window.
    #[staticmethod]
    #[pyo3(signature = (seed = 1))]
    fn fig1_toy(seed: u64) -> Self {
        PyNetwork { inner: graph::build_fig1_toy(seed) }
    }

    /// Default stacked bottleneck network in its dilated-CNN form.
    #[staticmethod]
    #[pyo3(signature = (seed = 1))]
    fn sbn_default(seed: u64) -> PyResult<Self> {
        let spec = SbnSpec::seeded(SbnConfig::default(), seed).map_err(to_py_err)?;
        Ok(PyNetwork { inner: sbn::build_sbn_as_cnn(&spec).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyNetwork { inner: graph::parse_network(text).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PyValueError::new_err(format!("cannot read {path}: {e}")))?;
        Self::parse(&text)
    }

    fn serialize(&self) -> String {
        graph::serialize_network(&self.inner)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, self.serialize())
            .map_err(|e| PyValueError::new_err(format!("cannot write {path}: {e}")))
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode().as_str()
    }

    #[getter]
    fn input_shape(&self) -> (usize, usize, usize) {
        self.inner.input_shape()
    }

    #[getter]
    fn num_layers(&self) -> usize {
        self.inner.layers().len()
    }

    fn receptive_field_time(&self) -> usize {
        self.inner.receptive_field_time()
    }

    /// Rows of (kind, shape) including the input row, mirroring the
    /// architecture table.
    fn describe(&self) -> PyResult<Vec<(String, String)>> {
        let trace = self.inner.infer_shapes().map_err(to_py_err)?;
        let mut rows = vec![("input".to_string(), trace.input.compact())];
        for row in &trace.rows {
            rows.push((self.inner.layers()[row.layer].kind().to_string(), row.shape.compact()));
        }
        Ok(rows)
    }

    fn forward(&self, input: &PyTensor3) -> PyResult<PyTensor3> {
        Ok(PyTensor3 { inner: self.inner.forward(&input.inner).map_err(to_py_err)? })
    }

    /// Densify this windowed net; returns the dense net and the rewrite
    /// report text.
    fn densify(&self) -> PyResult<(PyNetwork, String)> {
        let (dense, report) = densify::densify(&self.inner).map_err(to_py_err)?;
        Ok((PyNetwork { inner: dense }, report.to_string()))
    }

    fn dense_output_length(&self, utterance_time: usize) -> PyResult<usize> {
        densify::dense_output_length(&self.inner, utterance_time).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        let (m, f, t) = self.inner.input_shape();
        let time_dilations: Vec<usize> = self
            .inner
            .layers()
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv(c) => Some(c.dilation_t),
                _ => None,
            })
            .collect();
        format!(
            "Network(mode={}, input={m}x{f}x{t}, layers={}, conv_time_dilations={:?})",
            self.inner.mode(),
            self.inner.layers().len(),
            time_dilations
        )
    }
}

fn output_shape_of(net: &NetworkSpec) -> PyResult<String> {
    let trace = net.infer_shapes().map_err(to_py_err)?;
    Ok(match trace.output() {
        Shape::Map { fmaps, freq, time } => format!("{fmaps}x{freq}x{time}"),
        Shape::Flat { dim } => format!("{dim}"),
    })
}

/// Sliding-window oracle evaluation of a windowed net.
#[pyfunction]
fn eval_spliced(net: &PyNetwork, utterance: &PyTensor3) -> PyResult<Vec<Vec<f32>>> {
    oracle::eval_spliced(&net.inner, &utterance.inner).map_err(to_py_err)
}

/// One dense pass over the whole utterance (dense nets).
#[pyfunction]
fn eval_dense(net: &PyNetwork, utterance: &PyTensor3) -> PyResult<Vec<Vec<f32>>> {
    oracle::eval_dense(&net.inner, &utterance.inner).map_err(to_py_err)
}

/// Diagnostic: run a windowed net convolutionally with strides kept.
#[pyfunction]
fn eval_downsampled(net: &PyNetwork, utterance: &PyTensor3) -> PyResult<Vec<Vec<f32>>> {
    oracle::eval_downsampled(&net.inner, &utterance.inner).map_err(to_py_err)
}

/// Densify internally and compare dense vs sliding-window outputs.
#[pyfunction]
#[pyo3(signature = (net, utterance, tolerance = 0.0))]
fn verify_equivalence(
    net: &PyNetwork,
    utterance: &PyTensor3,
    tolerance: f64,
) -> PyResult<PyEquivalenceReport> {
    let r = oracle::verify_equivalence(&net.inner, &utterance.inner, tolerance)
        .map_err(to_py_err)?;
    Ok(PyEquivalenceReport {
        positions: r.positions,
        max_abs_diff: r.max_abs_diff,
        max_rel_diff: r.max_rel_diff,
        argmax_agreement: r.argmax_agreement,
        tolerance: r.tolerance,
        passed: r.pass,
    })
}

/// Exact spliced vs dense multiply-accumulate counts.
#[pyfunction]
fn flops_report(net: &PyNetwork, utterance_time: usize) -> PyResult<PyCostReport> {
    let r = flops::cost_report(&net.inner, utterance_time).map_err(to_py_err)?;
    Ok(PyCostReport {
        utterance_time: r.utterance_time,
        window: r.window,
        spliced_macs: r.spliced.total_macs,
        dense_macs: r.dense.total_macs,
        ratio: r.ratio_f64(),
    })
}

/// Build an SBN and return (cnn_form, two_stage_eval) helpers: the CNN form
/// as a Network plus the two-stage oracle outputs for an utterance.
#[pyfunction]
#[pyo3(signature = (utterance, input_dim, window, stage1_hidden, bottleneck, stage2_hidden, outputs, seed, offsets = None))]
#[allow(clippy::too_many_arguments)]
fn sbn_two_stage_vs_cnn(
    utterance: &PyTensor3,
    input_dim: usize,
    window: usize,
    stage1_hidden: Vec<usize>,
    bottleneck: usize,
    stage2_hidden: Vec<usize>,
    outputs: usize,
    seed: u64,
    offsets: Option<Vec<i64>>,
) -> PyResult<(Vec<Vec<f32>>, Vec<Vec<f32>>)> {
    let config = SbnConfig {
        input_dim,
        window,
        stage1_hidden,
        bottleneck,
        stage2_hidden,
        outputs,
        offsets: offsets.unwrap_or_else(|| vec![-10, -5, 0, 5, 10]),
    };
    let spec = SbnSpec::seeded(config, seed).map_err(to_py_err)?;
    let net = sbn::build_sbn_as_cnn(&spec).map_err(to_py_err)?;
    let two_stage = sbn::eval_sbn_two_stage(&spec, &utterance.inner).map_err(to_py_err)?;
    let dense = oracle::eval_dense(&net, &utterance.inner).map_err(to_py_err)?;
    Ok((two_stage, dense))
}

/// Output shape string of a network for its declared input.
#[pyfunction]
fn output_shape(net: &PyNetwork) -> PyResult<String> {
    output_shape_of(&net.inner)
}

#[pymodule]
fn tdcnn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor3>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyEquivalenceReport>()?;
    m.add_class::<PyCostReport>()?;
    m.add_function(wrap_pyfunction!(eval_spliced, m)?)?;
    m.add_function(wrap_pyfunction!(eval_dense, m)?)?;
    m.add_function(wrap_pyfunction!(eval_downsampled, m)?)?;
    m.add_function(wrap_pyfunction!(verify_equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(flops_report, m)?)?;
    m.add_function(wrap_pyfunction!(sbn_two_stage_vs_cnn, m)?)?;
    m.add_function(wrap_pyfunction!(output_shape, m)?)?;
    Ok(())
}

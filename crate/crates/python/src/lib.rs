//! Python bindings for the `selfs` library.

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use selfs::diag::{build_report, default_thresholds, ReportOptions};
use selfs::loss::{self, FilterSpec, LossSpec};
use selfs::nbhd::{self, NbhdSpec};
use selfs::ranking::{self, MetricMatrix};
use selfs::scores::{self, ScoreKind, ScoreValue};
use selfs::synth::{self, SynthSpec};
use selfs::{Error, FieldKind, GridField};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Numeric { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn spec(id: &str) -> PyResult<LossSpec> {
    id.parse().map_err(err)
}

/// A 2-D field of mask, probability or real values in row-major order.
#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: GridField,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (rows, cols, spacing_deg, kind, values))]
    fn new(rows: usize, cols: usize, spacing_deg: f64, kind: &str, values: Vec<f64>) -> PyResult<Self> {
        let kind: FieldKind = kind.parse().map_err(err)?;
        Ok(Self {
            inner: GridField::new(rows, cols, spacing_deg, kind, values).map_err(err)?,
        })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn spacing_deg(&self) -> f64 {
        self.inner.spacing_deg()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn sum(&self) -> f64 {
        self.inner.sum()
    }

    fn with_eval_mask(&self, mask: Vec<bool>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.clone().with_eval_mask(mask).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid({}x{}, spacing={}, kind={})",
            self.inner.rows(),
            self.inner.cols(),
            self.inner.spacing_deg(),
            self.inner.kind()
        )
    }
}

fn wrap(inner: GridField) -> PyGrid {
    PyGrid { inner }
}

#[pyfunction]
fn read_grid(path: &str) -> PyResult<PyGrid> {
    selfs::read_grid(path).map(wrap).map_err(err)
}

#[pyfunction]
fn write_grid(grid: &PyGrid, path: &str) -> PyResult<()> {
    selfs::write_grid(&grid.inner, path).map_err(err)
}

/// Applies `nbhd_max_r<R>`, `nbhd_mean_r<R>`, `F<lo>-<hi>` or `W<lo>-<hi>`.
#[pyfunction]
fn apply_filter(grid: &PyGrid, filter: &str) -> PyResult<PyGrid> {
    if let Some(r) = filter.to_ascii_lowercase().strip_prefix("nbhd_mean_r") {
        let r: usize = r.parse().map_err(|_| PyValueError::new_err(format!("bad filter '{filter}'")))?;
        return nbhd::mean_filter(&grid.inner, NbhdSpec::new(r)).map(wrap).map_err(err);
    }
    let out = match filter.parse::<FilterSpec>().map_err(err)? {
        FilterSpec::Neighbourhood(r) => nbhd::max_filter(&grid.inner, r),
        f => f.apply(&grid.inner),
    };
    out.map(wrap).map_err(err)
}

/// All loss ids of the experiment table, in table order.
#[pyfunction]
fn enumerate_configs() -> Vec<String> {
    loss::enumerate_configs().iter().map(|s| s.id()).collect()
}

fn score_tuple(v: ScoreValue) -> (f64, Vec<&'static str>) {
    (v.value, v.fallbacks.iter().map(|f| f.as_str()).collect())
}

/// Pixelwise score of one pair; returns `(value, fallbacks)`.
#[pyfunction]
fn pixelwise_score(kind: &str, p: &PyGrid, y: &PyGrid) -> PyResult<(f64, Vec<&'static str>)> {
    let kind: ScoreKind = kind.parse().map_err(err)?;
    scores::pixelwise_score(kind, &p.inner, &y.inner).map(score_tuple).map_err(err)
}

#[pyfunction]
fn nbhd_score(kind: &str, p: &PyGrid, y: &PyGrid, r: usize) -> PyResult<(f64, Vec<&'static str>)> {
    let kind: ScoreKind = kind.parse().map_err(err)?;
    scores::nbhd_score(kind, &p.inner, &y.inner, NbhdSpec::new(r))
        .map(score_tuple)
        .map_err(err)
}

/// Evaluation metric: spectral filters act on both fields.
#[pyfunction]
fn metric_value(spec_id: &str, p: &PyGrid, y: &PyGrid) -> PyResult<(f64, Vec<&'static str>)> {
    loss::metric_value(&spec(spec_id)?, &p.inner, &y.inner)
        .map(score_tuple)
        .map_err(err)
}

/// Training loss: spectral filters act on the observation only.
#[pyfunction]
fn loss_value(spec_id: &str, p: &PyGrid, y: &PyGrid) -> PyResult<f64> {
    let s = spec(spec_id)?;
    let t = loss::prepare_target(&s, &y.inner).map_err(err)?;
    loss::loss_value(&s, &p.inner, &t).map_err(err)
}

#[pyfunction]
fn loss_gradient(spec_id: &str, p: &PyGrid, y: &PyGrid) -> PyResult<PyGrid> {
    let s = spec(spec_id)?;
    let t = loss::prepare_target(&s, &y.inner).map_err(err)?;
    loss::loss_gradient(&s, &p.inner, &t).map(wrap).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (spec_id, p, y, h = 1e-5))]
fn grad_check<'py>(py: Python<'py>, spec_id: &str, p: &PyGrid, y: &PyGrid, h: f64) -> PyResult<Bound<'py, PyDict>> {
    let s = spec(spec_id)?;
    let t = loss::prepare_target(&s, &y.inner).map_err(err)?;
    let r = loss::grad_check(&s, &p.inner, &t, h).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("max_abs_err", r.max_abs_err)?;
    d.set_item("max_rel_err", r.max_rel_err)?;
    d.set_item("worst_pixel", r.worst_pixel)?;
    d.set_item("checked", r.checked)?;
    d.set_item("excluded", r.excluded)?;
    d.set_item("degenerate", r.degenerate)?;
    Ok(d)
}

/// Synthetic mask; returns `(grid, event_fraction)`.
#[pyfunction]
#[pyo3(signature = (rows, cols, spacing_deg, n_cells, radius_px = (2.0, 6.0), elongation = (1.0, 3.0), seed = 0))]
fn synth_mask(
    rows: usize,
    cols: usize,
    spacing_deg: f64,
    n_cells: usize,
    radius_px: (f64, f64),
    elongation: (f64, f64),
    seed: u64,
) -> PyResult<(PyGrid, f64)> {
    let m = synth::synth_mask(&SynthSpec {
        rows,
        cols,
        spacing_deg,
        n_cells,
        cell_radius_px: radius_px,
        elongation,
        seed,
    })
    .map_err(err)?;
    Ok((wrap(m.field), m.event_fraction))
}

#[pyfunction]
#[pyo3(signature = (mask, blur_r = 0, offset_px = (0, 0), noise_sd = 0.0, seed = 0))]
fn synth_prob(mask: &PyGrid, blur_r: usize, offset_px: (i64, i64), noise_sd: f64, seed: u64) -> PyResult<PyGrid> {
    synth::synth_prob(&mask.inner, blur_r, offset_px, noise_sd, seed)
        .map(wrap)
        .map_err(err)
}

fn matrix(model_ids: Vec<String>, metric_ids: Vec<String>, values: Vec<Vec<f64>>) -> PyResult<MetricMatrix> {
    let specs = metric_ids.iter().map(|s| spec(s)).collect::<PyResult<Vec<_>>>()?;
    MetricMatrix::new(model_ids, specs, values).map_err(err)
}

/// Rank matrix (1 = best), one row per model.
#[pyfunction]
fn rank_models(model_ids: Vec<String>, metric_ids: Vec<String>, values: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix(model_ids, metric_ids, values)?;
    Ok(ranking::rank_models(&m).map_err(err)?.ranks)
}

/// Winner per filter as `(filter, model, summary_score, tied_with)`.
#[pyfunction]
fn best_per_filter(
    model_ids: Vec<String>,
    metric_ids: Vec<String>,
    values: Vec<Vec<f64>>,
) -> PyResult<Vec<(String, String, f64, Vec<String>)>> {
    let m = matrix(model_ids, metric_ids, values)?;
    let ranks = ranking::rank_models(&m).map_err(err)?;
    let filters = ranking::filters_in_order(&m.metric_specs);
    let summary = ranking::summary_scores(&ranks, &filters).map_err(err)?;
    Ok(ranking::best_per_filter(&summary)
        .into_iter()
        .map(|w| (w.filter.to_string(), w.model_id, w.summary_score, w.tied_with))
        .collect())
}

/// Attributes and performance diagram data plus summary statistics, as JSON.
#[pyfunction]
#[pyo3(signature = (forecasts, observations, seed = 0, n_boot = 1000))]
fn eval_report_json(forecasts: Vec<PyGrid>, observations: Vec<PyGrid>, seed: u64, n_boot: usize) -> PyResult<String> {
    let p: Vec<GridField> = forecasts.into_iter().map(|g| g.inner).collect();
    let y: Vec<GridField> = observations.into_iter().map(|g| g.inner).collect();
    let opts = ReportOptions {
        ci_n_boot: n_boot,
        seed,
        ..Default::default()
    };
    let report = build_report(&p, &y, &default_thresholds(), opts).map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn selfs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_function(wrap_pyfunction!(read_grid, m)?)?;
    m.add_function(wrap_pyfunction!(write_grid, m)?)?;
    m.add_function(wrap_pyfunction!(apply_filter, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_configs, m)?)?;
    m.add_function(wrap_pyfunction!(pixelwise_score, m)?)?;
    m.add_function(wrap_pyfunction!(nbhd_score, m)?)?;
    m.add_function(wrap_pyfunction!(metric_value, m)?)?;
    m.add_function(wrap_pyfunction!(loss_value, m)?)?;
    m.add_function(wrap_pyfunction!(loss_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(synth_mask, m)?)?;
    m.add_function(wrap_pyfunction!(synth_prob, m)?)?;
    m.add_function(wrap_pyfunction!(rank_models, m)?)?;
    m.add_function(wrap_pyfunction!(best_per_filter, m)?)?;
    m.add_function(wrap_pyfunction!(eval_report_json, m)?)?;
    Ok(())
}

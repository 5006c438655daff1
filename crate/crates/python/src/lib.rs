//! Python bindings. Configurations travel as JSON strings so that Python
//! callers can use plain dicts with `json.dumps`.

use std::path::PathBuf;

use fa::funcdata::{heatmap_stats, load_dataset, write_dataset, CurveSample, LoadOptions};
use fa::inference::{self, ContrastSpec};
use fa::pipeline::{self, AnalysisConfig, TrainedClassifier};
use fa::{simulate, BSplineBasis, FunctionalDataset, TimeGrid};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(funcanova, FuncanovaError, PyValueError);

fn err(e: fa::Error) -> PyErr {
    FuncanovaError::new_err(e.to_string())
}

fn from_json<T: DeserializeOwned + Default>(text: Option<&str>) -> PyResult<T> {
    match text {
        None => Ok(T::default()),
        Some(t) => serde_json::from_str(t).map_err(|e| FuncanovaError::new_err(format!("bad config: {e}"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| FuncanovaError::new_err(e.to_string()))
}

/// Balanced grouped multivariate curves on a common grid. Group 0 is control.
#[pyclass(name = "Dataset", module = "funcanova", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: FunctionalDataset,
}

#[pymethods]
impl PyDataset {
    /// Build from nested lists `values[g][d][k][i]` on a uniform grid over [0, t_end].
    #[new]
    #[pyo3(signature = (values, t_end = 1.0, group_labels = None, variate_labels = None))]
    fn new(
        values: Vec<Vec<Vec<Vec<f64>>>>,
        t_end: f64,
        group_labels: Option<Vec<String>>,
        variate_labels: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let n_g = values.len();
        let n_d = values.first().map_or(0, Vec::len);
        let n_t = values
            .first()
            .and_then(|v| v.first())
            .and_then(|v| v.first())
            .map_or(0, Vec::len);
        let grid = TimeGrid::uniform(n_t, t_end).map_err(err)?;
        let groups = group_labels.unwrap_or_else(|| (0..n_g).map(|g| format!("g{g}")).collect());
        let variates = variate_labels.unwrap_or_else(|| (0..n_d).map(|d| format!("v{d}")).collect());
        if groups.len() != n_g || variates.len() != n_d {
            return Err(FuncanovaError::new_err("label count does not match the value array"));
        }
        let mut samples = Vec::new();
        for (g, per_g) in values.into_iter().enumerate() {
            for (d, per_d) in per_g.into_iter().enumerate() {
                if d >= n_d {
                    return Err(FuncanovaError::new_err("ragged variate dimension"));
                }
                for (k, curve) in per_d.into_iter().enumerate() {
                    samples.push(CurveSample {
                        unit_id: format!("{}_u{k:02}", groups[g]),
                        group_id: groups[g].clone(),
                        variate_id: variates[d].clone(),
                        values: curve,
                    });
                }
            }
        }
        let inner = FunctionalDataset::from_samples(grid, groups, variates, samples).map_err(err)?;
        Ok(Self { inner })
    }

    /// Load per-recording CSVs listed in a manifest (`file,unit,group`).
    #[staticmethod]
    #[pyo3(signature = (manifest, data_dir = None, control_group = None, grid_len = None))]
    fn load(
        manifest: PathBuf,
        data_dir: Option<PathBuf>,
        control_group: Option<String>,
        grid_len: Option<usize>,
    ) -> PyResult<Self> {
        let dir = data_dir.unwrap_or_else(|| manifest.parent().map(PathBuf::from).unwrap_or_default());
        let opts = LoadOptions {
            control_group,
            grid_len,
            ..LoadOptions::default()
        };
        Ok(Self {
            inner: load_dataset(&manifest, &dir, &opts).map_err(err)?,
        })
    }

    /// Write the canonical layout and return the manifest path.
    fn write(&self, dir: PathBuf) -> PyResult<String> {
        let p = write_dataset(&self.inner, &dir).map_err(err)?;
        Ok(p.to_string_lossy().into_owned())
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid().points().to_vec()
    }

    #[getter]
    fn group_labels(&self) -> Vec<String> {
        self.inner.group_labels().to_vec()
    }

    #[getter]
    fn variate_labels(&self) -> Vec<String> {
        self.inner.variate_labels().to_vec()
    }

    #[getter]
    fn units_per_group(&self) -> usize {
        self.inner.units_per_group()
    }

    fn curve(&self, g: usize, d: usize, k: usize) -> PyResult<Vec<f64>> {
        if g >= self.inner.n_groups() || d >= self.inner.n_variates() || k >= self.inner.units_per_group() {
            return Err(pyo3::exceptions::PyIndexError::new_err("curve index out of range"));
        }
        Ok(self.inner.curve(g, d, k).to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(groups={}, variates={}, units={}, grid={})",
            self.inner.n_groups(),
            self.inner.n_variates(),
            self.inner.units_per_group(),
            self.inner.grid().len()
        )
    }
}

/// Cubic (or other order) B-spline basis with uniform interior knots.
#[pyclass(name = "BSplineBasis", module = "funcanova", frozen)]
struct PyBasis {
    inner: BSplineBasis,
}

#[pymethods]
impl PyBasis {
    #[new]
    #[pyo3(signature = (n_basis, order = 4, t_end = 1.0))]
    fn new(n_basis: usize, order: usize, t_end: f64) -> PyResult<Self> {
        Ok(Self {
            inner: BSplineBasis::uniform(order, n_basis, t_end).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Basis function values at `t`.
    fn eval(&self, t: f64) -> PyResult<Vec<f64>> {
        self.inner.eval(t).map_err(err)
    }

    fn evaluate(&self, coefs: Vec<f64>, points: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.evaluate(&coefs, &points).map_err(err)
    }

    /// Inner products of the basis functions over the domain.
    fn gram(&self) -> Vec<Vec<f64>> {
        let g = self.inner.gram();
        let m = g.matrix();
        (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
    }

    /// Penalized least-squares coefficients of `values` sampled on `grid`.
    #[pyo3(signature = (values, grid, ridge = 1e-6))]
    fn smooth(&self, values: Vec<f64>, grid: Vec<f64>, ridge: f64) -> PyResult<Vec<f64>> {
        let grid = TimeGrid::new(grid).map_err(err)?;
        fa::basis::smooth_curve(&values, &grid, &self.inner, ridge).map_err(err)
    }
}

/// Smoothing, FANOVA fit and per-contrast tests of one dataset.
#[pyclass(name = "Analysis", module = "funcanova", frozen)]
struct PyAnalysis {
    inner: pipeline::Analysis,
}

#[pymethods]
impl PyAnalysis {
    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.kernels.grid.points().to_vec()
    }

    /// Grand mean of variate `d` on the grid.
    fn mean(&self, d: usize) -> PyResult<Vec<f64>> {
        self.inner
            .kernels
            .mean
            .get(d)
            .cloned()
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err("variate out of range"))
    }

    /// Effect of group `g` on variate `d` on the grid.
    fn effect(&self, d: usize, g: usize) -> PyResult<Vec<f64>> {
        self.inner
            .kernels
            .effects
            .get(d)
            .and_then(|e| e.get(g))
            .cloned()
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err("index out of range"))
    }

    /// Significant zones as `(variate, group, start, end)` tuples.
    fn zones(&self) -> Vec<(String, String, f64, f64)> {
        let k = &self.inner.kernels;
        self.inner
            .reports
            .iter()
            .flat_map(|r| {
                r.zones.iter().map(move |z| {
                    (
                        k.variate_labels[r.contrast.variate].clone(),
                        k.group_labels[r.contrast.group].clone(),
                        z.start,
                        z.end,
                    )
                })
            })
            .collect()
    }

    fn reports_json(&self) -> PyResult<String> {
        to_json(&self.inner.reports)
    }

    fn kernels_json(&self) -> PyResult<String> {
        to_json(&self.inner.kernels)
    }

    /// Mean relative L2 distance to a ground truth from `simulate`.
    fn dissimilarity(&self, truth_json: &str) -> PyResult<f64> {
        let truth: simulate::GroundTruth =
            serde_json::from_str(truth_json).map_err(|e| FuncanovaError::new_err(e.to_string()))?;
        simulate::kernel_dissimilarity(&self.inner.kernels, &truth).map_err(err)
    }
}

/// Fit the model and test every control-vs-group contrast.
#[pyfunction]
#[pyo3(signature = (dataset, config = None))]
fn analyze(py: Python<'_>, dataset: &PyDataset, config: Option<&str>) -> PyResult<PyAnalysis> {
    let cfg: AnalysisConfig = from_json(config)?;
    let ds = dataset.inner.clone();
    let inner = py.detach(move || pipeline::analyze(&ds, &cfg)).map_err(err)?;
    Ok(PyAnalysis { inner })
}

/// Kernel-score classifier trained on a dataset.
#[pyclass(name = "Classifier", module = "funcanova", frozen)]
struct PyClassifier {
    inner: TrainedClassifier,
    group_labels: Vec<String>,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    #[pyo3(signature = (dataset, config = None))]
    fn fit(py: Python<'_>, dataset: &PyDataset, config: Option<&str>) -> PyResult<Self> {
        let cfg: AnalysisConfig = from_json(config)?;
        let ds = dataset.inner.clone();
        let inner = py
            .detach(move || {
                let a = pipeline::analyze(&ds, &cfg)?;
                TrainedClassifier::fit(&a, &ds, &cfg)
            })
            .map_err(err)?;
        Ok(Self {
            inner,
            group_labels: dataset.inner.group_labels().to_vec(),
        })
    }

    /// `(unit_id, predicted_group)` for every unit of `dataset`.
    fn predict(&self, dataset: &PyDataset) -> PyResult<Vec<(String, String)>> {
        if dataset.inner.group_labels() != self.group_labels.as_slice() {
            return Err(FuncanovaError::new_err("dataset groups differ from the training groups"));
        }
        let preds = self.inner.predict(&dataset.inner.labeled_units()).map_err(err)?;
        Ok(preds
            .into_iter()
            .map(|p| (p.unit_id, self.group_labels[p.predicted].clone()))
            .collect())
    }

    /// Share of units of `dataset` predicted as their own group.
    fn accuracy(&self, dataset: &PyDataset) -> PyResult<Option<f64>> {
        let preds = self.inner.predict(&dataset.inner.labeled_units()).map_err(err)?;
        Ok(pipeline::accuracy(&preds))
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }
}

/// Pointwise F statistic of the control-vs-`group` contrast on variate `variate`.
#[pyfunction]
fn pointwise_f(dataset: &PyDataset, variate: usize, group: usize) -> PyResult<Vec<f64>> {
    let c = ContrastSpec::for_dataset(&dataset.inner, variate, group).map_err(err)?;
    Ok(inference::pointwise_f(&dataset.inner, &c).map_err(err)?.values)
}

#[pyfunction]
fn f_quantile(d1: f64, d2: f64, p: f64) -> PyResult<f64> {
    inference::f_quantile(d1, d2, p).map_err(err)
}

#[pyfunction]
fn f_cdf(d1: f64, d2: f64, x: f64) -> PyResult<f64> {
    inference::f_cdf(d1, d2, x).map_err(err)
}

/// Eigenvalues of the covariance operator of one variate, pooled over groups
/// unless `group` is given.
#[pyfunction]
#[pyo3(signature = (dataset, variate, group = None, n_basis = 20, ridge = 1e-6))]
fn fpca_eigenvalues(
    dataset: &PyDataset,
    variate: usize,
    group: Option<usize>,
    n_basis: usize,
    ridge: f64,
) -> PyResult<Vec<f64>> {
    let ds = &dataset.inner;
    let basis = BSplineBasis::uniform(4, n_basis, ds.grid().t_end()).map_err(err)?;
    let coefs = fa::Smoother::new(&basis, ds.grid(), ridge)
        .and_then(|s| s.smooth_dataset(ds))
        .map_err(err)?;
    let sel = fa::fpca::Selector { group, variate };
    let eig = fa::fpca::covariance_eigen_selected(&coefs, sel, &basis.gram(), true).map_err(err)?;
    Ok(eig.eigenvalues)
}

/// `(group, variate, mean, cv, normalized)` rows relative to a neutral group.
#[pyfunction]
#[pyo3(signature = (dataset, neutral = None))]
fn heatmap(dataset: &PyDataset, neutral: Option<String>) -> PyResult<Vec<(String, String, f64, f64, f64)>> {
    let neutral = neutral.unwrap_or_else(|| dataset.inner.group_labels()[0].clone());
    let table = heatmap_stats(&dataset.inner, &neutral).map_err(err)?;
    Ok(table
        .rows
        .into_iter()
        .map(|r| (r.group, r.variate, r.mean, r.cv, r.normalized))
        .collect())
}

/// Simulated training dataset and its ground truth as JSON.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn simulate_dataset(config: Option<&str>) -> PyResult<(PyDataset, String)> {
    let cfg: simulate::SimulationConfig = from_json(config)?;
    let (inner, truth) = simulate::gen_dataset(&cfg).map_err(err)?;
    Ok((PyDataset { inner }, to_json(&truth)?))
}

/// Emotion-corpus-shaped action-unit dataset.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn ravdess_like(config: Option<&str>) -> PyResult<PyDataset> {
    let cfg: simulate::FixtureConfig = from_json(config)?;
    Ok(PyDataset {
        inner: simulate::ravdess_like(&cfg).map_err(err)?,
    })
}

/// Noise sweep summary rows `(sd, method, dissimilarity, match_rate, accuracy)`.
#[pyfunction]
#[pyo3(signature = (sd_levels, n_reps, methods = None, config = None))]
fn noise_sweep(
    py: Python<'_>,
    sd_levels: Vec<f64>,
    n_reps: usize,
    methods: Option<Vec<String>>,
    config: Option<&str>,
) -> PyResult<Vec<(f64, String, f64, f64, f64)>> {
    let cfg: simulate::SimulationConfig = from_json(config)?;
    let methods = methods
        .unwrap_or_else(|| vec!["classic".into(), "permutation".into()])
        .iter()
        .map(|m| m.parse())
        .collect::<fa::Result<Vec<fa::TestMethod>>>()
        .map_err(err)?;
    let report = py
        .detach(move || simulate::noise_sweep(&cfg, &sd_levels, n_reps, &methods))
        .map_err(err)?;
    Ok(report
        .summary()
        .into_iter()
        .map(|s| (s.sd, s.method.to_string(), s.dissimilarity, s.match_rate, s.accuracy))
        .collect())
}

#[pymodule]
fn funcanova(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FuncanovaError", m.py().get_type::<FuncanovaError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyBasis>()?;
    m.add_class::<PyAnalysis>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(pointwise_f, m)?)?;
    m.add_function(wrap_pyfunction!(f_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(f_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(fpca_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(heatmap, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(ravdess_like, m)?)?;
    m.add_function(wrap_pyfunction!(noise_sweep, m)?)?;
    Ok(())
}

//! Python bindings. Matrices cross the boundary as lists of rows.

use koopman_core::dictionary::{Dictionary, FixedDictionary, NeuralDictionary};
use koopman_core::edmd::{default_sigma, eig, solve_koopman};
use koopman_core::gram::compute_gram;
use koopman_core::hankel::{build_hankel_from_rows, hankel_dmd as core_hankel_dmd, DmdRank};
use koopman_core::reskoopnet::{train as core_train, TrainConfig};
use koopman_core::residual::{pseudospectrum as core_pseudospectrum, residuals_where_defined};
use koopman_core::{c64, dynamics, io, linalg, preprocess, KoopmanError, Mat, SnapshotPairs};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: KoopmanError) -> PyErr {
    match e {
        KoopmanError::Io(e) => PyIOError::new_err(e.to_string()),
        KoopmanError::InvalidParameter(_)
        | KoopmanError::DimensionMismatch(_)
        | KoopmanError::Format { .. }
        | KoopmanError::Json(_)
        | KoopmanError::TrajectoryTooShort { .. } => PyValueError::new_err(e.to_string()),
        other => PyArithmeticError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Mat<f64>> {
    linalg::from_rows(rows).map_err(to_py)
}

fn rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[pyclass(name = "Snapshots", module = "koopman_py", from_py_object)]
#[derive(Clone)]
pub struct PySnapshots {
    inner: SnapshotPairs,
}

#[pymethods]
impl PySnapshots {
    #[new]
    fn new(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = SnapshotPairs::new(matrix(&x)?, matrix(&y)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n_init, n_steps, dt=0.5, seed=0))]
    fn pendulum(n_init: usize, n_steps: usize, dt: f64, seed: u64) -> PyResult<Self> {
        let inner = dynamics::simulate_pendulum(n_init, n_steps, dt, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (matrix_rows, n_init, n_steps, seed=0))]
    fn linear(matrix_rows: Vec<Vec<f64>>, n_init: usize, n_steps: usize, seed: u64) -> PyResult<Self> {
        let m = matrix(&matrix_rows)?;
        let inner = dynamics::simulate_linear(m.as_ref(), n_init, n_steps, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let inner = io::read_snapshots(path.as_ref()).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[pyo3(signature = (path, binary=false))]
    fn write(&self, path: &str, binary: bool) -> PyResult<()> {
        io::write_snapshots(path.as_ref(), &self.inner, binary).map_err(to_py)
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn x(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.x().to_owned())
    }

    fn y(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.y().to_owned())
    }

    fn __len__(&self) -> usize {
        self.inner.m()
    }
}

#[pyclass(name = "FixedDictionary", module = "koopman_py", from_py_object)]
#[derive(Clone)]
pub struct PyFixedDictionary {
    inner: FixedDictionary,
}

#[pymethods]
impl PyFixedDictionary {
    #[staticmethod]
    fn monomial(d: usize, max_degree: usize) -> PyResult<Self> {
        let inner = FixedDictionary::monomial(d, max_degree).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn rbf(centers: Vec<Vec<f64>>, bandwidth: f64) -> PyResult<Self> {
        let inner = FixedDictionary::rbf(centers, bandwidth).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn fourier_hermite(hermite_order: usize, fourier_order: usize) -> PyResult<Self> {
        let inner = FixedDictionary::fourier_hermite(hermite_order, fourier_order).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_k(&self) -> usize {
        self.inner.n_k()
    }

    fn evaluate(&self, states: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let psi = self.inner.evaluate_batch(matrix(&states)?.as_ref()).map_err(to_py)?;
        Ok(rows(&psi))
    }
}

#[pyclass(name = "NeuralDictionary", module = "koopman_py", from_py_object)]
#[derive(Clone)]
pub struct PyNeuralDictionary {
    inner: NeuralDictionary,
}

#[pymethods]
impl PyNeuralDictionary {
    #[new]
    #[pyo3(signature = (d, hidden, n_train, seed=0))]
    fn new(d: usize, hidden: Vec<usize>, n_train: usize, seed: u64) -> PyResult<Self> {
        let inner = NeuralDictionary::new(d, &hidden, n_train, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = NeuralDictionary::from_json(text).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn n_k(&self) -> usize {
        self.inner.n_k()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    fn evaluate(&self, states: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let psi = self.inner.evaluate_batch(matrix(&states)?.as_ref()).map_err(to_py)?;
        Ok(rows(&psi))
    }
}

#[derive(FromPyObject)]
enum AnyDictionary {
    Fixed(PyFixedDictionary),
    Neural(PyNeuralDictionary),
}

impl AnyDictionary {
    fn as_dyn(&self) -> &dyn Dictionary {
        match self {
            AnyDictionary::Fixed(d) => &d.inner,
            AnyDictionary::Neural(d) => &d.inner,
        }
    }
}

#[pyclass(name = "Spectrum", module = "koopman_py", from_py_object)]
#[derive(Clone)]
pub struct PySpectrum {
    inner: koopman_core::Spectrum,
}

#[pymethods]
impl PySpectrum {
    fn eigenvalues(&self) -> Vec<c64> {
        self.inner.eigenvalues()
    }

    fn residuals(&self) -> Vec<Option<f64>> {
        self.inner.residuals()
    }

    /// Coefficient vectors, one list per eigenpair.
    fn vectors(&self) -> Vec<Vec<c64>> {
        self.inner.pairs.iter().map(|p| p.vector.clone()).collect()
    }

    /// Pairs with residual at most `epsilon`.
    fn filter(&self, epsilon: f64) -> PyResult<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(PyValueError::new_err("epsilon must be nonnegative"));
        }
        let mut inner = self.inner.clone();
        inner.pairs.retain(|p| p.residual.is_some_and(|r| r <= epsilon));
        Ok(Self { inner })
    }

    fn to_csv(&self) -> String {
        io::format_spectrum_csv(&self.inner, &[])
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn gram_of(dict: &dyn Dictionary, data: &SnapshotPairs) -> PyResult<koopman_core::GramTriple> {
    let psi_x = dict.evaluate_batch(data.x()).map_err(to_py)?;
    let psi_y = dict.evaluate_batch(data.y()).map_err(to_py)?;
    compute_gram(psi_x.as_ref(), psi_y.as_ref()).map_err(to_py)
}

/// EDMD spectrum with residuals. `sigma=None` uses a scale-aware default.
#[pyfunction]
#[pyo3(signature = (dictionary, snapshots, sigma=None))]
fn edmd(dictionary: AnyDictionary, snapshots: &PySnapshots, sigma: Option<f64>) -> PyResult<PySpectrum> {
    let gram = gram_of(dictionary.as_dyn(), &snapshots.inner)?;
    let sigma = sigma.unwrap_or_else(|| default_sigma(&gram));
    let k = solve_koopman(&gram, sigma).map_err(to_py)?;
    let spectrum = eig(&k, &gram).map_err(to_py)?;
    let (inner, _) = residuals_where_defined(&spectrum, &gram).map_err(to_py)?;
    Ok(PySpectrum { inner })
}

/// `(tau, accepted)` for every point.
#[pyfunction]
#[pyo3(signature = (dictionary, snapshots, points, epsilon, sigma=None))]
fn pseudospectrum(
    dictionary: AnyDictionary,
    snapshots: &PySnapshots,
    points: Vec<c64>,
    epsilon: f64,
    sigma: Option<f64>,
) -> PyResult<Vec<(f64, bool)>> {
    let gram = gram_of(dictionary.as_dyn(), &snapshots.inner)?;
    let sigma = sigma.unwrap_or_else(|| default_sigma(&gram));
    let grid = core_pseudospectrum(&gram, &points, epsilon, sigma).map_err(to_py)?;
    Ok(grid.tau.into_iter().zip(grid.accepted).collect())
}

/// Trains a copy of `dictionary`. `config` takes the training config keys
/// (`learning_rate`, `sigma`, `max_epochs`, `batch_size`, ...). Returns
/// `(dictionary, spectrum, report)` with the report as a dict.
#[pyfunction]
#[pyo3(signature = (snapshots, dictionary, **config))]
fn train<'py>(
    py: Python<'py>,
    snapshots: &PySnapshots,
    dictionary: &PyNeuralDictionary,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<(PyNeuralDictionary, PySpectrum, Py<PyAny>)> {
    let config: TrainConfig = match config {
        None => TrainConfig::default(),
        Some(kw) => {
            let json = py.import("json")?.call_method1("dumps", (kw,))?;
            serde_json::from_str(json.extract::<&str>()?).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
    };
    let model = core_train(&snapshots.inner, dictionary.inner.clone(), &config).map_err(to_py)?;
    let report = serde_json::to_string(&model.report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py.import("json")?.call_method1("loads", (report,))?.unbind();
    Ok((
        PyNeuralDictionary { inner: model.dictionary },
        PySpectrum { inner: model.spectrum },
        report,
    ))
}

/// Time-delay DMD of a series given as rows of states.
#[pyfunction]
#[pyo3(signature = (series, delay, rank=None))]
fn hankel_dmd(series: Vec<Vec<f64>>, delay: usize, rank: Option<usize>) -> PyResult<PySpectrum> {
    let h = build_hankel_from_rows(matrix(&series)?.as_ref(), delay).map_err(to_py)?;
    let rank = rank.map_or(DmdRank::Full, DmdRank::Fixed);
    let inner = core_hankel_dmd(&h, rank).map_err(to_py)?;
    Ok(PySpectrum { inner })
}

#[pyfunction]
fn davies_bouldin(features: Vec<Vec<f64>>, labels: Vec<i64>) -> PyResult<f64> {
    preprocess::davies_bouldin(matrix(&features)?.as_ref(), &labels).map_err(to_py)
}

#[pymodule]
pub fn koopman_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySnapshots>()?;
    m.add_class::<PyFixedDictionary>()?;
    m.add_class::<PyNeuralDictionary>()?;
    m.add_class::<PySpectrum>()?;
    m.add_function(wrap_pyfunction!(edmd, m)?)?;
    m.add_function(wrap_pyfunction!(pseudospectrum, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(hankel_dmd, m)?)?;
    m.add_function(wrap_pyfunction!(davies_bouldin, m)?)?;
    Ok(())
}

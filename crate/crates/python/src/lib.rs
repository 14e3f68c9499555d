//! Python bindings. Matrices cross the boundary as lists of rows.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use perdl_core::dl::{DlAlgorithm, WarmStartConfig};
use perdl_core::perma::{self, ClientState, PermaOptions};
use perdl_core::synthgen::{self, SynthConfig};
use perdl_core::{matching, PartitionedDictionary};

type Rows = Vec<Vec<f64>>;
type Matched = (PyDictionary, Vec<PyDictionary>, Vec<Vec<(usize, i8)>>);

fn err(e: perdl_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &Rows) -> PyResult<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// A dictionary whose columns are atoms.
#[pyclass(name = "Dictionary", module = "perdl", frozen, from_py_object)]
#[derive(Clone)]
struct PyDictionary {
    inner: perdl_core::Dictionary,
}

#[pymethods]
impl PyDictionary {
    #[new]
    #[pyo3(signature = (rows, normalize = false))]
    fn new(rows: Rows, normalize: bool) -> PyResult<Self> {
        let m = to_matrix(&rows)?;
        let inner = if normalize {
            perdl_core::Dictionary::normalized(m)
        } else {
            perdl_core::Dictionary::new(m)
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn atoms(&self) -> usize {
        self.inner.atoms()
    }

    fn to_list(&self) -> Rows {
        to_rows(self.inner.matrix())
    }

    fn __repr__(&self) -> String {
        format!(
            "Dictionary(dim={}, atoms={})",
            self.inner.dim(),
            self.inner.atoms()
        )
    }
}

fn wrap(d: &perdl_core::Dictionary) -> PyDictionary {
    PyDictionary { inner: d.clone() }
}

/// Distance between two atoms up to sign.
#[pyfunction]
fn vector_d2(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    perdl_core::vector_d2(&a, &b).map_err(err)
}

/// Returns `(distance, perm, signs)` for the best signed permutation.
#[pyfunction]
fn dist_12(a: &PyDictionary, b: &PyDictionary) -> PyResult<(f64, Vec<usize>, Vec<i8>)> {
    let (d, pi) = perdl_core::dist_12(&a.inner, &b.inner).map_err(err)?;
    Ok((d, pi.perm().to_vec(), pi.signs().to_vec()))
}

#[pyfunction]
fn incoherence(d: &PyDictionary) -> PyResult<f64> {
    perdl_core::incoherence(&d.inner).map_err(err)
}

/// One orthogonal dictionary-learning step; returns the new dictionary.
#[pyfunction]
fn orthogonal_step(y: Rows, d: &PyDictionary, threshold: f64) -> PyResult<PyDictionary> {
    let y = to_matrix(&y)?;
    let (next, _) = DlAlgorithm::orthogonal(threshold)
        .step(&y, &d.inner)
        .map_err(err)?;
    Ok(PyDictionary { inner: next })
}

/// Synthetic clients sharing `global_atoms` atoms. Returns a dict with
/// `global`, `locals` and `data`.
#[pyfunction]
#[pyo3(signature = (num_clients = 10, dim = 6, atoms = 6, global_atoms = 3, samples = 200, bernoulli_p = 0.2, truncation = 0.3, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn generate<'py>(
    py: Python<'py>,
    num_clients: usize,
    dim: usize,
    atoms: usize,
    global_atoms: usize,
    samples: usize,
    bernoulli_p: f64,
    truncation: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SynthConfig {
        num_clients,
        dim,
        atoms_per_client: atoms,
        global_atoms,
        samples_per_client: samples,
        bernoulli_p,
        truncation,
        seed,
        ..SynthConfig::default()
    };
    let gt = synthgen::generate(&cfg).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("global", wrap(&gt.global))?;
    out.set_item("locals", gt.locals.iter().map(wrap).collect::<Vec<_>>())?;
    out.set_item("data", gt.data.iter().map(to_rows).collect::<Vec<_>>())?;
    Ok(out)
}

/// Extracts shared atoms; returns `(global, locals, assignments)` where
/// `assignments[i][j]` is `(atom, sign)` of client `i` behind global atom `j`.
#[pyfunction]
#[pyo3(signature = (dicts, global_atoms, renormalize = true))]
fn global_matching(
    dicts: Vec<PyDictionary>,
    global_atoms: usize,
    renormalize: bool,
) -> PyResult<Matched> {
    let dicts: Vec<_> = dicts.into_iter().map(|d| d.inner).collect();
    let m = matching::global_matching(&dicts, global_atoms, renormalize).map_err(err)?;
    let assignments = m
        .assignments
        .iter()
        .map(|a| a.iter().map(|x| (x.index, x.sign)).collect())
        .collect();
    Ok((
        wrap(&m.global),
        m.locals.iter().map(wrap).collect(),
        assignments,
    ))
}

/// Collaborative run over client data. Returns a dict with `global`,
/// `locals` and `mean_residual` (one value per round).
#[pyfunction]
#[pyo3(signature = (data, atoms, global_atoms, rounds = 50, threshold = 0.15, seed = 0, renormalize = true))]
#[allow(clippy::too_many_arguments)]
fn run_perma<'py>(
    py: Python<'py>,
    data: Vec<Rows>,
    atoms: usize,
    global_atoms: usize,
    rounds: usize,
    threshold: f64,
    seed: u64,
    renormalize: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let alg = DlAlgorithm::orthogonal(threshold);
    let ws = WarmStartConfig {
        final_threshold: threshold,
        seed,
        ..WarmStartConfig::default()
    };
    let mut clients = data
        .iter()
        .enumerate()
        .map(|(i, y)| {
            Ok(ClientState::new(
                i,
                to_matrix(y)?,
                alg,
                ws.for_client(i),
                atoms,
            ))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let opts = PermaOptions {
        global_atoms,
        rounds,
        renormalize,
        ..PermaOptions::default()
    };
    let outcome = py
        .detach(|| perma::run_perma(&mut clients, &opts, None))
        .map_err(err)?;
    let residual: Vec<f64> = outcome
        .server
        .history
        .iter()
        .map(|t| t.recon_residual.iter().sum::<f64>() / t.recon_residual.len().max(1) as f64)
        .collect();
    let out = PyDict::new(py);
    out.set_item("global", wrap(&outcome.server.global))?;
    out.set_item(
        "locals",
        outcome
            .partitions
            .iter()
            .map(|p: &PartitionedDictionary| wrap(&p.local))
            .collect::<Vec<_>>(),
    )?;
    out.set_item("mean_residual", residual)?;
    Ok(out)
}

#[pymodule]
fn perdl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDictionary>()?;
    m.add_function(wrap_pyfunction!(vector_d2, m)?)?;
    m.add_function(wrap_pyfunction!(dist_12, m)?)?;
    m.add_function(wrap_pyfunction!(incoherence, m)?)?;
    m.add_function(wrap_pyfunction!(orthogonal_step, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(global_matching, m)?)?;
    m.add_function(wrap_pyfunction!(run_perma, m)?)?;
    Ok(())
}

use delegate_lab::dynamics::{self, DynamicsError, IterationTrace, DEFAULT_TOLERANCE};
use delegate_lab::generators::{self, WeightedGraph};
use delegate_lab::io::parse_problem;
use delegate_lab::solvers::{self, SolveResult, SolverError};
use delegate_lab::twofeature;
use delegate_lab::{CellGrid, DelegationSetting, MachineAction, RowSet};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn dynamics_error(e: DynamicsError) -> PyErr {
    match e {
        DynamicsError::Cycle { .. } => PyRuntimeError::new_err(e.to_string()),
        DynamicsError::Generator(g) => value_error(g),
    }
}

/// Cell grid of a delegation instance: masses and optimal actions per
/// (human category, machine category) pair.
#[pyclass(name = "Grid", module = "delegate_lab", frozen)]
struct PyGrid {
    inner: CellGrid,
}

impl PyGrid {
    fn rows(&self, retained: &[usize]) -> PyResult<RowSet> {
        let h = self.inner.h();
        if let Some(&i) = retained.iter().find(|&&i| i >= h) {
            return Err(PyValueError::new_err(format!("row {i} out of range 0..{h}")));
        }
        Ok(RowSet::from_indices(h, retained.iter().copied()))
    }

    fn machine(&self, actions: Vec<f64>) -> PyResult<MachineAction> {
        if actions.len() != self.inner.m() {
            return Err(PyValueError::new_err(format!(
                "machine has {} actions, grid has {} columns",
                actions.len(),
                self.inner.m()
            )));
        }
        MachineAction::new(actions).map_err(value_error)
    }
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (mass, value, base_loss = 0.0))]
    fn new(mass: Vec<Vec<f64>>, value: Vec<Vec<f64>>, base_loss: f64) -> PyResult<Self> {
        let inner = CellGrid::new(mass, value, base_loss).map_err(value_error)?;
        Ok(Self { inner })
    }

    /// Grid of a full setting over `d` binary features.
    #[staticmethod]
    fn from_setting(
        d: usize,
        human_features: Vec<usize>,
        machine_features: Vec<usize>,
        probabilities: Vec<f64>,
        optimal_actions: Vec<f64>,
    ) -> PyResult<Self> {
        let s = DelegationSetting::new(d, &human_features, &machine_features, probabilities, optimal_actions)
            .map_err(value_error)?;
        Ok(Self { inner: s.marginalize() })
    }

    /// Parses setting or grid JSON.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let problem = parse_problem(text).map_err(value_error)?;
        Ok(Self { inner: problem.to_grid() })
    }

    #[getter]
    fn h(&self) -> usize {
        self.inner.h()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn base_loss(&self) -> f64 {
        self.inner.base_loss()
    }

    #[getter]
    fn mass(&self) -> Vec<Vec<f64>> {
        self.inner.mass_matrix()
    }

    #[getter]
    fn value(&self) -> Vec<Vec<f64>> {
        self.inner.value_matrix()
    }

    #[getter]
    fn human_losses(&self) -> Vec<f64> {
        self.inner.human_losses().to_vec()
    }

    fn oblivious_machine(&self) -> Vec<f64> {
        self.inner.oblivious_machine().actions().to_vec()
    }

    fn machine_for(&self, retained: Vec<usize>) -> PyResult<Vec<f64>> {
        Ok(self.inner.machine_for(&self.rows(&retained)?).actions().to_vec())
    }

    fn retained_objective(&self, retained: Vec<usize>) -> PyResult<f64> {
        Ok(self.inner.retained_objective(&self.rows(&retained)?))
    }

    fn team_loss(&self, machine: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.team_loss(&self.machine(machine)?))
    }

    fn delegation_set(&self, machine: Vec<f64>) -> PyResult<Vec<usize>> {
        Ok(self.inner.delegation_set(&self.machine(machine)?).indices())
    }

    fn __repr__(&self) -> String {
        format!("Grid(h={}, m={}, base_loss={})", self.inner.h(), self.inner.m(), self.inner.base_loss())
    }
}

fn solve_dict<'py>(py: Python<'py>, r: &SolveResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("retained", r.retained.indices())?;
    d.set_item("machine", r.machine.actions())?;
    d.set_item("team_loss", r.team_loss)?;
    d.set_item("delegation_set", r.delegation_set.indices())?;
    d.set_item("solver", r.solver.name())?;
    d.set_item("exact", r.exact())?;
    let minimizers: Vec<Vec<usize>> = r.all_minimizers.iter().map(RowSet::indices).collect();
    d.set_item("all_minimizers", minimizers)?;
    d.set_item("minimizers_truncated", r.minimizers_truncated)?;
    d.set_item("human_row_losses", &r.human_row_losses)?;
    d.set_item("machine_row_losses", &r.machine_row_losses)?;
    Ok(d)
}

/// Optimal machine for `grid`; `solver` is one of auto, brute, separable,
/// geometric, local.
#[pyfunction]
#[pyo3(signature = (grid, solver = "auto"))]
fn solve<'py>(py: Python<'py>, grid: &PyGrid, solver: &str) -> PyResult<Bound<'py, PyDict>> {
    let g = &grid.inner;
    let result = py.detach(|| match solver {
        "auto" => Ok(Ok(solvers::solve_auto(g))),
        "brute" => Ok(solvers::solve_brute(g)),
        "separable" => Ok(solvers::solve_separable(g)),
        "geometric" => Ok(solvers::solve_geometric(g)),
        "local" => Ok(Ok(solvers::local_search(g, &solvers::zero_loss_possible(g).r0))),
        other => Err(other.to_string()),
    });
    let result = result
        .map_err(|name| PyValueError::new_err(format!("unknown solver {name:?}")))?
        .map_err(|SolverError::Inapplicable(msg)| PyValueError::new_err(format!("{solver} solver: {msg}")))?;
    solve_dict(py, &result)
}

/// Closed-form losses and regions of the two-feature family at `(a, b)`.
#[pyfunction]
fn analyze_two_feature(py: Python<'_>, a: f64, b: f64) -> PyResult<Bound<'_, PyDict>> {
    let an = twofeature::analyze(a, b);
    let d = PyDict::new(py);
    d.set_item("a", an.a)?;
    d.set_item("b", an.b)?;
    d.set_item("loss_full", an.loss_full)?;
    d.set_item("loss_c1", an.loss_c1)?;
    d.set_item("loss_c2", an.loss_c2)?;
    d.set_item("loss_none", an.loss_none)?;
    d.set_item("optimal_loss", an.optimal_loss)?;
    let regions: Vec<&str> = an.regions.iter().map(|r| r.label()).collect();
    d.set_item("regions", regions)?;
    d.set_item("full_adoption_possible", an.full_adoption_possible)?;
    d.set_item("witness", an.witness)?;
    Ok(d)
}

#[pyfunction]
fn two_feature_grid(a: f64, b: f64) -> PyGrid {
    PyGrid {
        inner: twofeature::two_feature_grid(a, b),
    }
}

fn trace_dict<'py>(py: Python<'py>, t: &IterationTrace) -> PyResult<Bound<'py, PyDict>> {
    let steps = t
        .steps
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("machine", s.machine.actions())?;
            d.set_item("delegation_set", s.delegation_set.indices())?;
            d.set_item("team_loss", s.team_loss)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let d = PyDict::new(py);
    d.set_item("steps", steps)?;
    d.set_item("converged", t.converged)?;
    d.set_item("fixed_point", t.fixed_point.actions())?;
    d.set_item("iterations", t.iterations)?;
    Ok(d)
}

/// Repeated redesign starting from the oblivious machine.
#[pyfunction]
fn iterate<'py>(py: Python<'py>, grid: &PyGrid) -> PyResult<Bound<'py, PyDict>> {
    let trace = py.detach(|| dynamics::iterate(&grid.inner)).map_err(dynamics_error)?;
    trace_dict(py, &trace)
}

/// Iterated-versus-optimal comparison on random linear settings.
#[pyfunction]
#[pyo3(signature = (dh, dm, samples, seed, tolerance = DEFAULT_TOLERANCE))]
fn run_experiment(
    py: Python<'_>,
    dh: usize,
    dm: usize,
    samples: usize,
    seed: u64,
    tolerance: f64,
) -> PyResult<Bound<'_, PyDict>> {
    let config = dynamics::ExperimentConfig {
        dh,
        dm,
        samples,
        seed,
        tolerance,
    };
    let exp = py.detach(|| dynamics::run_experiment(&config)).map_err(dynamics_error)?;
    let rows = exp
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("sample_id", r.sample_id)?;
            d.set_item("seed", r.seed)?;
            d.set_item("loss_opt", r.loss_opt)?;
            d.set_item("loss_iter", r.loss_iter)?;
            d.set_item("loss_obliv", r.loss_obliv)?;
            d.set_item("gap", r.gap)?;
            d.set_item("gap_obliv", r.gap_obliv)?;
            d.set_item("is_optimal", r.is_optimal)?;
            d.set_item("iterations", r.iterations)?;
            d.set_item("converged", r.converged)?;
            d.set_item("exact", r.exact)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let s = &exp.summary;
    let summary = PyDict::new(py);
    summary.set_item("dh", s.dh)?;
    summary.set_item("dm", s.dm)?;
    summary.set_item("samples", s.samples)?;
    summary.set_item("prop_optimal", s.prop_optimal)?;
    summary.set_item("median_gap_iter", s.median_gap_iter)?;
    summary.set_item("median_gap_obliv", s.median_gap_obliv)?;
    let d = PyDict::new(py);
    d.set_item("rows", rows)?;
    d.set_item("summary", summary)?;
    Ok(d)
}

/// Whether some machine makes the team loss zero, with the rows that
/// must be retained for it.
#[pyfunction]
fn zero_loss_possible<'py>(py: Python<'py>, grid: &PyGrid) -> PyResult<Bound<'py, PyDict>> {
    let z = solvers::zero_loss_possible(&grid.inner);
    let d = PyDict::new(py);
    d.set_item("possible", z.possible)?;
    d.set_item("r0", z.r0.indices())?;
    Ok(d)
}

/// Grid instance built from a regular graph on `n` nodes.
#[pyfunction]
fn graph_to_instance(n: usize, edges: Vec<(usize, usize)>) -> PyResult<PyGrid> {
    let graph = WeightedGraph::new(n, &edges).map_err(value_error)?;
    let weighted = generators::neg_regular_dsd_weights(&graph).map_err(value_error)?;
    let inner = generators::graph_to_instance(&weighted).map_err(value_error)?;
    Ok(PyGrid { inner })
}

/// Size and members of a maximum clique.
#[pyfunction]
fn max_clique(n: usize, edges: Vec<(usize, usize)>) -> PyResult<(usize, Vec<usize>)> {
    let graph = WeightedGraph::new(n, &edges).map_err(value_error)?;
    generators::max_clique_brute(&graph).map_err(value_error)
}

#[pymodule]
#[pyo3(name = "delegate_lab")]
fn delegate_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", delegate_lab::io::VERSION)?;
    m.add_class::<PyGrid>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_two_feature, m)?)?;
    m.add_function(wrap_pyfunction!(two_feature_grid, m)?)?;
    m.add_function(wrap_pyfunction!(iterate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(zero_loss_possible, m)?)?;
    m.add_function(wrap_pyfunction!(graph_to_instance, m)?)?;
    m.add_function(wrap_pyfunction!(max_clique, m)?)?;
    Ok(())
}

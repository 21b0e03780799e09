//! Python bindings: lattices and layouts, Krylov matrix pairs, the
//! regularized solver, zero-noise extrapolation and config-driven runs.

use kqd::circuits::{build_trotter, synthesize_controlled_prep, PreparationTarget, TrotterOrder};
use kqd::krylov::{
    exact_elements_hermitian_with, exact_elements_with, hadamard_pair, ExactPropagator, HadamardSetup, KrylovPair,
    Propagator, ShotExperiment,
};
use kqd::lattice::{build_chain, build_heavy_hex, EdgeColoredLattice};
use kqd::layouts::{spread_particles, Layout, PresetLayout};
use kqd::solver::{auto_regularize, bootstrap, energy_curve, EnergyCurve, RegularizationConfig};
use kqd::KqdError;
use kqd_cli::config::{preset, ExperimentConfig};
use kqd_cli::CliError;
use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: KqdError) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Numerical(m) => PyArithmeticError::new_err(m),
        CliError::Validation(m) => PyValueError::new_err(m),
    }
}

/// Heavy-hex or chain lattice with a three-colored edge set.
#[pyclass(name = "Lattice", module = "pykqd")]
#[derive(Clone)]
struct PyLattice {
    inner: EdgeColoredLattice,
}

#[pymethods]
impl PyLattice {
    #[staticmethod]
    fn heavy_hex(rows: usize, cols: usize) -> PyResult<Self> {
        if rows == 0 || cols == 0 {
            return Err(PyValueError::new_err("rows and cols must be positive"));
        }
        Ok(PyLattice { inner: build_heavy_hex(rows, cols) })
    }

    #[staticmethod]
    fn chain(n: usize) -> PyResult<Self> {
        if n < 2 {
            return Err(PyValueError::new_err("a chain needs at least two sites"));
        }
        Ok(PyLattice { inner: build_chain(n) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyLattice { inner: EdgeColoredLattice::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites()
    }

    /// `(a, b, color, coupling)` per edge.
    #[getter]
    fn edges(&self) -> Vec<(usize, usize, String, f64)> {
        self.inner.edges().iter().map(|e| (e.a, e.b, e.color.to_string(), e.coupling)).collect()
    }

    /// Induced sublattice on `sites` and the new-to-old site map.
    fn induced(&self, sites: Vec<usize>) -> PyResult<(PyLattice, Vec<usize>)> {
        let sub = self.inner.induced_sublattice(&sites).map_err(err)?;
        Ok((PyLattice { inner: sub.lattice }, sub.original))
    }

    /// Lowest energy in the `k`-particle sector.
    fn ground_energy(&self, k: usize) -> PyResult<f64> {
        kqd::sector_sim::sector_ground_energy(&self.inner, k).map_err(err)
    }

    /// Spectral norm of the full Hamiltonian.
    fn spectral_norm(&self) -> PyResult<f64> {
        kqd::sector_sim::spectral_norm(&self.inner).map_err(err)
    }

    /// Energy of a computational basis state given as a bitmask.
    fn basis_state_energy(&self, bits: u64) -> f64 {
        self.inner.basis_state_energy(bits)
    }

    fn __repr__(&self) -> String {
        format!("Lattice(n_sites={}, edges={})", self.inner.n_sites(), self.inner.edges().len())
    }
}

/// A device lattice split into system sites and one control qubit.
#[pyclass(name = "Layout", module = "pykqd")]
#[derive(Clone)]
struct PyLayout {
    inner: Layout,
}

#[pymethods]
impl PyLayout {
    #[new]
    fn new(device: &PyLattice, control: usize) -> PyResult<Self> {
        Ok(PyLayout { inner: Layout::new(&device.inner, control).map_err(err)? })
    }

    /// Named layout: hex-21, hex-57, hex-45, hex-43 or ring-9.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(PyLayout { inner: PresetLayout::from_name(name).map_err(err)?.build() })
    }

    #[getter]
    fn system(&self) -> PyLattice {
        PyLattice { inner: self.inner.system().clone() }
    }

    #[getter]
    fn device(&self) -> PyLattice {
        PyLattice { inner: self.inner.device().clone() }
    }

    #[getter]
    fn control(&self) -> usize {
        self.inner.control()
    }

    /// `k` non-adjacent particle sites spread over the system.
    fn spread_particles(&self, k: usize) -> PyResult<Vec<usize>> {
        spread_particles(&self.inner, k).map_err(err)
    }

    /// Two-qubit depth of the synthesized controlled preparation.
    fn prep_depth(&self, particles: Vec<usize>) -> PyResult<usize> {
        let target = PreparationTarget::new(self.inner.system(), &particles).map_err(err)?;
        Ok(synthesize_controlled_prep(&self.inner, &target).map_err(err)?.two_qubit_depth())
    }
}

/// Projected Hamiltonian and overlap matrices.
#[pyclass(name = "KrylovPair", module = "pykqd")]
#[derive(Clone)]
struct PyKrylovPair {
    inner: KrylovPair,
}

fn rows(m: &nalgebra::DMatrix<Complex64>) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

#[pymethods]
impl PyKrylovPair {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyKrylovPair { inner: KrylovPair::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    /// `H` as a list of rows of complex numbers.
    #[getter]
    fn h(&self) -> Vec<Vec<Complex64>> {
        rows(&self.inner.h)
    }

    #[getter]
    fn s(&self) -> Vec<Vec<Complex64>> {
        rows(&self.inner.s)
    }

    fn truncated(&self, d: usize) -> PyResult<Self> {
        if d == 0 || d > self.inner.dim() {
            return Err(PyValueError::new_err(format!("dimension {d} outside 1..={}", self.inner.dim())));
        }
        Ok(PyKrylovPair { inner: self.inner.truncated(d) })
    }

    /// Lowest energy at every `D'` with threshold `eps_base * D'`.
    fn energy_curve(&self, eps_base: f64) -> PyResult<Vec<Option<f64>>> {
        if !(eps_base >= 0.0) {
            return Err(PyValueError::new_err("eps_base must be non-negative"));
        }
        Ok(energy_curve(&self.inner, eps_base).energies())
    }

    /// Searched threshold base and the accepted energy curve.
    fn auto_regularize(&self) -> PyResult<(f64, Vec<Option<f64>>)> {
        let (eps, curve) = auto_regularize(&self.inner, &RegularizationConfig::default()).map_err(err)?;
        Ok((eps, curve.energies()))
    }

    fn __repr__(&self) -> String {
        format!("KrylovPair(dim={}, structure={:?}, dt={})", self.inner.dim(), self.inner.structure, self.inner.dt)
    }
}

fn propagator(lat: &EdgeColoredLattice, k: usize, dt: f64, steps: usize, exact: bool) -> PyResult<Box<dyn Propagator>> {
    Ok(if exact {
        Box::new(ExactPropagator::new(lat, k, dt).map_err(err)?)
    } else {
        Box::new(build_trotter(lat, dt, steps, TrotterOrder::Second).map_err(err)?)
    })
}

/// Noiseless matrix pair from direct inner products.
#[pyfunction]
#[pyo3(signature = (lattice, particles, dt, d, steps=2, hermitian=false, exact=false))]
fn exact_pair(
    lattice: &PyLattice,
    particles: Vec<usize>,
    dt: f64,
    d: usize,
    steps: usize,
    hermitian: bool,
    exact: bool,
) -> PyResult<PyKrylovPair> {
    let lat = &lattice.inner;
    let target = PreparationTarget::new(lat, &particles).map_err(err)?;
    let prop = propagator(lat, target.k(), dt, steps, exact)?;
    let pair = if hermitian {
        exact_elements_hermitian_with(lat, &target, prop.as_ref(), d, dt)
    } else {
        exact_elements_with(lat, &target, prop.as_ref(), d, dt)
    };
    Ok(PyKrylovPair { inner: pair.map_err(err)? })
}

/// Matrix pair reconstructed from exact Hadamard-test expectations.
#[pyfunction]
#[pyo3(signature = (lattice, particles, dt, d, steps=2))]
fn hadamard_test_pair(lattice: &PyLattice, particles: Vec<usize>, dt: f64, d: usize, steps: usize) -> PyResult<PyKrylovPair> {
    let lat = &lattice.inner;
    let target = PreparationTarget::new(lat, &particles).map_err(err)?;
    let setup = HadamardSetup::new(lat, &target).map_err(err)?;
    let step = build_trotter(lat, dt, steps, TrotterOrder::Second).map_err(err)?;
    Ok(PyKrylovPair { inner: hadamard_pair(&setup, &step, d, dt).map_err(err)? })
}

/// Finite-shot pair plus per-`D'` bootstrap standard deviations.
#[pyfunction]
#[pyo3(signature = (lattice, particles, dt, d, shots, seed, steps=2, resamples=200))]
#[allow(clippy::too_many_arguments)]
fn shot_pair(
    lattice: &PyLattice,
    particles: Vec<usize>,
    dt: f64,
    d: usize,
    shots: u64,
    seed: u64,
    steps: usize,
    resamples: usize,
) -> PyResult<(PyKrylovPair, Vec<Option<f64>>)> {
    let lat = &lattice.inner;
    let target = PreparationTarget::new(lat, &particles).map_err(err)?;
    let setup = HadamardSetup::new(lat, &target).map_err(err)?;
    let step = build_trotter(lat, dt, steps, TrotterOrder::Second).map_err(err)?;
    let exp = ShotExperiment::run(setup, &step, d, dt, shots, seed).map_err(err)?;
    let std = if resamples > 0 {
        bootstrap(&exp, resamples, &RegularizationConfig::default(), seed).map_err(err)?.std
    } else {
        Vec::new()
    };
    Ok((PyKrylovPair { inner: exp.pair().map_err(err)? }, std))
}

/// Zero-noise extrapolation of one observable; returns a dict with the
/// chosen method, value and its standard deviation.
#[pyfunction]
fn extrapolate<'py>(py: Python<'py>, gains: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let r = kqd::noise::extrapolate(&gains, &means, &stds).map_err(err)?;
    let out = PyDict::new(py);
    let method = match r.method {
        kqd::noise::ExtrapolationMethod::Exponential => "exponential",
        kqd::noise::ExtrapolationMethod::Linear => "linear",
    };
    out.set_item("method", method)?;
    out.set_item("value", r.value)?;
    out.set_item("value_std", r.value_std)?;
    out.set_item("chi2_exp", r.chi2_exp)?;
    out.set_item("chi2_lin", r.chi2_lin)?;
    out.set_item("std_ratio", r.std_ratio)?;
    Ok(out)
}

fn curve_dict<'py>(py: Python<'py>, curve: &EnergyCurve) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("eps_base", curve.eps_base)?;
    out.set_item("energies", curve.energies())?;
    Ok(out)
}

/// Run an experiment from TOML text or a preset name. Returns a dict with
/// the curve, reference energy, matrix pair and output files.
#[pyfunction]
#[pyo3(signature = (config=None, preset_name=None))]
fn run<'py>(py: Python<'py>, config: Option<&str>, preset_name: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = match (config, preset_name) {
        (Some(text), None) => ExperimentConfig::from_toml(text).map_err(cli_err)?,
        (None, Some(name)) => preset(name).map_err(cli_err)?,
        _ => return Err(PyValueError::new_err("give exactly one of config, preset_name")),
    };
    let bundle = py.allow_threads(|| kqd_cli::run::run(&cfg)).map_err(cli_err)?;
    let out = PyDict::new(py);
    out.set_item("config_hash", &bundle.config_hash)?;
    out.set_item("n_sites", bundle.n_sites)?;
    out.set_item("particles", bundle.particles.clone())?;
    out.set_item("reference", bundle.reference)?;
    out.set_item("curve", curve_dict(py, &bundle.curve)?)?;
    out.set_item("bootstrap_std", bundle.bootstrap.as_ref().map(|b| b.std.clone()))?;
    out.set_item("pair", PyKrylovPair { inner: bundle.pair.clone() })?;
    let files = PyDict::new(py);
    for (name, bytes) in bundle.files() {
        files.set_item(name, String::from_utf8_lossy(&bytes).into_owned())?;
    }
    out.set_item("files", files)?;
    Ok(out)
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    kqd_cli::config::PRESETS.iter().map(|(name, _)| *name).collect()
}

#[pymodule]
fn pykqd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLattice>()?;
    m.add_class::<PyLayout>()?;
    m.add_class::<PyKrylovPair>()?;
    m.add_function(wrap_pyfunction!(exact_pair, m)?)?;
    m.add_function(wrap_pyfunction!(hadamard_test_pair, m)?)?;
    m.add_function(wrap_pyfunction!(shot_pair, m)?)?;
    m.add_function(wrap_pyfunction!(extrapolate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}

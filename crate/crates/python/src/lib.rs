//! Python bindings: basis and fields, Lévy measures, run configurations,
//! certification and convergence experiments.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use snse::config::RunConfig;
use snse::harness::{self, run_experiment, ArmSpec, StatSummary};
use snse::hypothesis::certify;
use snse::levy::{build_h, HFamily, LevyMeasure};
use snse::spectral::{self, Parity};
use snse::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::ModeIndex { .. } => PyIndexError::new_err(e.to_string()),
        Error::Quadrature { .. } | Error::BlowUp { .. } | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Real divergence-free Fourier basis truncated at `|kx|, |ky| <= n_max`.
#[pyclass(frozen, module = "snse")]
struct Basis {
    inner: Arc<spectral::Basis>,
}

#[pymethods]
impl Basis {
    #[new]
    fn new(n_max: usize) -> PyResult<Self> {
        Ok(Self { inner: spectral::Basis::new(n_max).map_err(py_err)? })
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn grid_size(&self) -> usize {
        self.inner.grid_size()
    }

    /// Basis elements as `(kx, ky, parity)` in index order.
    fn modes(&self) -> Vec<(i32, i32, &'static str)> {
        self.inner
            .modes()
            .iter()
            .map(|m| (m.k.kx, m.k.ky, m.parity.as_str()))
            .collect()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    fn index_of(&self, kx: i32, ky: i32, parity: &str) -> PyResult<usize> {
        let parity: Parity = parity
            .parse()
            .map_err(|_| PyValueError::new_err("parity must be 'cos' or 'sin'"))?;
        self.inner
            .index_of(spectral::Mode { k: spectral::WaveVector::new(kx, ky), parity })
            .ok_or_else(|| PyIndexError::new_err(format!("mode ({kx},{ky},{parity:?}) not in basis")))
    }

    /// Nonzero coupling coefficients `(i, j, l, b(e_i, e_j, e_l))`.
    fn coupling_tensor(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        self.inner.for_each_coupling(false, |i, j, l, b| out.push((i, j, l, b)));
        out
    }

    fn __repr__(&self) -> String {
        format!("Basis(n_max={}, dim={})", self.inner.n_max(), self.inner.dim())
    }
}

#[pyclass(frozen, module = "snse")]
struct SpectralField {
    inner: spectral::SpectralField,
}

#[pymethods]
impl SpectralField {
    #[new]
    fn new(basis: &Basis, coeffs: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: spectral::SpectralField::from_coeffs(&basis.inner, coeffs).map_err(py_err)? })
    }

    #[staticmethod]
    fn zeros(basis: &Basis) -> Self {
        Self { inner: spectral::SpectralField::zeros(&basis.inner) }
    }

    /// Random field with coefficient scale `λ^(-decay/2)`.
    #[staticmethod]
    #[pyo3(signature = (basis, seed, decay = 1.0))]
    fn random(basis: &Basis, seed: u64, decay: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { inner: spectral::SpectralField::random(&basis.inner, &mut rng, decay) }
    }

    fn coeffs(&self) -> Vec<f64> {
        self.inner.coeffs().to_vec()
    }

    /// `(‖u‖_H, ‖u‖_V, ‖Au‖_H)`.
    fn norms(&self) -> (f64, f64, f64) {
        let n = self.inner.norms();
        (n.h, n.v, n.ah)
    }

    fn inner_product(&self, other: &SpectralField) -> PyResult<f64> {
        self.inner.inner(&other.inner).map_err(py_err)
    }

    /// `b(self, v, w)`.
    fn bilinear_b(&self, v: &SpectralField, w: &SpectralField) -> PyResult<f64> {
        self.inner.bilinear_b(&v.inner, &w.inner).map_err(py_err)
    }

    /// Projected convection term `B(u)`.
    fn nonlinear_b(&self) -> Self {
        Self { inner: self.inner.nonlinear_b() }
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }
}

#[pyclass(frozen, module = "snse")]
struct Measure {
    inner: LevyMeasure,
}

#[pymethods]
impl Measure {
    /// Symmetric α-stable density `|z|^(-1-α)`.
    #[staticmethod]
    fn stable(alpha: f64) -> PyResult<Self> {
        Ok(Self { inner: LevyMeasure::stable(alpha).map_err(py_err)? })
    }

    /// Tail density `|z|^(β-1)` on `|z| >= 1`.
    #[staticmethod]
    fn power_tail(beta: f64) -> PyResult<Self> {
        Ok(Self { inner: LevyMeasure::power_tail(beta).map_err(py_err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    fn annulus_mass(&self, a: f64, b: f64) -> PyResult<f64> {
        self.inner.annulus_mass(a, b).map_err(py_err)
    }

    fn radial_moment(&self, p: f64, a: f64, b: f64) -> PyResult<f64> {
        self.inner.radial_moment(p, a, b).map_err(py_err)
    }

    /// `∫ h_ε² dν` recomputed by quadrature for a built-in family.
    fn h_normalization(&self, family: &str, epsilon: f64) -> PyResult<f64> {
        let family = match family {
            "annulus" => HFamily::Annulus,
            "outer_linear" => HFamily::OuterLinear,
            "inner_linear" => HFamily::InnerLinear,
            f => return Err(PyValueError::new_err(format!("unknown family '{f}'"))),
        };
        let h = build_h(family, epsilon, &self.inner).map_err(py_err)?;
        h.normalization_check().map_err(py_err)
    }
}

/// `(arm, epsilon, functional, mean, se, gap_vs_bm)`.
type SummaryRow = (String, Option<f64>, String, f64, f64, Option<f64>);

#[pyclass(frozen, module = "snse")]
struct Summary {
    inner: StatSummary,
}

#[pymethods]
impl Summary {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged()
    }

    #[getter]
    fn certified(&self) -> bool {
        self.inner.certified
    }

    #[getter]
    fn valid(&self) -> bool {
        self.inner.valid
    }

    fn rows(&self) -> Vec<SummaryRow> {
        self.inner
            .rows
            .iter()
            .map(|r| {
                (r.arm.clone(), r.epsilon, r.functional.clone(), r.mean, r.se, r.vs_bm.map(|c| c.mean_gap))
            })
            .collect()
    }

    fn summary_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_summary_csv(&mut buf).map_err(py_err)?;
        Ok(String::from_utf8(buf).expect("ascii csv"))
    }

    fn moments_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_moments_csv(&mut buf).map_err(py_err)?;
        Ok(String::from_utf8(buf).expect("ascii csv"))
    }

    fn table(&self) -> String {
        self.inner.table()
    }
}

/// A parsed run configuration.
#[pyclass(module = "snse")]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: RunConfig::parse(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: RunConfig::load(&path).map_err(py_err)? })
    }

    fn canonical(&self) -> String {
        self.inner.canonical()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn epsilons(&self) -> Vec<f64> {
        self.inner.jump.epsilons.clone()
    }

    #[setter]
    fn set_paths(&mut self, paths: usize) {
        self.inner.experiment.paths = paths;
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.experiment.seed = seed;
    }

    /// Runs every certification check; returns `(passed, csv_report)`.
    fn check(&self, py: Python<'_>) -> PyResult<(bool, String)> {
        let model = self.inner.model().map_err(py_err)?;
        let params = self.inner.check_params();
        let cert = py.detach(|| certify(&model, &params)).map_err(py_err)?;
        let mut buf = Vec::new();
        cert.report().write_csv(&mut buf).map_err(py_err)?;
        Ok((cert.pass(), String::from_utf8(buf).expect("ascii csv")))
    }

    /// Terminal values of the configured functionals for one arm; `None` marks a blown-up path.
    #[pyo3(signature = (arm = "bm", paths = None, eps_index = 0))]
    fn simulate(&self, py: Python<'_>, arm: &str, paths: Option<usize>, eps_index: usize) -> PyResult<Vec<Option<Vec<f64>>>> {
        let exp = self.inner.experiment().map_err(py_err)?;
        let spec = match arm {
            "bm" => ArmSpec::Brownian,
            "jump" => ArmSpec::Jump { index: eps_index },
            a => return Err(PyValueError::new_err(format!("arm must be 'bm' or 'jump', got '{a}'"))),
        };
        let n = paths.unwrap_or(exp.paths);
        let run = py.detach(|| harness::simulate_arm(&exp, spec, n)).map_err(py_err)?;
        Ok(run.paths.into_iter().map(|p| p.map(|p| p.functionals)).collect())
    }

    /// Full convergence experiment over the ε-grid.
    fn converge(&self, py: Python<'_>) -> PyResult<Summary> {
        let exp = self.inner.experiment().map_err(py_err)?;
        let s = py.detach(|| run_experiment(&exp)).map_err(py_err)?;
        Ok(Summary { inner: s })
    }
}

/// `(mean_gap, joint_se, ks_stat, ks_pass)` for two samples.
#[pyfunction]
fn compare_laws(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64, bool)> {
    let c = harness::compare_laws(&a, &b).map_err(py_err)?;
    Ok((c.mean_gap, c.joint_se, c.ks_stat, c.ks_pass))
}

#[pymodule]
#[pyo3(name = "snse")]
fn snse_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Basis>()?;
    m.add_class::<SpectralField>()?;
    m.add_class::<Measure>()?;
    m.add_class::<Config>()?;
    m.add_class::<Summary>()?;
    m.add_function(wrap_pyfunction!(compare_laws, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

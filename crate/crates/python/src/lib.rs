//! Python bindings: `Model` for the parametric sequence model, free
//! functions for asymptotic bounds, and `run` for whole experiments.

use effcov::bench::config::{ExperimentConfig, ExperimentKind, ModelConfig, PerComponent, SpectrumConfig, SpectrumName};
use effcov::bench::experiments::{run_equiv, run_estimate, run_fisher, run_lan, run_simulate};
use effcov::bench::mc::run_mc;
use effcov::bench::report::to_json;
use effcov::estimate::{adaptive_estimate_data, oracle_estimate_data, EstimateReport, PreClamp, SeqDesign, WindowConfig};
use effcov::fisher::{self, FreqWindow};
use effcov::matcore::SymMatrix;
use effcov::model::ParamModel;
use effcov::rng::{purpose, SeedLineage, SeedStream};
use effcov::simulate::{sample_sequence, SeqValues};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: effcov::Error) -> PyErr {
    match e {
        effcov::Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn sym(rows: Vec<Vec<f64>>) -> PyResult<SymMatrix> {
    SymMatrix::from_rows(&rows).map_err(err)
}

fn report_dict<'py>(py: Python<'py>, r: &EstimateReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("estimate", r.matrix().to_rows())?;
    d.set_item("covariance", rows(&r.covariance))?;
    if let Some(w) = &r.window {
        d.set_item("window", (w.lo, w.hi))?;
    }
    Ok(d)
}

/// Parametric model `Y_p ~ N(0, λ_p Σ + η²/n I)`.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: ParamModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (sigma, n=1_000_000, eta=1.0, spectrum="bm", hurst=None, beta=None, s_bound=None))]
    fn new(sigma: Vec<Vec<f64>>, n: u64, eta: f64, spectrum: &str, hurst: Option<f64>, beta: Option<f64>, s_bound: Option<f64>) -> PyResult<Self> {
        let name: SpectrumName = spectrum.parse().map_err(err)?;
        let mut sc = SpectrumConfig::named(name);
        sc.hurst = hurst;
        sc.beta = beta;
        let cfg = ModelConfig {
            spectrum: sc,
            sigma: Some(sigma),
            eta: PerComponent::One(eta),
            n: PerComponent::One(n),
            s_bound,
            ..ModelConfig::default()
        };
        Ok(PyModel {
            inner: cfg.param_model().map_err(err)?,
        })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn n(&self) -> u64 {
        self.inner.n()
    }

    #[getter]
    fn s_bound(&self) -> f64 {
        self.inner.s_bound()
    }

    fn eigenvalue(&self, p: usize) -> PyResult<f64> {
        self.inner.eigenvalue(p).map_err(err)
    }

    fn balance_index(&self) -> PyResult<f64> {
        self.inner.balance_index().map_err(err)
    }

    fn cov_block(&self, p: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.cov_block(p).map_err(err)?.to_rows())
    }

    /// Fisher information of frequencies `lo..=hi` as `(I, ¼ I⁻¹ Z)`.
    fn fisher_window(&self, lo: usize, hi: usize) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let w = FreqWindow::range(lo, hi).map_err(err)?;
        let info = fisher::fisher_window(&self.inner, &w).map_err(err)?;
        let q = info.quarter_inverse_z().map_err(err)?;
        Ok((rows(&info.matrix), rows(&q)))
    }

    /// `p_max` rows `Y_1, …, Y_{p_max}` drawn from `seed`.
    #[pyo3(signature = (p_max, seed=42))]
    fn simulate(&self, p_max: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let lineage = SeedLineage::new(SeedStream::new(seed), purpose::SEQUENCE, &[0]);
        let s = sample_sequence(&self.inner, p_max, lineage).map_err(err)?;
        Ok(s.data.values.chunks(s.data.d).map(<[f64]>::to_vec).collect())
    }

    /// Adaptive estimate from rows `Y_p`; `oracle=True` weights with the
    /// model's own `Σ` instead.
    #[pyo3(signature = (data, oracle=false))]
    fn estimate<'py>(&self, py: Python<'py>, data: Vec<Vec<f64>>, oracle: bool) -> PyResult<Bound<'py, PyDict>> {
        let values = SeqValues::from_rows(&data).map_err(err)?;
        let design = SeqDesign::from(&self.inner);
        let window = WindowConfig::default();
        let r = if oracle {
            oracle_estimate_data(&design, &values, self.inner.sigma(), &window)
        } else {
            adaptive_estimate_data(&design, &values, &window, PreClamp::parametric(self.inner.s_bound()))
        }
        .map_err(err)?;
        report_dict(py, &r)
    }
}

/// `(I(Σ), ¼ I(Σ)⁻¹ Z)` of the limiting experiment.
#[pyfunction]
#[pyo3(signature = (sigma, delta=2.0, zeta=1.0, eta=1.0))]
fn asymptotic_fisher(sigma: Vec<Vec<f64>>, delta: f64, zeta: f64, eta: f64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let info = fisher::asymptotic_fisher(&sym(sigma)?, delta, zeta, eta).map_err(err)?;
    let q = info.quarter_inverse_z().map_err(err)?;
    Ok((rows(&info.matrix), rows(&q)))
}

/// Efficient asymptotic covariance of `vec(Σ̂)` under Brownian motion.
#[pyfunction]
#[pyo3(signature = (sigma, eta=1.0))]
fn bm_efficient_covariance(sigma: Vec<Vec<f64>>, eta: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&fisher::bm_efficient_covariance(&sym(sigma)?, eta).map_err(err)?))
}

/// Runs a TOML experiment config; returns the JSON report (CSV text for
/// `simulate-dump`).
#[pyfunction]
fn run(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml(config).map_err(err)?;
    py.detach(|| match cfg.kind {
        ExperimentKind::McParametric | ExperimentKind::McSemiparametric => to_json(&run_mc(&cfg)?),
        ExperimentKind::FisherTable => to_json(&run_fisher(&cfg)?),
        ExperimentKind::Lan => to_json(&run_lan(&cfg)?),
        ExperimentKind::EquivalenceTrend => to_json(&run_equiv(&cfg)?),
        ExperimentKind::Estimate => to_json(&run_estimate(&cfg, None)?),
        ExperimentKind::SimulateDump => {
            let mut buf = Vec::new();
            run_simulate(&cfg, &mut buf)?;
            Ok(String::from_utf8_lossy(&buf).into_owned())
        }
    })
    .map_err(err)
}

#[pymodule]
fn pyeffcov(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(asymptotic_fisher, m)?)?;
    m.add_function(wrap_pyfunction!(bm_efficient_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

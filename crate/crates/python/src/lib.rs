//! Python bindings for `funsub`.

use funsub::fdata::{design_matrix, CurveSet, DesignMatrix};
use funsub::fglm::select_lambda_glm;
use funsub::flm::{
    coefficient_function, default_lambda_grid, select_lambda, PenalizedSystem, VarianceEstimate,
};
use funsub::linalg::{trace, weighted_gram};
use funsub::sim::{run_study, StudySpec};
use funsub::spline::{build_knots, penalty_matrix, KnotVector};
use funsub::subsample::{
    centered_design, sampling_probabilities, subsample_fglm, subsample_flm, Model, SamplingMethod,
    SubsampleConfig, DEFAULT_ALPHA,
};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: funsub::Error) -> PyErr {
    match e.root() {
        funsub::Error::RankDeficient { .. }
        | funsub::Error::NotPositiveDefinite
        | funsub::Error::Separation { .. }
        | funsub::Error::DegenerateProbabilities
        | funsub::Error::TooManyFailures { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("all rows must have the same length"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_model(model: &str) -> PyResult<Model> {
    Model::from_name(model).map_err(err)
}

/// Clamped uniform B-spline knot vector.
#[pyclass(name = "KnotVector", module = "funsub_py", frozen)]
struct PyKnotVector {
    inner: KnotVector,
}

#[pymethods]
impl PyKnotVector {
    #[new]
    #[pyo3(signature = (a, b, interior, degree = 3))]
    fn new(a: f64, b: f64, interior: usize, degree: usize) -> PyResult<Self> {
        Ok(Self {
            inner: build_knots(a, b, interior, degree).map_err(err)?,
        })
    }

    #[getter]
    fn knots(&self) -> Vec<f64> {
        self.inner.knots().to_vec()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    #[getter]
    fn n_basis(&self) -> usize {
        self.inner.n_basis()
    }

    fn greville(&self) -> Vec<f64> {
        self.inner.greville()
    }

    /// Basis values, one row per point of `t`.
    fn basis(&self, t: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(matrix_to_rows(&self.inner.basis_matrix(&t).map_err(err)?))
    }

    /// Gram matrix of the `q`-th derivatives of the basis.
    #[pyo3(signature = (q = 2))]
    fn penalty(&self, q: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(matrix_to_rows(
            &penalty_matrix(&self.inner, q).map_err(err)?.entries,
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "KnotVector(domain={:?}, interior={}, degree={})",
            self.inner.domain(),
            self.inner.interior_count(),
            self.inner.degree()
        )
    }
}

/// Fitted coefficient functions.
#[pyclass(name = "Fit", module = "funsub_py", frozen)]
struct PyFit {
    #[pyo3(get)]
    model: String,
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    coefficients: Vec<f64>,
    #[pyo3(get)]
    intercept: Option<f64>,
    #[pyo3(get)]
    lambda_: f64,
    #[pyo3(get)]
    df: f64,
    #[pyo3(get)]
    bic: f64,
    #[pyo3(get)]
    subsample_size: Option<usize>,
    shell: DesignMatrix,
    variance: Option<VarianceEstimate>,
}

#[pymethods]
impl PyFit {
    /// `β_m(t)` at each point of `t`.
    #[pyo3(signature = (t, covariate = 0))]
    fn beta(&self, t: Vec<f64>, covariate: usize) -> PyResult<Vec<f64>> {
        if covariate >= self.shell.blocks.len() {
            return Err(PyValueError::new_err(format!("no covariate {covariate}")));
        }
        let f = coefficient_function(&self.shell, covariate, &self.coefficients);
        t.iter().map(|&s| f.eval(s).map_err(err)).collect()
    }

    /// Sandwich standard error of `β_m(t)` (subsample fits only).
    #[pyo3(signature = (t, covariate = 0))]
    fn standard_error(&self, t: Vec<f64>, covariate: usize) -> PyResult<Vec<f64>> {
        let v = self
            .variance
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("standard errors need a subsample fit"))?;
        if covariate >= self.shell.blocks.len() {
            return Err(PyValueError::new_err(format!("no covariate {covariate}")));
        }
        t.iter()
            .map(|&s| {
                v.pointwise(&self.shell, covariate, s)
                    .map(f64::sqrt)
                    .map_err(err)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Fit(model={}, method={}, lambda={:e}, df={:.3}, bic={:.6e})",
            self.model, self.method, self.lambda_, self.df, self.bic
        )
    }
}

struct Prepared {
    design: DesignMatrix,
    y: Vec<f64>,
    centering: Option<(Vec<f64>, f64)>,
}

impl Prepared {
    fn intercept(&self, coefs: &[f64]) -> Option<f64> {
        self.centering
            .as_ref()
            .map(|(m, ybar)| ybar - m.iter().zip(coefs).map(|(a, c)| a * c).sum::<f64>())
    }

    fn shell(&self) -> DesignMatrix {
        self.design.select_rows(&[])
    }
}

#[allow(clippy::too_many_arguments)]
fn prepare(
    grid: Vec<f64>,
    curves: &[Vec<f64>],
    y: Vec<f64>,
    model: Model,
    interior: usize,
    degree: usize,
    q: usize,
    covariates: usize,
) -> PyResult<Prepared> {
    let (a, b) = match (grid.first(), grid.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(PyValueError::new_err("empty grid")),
    };
    let cs = CurveSet::new(grid, rows_to_matrix(curves)?, y, covariates).map_err(err)?;
    let kv = build_knots(a, b, interior, degree).map_err(err)?;
    Ok(match model {
        Model::Flm => {
            let (design, y, means, ybar) = centered_design(&cs, &kv, q).map_err(err)?;
            Prepared {
                design,
                y,
                centering: Some((means, ybar)),
            }
        }
        _ => Prepared {
            design: design_matrix(&cs, &kv, q, true).map_err(err)?,
            y: cs.response().to_vec(),
            centering: None,
        },
    })
}

fn model_label(model: Model) -> &'static str {
    match model {
        Model::Flm => "flm",
        Model::Logistic => "logistic",
        Model::Poisson => "poisson",
    }
}

/// Full-data fit with BIC selection of the smoothing parameter.
///
/// `curves` holds one row per observation; with several covariates the
/// blocks of `len(grid)` values are concatenated.
#[pyfunction]
#[pyo3(signature = (grid, curves, y, model = "flm", interior_knots = 10, degree = 3, penalty_order = 2, lambda_grid = None, covariates = 1))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    grid: Vec<f64>,
    curves: Vec<Vec<f64>>,
    y: Vec<f64>,
    model: &str,
    interior_knots: usize,
    degree: usize,
    penalty_order: usize,
    lambda_grid: Option<Vec<f64>>,
    covariates: usize,
) -> PyResult<PyFit> {
    let model = parse_model(model)?;
    let p = prepare(
        grid,
        &curves,
        y,
        model,
        interior_knots,
        degree,
        penalty_order,
        covariates,
    )?;
    py.detach(|| match model.family() {
        None => {
            let grid = match lambda_grid {
                Some(g) => g,
                None => default_lambda_grid(
                    PenalizedSystem::new(&p.design, &p.y, None)
                        .map_err(err)?
                        .lambda_scale(),
                ),
            };
            let (f, _) = select_lambda(&p.design, &p.y, &grid, None).map_err(err)?;
            Ok(PyFit {
                model: model_label(model).into(),
                method: "Full".into(),
                intercept: p.intercept(&f.coefficients),
                lambda_: f.lambda,
                df: f.df,
                bic: f.bic().value,
                coefficients: f.coefficients,
                subsample_size: None,
                shell: p.shell(),
                variance: None,
            })
        }
        Some(family) => {
            let grid = lambda_grid.unwrap_or_else(|| {
                let tp = trace(&p.design.penalty);
                let g = trace(&weighted_gram(&p.design.entries, None));
                default_lambda_grid(if tp > 0.0 { g / tp } else { 1.0 })
            });
            let (f, _) = select_lambda_glm(&p.design, &p.y, &grid, family, None).map_err(err)?;
            Ok(PyFit {
                model: model_label(model).into(),
                method: "Full".into(),
                intercept: Some(f.coefficients[0]),
                lambda_: f.lambda,
                df: f.df,
                bic: f.bic(),
                coefficients: f.coefficients,
                subsample_size: None,
                shell: p.shell(),
                variance: None,
            })
        }
    })
}

fn subsample_config(
    method: &str,
    l: usize,
    seed: u64,
    alpha: f64,
    pilot_size: Option<usize>,
    lambda_grid: Option<Vec<f64>>,
) -> PyResult<SubsampleConfig> {
    let method = if alpha == 1.0 {
        SamplingMethod::Uniform
    } else {
        match method.to_ascii_lowercase().as_str() {
            "lopt" => SamplingMethod::Lopt,
            "uniform" | "unif" => SamplingMethod::Uniform,
            other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
        }
    };
    let mut cfg = SubsampleConfig::new(method, l, seed);
    cfg.floor_mix = alpha;
    cfg.pilot_size = pilot_size;
    cfg.lambda_grid = lambda_grid;
    Ok(cfg)
}

/// Two-step subsample estimator of size `subsample_size`.
#[pyfunction]
#[pyo3(signature = (grid, curves, y, subsample_size, model = "flm", method = "lopt", seed = 0, alpha = DEFAULT_ALPHA, pilot_size = None, interior_knots = 10, degree = 3, penalty_order = 2, lambda_grid = None, covariates = 1))]
#[allow(clippy::too_many_arguments)]
fn subsample_fit(
    py: Python<'_>,
    grid: Vec<f64>,
    curves: Vec<Vec<f64>>,
    y: Vec<f64>,
    subsample_size: usize,
    model: &str,
    method: &str,
    seed: u64,
    alpha: f64,
    pilot_size: Option<usize>,
    interior_knots: usize,
    degree: usize,
    penalty_order: usize,
    lambda_grid: Option<Vec<f64>>,
    covariates: usize,
) -> PyResult<PyFit> {
    let model = parse_model(model)?;
    let cfg = subsample_config(method, subsample_size, seed, alpha, pilot_size, lambda_grid)?;
    let p = prepare(
        grid,
        &curves,
        y,
        model,
        interior_knots,
        degree,
        penalty_order,
        covariates,
    )?;
    py.detach(|| match model.family() {
        None => {
            let run = subsample_flm(&p.design, &p.y, &cfg).map_err(err)?;
            Ok(PyFit {
                model: model_label(model).into(),
                method: cfg.method.name().into(),
                intercept: p.intercept(&run.fit.coefficients),
                lambda_: run.fit.lambda,
                df: run.fit.df,
                bic: run.fit.bic().value,
                coefficients: run.fit.coefficients,
                subsample_size: Some(subsample_size),
                shell: p.shell(),
                variance: Some(run.variance),
            })
        }
        Some(family) => {
            let run = subsample_fglm(&p.design, &p.y, family, &cfg).map_err(err)?;
            Ok(PyFit {
                model: model_label(model).into(),
                method: cfg.method.name().into(),
                intercept: Some(run.fit.coefficients[0]),
                lambda_: run.fit.lambda,
                df: run.fit.df,
                bic: run.fit.bic(),
                coefficients: run.fit.coefficients,
                subsample_size: Some(subsample_size),
                shell: p.shell(),
                variance: Some(run.variance),
            })
        }
    })
}

/// Subsampling probabilities from a uniform pilot of size `pilot_size`.
#[pyfunction]
#[pyo3(signature = (grid, curves, y, model = "flm", seed = 0, alpha = DEFAULT_ALPHA, pilot_size = None, interior_knots = 10, degree = 3, penalty_order = 2, covariates = 1))]
#[allow(clippy::too_many_arguments)]
fn probabilities(
    py: Python<'_>,
    grid: Vec<f64>,
    curves: Vec<Vec<f64>>,
    y: Vec<f64>,
    model: &str,
    seed: u64,
    alpha: f64,
    pilot_size: Option<usize>,
    interior_knots: usize,
    degree: usize,
    penalty_order: usize,
    covariates: usize,
) -> PyResult<Vec<f64>> {
    let model = parse_model(model)?;
    let cfg = subsample_config("lopt", 1, seed, alpha, pilot_size, None)?;
    let p = prepare(
        grid,
        &curves,
        y,
        model,
        interior_knots,
        degree,
        penalty_order,
        covariates,
    )?;
    py.detach(|| {
        sampling_probabilities(&p.design, &p.y, model, &cfg)
            .map(|(pv, _, _)| pv.probs)
            .map_err(err)
    })
}

/// Simulation study; returns one dict per metrics record.
#[pyfunction]
#[pyo3(signature = (scenario, n, l_grid, replications, seed = 0, interior_knots = 10, full_fit = false))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    scenario: &str,
    n: usize,
    l_grid: Vec<usize>,
    replications: usize,
    seed: u64,
    interior_knots: usize,
    full_fit: bool,
) -> PyResult<Vec<Bound<'py, pyo3::types::PyDict>>> {
    let mut spec = StudySpec::new(scenario, n, l_grid, replications, seed);
    spec.interior_knots = interior_knots;
    spec.full_fit = full_fit;
    let result = py.detach(|| run_study(&spec)).map_err(err)?;
    result
        .records
        .iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("method", r.method.name())?;
            d.set_item("scenario", &r.scenario)?;
            d.set_item("n", r.n)?;
            d.set_item("L", r.l)?;
            d.set_item("replication", r.replication)?;
            d.set_item("imse", r.imse)?;
            d.set_item("pcc", r.pcc)?;
            d.set_item("eimse", r.eimse)?;
            d.set_item("wall_time_s", r.wall_time_s)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn funsub_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKnotVector>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(subsample_fit, m)?)?;
    m.add_function(wrap_pyfunction!(probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}

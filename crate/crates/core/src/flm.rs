//! Penalized least squares for the functional linear model.
//!
//! Solves `(N' W N + λ D) c = N' W y` with a Cholesky factorization, selects
//! `λ` by BIC and builds sandwich variances for pointwise inference on `β(t)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fdata::{trapezoid_weights, DesignMatrix};
use crate::linalg::{
    factor_with_floor, spd_inverse, symmetrize, trace, weighted_gram, weighted_xtv,
};
use crate::spline::KnotVector;
use crate::subsample::{ProbabilityVector, SubsampleDraw};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlmFit {
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    /// `tr[(N'WN + λD)^{-1} N'WN]`
    pub df: f64,
    /// Unweighted residual sum of squares over the rows used.
    pub rss: f64,
    pub weights_used: Option<Vec<f64>>,
    /// Rows with positive weight.
    pub rows_used: usize,
    pub ridge_floor: bool,
    /// `||(N'WN + λD)c - N'Wy|| / ||N'Wy||`
    pub normal_residual: f64,
}

/// BIC value; `rss_zero` flags the `-inf` sentinel for an exact fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bic {
    pub value: f64,
    pub rss_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicPoint {
    pub lambda: f64,
    /// `None` when the system at this `λ` could not be factored.
    pub bic: Option<f64>,
    pub df: Option<f64>,
}

/// Plug-in sandwich `scale · H^{-1} middle H^{-1}` for the coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    pub h: DMatrix<f64>,
    pub middle: DMatrix<f64>,
    pub scale: f64,
    pub covariance: DMatrix<f64>,
}

impl VarianceEstimate {
    pub fn new(h: DMatrix<f64>, middle: DMatrix<f64>, scale: f64) -> Result<Self> {
        let h_inv = spd_inverse(&h)?;
        let mut covariance = &h_inv * &middle * &h_inv * scale;
        symmetrize(&mut covariance);
        Ok(Self {
            h,
            middle,
            scale,
            covariance,
        })
    }

    /// `v' Cov v` for a coefficient-space vector `v`.
    pub fn variance(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.covariance * v)[(0, 0)].max(0.0)
    }

    /// Variance of `β_m(t)` for basis block `m` of `design`.
    pub fn pointwise(&self, design: &DesignMatrix, block: usize, t: f64) -> Result<f64> {
        Ok(self.variance(&design.basis_vector(block, t)?))
    }
}

/// A spline coefficient function `β(t) = N(t)' c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFunction {
    pub knots: KnotVector,
    pub coefs: Vec<f64>,
}

impl CoefficientFunction {
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.knots.eval_spline(&self.coefs, t)
    }
}

/// Extracts `β_m` for basis block `m` from a coefficient vector.
pub fn coefficient_function(
    design: &DesignMatrix,
    block: usize,
    coefs: &[f64],
) -> CoefficientFunction {
    CoefficientFunction {
        knots: design.blocks[block].knots.clone(),
        coefs: design.block_coefficients(block, coefs).to_vec(),
    }
}

/// `β(t) = N(t)' c` where `c` is the coefficient block for `kv`.
pub fn beta_at(coefs: &[f64], kv: &KnotVector, t: f64) -> Result<f64> {
    if coefs.len() != kv.n_basis() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} basis functions",
            coefs.len(),
            kv.n_basis()
        )));
    }
    kv.eval_spline(coefs, t)
}

impl FlmFit {
    pub fn bic(&self) -> Bic {
        let m = self.rows_used as f64;
        if self.rss <= 0.0 {
            return Bic {
                value: f64::NEG_INFINITY,
                rss_zero: true,
            };
        }
        Bic {
            value: m * (self.rss / m).ln() + m.ln() * self.df,
            rss_zero: false,
        }
    }

    pub fn beta(&self, design: &DesignMatrix, block: usize) -> CoefficientFunction {
        coefficient_function(design, block, &self.coefficients)
    }
}

/// `m log(RSS/m) + log(m) df(λ)` over the rows the fit used.
pub fn bic(fit: &FlmFit) -> Bic {
    fit.bic()
}

/// Cached cross products for solving at many `λ`.
pub struct PenalizedSystem<'a> {
    design: &'a DesignMatrix,
    y: &'a [f64],
    weights: Option<&'a [f64]>,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    rows_used: usize,
}

fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<usize> {
    match weights {
        None => Ok(n),
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {} rows",
                    w.len(),
                    n
                )));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidArgument(
                    "weights must be finite and nonnegative".into(),
                ));
            }
            Ok(w.iter().filter(|&&v| v > 0.0).count())
        }
    }
}

impl<'a> PenalizedSystem<'a> {
    pub fn new(design: &'a DesignMatrix, y: &'a [f64], weights: Option<&'a [f64]>) -> Result<Self> {
        let n = design.nrows();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} responses for {} design rows",
                y.len(),
                n
            )));
        }
        let rows_used = check_weights(weights, n)?;
        Ok(Self {
            design,
            y,
            weights,
            gram: weighted_gram(&design.entries, weights),
            rhs: weighted_xtv(&design.entries, weights, y),
            rows_used,
        })
    }

    /// `tr(N'WN) / tr(D)`, the scale used for unit-free `λ` grids.
    pub fn lambda_scale(&self) -> f64 {
        let tp = trace(&self.design.penalty);
        if tp > 0.0 {
            trace(&self.gram) / tp
        } else {
            1.0
        }
    }

    pub fn solve(&self, lambda: f64) -> Result<FlmFit> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        let d = self.design.ncols();
        if self.rows_used < d && lambda == 0.0 {
            return Err(Error::RankDeficient { dim: d });
        }
        let system = &self.gram + &self.design.penalty * lambda;
        let (chol, ridge_floor) = factor_with_floor(&system, trace(&self.gram))?;
        let c = chol.solve(&self.rhs);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient { dim: d });
        }
        let df = trace(&chol.solve(&self.gram));

        let resid = &system * &c - &self.rhs;
        let rhs_norm = self.rhs.norm();
        let normal_residual = if rhs_norm > 0.0 {
            resid.norm() / rhs_norm
        } else {
            resid.norm()
        };

        let fitted = &self.design.entries * &c;
        let rss = self
            .y
            .iter()
            .zip(fitted.iter())
            .enumerate()
            .filter(|(i, _)| self.weights.is_none_or(|w| w[*i] > 0.0))
            .map(|(_, (y, f))| (y - f).powi(2))
            .sum();

        Ok(FlmFit {
            coefficients: c.iter().copied().collect(),
            lambda,
            df,
            rss,
            weights_used: self.weights.map(|w| w.to_vec()),
            rows_used: self.rows_used,
            ridge_floor,
            normal_residual,
        })
    }
}

/// Minimizes `Σ w_i (y_i - N_i'c)^2 + λ c'Dc`.
pub fn fit_penalized(
    design: &DesignMatrix,
    y: &[f64],
    lambda: f64,
    weights: Option<&[f64]>,
) -> Result<FlmFit> {
    PenalizedSystem::new(design, y, weights)?.solve(lambda)
}

/// Value of the weighted penalized objective at `c`.
pub fn penalized_objective(
    design: &DesignMatrix,
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
    c: &[f64],
) -> f64 {
    let cv = DVector::from_column_slice(c);
    let fitted = &design.entries * &cv;
    let loss: f64 = y
        .iter()
        .zip(fitted.iter())
        .enumerate()
        .map(|(i, (y, f))| weights.map_or(1.0, |w| w[i]) * (y - f).powi(2))
        .sum();
    loss + lambda * (cv.transpose() * &design.penalty * &cv)[(0, 0)]
}

/// Number of points in the default `λ` grid.
pub const DEFAULT_GRID_POINTS: usize = 40;

/// 40 log-spaced values in `[1e-8, 1e4]` times `tr(N'WN)/tr(D)`.
pub fn default_lambda_grid(scale: f64) -> Vec<f64> {
    log_grid(1e-8, 1e4, DEFAULT_GRID_POINTS)
        .into_iter()
        .map(|v| v * scale)
        .collect()
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Fits every grid value and keeps the BIC minimizer; ties go to the larger
/// `λ`. Grid points that fail to factor are kept in the trace with no value.
pub fn select_lambda(
    design: &DesignMatrix,
    y: &[f64],
    grid: &[f64],
    weights: Option<&[f64]>,
) -> Result<(FlmFit, Vec<BicPoint>)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let system = PenalizedSystem::new(design, y, weights)?;
    select_lambda_with(&system, grid)
}

pub fn select_lambda_with(
    system: &PenalizedSystem<'_>,
    grid: &[f64],
) -> Result<(FlmFit, Vec<BicPoint>)> {
    let mut best: Option<FlmFit> = None;
    let mut best_bic = f64::INFINITY;
    let mut trace = Vec::with_capacity(grid.len());
    let mut last_err = None;
    for &lambda in grid {
        match system.solve(lambda) {
            Ok(fit) => {
                let b = fit.bic().value;
                trace.push(BicPoint {
                    lambda,
                    bic: Some(b),
                    df: Some(fit.df),
                });
                let better = match &best {
                    None => true,
                    Some(cur) => b < best_bic || (b == best_bic && lambda > cur.lambda),
                };
                if better {
                    best_bic = b;
                    best = Some(fit);
                }
            }
            Err(e) => {
                trace.push(BicPoint {
                    lambda,
                    bic: None,
                    df: None,
                });
                last_err = Some(e);
            }
        }
    }
    match best {
        Some(fit) => Ok((fit, trace)),
        None => Err(last_err.unwrap_or(Error::InvalidArgument("empty lambda grid".into()))),
    }
}

/// `ȳ - ∫ x̄(t) β̂(t) dt` by trapezoid quadrature on `grid`, summed over
/// covariate blocks of the design.
pub fn recover_intercept(
    mean_curve: &[f64],
    grid: &[f64],
    mean_response: f64,
    design: &DesignMatrix,
    coefs: &[f64],
) -> Result<f64> {
    let t = grid.len();
    if mean_curve.len() != t * design.blocks.len() {
        return Err(Error::DimensionMismatch(format!(
            "mean curve has {} values, expected {}",
            mean_curve.len(),
            t * design.blocks.len()
        )));
    }
    let w = trapezoid_weights(grid);
    let mut integral = 0.0;
    for m in 0..design.blocks.len() {
        let beta = coefficient_function(design, m, coefs);
        for k in 0..t {
            let xm = mean_curve[m * t + k];
            if xm != 0.0 {
                integral += w[k] * xm * beta.eval(grid[k])?;
            }
        }
    }
    Ok(mean_response - integral)
}

/// Sandwich variance of the fitted coefficients.
///
/// Without a subsample this is the full-data form `σ̂² H^{-1} G H^{-1} / n`
/// with `σ̂² = RSS/(n - df)`. With `(probs, draw)` the fit is taken to come
/// from the drawn rows and the middle matrix is the plug-in estimate of
/// `V_p = n^{-2} Σ r_i² N_i N_i' / p_i` from the draw, scaled by `1/L`; the
/// result then describes `c̃ - ĉ`.
pub fn sandwich_variance(
    design: &DesignMatrix,
    y: &[f64],
    fit: &FlmFit,
    subsample: Option<(&ProbabilityVector, &SubsampleDraw)>,
) -> Result<VarianceEstimate> {
    let n = design.nrows();
    let nf = n as f64;
    let c = DVector::from_column_slice(&fit.coefficients);
    match subsample {
        None => {
            let gram = weighted_gram(&design.entries, None);
            let h = (&gram + &design.penalty * fit.lambda) / nf;
            let dof = (nf - fit.df).max(1.0);
            let sigma2 = fit.rss / dof;
            let middle = gram * (sigma2 / nf);
            VarianceEstimate::new(h, middle, 1.0 / nf)
        }
        Some((pv, draw)) => {
            let l = draw.indices.len() as f64;
            let sub = design.select_rows(&draw.indices);
            let ys: Vec<f64> = draw.indices.iter().map(|&i| y[i]).collect();
            let gram = weighted_gram(&sub.entries, Some(&draw.weights));
            let h = (&gram + &design.penalty * fit.lambda) / nf;
            let fitted = &sub.entries * &c;
            // r² / p² per drawn row
            let mid_w: Vec<f64> = draw
                .indices
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    let p = pv.probs[i];
                    (ys[k] - fitted[k]).powi(2) / (p * p)
                })
                .collect();
            let middle = weighted_gram(&sub.entries, Some(&mid_w)) / (nf * nf * l);
            VarianceEstimate::new(h, middle, 1.0 / l)
        }
    }
}

//! Penalized quasi-likelihood for functional generalized linear models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdata::DesignMatrix;
use crate::flm::{BicPoint, VarianceEstimate};
use crate::linalg::{factor_with_floor, trace, weighted_gram, weighted_xtv};
use crate::subsample::{ProbabilityVector, SubsampleDraw};

/// Linear predictors are clamped to this magnitude inside the logistic mean.
pub const ETA_CLAMP: f64 = 30.0;
pub const MAX_ITER: usize = 100;
pub const MAX_HALVINGS: usize = 30;
pub const TOLERANCE: f64 = 1e-10;
/// Fraction of rows with `|η| > 30` that triggers the separation guard.
pub const SEPARATION_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFamily {
    Logistic,
    Poisson,
}

impl LinkFamily {
    pub fn name(self) -> &'static str {
        match self {
            LinkFamily::Logistic => "logistic",
            LinkFamily::Poisson => "poisson",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" | "binomial" | "logit" => Ok(LinkFamily::Logistic),
            "poisson" | "log" => Ok(LinkFamily::Poisson),
            other => Err(Error::InvalidArgument(format!("unknown family '{other}'"))),
        }
    }

    /// Mean function `ψ(η)`.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            LinkFamily::Logistic => {
                let e = eta.clamp(-ETA_CLAMP, ETA_CLAMP);
                1.0 / (1.0 + (-e).exp())
            }
            LinkFamily::Poisson => eta.exp(),
        }
    }

    /// `ψ'(η)`
    pub fn mean_deriv(self, eta: f64) -> f64 {
        match self {
            LinkFamily::Logistic => {
                let mu = self.mean(eta);
                mu * (1.0 - mu)
            }
            LinkFamily::Poisson => eta.exp(),
        }
    }

    pub fn variance(self, mu: f64) -> f64 {
        match self {
            LinkFamily::Logistic => mu * (1.0 - mu),
            LinkFamily::Poisson => mu,
        }
    }

    /// `ψ^{-1}(μ)`, with `μ` pulled inside the open support.
    pub fn link(self, mu: f64) -> f64 {
        match self {
            LinkFamily::Logistic => {
                let m = mu.clamp(1e-12, 1.0 - 1e-12);
                (m / (1.0 - m)).ln()
            }
            LinkFamily::Poisson => mu.max(1e-12).ln(),
        }
    }

    pub fn check_response(self, y: &[f64]) -> Result<()> {
        for (row, &value) in y.iter().enumerate() {
            let ok = match self {
                LinkFamily::Logistic => value == 0.0 || value == 1.0,
                LinkFamily::Poisson => value >= 0.0 && value.is_finite() && value.fract() == 0.0,
            };
            if !ok {
                return Err(Error::InvalidResponse {
                    row: row + 1,
                    value,
                    family: self.name(),
                });
            }
        }
        Ok(())
    }

    /// Unit deviance `d(y, μ)`.
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            LinkFamily::Logistic => {
                let m = mu.clamp(1e-300, 1.0 - 1e-16);
                let mut d = 0.0;
                if y > 0.0 {
                    d -= 2.0 * y * (m / y).ln();
                }
                if y < 1.0 {
                    d -= 2.0 * (1.0 - y) * ((1.0 - m) / (1.0 - y)).ln();
                }
                d
            }
            LinkFamily::Poisson => {
                let ylogy = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                2.0 * (ylogy - (y - mu))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PqlFit {
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub family: LinkFamily,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of the penalized score at the returned coefficients.
    pub score_norm: f64,
    /// `tr[(N'WΨN + λD)^{-1} N'WΨN]`
    pub df: f64,
    /// Unweighted deviance over the rows used.
    pub deviance: f64,
    pub rows_used: usize,
    pub ridge_floor: bool,
}

impl PqlFit {
    /// `deviance + log(m) df`
    pub fn bic(&self) -> f64 {
        self.deviance + (self.rows_used as f64).ln() * self.df
    }
}

/// Quasi-deviance BIC of a fit.
pub fn bic_glm(fit: &PqlFit) -> f64 {
    fit.bic()
}

struct Problem<'a> {
    design: &'a DesignMatrix,
    y: &'a [f64],
    weights: Option<&'a [f64]>,
    lambda: f64,
    family: LinkFamily,
}

impl Problem<'_> {
    fn w(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn eta(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.design.entries * c
    }

    /// `N'W(y - ψ(η)) - λDc`
    fn score(&self, c: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        let r: Vec<f64> = (0..self.y.len())
            .map(|i| self.w(i) * (self.y[i] - self.family.mean(eta[i])))
            .collect();
        self.design.entries.tr_mul(&DVector::from_vec(r)) - &self.design.penalty * c * self.lambda
    }

    /// `N'WΨN`
    fn info(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        let w: Vec<f64> = (0..self.y.len())
            .map(|i| self.w(i) * self.family.mean_deriv(eta[i]))
            .collect();
        weighted_gram(&self.design.entries, Some(&w))
    }

    fn separated(&self, eta: &DVector<f64>) -> Option<f64> {
        if self.family != LinkFamily::Logistic {
            return None;
        }
        let used: Vec<usize> = (0..self.y.len()).filter(|&i| self.w(i) > 0.0).collect();
        let big = used.iter().filter(|&&i| eta[i].abs() > ETA_CLAMP).count();
        let frac = big as f64 / used.len().max(1) as f64;
        (frac > SEPARATION_FRACTION).then_some(frac)
    }
}

fn validate(
    design: &DesignMatrix,
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
) -> Result<usize> {
    let n = design.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for {} design rows",
            y.len(),
            n
        )));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
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

/// Starting point: zero, with the intercept at the link of the weighted mean.
pub fn initial_coefficients(
    design: &DesignMatrix,
    y: &[f64],
    weights: Option<&[f64]>,
    family: LinkFamily,
) -> Vec<f64> {
    let mut c = vec![0.0; design.ncols()];
    if design.intercept {
        let (mut sw, mut swy) = (0.0, 0.0);
        for (i, yi) in y.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            sw += w;
            swy += w * yi;
        }
        if sw > 0.0 {
            c[0] = family.link(swy / sw);
        }
    }
    c
}

/// Solves the penalized quasi-likelihood equation
/// `Σ w_i (y_i - ψ(N_i'c)) N_i - λDc = 0` by damped Newton iterations.
pub fn fit_pql(
    design: &DesignMatrix,
    y: &[f64],
    lambda: f64,
    family: LinkFamily,
    weights: Option<&[f64]>,
) -> Result<PqlFit> {
    fit_pql_from(design, y, lambda, family, weights, None)
}

/// As [`fit_pql`], starting from `start` when given.
pub fn fit_pql_from(
    design: &DesignMatrix,
    y: &[f64],
    lambda: f64,
    family: LinkFamily,
    weights: Option<&[f64]>,
    start: Option<&[f64]>,
) -> Result<PqlFit> {
    let rows_used = validate(design, y, weights, lambda)?;
    family.check_response(y)?;
    let d = design.ncols();
    if rows_used == 0 {
        return Err(Error::NoObservations);
    }
    let prob = Problem {
        design,
        y,
        weights,
        lambda,
        family,
    };
    let tol = TOLERANCE * (1.0 + weighted_xtv(&design.entries, weights, y).norm());

    let mut c = match start {
        Some(s) if s.len() == d => DVector::from_column_slice(s),
        Some(s) => {
            return Err(Error::DimensionMismatch(format!(
                "start has {} entries, expected {d}",
                s.len()
            )))
        }
        None => DVector::from_vec(initial_coefficients(design, y, weights, family)),
    };
    let mut eta = prob.eta(&c);
    let mut score = prob.score(&c, &eta);
    let mut norm = score.norm();
    if !norm.is_finite() {
        c = DVector::from_vec(initial_coefficients(design, y, weights, family));
        eta = prob.eta(&c);
        score = prob.score(&c, &eta);
        norm = score.norm();
    }
    let mut iterations = 0;
    let mut converged = norm < tol;
    let mut ridge_floor = false;

    while !converged && iterations < MAX_ITER {
        iterations += 1;
        let info = prob.info(&eta);
        let system = &info + &design.penalty * lambda;
        let (chol, floored) = factor_with_floor(&system, trace(&info))?;
        ridge_floor |= floored;
        let step = chol.solve(&score);

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &c + &step * t;
            let trial_eta = prob.eta(&trial);
            let trial_score = prob.score(&trial, &trial_eta);
            let trial_norm = trial_score.norm();
            if trial_norm.is_finite() && trial_norm <= norm {
                c = trial;
                eta = trial_eta;
                score = trial_score;
                norm = trial_norm;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if let Some(fraction) = prob.separated(&eta) {
            return Err(Error::Separation {
                fraction: fraction * 100.0,
                iterations,
            });
        }
        converged = norm < tol;
        if !accepted {
            break;
        }
    }

    let info = prob.info(&eta);
    let system = &info + &design.penalty * lambda;
    let (chol, floored) = factor_with_floor(&system, trace(&info))?;
    ridge_floor |= floored;
    let df = trace(&chol.solve(&info));
    let deviance = (0..y.len())
        .filter(|&i| prob.w(i) > 0.0)
        .map(|i| family.unit_deviance(y[i], family.mean(eta[i])))
        .sum();

    Ok(PqlFit {
        coefficients: c.iter().copied().collect(),
        lambda,
        family,
        converged,
        iterations,
        score_norm: norm,
        df,
        deviance,
        rows_used,
        ridge_floor,
    })
}

/// Penalized score at arbitrary coefficients.
pub fn pql_score(
    design: &DesignMatrix,
    y: &[f64],
    lambda: f64,
    family: LinkFamily,
    weights: Option<&[f64]>,
    c: &[f64],
) -> Vec<f64> {
    let prob = Problem {
        design,
        y,
        weights,
        lambda,
        family,
    };
    let c = DVector::from_column_slice(c);
    let eta = prob.eta(&c);
    prob.score(&c, &eta).iter().copied().collect()
}

/// Jacobian of [`pql_score`], `-(N'WΨN + λD)`.
pub fn pql_jacobian(
    design: &DesignMatrix,
    y: &[f64],
    lambda: f64,
    family: LinkFamily,
    weights: Option<&[f64]>,
    c: &[f64],
) -> DMatrix<f64> {
    let prob = Problem {
        design,
        y,
        weights,
        lambda,
        family,
    };
    let eta = prob.eta(&DVector::from_column_slice(c));
    -(prob.info(&eta) + &design.penalty * lambda)
}

/// Fits every grid value, warm-starting from the neighbouring larger `λ`,
/// and keeps the BIC minimizer (ties toward larger `λ`). Failed or
/// non-converged grid points are recorded without a value.
pub fn select_lambda_glm(
    design: &DesignMatrix,
    y: &[f64],
    grid: &[f64],
    family: LinkFamily,
    weights: Option<&[f64]>,
) -> Result<(PqlFit, Vec<BicPoint>)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    let mut trace = vec![
        BicPoint {
            lambda: 0.0,
            bic: None,
            df: None
        };
        grid.len()
    ];
    let mut best: Option<PqlFit> = None;
    let mut warm: Option<Vec<f64>> = None;
    let mut last_err = None;
    for &k in &order {
        let lambda = grid[k];
        trace[k].lambda = lambda;
        let attempt =
            fit_pql_from(design, y, lambda, family, weights, warm.as_deref()).and_then(|fit| {
                if fit.converged || warm.is_none() {
                    Ok(fit)
                } else {
                    fit_pql(design, y, lambda, family, weights)
                }
            });
        match attempt {
            Ok(fit) if fit.converged => {
                let b = fit.bic();
                trace[k].bic = Some(b);
                trace[k].df = Some(fit.df);
                warm = Some(fit.coefficients.clone());
                let better = match &best {
                    None => true,
                    Some(cur) => b < cur.bic() || (b == cur.bic() && lambda > cur.lambda),
                };
                if better {
                    best = Some(fit);
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(fit) => Ok((fit, trace)),
        None => Err(last_err.unwrap_or(Error::InvalidArgument(
            "no lambda in the grid produced a converged fit".into(),
        ))),
    }
}

/// Sandwich variance for a PQL fit.
///
/// Full data: `H = (N'ΨN + λD)/n`, middle `n^{-1} Σ r_i² N_i N_i'`, scale
/// `1/n`. With `(probs, draw)` the fit is the subsample estimator: `H` uses
/// the drawn rows with weights `1/(L p)`, the middle is the plug-in
/// `n^{-2} L^{-1} Σ r_l² N_l N_l' / p_l²` and the scale is `1/L`.
pub fn glm_sandwich(
    design: &DesignMatrix,
    y: &[f64],
    fit: &PqlFit,
    subsample: Option<(&ProbabilityVector, &SubsampleDraw)>,
) -> Result<VarianceEstimate> {
    let n = design.nrows();
    let nf = n as f64;
    let family = fit.family;
    let c = DVector::from_column_slice(&fit.coefficients);
    match subsample {
        None => {
            let eta = &design.entries * &c;
            let psi_dot: Vec<f64> = eta.iter().map(|&e| family.mean_deriv(e)).collect();
            let r2: Vec<f64> = (0..n)
                .map(|i| (y[i] - family.mean(eta[i])).powi(2))
                .collect();
            let h = (weighted_gram(&design.entries, Some(&psi_dot)) + &design.penalty * fit.lambda)
                / nf;
            let middle = weighted_gram(&design.entries, Some(&r2)) / nf;
            VarianceEstimate::new(h, middle, 1.0 / nf)
        }
        Some((pv, draw)) => {
            let l = draw.indices.len() as f64;
            let sub = design.select_rows(&draw.indices);
            let eta = &sub.entries * &c;
            let hw: Vec<f64> = eta
                .iter()
                .zip(&draw.weights)
                .map(|(&e, w)| w * family.mean_deriv(e))
                .collect();
            let mw: Vec<f64> = draw
                .indices
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    let p = pv.probs[i];
                    (y[i] - family.mean(eta[k])).powi(2) / (p * p)
                })
                .collect();
            let h = (weighted_gram(&sub.entries, Some(&hw)) + &design.penalty * fit.lambda) / nf;
            let middle = weighted_gram(&sub.entries, Some(&mw)) / (nf * nf * l);
            VarianceEstimate::new(h, middle, 1.0 / l)
        }
    }
}

/// Fitted means `ψ(N c)`.
pub fn fitted_means(design: &DesignMatrix, family: LinkFamily, coefs: &[f64]) -> Vec<f64> {
    let eta = &design.entries * DVector::from_column_slice(coefs);
    eta.iter().map(|&e| family.mean(e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::build_knots;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intercept_only(n: usize) -> DesignMatrix {
        DesignMatrix {
            entries: DMatrix::from_element(n, 1, 1.0),
            intercept: true,
            penalty: DMatrix::zeros(1, 1),
            penalty_order: 0,
            blocks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn random_problem(n: usize, seed: u64, family: LinkFamily) -> (DesignMatrix, Vec<f64>) {
        let kv = build_knots(0.0, 1.0, 2, 3).unwrap();
        let d = kv.n_basis();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let truth: Vec<f64> = (0..d).map(|j| 0.5 * ((j as f64) - 2.5) / 2.5).collect();
        let y = (0..n)
            .map(|i| {
                let eta: f64 = (0..d).map(|j| x[(i, j)] * truth[j]).sum();
                let mu = family.mean(eta);
                match family {
                    LinkFamily::Logistic => (rng.random::<f64>() < mu) as u8 as f64,
                    LinkFamily::Poisson => {
                        // inversion sampling
                        let u: f64 = rng.random();
                        let (mut k, mut p) = (0.0, (-mu).exp());
                        let mut cdf = p;
                        while u > cdf {
                            k += 1.0;
                            p *= mu / k;
                            cdf += p;
                        }
                        k
                    }
                }
            })
            .collect();
        (DesignMatrix::from_entries(x, &kv, 2).unwrap(), y)
    }

    #[test]
    fn intercept_only_logistic() {
        let design = intercept_only(10);
        let y = [1., 0., 0., 1., 1., 1., 0., 1., 0., 1.];
        let fit = fit_pql(&design, &y, 0.0, LinkFamily::Logistic, None).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - (0.6f64 / 0.4).ln()).abs() < 1e-10);
        assert!(fit.iterations <= 1);
    }

    #[test]
    fn intercept_only_poisson() {
        let design = intercept_only(6);
        let y = [0., 3., 1., 2., 5., 1.];
        let fit = fit_pql(&design, &y, 0.0, LinkFamily::Poisson, None).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 2.0f64.ln()).abs() < 1e-10);
        // saturated intercept-only deviance is the null deviance
        let null: f64 = y
            .iter()
            .map(|&v| LinkFamily::Poisson.unit_deviance(v, 2.0))
            .sum();
        assert!((fit.deviance - null).abs() < 1e-10);
    }

    #[test]
    fn rejects_out_of_support() {
        let design = intercept_only(3);
        assert!(matches!(
            fit_pql(&design, &[0.0, 0.5, 1.0], 0.0, LinkFamily::Logistic, None),
            Err(Error::InvalidResponse { row: 2, .. })
        ));
        assert!(matches!(
            fit_pql(&design, &[0.0, -1.0, 1.0], 0.0, LinkFamily::Poisson, None),
            Err(Error::InvalidResponse { .. })
        ));
    }

    /// Accelerated gradient ascent on the concave penalized log-likelihood,
    /// whose gradient is the PQL score.
    fn gradient_oracle(
        design: &DesignMatrix,
        y: &[f64],
        lambda: f64,
        family: LinkFamily,
    ) -> Vec<f64> {
        let d = design.ncols();
        let x = &design.entries;
        let lip = 0.25 * (x.transpose() * x).norm() + lambda * design.penalty.norm();
        let step = 1.0 / lip;
        let mut c = vec![0.0; d];
        let mut prev = c.clone();
        for k in 0..200_000 {
            let mom = k as f64 / (k as f64 + 3.0);
            let z: Vec<f64> = (0..d).map(|j| c[j] + mom * (c[j] - prev[j])).collect();
            let g = pql_score(design, y, lambda, family, None, &z);
            prev = c.clone();
            c = (0..d).map(|j| z[j] + step * g[j]).collect();
            if g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-13 {
                break;
            }
        }
        c
    }

    #[test]
    fn matches_gradient_oracle() {
        let (design, y) = random_problem(200, 3, LinkFamily::Logistic);
        assert_eq!(design.ncols(), 6);
        let fit = fit_pql(&design, &y, 0.1, LinkFamily::Logistic, None).unwrap();
        assert!(fit.converged);
        let oracle = gradient_oracle(&design, &y, 0.1, LinkFamily::Logistic);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn converged_score_small() {
        for family in [LinkFamily::Logistic, LinkFamily::Poisson] {
            let (design, y) = random_problem(300, 4, family);
            let w: Vec<f64> = (0..300).map(|i| 0.5 + (i % 4) as f64).collect();
            let fit = fit_pql(&design, &y, 0.5, family, Some(&w)).unwrap();
            assert!(fit.converged);
            let xty = weighted_xtv(&design.entries, None, &y).norm();
            assert!(fit.score_norm < 1e-8 * (1.0 + xty));
            let mu = fitted_means(&design, family, &fit.coefficients);
            assert!(mu
                .iter()
                .all(|&m| m > 0.0 && (family == LinkFamily::Poisson || m < 1.0)));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for family in [LinkFamily::Logistic, LinkFamily::Poisson] {
            let (design, y) = random_problem(80, 5, family);
            let d = design.ncols();
            for _ in 0..3 {
                let c: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
                let jac = pql_jacobian(&design, &y, 0.3, family, None, &c);
                let h = 1e-6;
                for j in 0..d {
                    let mut cp = c.clone();
                    let mut cm = c.clone();
                    cp[j] += h;
                    cm[j] -= h;
                    let sp = pql_score(&design, &y, 0.3, family, None, &cp);
                    let sm = pql_score(&design, &y, 0.3, family, None, &cm);
                    for i in 0..d {
                        let fd = (sp[i] - sm[i]) / (2.0 * h);
                        let rel = (fd - jac[(i, j)]).abs() / jac[(i, j)].abs().max(1e-3);
                        assert!(rel < 1e-5, "{fd} vs {}", jac[(i, j)]);
                    }
                }
            }
        }
    }

    #[test]
    fn square_unpenalized_df() {
        let (design, y) = random_problem(6, 8, LinkFamily::Poisson);
        let fit = fit_pql(&design, &y, 0.0, LinkFamily::Poisson, None);
        if let Ok(fit) = fit {
            assert!((fit.df - 6.0).abs() < 1e-8);
        }
    }

    #[test]
    fn separation_guard() {
        let kv = build_knots(0.0, 1.0, 0, 1).unwrap();
        let x = DMatrix::from_fn(40, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - 19.5 });
        let design = DesignMatrix::from_entries(x, &kv, 1).unwrap();
        let y: Vec<f64> = (0..40).map(|i| (i >= 20) as u8 as f64).collect();
        assert!(matches!(
            fit_pql(&design, &y, 0.0, LinkFamily::Logistic, None),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn grid_selection_matches_scan() {
        let (design, y) = random_problem(300, 9, LinkFamily::Poisson);
        let grid = crate::flm::log_grid(1e-3, 1e3, 12);
        let (fit, trace) =
            select_lambda_glm(&design, &y, &grid, LinkFamily::Poisson, None).unwrap();
        let mut best = f64::INFINITY;
        let mut arg = 0.0;
        for &l in &grid {
            let f = fit_pql(&design, &y, l, LinkFamily::Poisson, None).unwrap();
            if f.bic() <= best {
                best = f.bic();
                arg = l;
            }
        }
        assert_eq!(fit.lambda, arg);
        assert!(trace.iter().all(|p| p.bic.is_some()));
    }

    #[test]
    fn small_coefficient_sandwich_matches_model_variance() {
        // With tiny effects Var(y|x) ≈ ψ'(η), so the robust middle matrix
        // approaches N'ΨN/n and the sandwich approaches the model-based form.
        let kv = build_knots(0.0, 1.0, 2, 3).unwrap();
        let d = kv.n_basis();
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n)
            .map(|_| (rng.random::<f64>() < 0.5) as u8 as f64)
            .collect();
        let design = DesignMatrix::from_entries(x, &kv, 2).unwrap();
        let fit = fit_pql(&design, &y, 1.0, LinkFamily::Logistic, None).unwrap();
        let v = glm_sandwich(&design, &y, &fit, None).unwrap();
        let h_inv = crate::linalg::spd_inverse(&v.h).unwrap();
        let eta = &design.entries * DVector::from_column_slice(&fit.coefficients);
        let psi: Vec<f64> = eta
            .iter()
            .map(|&e| LinkFamily::Logistic.mean_deriv(e))
            .collect();
        let g = weighted_gram(&design.entries, Some(&psi)) / n as f64;
        let model = &h_inv * g * &h_inv / n as f64;
        let ratio = trace(&v.covariance) / trace(&model);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn zero_residual_middle() {
        let design = intercept_only(4);
        let y = [2.0, 2.0, 2.0, 2.0];
        let fit = fit_pql(&design, &y, 0.0, LinkFamily::Poisson, None).unwrap();
        let v = glm_sandwich(&design, &y, &fit, None).unwrap();
        assert!(v.middle.abs().max() < 1e-20);
    }
}

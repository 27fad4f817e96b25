//! Synthetic functional data, accuracy metrics and replicated comparisons of
//! optimal versus uniform subsampling.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StudentT, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdata::{trapezoid_weights, CurveSet, DesignMatrix};
use crate::fglm::{select_lambda_glm, LinkFamily};
use crate::flm::{default_lambda_grid, select_lambda_with, PenalizedSystem};
use crate::linalg::{trace, weighted_gram};
use crate::spline::{build_knots, penalty_matrix, KnotVector};
use crate::subsample::{
    stream_rng, subsample_fglm, subsample_flm, Model, SamplingMethod, SubsampleConfig,
    DEFAULT_ALPHA,
};

/// Interior knots of the fixed cubic generator basis (69 functions).
pub const GENERATOR_INTERIOR: usize = 65;
pub const GENERATOR_DEGREE: usize = 3;
/// Observation grid size for synthetic curves.
pub const GRID_LEN: usize = 200;
pub const DEFAULT_SIGMA2: f64 = 0.1;
/// Quadrature points for integrated squared errors.
pub const IMSE_POINTS: usize = 1001;

const ROW_CHUNK: usize = 4096;

/// Distribution of the generator coefficients `a_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoeffDist {
    Constant {
        value: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    /// `loc + scale * t_df`
    StudentT {
        df: f64,
        loc: f64,
        scale: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

enum Sampler {
    Constant(f64),
    Normal(Normal<f64>),
    StudentT(StudentT<f64>, f64, f64),
    Uniform(Uniform<f64>),
}

impl Sampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Constant(v) => *v,
            Sampler::Normal(d) => d.sample(rng),
            Sampler::StudentT(d, loc, scale) => loc + scale * d.sample(rng),
            Sampler::Uniform(d) => d.sample(rng),
        }
    }
}

impl CoeffDist {
    fn sampler(self) -> Result<Sampler> {
        let bad = |what: &str| Error::InvalidArgument(format!("invalid {what} parameters"));
        Ok(match self {
            CoeffDist::Constant { value } => Sampler::Constant(value),
            CoeffDist::Normal { mean, sd } => {
                Sampler::Normal(Normal::new(mean, sd).map_err(|_| bad("normal"))?)
            }
            CoeffDist::StudentT { df, loc, scale } => {
                Sampler::StudentT(StudentT::new(df).map_err(|_| bad("t"))?, loc, scale)
            }
            CoeffDist::Uniform { lo, hi } => {
                Sampler::Uniform(Uniform::new(lo, hi).map_err(|_| bad("uniform"))?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub key: String,
    pub model: Model,
    pub dist: CoeffDist,
    /// Noise variance for the linear model.
    pub sigma2: f64,
}

/// Catalog keys.
pub const SCENARIOS: [&str; 10] = [
    "sim1.s1", "sim1.s2", "sim1.s3", "sim2.s1", "sim2.s2", "sim2.s3", "sim2.s4", "sim3.s1",
    "sim3.s2", "sim3.s3",
];

/// Looks up a catalog scenario.
///
/// `sim1.*` are linear, `sim2.*` logistic and `sim3.*` Poisson. The t₂
/// coefficients are unscaled since t₂ has no finite variance.
pub fn scenario(key: &str) -> Result<Scenario> {
    let t = |df: f64, loc: f64, scale: f64| CoeffDist::StudentT { df, loc, scale };
    let normal = |mean: f64, sd: f64| CoeffDist::Normal { mean, sd };
    let (model, dist) = match key {
        "sim1.s1" => (Model::Flm, normal(0.0, 1.0)),
        "sim1.s2" => (Model::Flm, t(3.0, 0.0, (1.0f64 / 3.0).sqrt())),
        "sim1.s3" => (Model::Flm, t(2.0, 0.0, 1.0)),
        "sim2.s1" => (Model::Logistic, normal(0.0, 15.0)),
        "sim2.s2" => (Model::Logistic, t(2.0, 0.0, 1.0)),
        "sim2.s3" => (Model::Logistic, normal(1.5, 15.0)),
        "sim2.s4" => (Model::Logistic, normal(-3.0, 15.0)),
        "sim3.s1" => (Model::Poisson, normal(0.0, 1.0)),
        "sim3.s2" => (Model::Poisson, t(4.0, 0.5, 0.5f64.sqrt())),
        "sim3.s3" => (Model::Poisson, CoeffDist::Uniform { lo: 0.0, hi: 4.0 }),
        other => return Err(Error::UnknownDistribution(other.to_string())),
    };
    Ok(Scenario {
        key: key.to_string(),
        model,
        dist,
        sigma2: if model == Model::Flm {
            DEFAULT_SIGMA2
        } else {
            0.0
        },
    })
}

/// True coefficient function of a study.
pub fn true_beta(model: Model) -> fn(f64) -> f64 {
    fn flm(t: f64) -> f64 {
        (-32.0 * (t - 0.5).powi(2)).exp() + 2.0 * t - 1.0
    }
    fn glm(t: f64) -> f64 {
        (0.5 * std::f64::consts::PI * t).sin()
    }
    match model {
        Model::Flm => flm,
        Model::Logistic | Model::Poisson => glm,
    }
}

pub fn equispaced(points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|k| k as f64 / (points - 1) as f64)
        .collect()
}

/// The fixed generator basis evaluated on the observation grid.
#[derive(Debug, Clone)]
pub struct Generator {
    pub knots: KnotVector,
    pub grid: Vec<f64>,
    /// `T x 69`
    pub basis: DMatrix<f64>,
    weights: Vec<f64>,
}

impl Generator {
    pub fn new(grid: Vec<f64>) -> Result<Self> {
        let knots = build_knots(0.0, 1.0, GENERATOR_INTERIOR, GENERATOR_DEGREE)?;
        let basis = knots.basis_matrix(&grid)?;
        let weights = trapezoid_weights(&grid);
        Ok(Self {
            knots,
            grid,
            basis,
            weights,
        })
    }

    pub fn standard() -> Result<Self> {
        Self::new(equispaced(GRID_LEN))
    }

    pub fn n_coefficients(&self) -> usize {
        self.basis.ncols()
    }

    /// `B_gen' W B_est`: maps generator coefficients to design rows.
    pub fn projection(&self, kv: &KnotVector) -> Result<DMatrix<f64>> {
        let best = kv.basis_matrix(&self.grid)?;
        let mut wb = best;
        for (k, mut row) in wb.row_iter_mut().enumerate() {
            row *= self.weights[k];
        }
        Ok(self.basis.tr_mul(&wb))
    }

    /// `B_gen' W β(grid)`: maps generator coefficients to `∫ x β`.
    pub fn functional(&self, beta: impl Fn(f64) -> f64) -> DVector<f64> {
        let wb = DVector::from_iterator(
            self.grid.len(),
            self.grid
                .iter()
                .zip(&self.weights)
                .map(|(&t, w)| w * beta(t)),
        );
        self.basis.tr_mul(&wb)
    }
}

/// Draws `n x 69` generator coefficients row by row.
pub fn gen_coefficients(
    dist: CoeffDist,
    n: usize,
    nb: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let s = dist.sampler()?;
    let mut a = DMatrix::zeros(n, nb);
    for i in 0..n {
        for j in 0..nb {
            a[(i, j)] = s.sample(rng);
        }
    }
    Ok(a)
}

/// Curves `x_i(t_k) = Σ_j a_ij B_j(t_k)` on the generator grid, with zero
/// responses.
pub fn gen_predictor_curves(
    gen: &Generator,
    dist: CoeffDist,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CurveSet> {
    let a = gen_coefficients(dist, n, gen.n_coefficients(), rng)?;
    let values = &a * gen.basis.transpose();
    CurveSet::new(gen.grid.clone(), values, vec![0.0; n], 1)
}

/// Responses from linear predictors `η_i = ∫ x_i β`.
pub fn gen_responses(
    eta: &[f64],
    model: Model,
    sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    match model {
        Model::Flm => {
            let noise = Normal::new(0.0, sigma2.sqrt())
                .map_err(|_| Error::InvalidArgument(format!("invalid noise variance {sigma2}")))?;
            Ok(eta.iter().map(|e| e + noise.sample(rng)).collect())
        }
        Model::Logistic => Ok(eta
            .iter()
            .map(|&e| {
                let p = LinkFamily::Logistic.mean(e);
                (rng.random::<f64>() < p) as u8 as f64
            })
            .collect()),
        Model::Poisson => eta
            .iter()
            .map(|&e| {
                let mu = e.exp();
                if mu == 0.0 {
                    return Ok(0.0);
                }
                Poisson::new(mu)
                    .map(|d| d.sample(rng))
                    .map_err(|_| Error::InvalidArgument(format!("invalid Poisson mean {mu}")))
            })
            .collect(),
    }
}

/// Responses for materialized curves, using the same trapezoid quadrature as
/// the design matrix.
pub fn responses_for_curves(
    cs: &CurveSet,
    model: Model,
    beta: impl Fn(f64) -> f64,
    sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let w = trapezoid_weights(cs.grid());
    let wb = DVector::from_iterator(
        w.len(),
        cs.grid().iter().zip(&w).map(|(&t, wk)| wk * beta(t)),
    );
    let eta = cs.block(0) * wb;
    gen_responses(eta.as_slice(), model, sigma2, rng)
}

/// Synthetic data kept in design form: rows of `N` are `a_i' B_gen' W B_est`
/// so the curves never need to be materialized.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub model: Model,
    pub design: DesignMatrix,
    pub y: Vec<f64>,
    /// True `∫ x_i β`.
    pub eta: Vec<f64>,
    /// Column means removed from the design (linear model only).
    pub column_means: Option<Vec<f64>>,
    pub response_mean: f64,
}

/// Generates `n` observations of `scen` and the estimation design for basis
/// `kv` with penalty order `q`. The linear-model design and response are
/// centered; GLM designs get an intercept column.
pub fn synthesize(
    gen: &Generator,
    scen: &Scenario,
    n: usize,
    kv: &KnotVector,
    q: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticData> {
    if n == 0 {
        return Err(Error::NoObservations);
    }
    let sampler = scen.dist.sampler()?;
    let proj = gen.projection(kv)?;
    let func = gen.functional(true_beta(scen.model));
    let nb = gen.n_coefficients();
    let d = proj.ncols();
    let mut entries = DMatrix::zeros(n, d);
    let mut eta = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let len = ROW_CHUNK.min(n - start);
        let mut a = DMatrix::zeros(len, nb);
        for i in 0..len {
            for j in 0..nb {
                a[(i, j)] = sampler.sample(rng);
            }
        }
        entries.rows_mut(start, len).copy_from(&(&a * &proj));
        let e = &a * &func;
        eta[start..start + len].copy_from_slice(e.as_slice());
        start += len;
    }
    let mut y = gen_responses(&eta, scen.model, scen.sigma2, rng)?;
    let mut design = DesignMatrix::from_entries(entries, kv, q)?;
    let mut column_means = None;
    let mut response_mean = 0.0;
    if scen.model == Model::Flm {
        column_means = Some(design.center_columns());
        response_mean = y.iter().sum::<f64>() / n as f64;
        for v in &mut y {
            *v -= response_mean;
        }
    } else {
        design = design.with_intercept();
    }
    Ok(SyntheticData {
        model: scen.model,
        design,
        y,
        eta,
        column_means,
        response_mean,
    })
}

/// `∫_0^1 (f - g)²` by the trapezoid rule on `points` equispaced nodes.
pub fn imse(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, points: usize) -> f64 {
    let grid = equispaced(points.max(2));
    let w = trapezoid_weights(&grid);
    grid.iter()
        .zip(&w)
        .map(|(&t, wk)| wk * (f(t) - g(t)).powi(2))
        .sum()
}

/// Integrated squared error of the spline `N_block(t)' c` against `truth`.
pub fn coefficient_imse(
    design: &DesignMatrix,
    block: usize,
    coefs: &[f64],
    truth: impl Fn(f64) -> f64,
    points: usize,
) -> Result<f64> {
    let kv = &design.blocks[block].knots;
    let c = design.block_coefficients(block, coefs);
    let grid = equispaced(points.max(2));
    let basis = kv.basis_matrix(&grid)?;
    let fitted = basis * DVector::from_column_slice(c);
    let w = trapezoid_weights(&grid);
    Ok(grid
        .iter()
        .enumerate()
        .map(|(k, &t)| w[k] * (fitted[k] - truth(t)).powi(2))
        .sum())
}

/// Mean integrated squared distance between subsample estimates and a
/// full-data estimate, all given as coefficient vectors for `block`.
pub fn eimse(
    design: &DesignMatrix,
    block: usize,
    subsample: &[Vec<f64>],
    full: &[f64],
    points: usize,
) -> Result<f64> {
    if subsample.is_empty() {
        return Err(Error::InvalidArgument(
            "eimse needs at least one estimate".into(),
        ));
    }
    let kv = &design.blocks[block].knots;
    let full_c = DVector::from_column_slice(design.block_coefficients(block, full));
    let grid = equispaced(points.max(2));
    let basis = kv.basis_matrix(&grid)?;
    let full_f = &basis * full_c;
    let w = trapezoid_weights(&grid);
    let mut total = 0.0;
    for c in subsample {
        let f = &basis * DVector::from_column_slice(design.block_coefficients(block, c));
        total += (0..grid.len())
            .map(|k| w[k] * (f[k] - full_f[k]).powi(2))
            .sum::<f64>();
    }
    Ok(total / subsample.len() as f64)
}

/// Fraction of rows classified correctly at threshold 0.5; a fitted
/// probability of exactly 0.5 predicts class 0.
pub fn pcc(fitted_probs: &[f64], y: &[f64]) -> f64 {
    let correct = fitted_probs
        .iter()
        .zip(y)
        .filter(|(&p, &yi)| (p > 0.5) == (yi == 1.0))
        .count();
    correct as f64 / y.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Lopt,
    Unif,
    Full,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lopt => "Lopt",
            Method::Unif => "Unif",
            Method::Full => "Full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub method: Method,
    pub scenario: String,
    pub n: usize,
    /// Subsample size; `n` for full-data rows.
    pub l: usize,
    pub replication: usize,
    pub imse: f64,
    pub pcc: Option<f64>,
    pub eimse: Option<f64>,
    pub wall_time_s: f64,
}

/// How the smoothing parameter of the subsample fits is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// BIC over the grid on each subsample.
    Subsample,
    /// One `λ` per replication, chosen by full-data BIC over the grid and
    /// shared by both sampling methods.
    SharedFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub scenario: String,
    pub n: usize,
    pub l_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Interior knots of the estimation basis.
    pub interior_knots: usize,
    pub degree: usize,
    pub penalty_order: usize,
    pub pilot_size: Option<usize>,
    pub floor_mix: f64,
    /// Also fit the full data, adding a `Full` record and eIMSE values.
    pub full_fit: bool,
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda_mode: LambdaMode,
}

impl StudySpec {
    pub fn new(
        scenario: &str,
        n: usize,
        l_grid: Vec<usize>,
        replications: usize,
        seed: u64,
    ) -> Self {
        Self {
            scenario: scenario.to_string(),
            n,
            l_grid,
            replications,
            seed,
            interior_knots: 10,
            degree: 3,
            penalty_order: 2,
            pilot_size: None,
            floor_mix: DEFAULT_ALPHA,
            full_fit: false,
            lambda_grid: None,
            lambda_mode: LambdaMode::SharedFull,
        }
    }

    fn validate(&self) -> Result<Scenario> {
        let scen = scenario(&self.scenario)?;
        if self.replications == 0 {
            return Err(Error::InvalidArgument(
                "replications must be at least 1".into(),
            ));
        }
        if self.l_grid.is_empty() || self.l_grid.contains(&0) {
            return Err(Error::InvalidArgument(
                "subsample sizes must be positive".into(),
            ));
        }
        if self.n < 2 {
            return Err(Error::TooFewObservations {
                needed: 2,
                got: self.n,
            });
        }
        Ok(scen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyFailure {
    pub method: Method,
    pub l: usize,
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<StudyFailure>,
}

/// Stream used for the data of replication `r`.
fn data_stream(r: usize) -> u64 {
    (r as u64) << 20
}

/// Stream used for subsampling in replication `r`, grid point `k`, method `m`.
fn draw_stream(r: usize, k: usize, m: usize) -> u64 {
    data_stream(r) + 1 + 2 * k as u64 + m as u64
}

struct Outcome {
    records: Vec<MetricsRecord>,
    failures: Vec<StudyFailure>,
}

fn run_replication(
    spec: &StudySpec,
    scen: &Scenario,
    gen: &Generator,
    kv: &KnotVector,
    r: usize,
) -> Outcome {
    let mut out = Outcome {
        records: Vec::new(),
        failures: Vec::new(),
    };
    let mut rng = stream_rng(spec.seed, data_stream(r));
    let data = match synthesize(gen, scen, spec.n, kv, spec.penalty_order, &mut rng) {
        Ok(d) => d,
        Err(e) => {
            out.failures.push(StudyFailure {
                method: Method::Full,
                l: spec.n,
                replication: r,
                message: e.to_string(),
            });
            return out;
        }
    };
    let truth = true_beta(scen.model);
    let metrics = |coefs: &[f64]| -> Result<(f64, Option<f64>)> {
        let imse = coefficient_imse(&data.design, 0, coefs, truth, IMSE_POINTS)?;
        let pcc = (scen.model == Model::Logistic).then(|| {
            let probs = crate::fglm::fitted_means(&data.design, LinkFamily::Logistic, coefs);
            pcc(&probs, &data.y)
        });
        Ok((imse, pcc))
    };
    let shared = spec.lambda_mode == LambdaMode::SharedFull;
    let mut lambda_grid = spec.lambda_grid.clone();
    let full = if spec.full_fit || shared {
        let start = Instant::now();
        match full_fit(&data, spec.lambda_grid.as_deref()) {
            Ok((c, lambda)) => {
                if shared {
                    lambda_grid = Some(vec![lambda]);
                }
                let wall = start.elapsed().as_secs_f64();
                match metrics(&c) {
                    Ok(_) if !spec.full_fit => {}
                    Ok((imse, pcc)) => out.records.push(MetricsRecord {
                        method: Method::Full,
                        scenario: spec.scenario.clone(),
                        n: spec.n,
                        l: spec.n,
                        replication: r,
                        imse,
                        pcc,
                        eimse: None,
                        wall_time_s: wall,
                    }),
                    Err(e) => out.failures.push(fail(Method::Full, spec.n, r, e)),
                }
                Some(c)
            }
            Err(e) => {
                out.failures.push(fail(Method::Full, spec.n, r, e));
                if shared {
                    return out;
                }
                None
            }
        }
    } else {
        None
    };

    for (k, &l) in spec.l_grid.iter().enumerate() {
        for (m, method) in [SamplingMethod::Lopt, SamplingMethod::Uniform]
            .into_iter()
            .enumerate()
        {
            let label = if method == SamplingMethod::Lopt {
                Method::Lopt
            } else {
                Method::Unif
            };
            let cfg = SubsampleConfig {
                method,
                pilot_size: spec.pilot_size,
                subsample_size: l,
                lambda_grid: lambda_grid.clone(),
                floor_mix: spec.floor_mix,
                seed: spec.seed,
                stream: draw_stream(r, k, m),
            };
            let start = Instant::now();
            let coefs = match scen.model.family() {
                None => subsample_flm(&data.design, &data.y, &cfg).map(|run| run.fit.coefficients),
                Some(f) => {
                    subsample_fglm(&data.design, &data.y, f, &cfg).map(|run| run.fit.coefficients)
                }
            };
            let wall = start.elapsed().as_secs_f64();
            let result = coefs.and_then(|c| {
                let (imse, pcc) = metrics(&c)?;
                let eimse = match &full {
                    Some(fc) if spec.full_fit => {
                        Some(eimse(&data.design, 0, &[c], fc, IMSE_POINTS)?)
                    }
                    _ => None,
                };
                Ok((imse, pcc, eimse))
            });
            match result {
                Ok((imse, pcc, eimse)) => out.records.push(MetricsRecord {
                    method: label,
                    scenario: spec.scenario.clone(),
                    n: spec.n,
                    l,
                    replication: r,
                    imse,
                    pcc,
                    eimse,
                    wall_time_s: wall,
                }),
                Err(e) => out.failures.push(fail(label, l, r, e)),
            }
        }
    }
    out
}

fn fail(method: Method, l: usize, replication: usize, e: Error) -> StudyFailure {
    StudyFailure {
        method,
        l,
        replication,
        message: e.to_string(),
    }
}

/// Full-data fit with BIC selection over `grid` (default grid when `None`);
/// returns the coefficients and the selected `λ`.
pub fn full_fit(data: &SyntheticData, grid: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
    match data.model.family() {
        None => {
            let sys = PenalizedSystem::new(&data.design, &data.y, None)?;
            let g = grid.map_or_else(|| default_lambda_grid(sys.lambda_scale()), <[f64]>::to_vec);
            let fit = select_lambda_with(&sys, &g)?.0;
            Ok((fit.coefficients, fit.lambda))
        }
        Some(f) => {
            let g = match grid {
                Some(g) => g.to_vec(),
                None => {
                    let tp = trace(&data.design.penalty);
                    default_lambda_grid(trace(&weighted_gram(&data.design.entries, None)) / tp)
                }
            };
            let fit = select_lambda_glm(&data.design, &data.y, &g, f, None)?.0;
            Ok((fit.coefficients, fit.lambda))
        }
    }
}

/// Runs every replication: one synthetic data set per replication, shared by
/// all subsample sizes and both sampling methods.
pub fn run_study(spec: &StudySpec) -> Result<StudyResult> {
    let scen = spec.validate()?;
    let gen = Generator::standard()?;
    let kv = build_knots(0.0, 1.0, spec.interior_knots, spec.degree)?;
    penalty_matrix(&kv, spec.penalty_order)?;
    let outcomes: Vec<Outcome> = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(spec, &scen, &gen, &kv, r))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        records.extend(o.records);
        failures.extend(o.failures);
    }
    Ok(StudyResult { records, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub l: usize,
    pub count: usize,
    pub mean_imse: f64,
    pub median_imse: f64,
    pub median_pcc: Option<f64>,
    pub median_eimse: Option<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and median metrics per `(method, L)` in first-seen order.
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, usize)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.method, r.l)) {
            keys.push((r.method, r.l));
        }
    }
    keys.into_iter()
        .map(|(method, l)| {
            let rows: Vec<&MetricsRecord> = records
                .iter()
                .filter(|r| r.method == method && r.l == l)
                .collect();
            let imse: Vec<f64> = rows.iter().map(|r| r.imse).collect();
            let pcc: Vec<f64> = rows.iter().filter_map(|r| r.pcc).collect();
            let eimse: Vec<f64> = rows.iter().filter_map(|r| r.eimse).collect();
            SummaryRow {
                method,
                l,
                count: rows.len(),
                mean_imse: imse.iter().sum::<f64>() / imse.len() as f64,
                median_imse: median(&imse),
                median_pcc: (!pcc.is_empty()).then(|| median(&pcc)),
                median_eimse: (!eimse.is_empty()).then(|| median(&eimse)),
            }
        })
        .collect()
}

/// Writes records with columns
/// `method,scenario,n,L,replication,imse,pcc,eimse,wall_time_s`.
pub fn write_metrics_csv<W: std::io::Write>(records: &[MetricsRecord], mut out: W) -> Result<()> {
    writeln!(
        out,
        "method,scenario,n,L,replication,imse,pcc,eimse,wall_time_s"
    )?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{:.16e},{},{},{:.16e}",
            r.method.name(),
            r.scenario,
            r.n,
            r.l,
            r.replication,
            r.imse,
            opt(r.pcc),
            opt(r.eimse),
            r.wall_time_s
        )?;
    }
    Ok(())
}

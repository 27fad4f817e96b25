//! Subsampling probabilities, weighted draws and the two-step subsample
//! estimators for the linear and generalized linear functional models.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdata::{design_matrix, CurveSet, DesignMatrix};
use crate::fglm::{fit_pql, glm_sandwich, select_lambda_glm, LinkFamily, PqlFit};
use crate::flm::{
    default_lambda_grid, fit_penalized, sandwich_variance, select_lambda_with, BicPoint, FlmFit,
    PenalizedSystem, VarianceEstimate,
};
use crate::linalg::{compensated_sum, condition_number, trace, weighted_gram};
use crate::spline::KnotVector;

/// Default probability floor mix.
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Maximum fraction of failed bootstrap replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityVector {
    pub probs: Vec<f64>,
    pub floor_mix: f64,
}

impl ProbabilityVector {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Compensated `Σ p_i`.
    pub fn total(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    /// `1 / Σ p_i²`
    pub fn effective_size(&self) -> f64 {
        1.0 / self.probs.iter().map(|p| p * p).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsampleDraw {
    pub indices: Vec<usize>,
    /// `1 / (L p_i)` for each drawn index.
    pub weights: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    /// Times each selected row was drawn.
    pub counts: BTreeMap<usize, usize>,
}

impl SubsampleDraw {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Kish effective size `(Σw)² / Σw²` of the draw weights.
    pub fn effective_size(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        s * s / s2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Flm,
    Logistic,
    Poisson,
}

impl Model {
    pub fn family(self) -> Option<LinkFamily> {
        match self {
            Model::Flm => None,
            Model::Logistic => Some(LinkFamily::Logistic),
            Model::Poisson => Some(LinkFamily::Poisson),
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flm" | "linear" | "gaussian" => Ok(Model::Flm),
            other => LinkFamily::from_name(other).map(|f| match f {
                LinkFamily::Logistic => Model::Logistic,
                LinkFamily::Poisson => Model::Poisson,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PilotEstimate {
    pub coefficients: Vec<f64>,
    pub subsample_size: usize,
    pub model: Model,
    /// `0` unless the unpenalized pilot failed and a small penalty was used.
    pub lambda: f64,
    pub ridge_floor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Lopt,
    Uniform,
}

impl SamplingMethod {
    pub fn name(self) -> &'static str {
        match self {
            SamplingMethod::Lopt => "Lopt",
            SamplingMethod::Uniform => "Unif",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub method: SamplingMethod,
    /// Pilot size; `None` means `max(2d, 200)`.
    pub pilot_size: Option<usize>,
    pub subsample_size: usize,
    /// `None` uses the default grid scaled to the subsample system.
    pub lambda_grid: Option<Vec<f64>>,
    pub floor_mix: f64,
    pub seed: u64,
    pub stream: u64,
}

impl SubsampleConfig {
    pub fn new(method: SamplingMethod, subsample_size: usize, seed: u64) -> Self {
        Self {
            method,
            pilot_size: None,
            subsample_size,
            lambda_grid: None,
            floor_mix: DEFAULT_ALPHA,
            seed,
            stream: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub pilot_condition_number: Option<f64>,
    pub pilot_lambda: Option<f64>,
    pub floor_mix: f64,
    /// Rows whose raw score was zero, so their probability is the floor alone.
    pub floor_only_rows: usize,
    pub ridge_floor: bool,
    pub probability_effective_size: f64,
    pub draw_effective_size: f64,
    pub stage_seconds: BTreeMap<String, f64>,
}

/// Pilot size `max(2d, 200)`.
pub fn default_pilot_size(d: usize) -> usize {
    (2 * d).max(200)
}

pub fn uniform_probs(n: usize) -> Result<ProbabilityVector> {
    if n == 0 {
        return Err(Error::NoObservations);
    }
    Ok(ProbabilityVector {
        probs: vec![1.0 / n as f64; n],
        floor_mix: 0.0,
    })
}

/// Normalizes nonnegative scores and mixes with the uniform distribution:
/// `(1 - α) s / Σs + α / n`.
pub fn probs_from_scores(scores: &[f64], floor_mix: f64) -> Result<ProbabilityVector> {
    let n = scores.len();
    if n == 0 {
        return Err(Error::NoObservations);
    }
    if !(0.0..=1.0).contains(&floor_mix) {
        return Err(Error::InvalidArgument(format!(
            "floor mix must lie in [0, 1], got {floor_mix}"
        )));
    }
    if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidArgument(
            "subsampling scores must be finite and nonnegative".into(),
        ));
    }
    let total = compensated_sum(scores.iter().copied());
    let floor = floor_mix / n as f64;
    if total <= 0.0 {
        if floor_mix == 0.0 {
            return Err(Error::DegenerateProbabilities);
        }
        return Ok(ProbabilityVector {
            probs: vec![1.0 / n as f64; n],
            floor_mix,
        });
    }
    let probs = scores
        .iter()
        .map(|s| (1.0 - floor_mix) * (s / total) + floor)
        .collect();
    Ok(ProbabilityVector { probs, floor_mix })
}

/// Euclidean norm of every design row.
pub fn row_norms(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut sq = vec![0.0; n];
    if n > 0 {
        for col in x.as_slice().chunks_exact(n) {
            for (s, v) in sq.iter_mut().zip(col) {
                *s += v * v;
            }
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// `N c` and the row norms of `N` in one pass over the columns.
fn predictor_and_norms(x: &DMatrix<f64>, c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows();
    let mut eta = vec![0.0; n];
    let mut sq = vec![0.0; n];
    if n > 0 {
        for (col, &cj) in x.as_slice().chunks_exact(n).zip(c) {
            for ((e, s), v) in eta.iter_mut().zip(sq.iter_mut()).zip(col) {
                *e += cj * v;
                *s += v * v;
            }
        }
    }
    (eta, sq.into_iter().map(f64::sqrt).collect())
}

/// `p_i ∝ |y_i - N_i'c⁰| ||N_i||`, mixed with `α/n`.
pub fn lopt_probs_flm(
    design: &DesignMatrix,
    y: &[f64],
    pilot: &[f64],
    floor_mix: f64,
) -> Result<ProbabilityVector> {
    check_pilot(design, y, pilot)?;
    let (fitted, norms) = predictor_and_norms(&design.entries, pilot);
    let scores: Vec<f64> = (0..y.len())
        .map(|i| (y[i] - fitted[i]).abs() * norms[i])
        .collect();
    probs_from_scores(&scores, floor_mix)
}

/// `p_i ∝ |y_i - ψ(N_i'c⁰)| ||N_i||`, mixed with `α/n`.
pub fn lopt_probs_fglm(
    design: &DesignMatrix,
    y: &[f64],
    pilot: &[f64],
    family: LinkFamily,
    floor_mix: f64,
) -> Result<ProbabilityVector> {
    check_pilot(design, y, pilot)?;
    let (eta, norms) = predictor_and_norms(&design.entries, pilot);
    let scores: Vec<f64> = (0..y.len())
        .map(|i| (y[i] - family.mean(eta[i])).abs() * norms[i])
        .collect();
    probs_from_scores(&scores, floor_mix)
}

fn check_pilot(design: &DesignMatrix, y: &[f64], pilot: &[f64]) -> Result<()> {
    if y.len() != design.nrows() || pilot.len() != design.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "design {}x{}, {} responses, {} pilot coefficients",
            design.nrows(),
            design.ncols(),
            y.len(),
            pilot.len()
        )));
    }
    Ok(())
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `L` independent draws from `pv` by the alias method.
pub fn draw_with_replacement(pv: &ProbabilityVector, l: usize, seed: u64) -> Result<SubsampleDraw> {
    let mut rng = stream_rng(seed, 0);
    let mut draw = draw_with_rng(pv, l, &mut rng)?;
    draw.seed = seed;
    Ok(draw)
}

/// Draws from an existing generator; `seed` is left for the caller to set.
pub fn draw_with_rng(
    pv: &ProbabilityVector,
    l: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SubsampleDraw> {
    if l == 0 {
        return Err(Error::InvalidArgument(
            "subsample size must be at least 1".into(),
        ));
    }
    if pv.is_empty() {
        return Err(Error::NoObservations);
    }
    let alias =
        WeightedAliasIndex::new(pv.probs.clone()).map_err(|_| Error::DegenerateProbabilities)?;
    let indices: Vec<usize> = (0..l).map(|_| alias.sample(rng)).collect();
    let lf = l as f64;
    let weights = indices.iter().map(|&i| 1.0 / (lf * pv.probs[i])).collect();
    let mut counts = BTreeMap::new();
    for &i in &indices {
        *counts.entry(i).or_insert(0) += 1;
    }
    Ok(SubsampleDraw {
        indices,
        weights,
        seed: 0,
        stream: rng.get_stream(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlmRun {
    pub fit: FlmFit,
    pub variance: VarianceEstimate,
    pub probs: ProbabilityVector,
    pub draw: SubsampleDraw,
    pub pilot: Option<PilotEstimate>,
    pub bic_trace: Vec<BicPoint>,
    /// Set when the run started from curves: `ȳ - Σ x̄_j c_j`.
    pub intercept: Option<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FglmRun {
    pub fit: PqlFit,
    pub variance: VarianceEstimate,
    pub probs: ProbabilityVector,
    pub draw: SubsampleDraw,
    pub pilot: Option<PilotEstimate>,
    pub bic_trace: Vec<BicPoint>,
    pub diagnostics: Diagnostics,
}

struct Timer(BTreeMap<String, f64>, Instant);

impl Timer {
    fn new() -> Self {
        Timer(BTreeMap::new(), Instant::now())
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        *self.0.entry(stage.to_string()).or_insert(0.0) += (now - self.1).as_secs_f64();
        self.1 = now;
    }
}

fn check_config(design: &DesignMatrix, y: &[f64], cfg: &SubsampleConfig) -> Result<()> {
    if y.len() != design.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for {} design rows",
            y.len(),
            design.nrows()
        )));
    }
    if design.nrows() == 0 {
        return Err(Error::NoObservations);
    }
    if cfg.subsample_size == 0 {
        return Err(Error::InvalidArgument(
            "subsample size must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.floor_mix) {
        return Err(Error::InvalidArgument(format!(
            "floor mix must lie in [0, 1], got {}",
            cfg.floor_mix
        )));
    }
    Ok(())
}

fn pilot_size(design: &DesignMatrix, cfg: &SubsampleConfig) -> usize {
    cfg.pilot_size
        .unwrap_or_else(|| default_pilot_size(design.ncols()))
}

fn pilot_lambdas(sub: &DesignMatrix) -> Vec<f64> {
    let tp = trace(&sub.penalty);
    let scale = if tp > 0.0 {
        trace(&weighted_gram(&sub.entries, None)) / tp
    } else {
        1.0
    };
    vec![0.0, 1e-6 * scale, 1e-4 * scale, 1e-2 * scale]
}

fn flm_pilot(
    design: &DesignMatrix,
    y: &[f64],
    l0: usize,
    rng: &mut ChaCha8Rng,
    diag: &mut Diagnostics,
) -> Result<PilotEstimate> {
    let uni = uniform_probs(design.nrows())?;
    let draw = draw_with_rng(&uni, l0, rng)?;
    let sub = design.select_rows(&draw.indices);
    let ys: Vec<f64> = draw.indices.iter().map(|&i| y[i]).collect();
    diag.pilot_condition_number = Some(condition_number(&weighted_gram(&sub.entries, None)));
    let mut last = None;
    for lambda in pilot_lambdas(&sub) {
        match fit_penalized(&sub, &ys, lambda, None) {
            Ok(fit) => {
                diag.pilot_lambda = Some(lambda);
                return Ok(PilotEstimate {
                    coefficients: fit.coefficients,
                    subsample_size: l0,
                    model: Model::Flm,
                    lambda,
                    ridge_floor: fit.ridge_floor,
                });
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("pilot lambda list is nonempty"))
}

fn fglm_pilot(
    design: &DesignMatrix,
    y: &[f64],
    family: LinkFamily,
    l0: usize,
    rng: &mut ChaCha8Rng,
    diag: &mut Diagnostics,
) -> Result<PilotEstimate> {
    let uni = uniform_probs(design.nrows())?;
    let draw = draw_with_rng(&uni, l0, rng)?;
    let sub = design.select_rows(&draw.indices);
    let ys: Vec<f64> = draw.indices.iter().map(|&i| y[i]).collect();
    diag.pilot_condition_number = Some(condition_number(&weighted_gram(&sub.entries, None)));
    let mut last = None;
    for lambda in pilot_lambdas(&sub) {
        match fit_pql(&sub, &ys, lambda, family, None) {
            Ok(fit) if fit.converged => {
                diag.pilot_lambda = Some(lambda);
                return Ok(PilotEstimate {
                    coefficients: fit.coefficients,
                    subsample_size: l0,
                    model: match family {
                        LinkFamily::Logistic => Model::Logistic,
                        LinkFamily::Poisson => Model::Poisson,
                    },
                    lambda,
                    ridge_floor: fit.ridge_floor,
                });
            }
            Ok(fit) => {
                last = Some(Error::InvalidArgument(format!(
                    "pilot fit did not converge in {} iterations",
                    fit.iterations
                )))
            }
            Err(e @ Error::InvalidResponse { .. }) => return Err(e),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("pilot lambda list is nonempty"))
}

fn finish_draw_diagnostics(diag: &mut Diagnostics, pv: &ProbabilityVector, draw: &SubsampleDraw) {
    diag.floor_mix = pv.floor_mix;
    diag.probability_effective_size = pv.effective_size();
    diag.draw_effective_size = draw.effective_size();
}

/// Sampling probabilities and pilot exactly as the first stage of
/// [`subsample_flm`] or [`subsample_fglm`] would compute them for `cfg`.
pub fn sampling_probabilities(
    design: &DesignMatrix,
    y: &[f64],
    model: Model,
    cfg: &SubsampleConfig,
) -> Result<(ProbabilityVector, Option<PilotEstimate>, Diagnostics)> {
    check_config(design, y, cfg)?;
    if let Some(f) = model.family() {
        f.check_response(y)?;
    }
    let mut diag = Diagnostics::default();
    if cfg.method == SamplingMethod::Uniform {
        let pv = uniform_probs(design.nrows())?;
        diag.floor_mix = pv.floor_mix;
        diag.probability_effective_size = pv.effective_size();
        return Ok((pv, None, diag));
    }
    let mut rng = stream_rng(cfg.seed, cfg.stream);
    let l0 = pilot_size(design, cfg);
    let (pilot, pv) = match model.family() {
        None => {
            let pilot =
                flm_pilot(design, y, l0, &mut rng, &mut diag).map_err(|e| e.at_stage("pilot"))?;
            let pv = lopt_probs_flm(design, y, &pilot.coefficients, cfg.floor_mix);
            (pilot, pv)
        }
        Some(f) => {
            let pilot = fglm_pilot(design, y, f, l0, &mut rng, &mut diag)
                .map_err(|e| e.at_stage("pilot"))?;
            let pv = lopt_probs_fglm(design, y, &pilot.coefficients, f, cfg.floor_mix);
            (pilot, pv)
        }
    };
    let pv = pv.map_err(|e| e.at_stage("probabilities"))?;
    diag.ridge_floor = pilot.ridge_floor;
    diag.floor_only_rows = count_floor_only(&pv);
    diag.floor_mix = pv.floor_mix;
    diag.probability_effective_size = pv.effective_size();
    Ok((pv, Some(pilot), diag))
}

/// Two-step subsample estimator for the functional linear model on a
/// prepared design: uniform pilot at `λ = 0`, optimal probabilities, a
/// weighted draw of size `L` and BIC selection over the grid on the draw.
pub fn subsample_flm(design: &DesignMatrix, y: &[f64], cfg: &SubsampleConfig) -> Result<FlmRun> {
    check_config(design, y, cfg)?;
    let mut timer = Timer::new();
    let mut diag = Diagnostics::default();
    let mut rng = stream_rng(cfg.seed, cfg.stream);

    let (probs, pilot) = match cfg.method {
        SamplingMethod::Uniform => (uniform_probs(design.nrows())?, None),
        SamplingMethod::Lopt => {
            let l0 = pilot_size(design, cfg);
            let pilot =
                flm_pilot(design, y, l0, &mut rng, &mut diag).map_err(|e| e.at_stage("pilot"))?;
            timer.lap("pilot");
            let pv = lopt_probs_flm(design, y, &pilot.coefficients, cfg.floor_mix)
                .map_err(|e| e.at_stage("probabilities"))?;
            diag.ridge_floor |= pilot.ridge_floor;
            diag.floor_only_rows = count_floor_only(&pv);
            timer.lap("probabilities");
            (pv, Some(pilot))
        }
    };
    let mut draw =
        draw_with_rng(&probs, cfg.subsample_size, &mut rng).map_err(|e| e.at_stage("draw"))?;
    draw.seed = cfg.seed;
    draw.stream = cfg.stream;
    timer.lap("draw");

    let sub = design.select_rows(&draw.indices);
    let ys: Vec<f64> = draw.indices.iter().map(|&i| y[i]).collect();
    let system =
        PenalizedSystem::new(&sub, &ys, Some(&draw.weights)).map_err(|e| e.at_stage("fit"))?;
    let grid = cfg
        .lambda_grid
        .clone()
        .unwrap_or_else(|| default_lambda_grid(system.lambda_scale()));
    let (fit, bic_trace) = select_lambda_with(&system, &grid).map_err(|e| e.at_stage("fit"))?;
    diag.ridge_floor |= fit.ridge_floor;
    timer.lap("fit");

    let variance = sandwich_variance(design, y, &fit, Some((&probs, &draw)))
        .map_err(|e| e.at_stage("variance"))?;
    timer.lap("variance");
    finish_draw_diagnostics(&mut diag, &probs, &draw);
    diag.stage_seconds = timer.0;
    Ok(FlmRun {
        fit,
        variance,
        probs,
        draw,
        pilot,
        bic_trace,
        intercept: None,
        diagnostics: diag,
    })
}

/// Two-step subsample estimator for a functional GLM on a prepared design.
pub fn subsample_fglm(
    design: &DesignMatrix,
    y: &[f64],
    family: LinkFamily,
    cfg: &SubsampleConfig,
) -> Result<FglmRun> {
    check_config(design, y, cfg)?;
    family.check_response(y)?;
    let mut timer = Timer::new();
    let mut diag = Diagnostics::default();
    let mut rng = stream_rng(cfg.seed, cfg.stream);

    let (probs, pilot) = match cfg.method {
        SamplingMethod::Uniform => (uniform_probs(design.nrows())?, None),
        SamplingMethod::Lopt => {
            let l0 = pilot_size(design, cfg);
            let pilot = fglm_pilot(design, y, family, l0, &mut rng, &mut diag)
                .map_err(|e| e.at_stage("pilot"))?;
            timer.lap("pilot");
            let pv = lopt_probs_fglm(design, y, &pilot.coefficients, family, cfg.floor_mix)
                .map_err(|e| e.at_stage("probabilities"))?;
            diag.ridge_floor |= pilot.ridge_floor;
            diag.floor_only_rows = count_floor_only(&pv);
            timer.lap("probabilities");
            (pv, Some(pilot))
        }
    };
    let mut draw =
        draw_with_rng(&probs, cfg.subsample_size, &mut rng).map_err(|e| e.at_stage("draw"))?;
    draw.seed = cfg.seed;
    draw.stream = cfg.stream;
    timer.lap("draw");

    let sub = design.select_rows(&draw.indices);
    let ys: Vec<f64> = draw.indices.iter().map(|&i| y[i]).collect();
    let grid = match &cfg.lambda_grid {
        Some(g) => g.clone(),
        None => {
            let tp = trace(&sub.penalty);
            let g = trace(&weighted_gram(&sub.entries, Some(&draw.weights)));
            default_lambda_grid(if tp > 0.0 { g / tp } else { 1.0 })
        }
    };
    let (fit, bic_trace) = select_lambda_glm(&sub, &ys, &grid, family, Some(&draw.weights))
        .map_err(|e| e.at_stage("fit"))?;
    diag.ridge_floor |= fit.ridge_floor;
    timer.lap("fit");

    let variance =
        glm_sandwich(design, y, &fit, Some((&probs, &draw))).map_err(|e| e.at_stage("variance"))?;
    timer.lap("variance");
    finish_draw_diagnostics(&mut diag, &probs, &draw);
    diag.stage_seconds = timer.0;
    Ok(FglmRun {
        fit,
        variance,
        probs,
        draw,
        pilot,
        bic_trace,
        diagnostics: diag,
    })
}

fn count_floor_only(pv: &ProbabilityVector) -> usize {
    if pv.floor_mix == 0.0 {
        return 0;
    }
    let floor = pv.floor_mix / pv.len() as f64;
    pv.probs.iter().filter(|&&p| p == floor).count()
}

/// Subsample estimator for the functional linear model starting from curves.
/// Design columns and the response are centered and the intercept is
/// recovered from the means.
pub fn algorithm_flm(
    cs: &CurveSet,
    kv: &KnotVector,
    q: usize,
    cfg: &SubsampleConfig,
) -> Result<FlmRun> {
    let start = Instant::now();
    let (design, y, means, ybar) = centered_design(cs, kv, q).map_err(|e| e.at_stage("design"))?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut run = subsample_flm(&design, &y, cfg)?;
    run.intercept = Some(
        ybar - means
            .iter()
            .zip(&run.fit.coefficients)
            .map(|(m, c)| m * c)
            .sum::<f64>(),
    );
    run.diagnostics
        .stage_seconds
        .insert("design".into(), elapsed);
    Ok(run)
}

/// Design for the linear model with centered columns and response.
pub fn centered_design(
    cs: &CurveSet,
    kv: &KnotVector,
    q: usize,
) -> Result<(DesignMatrix, Vec<f64>, Vec<f64>, f64)> {
    let response = cs.response();
    if cs.n() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            got: cs.n(),
        });
    }
    let mut design = design_matrix(cs, kv, q, false)?;
    let means = design.center_columns();
    let ybar = response.iter().sum::<f64>() / response.len() as f64;
    let y = response.iter().map(|v| v - ybar).collect();
    Ok((design, y, means, ybar))
}

/// Subsample estimator for a functional GLM starting from curves; the design
/// carries an unpenalized intercept column.
pub fn algorithm_fglm(
    cs: &CurveSet,
    kv: &KnotVector,
    q: usize,
    family: LinkFamily,
    cfg: &SubsampleConfig,
) -> Result<FglmRun> {
    let start = Instant::now();
    let response = cs.response();
    let design = design_matrix(cs, kv, q, true).map_err(|e| e.at_stage("design"))?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut run = subsample_fglm(&design, response, family, cfg)?;
    run.diagnostics
        .stage_seconds
        .insert("design".into(), elapsed);
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapBands {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub replicates: usize,
    pub failures: usize,
}

/// Linear-interpolation quantile of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs the subsample estimator once per `(seed, stream)` pair and returns
/// the pointwise mean and 2.5/97.5 percentile bands of `β` for basis block
/// `block` on `t`. Failed replicates are excluded; more than 10% failures
/// abort.
pub fn bootstrap_with_seeds(
    design: &DesignMatrix,
    y: &[f64],
    model: Model,
    cfg: &SubsampleConfig,
    seeds: &[(u64, u64)],
    block: usize,
    t: &[f64],
) -> Result<BootstrapBands> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least 2 replicates".into(),
        ));
    }
    if block >= design.blocks.len() {
        return Err(Error::InvalidArgument(format!("no basis block {block}")));
    }
    let basis: Vec<DVector<f64>> = t
        .iter()
        .map(|&s| design.basis_vector(block, s))
        .collect::<Result<_>>()?;
    let curves: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .map(|&(seed, stream)| {
            let mut c = cfg.clone();
            c.seed = seed;
            c.stream = stream;
            let coefs = match model.family() {
                None => subsample_flm(design, y, &c)?.fit.coefficients,
                Some(f) => subsample_fglm(design, y, f, &c)?.fit.coefficients,
            };
            let cv = DVector::from_vec(coefs);
            Ok(basis.iter().map(|b| b.dot(&cv)).collect())
        })
        .collect();
    let total = curves.len();
    let ok: Vec<Vec<f64>> = curves.into_iter().filter_map(|r| r.ok()).collect();
    let failed = total - ok.len();
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 || ok.is_empty() {
        return Err(Error::TooManyFailures { failed, total });
    }
    let mut mean = Vec::with_capacity(t.len());
    let mut lower = Vec::with_capacity(t.len());
    let mut upper = Vec::with_capacity(t.len());
    for k in 0..t.len() {
        let mut col: Vec<f64> = ok.iter().map(|c| c[k]).collect();
        mean.push(col.iter().sum::<f64>() / col.len() as f64);
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, 0.025));
        upper.push(quantile_sorted(&col, 0.975));
    }
    Ok(BootstrapBands {
        t: t.to_vec(),
        mean,
        lower,
        upper,
        replicates: ok.len(),
        failures: failed,
    })
}

/// [`bootstrap_with_seeds`] with replicate `b` on stream `b` of `seed`.
pub fn bootstrap(
    design: &DesignMatrix,
    y: &[f64],
    model: Model,
    cfg: &SubsampleConfig,
    replicates: usize,
    block: usize,
    t: &[f64],
) -> Result<BootstrapBands> {
    let seeds: Vec<(u64, u64)> = (0..replicates as u64).map(|b| (cfg.seed, b)).collect();
    bootstrap_with_seeds(design, y, model, cfg, &seeds, block, t)
}

use std::path::PathBuf;

use funsub::fdata::{design_matrix, load_csv, CurveSet, DesignMatrix};
use funsub::fglm::select_lambda_glm;
use funsub::flm::{
    coefficient_function, default_lambda_grid, select_lambda, BicPoint, PenalizedSystem,
    VarianceEstimate,
};
use funsub::linalg::{trace, weighted_gram};
use funsub::sim::{run_study, summarize, write_metrics_csv, StudyFailure, SummaryRow};
use funsub::spline::{build_knots, KnotVector};
use funsub::subsample::{
    bootstrap, centered_design, sampling_probabilities, subsample_fglm, subsample_flm, Diagnostics,
    Model, PilotEstimate, ProbabilityVector, SamplingMethod,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{csv_text, num, Outputs};

/// Curves, response and the design used by every model.
struct Prepared {
    curves: CurveSet,
    knots: KnotVector,
    design: DesignMatrix,
    y: Vec<f64>,
    /// Column means and response mean removed for the linear model.
    centering: Option<(Vec<f64>, f64)>,
}

fn prepare(cfg: &RunConfig, model: Model) -> Result<Prepared, CliError> {
    let path = cfg.input()?;
    if !path.exists() {
        return Err(CliError::Data(format!("{}: no such file", path.display())));
    }
    let curves = load_csv(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let grid = curves.grid();
    let knots = build_knots(
        grid[0],
        grid[grid.len() - 1],
        cfg.interior_knots(),
        cfg.degree(),
    )?;
    let q = cfg.penalty_order();
    let (design, y, centering) = match model {
        Model::Flm => {
            let (design, y, means, ybar) = centered_design(&curves, &knots, q)?;
            (design, y, Some((means, ybar)))
        }
        _ => {
            let design = design_matrix(&curves, &knots, q, true)?;
            (design, curves.response().to_vec(), None)
        }
    };
    for w in &design.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Prepared {
        curves,
        knots,
        design,
        y,
        centering,
    })
}

impl Prepared {
    fn intercept(&self, coefs: &[f64]) -> Option<f64> {
        self.centering
            .as_ref()
            .map(|(means, ybar)| ybar - means.iter().zip(coefs).map(|(m, c)| m * c).sum::<f64>())
    }

    fn output_grid(&self, points: usize) -> Vec<f64> {
        let (a, b) = self.knots.domain();
        (0..points)
            .map(|k| a + (b - a) * k as f64 / (points - 1) as f64)
            .collect()
    }

    /// `t,beta_1[,se_1],beta_2[,se_2],...` on an equispaced grid.
    fn beta_csv(
        &self,
        coefs: &[f64],
        variance: Option<&VarianceEstimate>,
        points: usize,
    ) -> Result<Vec<u8>, CliError> {
        let blocks = self.design.blocks.len();
        let mut header = vec!["t".to_string()];
        for m in 1..=blocks {
            header.push(format!("beta_{m}"));
            if variance.is_some() {
                header.push(format!("se_{m}"));
            }
        }
        let funcs: Vec<_> = (0..blocks)
            .map(|m| coefficient_function(&self.design, m, coefs))
            .collect();
        let mut rows = Vec::with_capacity(points);
        for t in self.output_grid(points) {
            let mut row = vec![num(t)];
            for (m, f) in funcs.iter().enumerate() {
                row.push(num(f.eval(t)?));
                if let Some(v) = variance {
                    row.push(num(v.pointwise(&self.design, m, t)?.max(0.0).sqrt()));
                }
            }
            rows.push(row);
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        Ok(csv_text(&header, rows))
    }
}

#[derive(Serialize)]
struct FitReport<'a> {
    model: &'static str,
    method: &'static str,
    n: usize,
    covariates: usize,
    coefficients: &'a [f64],
    intercept: Option<f64>,
    lambda: f64,
    df: f64,
    bic: f64,
    bic_trace: &'a [BicPoint],
    converged: Option<bool>,
    iterations: Option<usize>,
    knots: &'a [f64],
    degree: usize,
    penalty_order: usize,
    subsample_size: Option<usize>,
    seed: Option<u64>,
    pilot: Option<&'a PilotEstimate>,
    warnings: &'a [String],
}

fn model_name(model: Model) -> &'static str {
    match model {
        Model::Flm => "flm",
        Model::Logistic => "logistic",
        Model::Poisson => "poisson",
    }
}

fn default_grid(design: &DesignMatrix) -> Vec<f64> {
    let tp = trace(&design.penalty);
    let g = trace(&weighted_gram(&design.entries, None));
    default_lambda_grid(if tp > 0.0 { g / tp } else { 1.0 })
}

/// Full-data penalized fit with BIC selection of `λ`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.model()?;
    let out_dir = cfg.output()?;
    let p = prepare(cfg, model)?;
    let mut out = Outputs::default();
    let base = FitReport {
        model: model_name(model),
        method: "Full",
        n: p.curves.n(),
        covariates: p.curves.covariate_count(),
        coefficients: &[],
        intercept: None,
        lambda: 0.0,
        df: 0.0,
        bic: 0.0,
        bic_trace: &[],
        converged: None,
        iterations: None,
        knots: p.knots.knots(),
        degree: cfg.degree(),
        penalty_order: cfg.penalty_order(),
        subsample_size: None,
        seed: None,
        pilot: None,
        warnings: &p.design.warnings,
    };
    match model.family() {
        None => {
            let grid = match &cfg.lambda_grid {
                Some(g) => g.clone(),
                None => {
                    default_lambda_grid(PenalizedSystem::new(&p.design, &p.y, None)?.lambda_scale())
                }
            };
            let (fit, trace) = select_lambda(&p.design, &p.y, &grid, None)?;
            out.json(
                "fit.json",
                &FitReport {
                    coefficients: &fit.coefficients,
                    intercept: p.intercept(&fit.coefficients),
                    lambda: fit.lambda,
                    df: fit.df,
                    bic: fit.bic().value,
                    bic_trace: &trace,
                    ..base
                },
            )?;
            out.add(
                "beta.csv",
                p.beta_csv(&fit.coefficients, None, cfg.grid_points())?,
            );
        }
        Some(family) => {
            let grid = cfg
                .lambda_grid
                .clone()
                .unwrap_or_else(|| default_grid(&p.design));
            let (fit, trace) = select_lambda_glm(&p.design, &p.y, &grid, family, None)?;
            out.json(
                "fit.json",
                &FitReport {
                    coefficients: &fit.coefficients,
                    intercept: Some(fit.coefficients[0]),
                    lambda: fit.lambda,
                    df: fit.df,
                    bic: fit.bic(),
                    bic_trace: &trace,
                    converged: Some(fit.converged),
                    iterations: Some(fit.iterations),
                    ..base
                },
            )?;
            out.add(
                "beta.csv",
                p.beta_csv(&fit.coefficients, None, cfg.grid_points())?,
            );
        }
    }
    out.commit(out_dir)
}

fn probability_files(out: &mut Outputs, pv: &ProbabilityVector, bins: usize) {
    out.add(
        "probabilities.csv",
        csv_text(
            &["index", "probability"],
            pv.probs
                .iter()
                .enumerate()
                .map(|(i, p)| vec![i.to_string(), num(*p)]),
        ),
    );
    out.add("histogram.csv", log_histogram(&pv.probs, bins));
}

/// Equal-width histogram of `ln p`: `log_lo,log_hi,count`.
fn log_histogram(probs: &[f64], bins: usize) -> Vec<u8> {
    let logs: Vec<f64> = probs.iter().filter(|p| **p > 0.0).map(|p| p.ln()).collect();
    let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let mut counts = vec![0usize; bins];
    for v in &logs {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    csv_text(
        &["log_lo", "log_hi", "count"],
        counts.iter().enumerate().map(|(k, c)| {
            let a = lo + width * k as f64;
            let b = if k + 1 == bins && hi > lo {
                hi
            } else {
                a + width
            };
            vec![num(a), num(b), c.to_string()]
        }),
    )
}

#[derive(Serialize)]
struct DiagnosticsReport<'a> {
    method: &'static str,
    n: usize,
    subsample_size: Option<usize>,
    distinct_rows: Option<usize>,
    min_probability: f64,
    max_probability: f64,
    probability_sum: f64,
    diagnostics: &'a Diagnostics,
}

fn diagnostics_report<'a>(
    method: SamplingMethod,
    pv: &ProbabilityVector,
    draw: Option<(usize, usize)>,
    diagnostics: &'a Diagnostics,
) -> DiagnosticsReport<'a> {
    DiagnosticsReport {
        method: method.name(),
        n: pv.len(),
        subsample_size: draw.map(|d| d.0),
        distinct_rows: draw.map(|d| d.1),
        min_probability: pv.probs.iter().cloned().fold(f64::INFINITY, f64::min),
        max_probability: pv.probs.iter().cloned().fold(0.0, f64::max),
        probability_sum: pv.total(),
        diagnostics,
    }
}

/// Two-step subsample estimator.
pub fn cmd_subsample_fit(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.model()?;
    let out_dir = cfg.output()?;
    let scfg = cfg.subsample_config()?;
    let p = prepare(cfg, model)?;
    let mut out = Outputs::default();
    let bins = cfg.bins.unwrap_or(30);
    let base = FitReport {
        model: model_name(model),
        method: scfg.method.name(),
        n: p.curves.n(),
        covariates: p.curves.covariate_count(),
        coefficients: &[],
        intercept: None,
        lambda: 0.0,
        df: 0.0,
        bic: 0.0,
        bic_trace: &[],
        converged: None,
        iterations: None,
        knots: p.knots.knots(),
        degree: cfg.degree(),
        penalty_order: cfg.penalty_order(),
        subsample_size: Some(scfg.subsample_size),
        seed: Some(scfg.seed),
        pilot: None,
        warnings: &p.design.warnings,
    };
    let (pv, diag, draw) = match model.family() {
        None => {
            let run = subsample_flm(&p.design, &p.y, &scfg)?;
            out.json(
                "fit.json",
                &FitReport {
                    coefficients: &run.fit.coefficients,
                    intercept: p.intercept(&run.fit.coefficients),
                    lambda: run.fit.lambda,
                    df: run.fit.df,
                    bic: run.fit.bic().value,
                    bic_trace: &run.bic_trace,
                    pilot: run.pilot.as_ref(),
                    ..base
                },
            )?;
            out.add(
                "beta.csv",
                p.beta_csv(
                    &run.fit.coefficients,
                    Some(&run.variance),
                    cfg.grid_points(),
                )?,
            );
            (
                run.probs,
                run.diagnostics,
                (run.draw.len(), run.draw.counts.len()),
            )
        }
        Some(family) => {
            let run = subsample_fglm(&p.design, &p.y, family, &scfg)?;
            out.json(
                "fit.json",
                &FitReport {
                    coefficients: &run.fit.coefficients,
                    intercept: Some(run.fit.coefficients[0]),
                    lambda: run.fit.lambda,
                    df: run.fit.df,
                    bic: run.fit.bic(),
                    bic_trace: &run.bic_trace,
                    converged: Some(run.fit.converged),
                    iterations: Some(run.fit.iterations),
                    pilot: run.pilot.as_ref(),
                    ..base
                },
            )?;
            out.add(
                "beta.csv",
                p.beta_csv(
                    &run.fit.coefficients,
                    Some(&run.variance),
                    cfg.grid_points(),
                )?,
            );
            (
                run.probs,
                run.diagnostics,
                (run.draw.len(), run.draw.counts.len()),
            )
        }
    };
    out.json(
        "diagnostics.json",
        &diagnostics_report(scfg.method, &pv, Some(draw), &diag),
    )?;
    if cfg.write_probabilities.unwrap_or(false) {
        probability_files(&mut out, &pv, bins);
    }
    out.commit(out_dir)
}

/// Pilot and sampling probabilities only.
pub fn cmd_probs(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.model()?;
    let out_dir = cfg.output()?;
    let mut scfg = cfg.subsample_config().or_else(|_| {
        let mut c = cfg.clone();
        c.subsample_size = Some(1);
        c.subsample_config()
    })?;
    scfg.lambda_grid = None;
    let p = prepare(cfg, model)?;
    let (pv, _, diag) = sampling_probabilities(&p.design, &p.y, model, &scfg)?;
    let mut out = Outputs::default();
    probability_files(&mut out, &pv, cfg.bins.unwrap_or(30));
    out.json(
        "diagnostics.json",
        &diagnostics_report(scfg.method, &pv, None, &diag),
    )?;
    out.commit(out_dir)
}

#[derive(Serialize)]
struct StudySummary<'a> {
    spec: &'a funsub::sim::StudySpec,
    records: usize,
    failures: &'a [StudyFailure],
    summary: &'a [SummaryRow],
}

/// Simulation study: metrics CSV and a summary of medians per method and `L`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let out_dir = cfg.output()?;
    let spec = cfg.study_spec()?;
    let result = run_study(&spec)?;
    let mut csv = Vec::new();
    write_metrics_csv(&result.records, &mut csv)?;
    let summary = summarize(&result.records);
    let mut out = Outputs::default();
    out.add("metrics.csv", csv);
    out.json(
        "summary.json",
        &StudySummary {
            spec: &spec,
            records: result.records.len(),
            failures: &result.failures,
            summary: &summary,
        },
    )?;
    out.commit(out_dir)
}

/// Percentile bands for one coefficient function from `B` subsample refits.
pub fn cmd_bootstrap(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.model()?;
    let out_dir = cfg.output()?;
    let scfg = cfg.subsample_config()?;
    let replicates = cfg
        .replicates
        .ok_or_else(|| CliError::Config("the number of replicates is required (-B)".into()))?;
    let p = prepare(cfg, model)?;
    let block = cfg.covariate.unwrap_or(0);
    if block >= p.design.blocks.len() {
        return Err(CliError::Config(format!(
            "covariate {block} out of range (have {})",
            p.design.blocks.len()
        )));
    }
    let t = p.output_grid(cfg.grid_points());
    let bands = bootstrap(&p.design, &p.y, model, &scfg, replicates, block, &t)?;
    if bands.failures > 0 {
        eprintln!(
            "warning: {} of {} replicates failed and were excluded",
            bands.failures, replicates
        );
    }
    let rows = (0..t.len()).map(|k| {
        vec![
            num(bands.t[k]),
            num(bands.mean[k]),
            num(bands.lower[k]),
            num(bands.upper[k]),
        ]
    });
    let mut out = Outputs::default();
    out.add(
        "bands.csv",
        csv_text(&["t", "mean", "lo2.5", "hi97.5"], rows),
    );
    out.commit(out_dir)
}

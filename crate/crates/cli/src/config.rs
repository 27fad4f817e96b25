use std::path::{Path, PathBuf};

use clap::Args;
use funsub::sim::{LambdaMode, StudySpec};
use funsub::subsample::{Model, SamplingMethod, SubsampleConfig, DEFAULT_ALPHA};
use serde::Deserialize;

use crate::error::CliError;

/// Parameters shared by every subcommand. Each may also come from the JSON
/// file given by `--config`; flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// JSON file with any of these settings (snake_case keys)
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Curve CSV: header `grid,t_1,...`, rows `y,x(t_1),...`
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// flm, logistic or poisson
    #[arg(long)]
    pub model: Option<String>,
    /// Interior knots K of the estimation basis
    #[arg(long = "knots", short = 'K')]
    pub interior_knots: Option<usize>,
    /// Spline degree p
    #[arg(long)]
    pub degree: Option<usize>,
    /// Penalty derivative order q
    #[arg(long)]
    pub penalty_order: Option<usize>,
    /// Comma-separated smoothing parameters (default: scaled log grid)
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// lopt or uniform
    #[arg(long)]
    pub method: Option<String>,
    /// Pilot subsample size L0
    #[arg(long)]
    pub pilot_size: Option<usize>,
    /// Subsample size L
    #[arg(long = "subsample-size", short = 'L')]
    pub subsample_size: Option<usize>,
    /// Uniform floor mix alpha in [0, 1]; 1 forces uniform sampling
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap replicates B
    #[arg(long, short = 'B')]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (falls back to FUNSUB_THREADS, then all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Covariate whose coefficient function is reported by bootstrap
    #[arg(long)]
    pub covariate: Option<usize>,
    /// Points of the output grid for coefficient curves
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Also write probabilities and histogram CSVs (subsample-fit)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub write_probabilities: Option<bool>,
    /// Histogram bins for log probabilities
    #[arg(long)]
    pub bins: Option<usize>,
    /// Simulation scenario key, e.g. sim1.s1
    #[arg(long)]
    pub scenario: Option<String>,
    /// Simulated sample size
    #[arg(long, short = 'n')]
    pub n: Option<usize>,
    /// Comma-separated subsample sizes for simulate
    #[arg(long, value_delimiter = ',')]
    pub l_grid: Option<Vec<usize>>,
    /// Simulation replications
    #[arg(long)]
    pub replications: Option<usize>,
    /// Also fit the full data in simulate (adds eIMSE)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub full_fit: Option<bool>,
    /// subsample or shared_full
    #[arg(long)]
    pub lambda_mode: Option<String>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    /// Reads the config file named by `--config` (if any) and applies flags on top.
    pub fn resolve(flags: RunConfig) -> Result<RunConfig, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        overlay!(
            cfg,
            flags,
            input,
            output,
            model,
            interior_knots,
            degree,
            penalty_order,
            lambda_grid,
            method,
            pilot_size,
            subsample_size,
            alpha,
            replicates,
            seed,
            threads,
            covariate,
            grid_points,
            write_probabilities,
            bins,
            scenario,
            n,
            l_grid,
            replications,
            full_fit,
            lambda_mode
        );
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("alpha must lie in [0, 1], got {a}"));
            }
        }
        if let Some(g) = &self.lambda_grid {
            if g.is_empty() || g.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return bad("lambda grid values must be finite and nonnegative".into());
            }
        }
        for (name, v) in [
            ("subsample size", self.subsample_size),
            ("pilot size", self.pilot_size),
            ("threads", self.threads),
            ("bins", self.bins),
            ("replications", self.replications),
        ] {
            if v == Some(0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if matches!(self.replicates, Some(b) if b < 2) {
            return bad("bootstrap needs at least 2 replicates".into());
        }
        if matches!(self.grid_points, Some(g) if g < 2) {
            return bad("grid points must be at least 2".into());
        }
        if matches!(self.degree, Some(p) if p > 10) {
            return bad("spline degree above 10 is not supported".into());
        }
        if let (Some(q), Some(p)) = (self.penalty_order, self.degree) {
            if q > p {
                return bad(format!("penalty order {q} exceeds degree {p}"));
            }
        }
        if let Some(l) = &self.l_grid {
            if l.is_empty() || l.contains(&0) {
                return bad("subsample sizes must be positive".into());
            }
        }
        self.model()?;
        self.method()?;
        self.lambda_mode()?;
        Ok(())
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("an input CSV is required (--input)".into()))
    }

    pub fn output(&self) -> Result<&Path, CliError> {
        self.output
            .as_deref()
            .ok_or_else(|| CliError::Config("an output directory is required (--output)".into()))
    }

    pub fn model(&self) -> Result<Model, CliError> {
        match &self.model {
            None => Ok(Model::Flm),
            Some(m) => Model::from_name(m).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    /// `alpha = 1` always means uniform sampling.
    pub fn method(&self) -> Result<SamplingMethod, CliError> {
        if self.alpha == Some(1.0) {
            return Ok(SamplingMethod::Uniform);
        }
        match self
            .method
            .as_deref()
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            None | Some("lopt") => Ok(SamplingMethod::Lopt),
            Some("uniform") | Some("unif") => Ok(SamplingMethod::Uniform),
            Some(other) => Err(CliError::Config(format!(
                "unknown method '{other}' (expected lopt or uniform)"
            ))),
        }
    }

    pub fn lambda_mode(&self) -> Result<LambdaMode, CliError> {
        match self.lambda_mode.as_deref() {
            None | Some("shared_full") => Ok(LambdaMode::SharedFull),
            Some("subsample") => Ok(LambdaMode::Subsample),
            Some(other) => Err(CliError::Config(format!(
                "unknown lambda mode '{other}' (expected subsample or shared_full)"
            ))),
        }
    }

    pub fn interior_knots(&self) -> usize {
        self.interior_knots.unwrap_or(10)
    }

    pub fn degree(&self) -> usize {
        self.degree.unwrap_or(3)
    }

    pub fn penalty_order(&self) -> usize {
        self.penalty_order.unwrap_or(2)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points.unwrap_or(101)
    }

    pub fn threads(&self) -> Result<Option<usize>, CliError> {
        if let Some(t) = self.threads {
            return Ok(Some(t));
        }
        match std::env::var("FUNSUB_THREADS") {
            Ok(v) if !v.is_empty() => match v.parse::<usize>() {
                Ok(t) if t > 0 => Ok(Some(t)),
                _ => Err(CliError::Config(format!(
                    "FUNSUB_THREADS='{v}' is not a positive integer"
                ))),
            },
            _ => Ok(None),
        }
    }

    pub fn subsample_config(&self) -> Result<SubsampleConfig, CliError> {
        let l = self
            .subsample_size
            .ok_or_else(|| CliError::Config("a subsample size is required (-L)".into()))?;
        let mut cfg = SubsampleConfig::new(self.method()?, l, self.seed());
        cfg.pilot_size = self.pilot_size;
        cfg.lambda_grid = self.lambda_grid.clone();
        cfg.floor_mix = self.alpha.unwrap_or(DEFAULT_ALPHA);
        Ok(cfg)
    }

    pub fn study_spec(&self) -> Result<StudySpec, CliError> {
        let scenario = self
            .scenario
            .as_deref()
            .ok_or_else(|| CliError::Config("a scenario key is required (--scenario)".into()))?;
        funsub::sim::scenario(scenario).map_err(|e| CliError::Config(e.to_string()))?;
        let l_grid = self
            .l_grid
            .clone()
            .or(self.subsample_size.map(|l| vec![l]))
            .ok_or_else(|| CliError::Config("subsample sizes are required (--l-grid)".into()))?;
        let mut spec = StudySpec::new(
            scenario,
            self.n.unwrap_or(10_000),
            l_grid,
            self.replications.unwrap_or(10),
            self.seed(),
        );
        spec.interior_knots = self.interior_knots();
        spec.degree = self.degree();
        spec.penalty_order = self.penalty_order();
        spec.pilot_size = self.pilot_size;
        spec.floor_mix = self.alpha.unwrap_or(DEFAULT_ALPHA);
        spec.full_fit = self.full_fit.unwrap_or(false);
        spec.lambda_grid = self.lambda_grid.clone();
        spec.lambda_mode = self.lambda_mode()?;
        Ok(spec)
    }
}

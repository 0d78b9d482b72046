//! Config-driven command line front end.
//!
//! One TOML file declares the model, the diffusion and the experiment; the
//! subcommands `simulate`, `fisher`, `estimate` and `study` read the sections
//! they need. Unknown keys are rejected.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimators::{
    default_dyadic_level, dyadic_discretize, estimate_pipeline, mde_estimate_at_level, EstimatorConfig,
};
use crate::inference::{empirical_fisher, fisher_quadrature, FisherMatrix, LambdaWeight};
use crate::mcstudy::{run_study, summarize, write_outputs, CheckOutcome, StudyConfig, Thresholds};
use crate::model::{
    builtin_family, BaseFunction, DiffusionSpec, Drift, Family, SignalModel, Volatility,
    DEFAULT_AMPLITUDE_MAX,
};
use crate::simulate::{fmt_f64, simulate_path, Path};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Triangular {
        period: f64,
    },
    PowerPulse {
        period: f64,
        exponent: f64,
    },
    PhaseAmplitude {
        period: f64,
        base: BaseConfig,
        amplitude_max: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseConfig {
    Sine,
    Fourier {
        #[serde(default)]
        a0: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolatilityKind {
    #[default]
    Constant,
    /// `σ(x) = sigma·√(1 + x²)`.
    SqrtOnePlusSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    /// `b(x) = −βx`.
    pub beta: f64,
    pub volatility: VolatilityKind,
    /// Constant level, or the scale of the state-dependent form. `0` with a
    /// constant volatility gives the noiseless ODE.
    pub sigma: f64,
    pub x0: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            volatility: VolatilityKind::Constant,
            sigma: 1.0,
            x0: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub theta: Vec<f64>,
    pub n_periods: usize,
    pub steps_per_period: usize,
    pub seed: u64,
    pub format: PathFormat,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            theta: Vec::new(),
            n_periods: 100,
            steps_per_period: 512,
            seed: 1,
            format: PathFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FisherConfig {
    /// Evaluation point; empty uses `simulation.theta`.
    pub theta: Vec<f64>,
    pub n_quad: usize,
    /// Also report the empirical information on a path simulated from the
    /// `simulation` section.
    pub empirical: bool,
    /// Length of the calibration path used for state-dependent `σ`;
    /// `0` means ten times `simulation.n_periods`.
    pub calibration_periods: usize,
}

impl Default for FisherConfig {
    fn default() -> Self {
        Self {
            theta: Vec::new(),
            n_quad: crate::inference::DEFAULT_QUADRATURE_PANELS,
            empirical: false,
            calibration_periods: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyTable {
    pub replicates: usize,
    pub base_seed: u64,
    pub directions: Vec<Vec<f64>>,
    pub estimators: bool,
    /// Rerun at twice the steps per period and report the metrics again
    /// under a `half_step.` prefix.
    pub half_step: bool,
    pub thresholds: Thresholds,
}

impl Default for StudyTable {
    fn default() -> Self {
        Self {
            replicates: 500,
            base_seed: 1,
            directions: Vec::new(),
            estimators: true,
            half_step: false,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub fisher: FisherConfig,
    #[serde(default)]
    pub estimation: EstimatorConfig,
    #[serde(default)]
    pub study: StudyTable,
}

impl ExperimentConfig {
    /// Parse errors carry the line and column of the offending key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Schema checks that need more than types; runs before any computation.
    pub fn validate(&self) -> Result<()> {
        let signal = self.signal()?;
        self.diffusion_spec()?;
        if !self.simulation.theta.is_empty() {
            signal.domain().check(&self.simulation.theta)?;
        }
        if !self.fisher.theta.is_empty() {
            signal.domain().check(&self.fisher.theta)?;
        }
        if self.simulation.steps_per_period < 2 || self.simulation.n_periods < 1 {
            return Err(Error::Config(
                "simulation: need n_periods ≥ 1 and steps_per_period ≥ 2".into(),
            ));
        }
        if self.fisher.n_quad < 1 {
            return Err(Error::Config("fisher: n_quad must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        match &self.model {
            ModelConfig::Triangular { period }
            | ModelConfig::PowerPulse { period, .. }
            | ModelConfig::PhaseAmplitude { period, .. } => *period,
        }
    }

    pub fn signal(&self) -> Result<SignalModel> {
        let (family, period) = match &self.model {
            ModelConfig::Triangular { period } => (Family::Triangular, *period),
            ModelConfig::PowerPulse { period, exponent } => {
                (Family::PowerPulse { exponent: *exponent }, *period)
            }
            ModelConfig::PhaseAmplitude {
                period,
                base,
                amplitude_max,
            } => {
                let base = match base {
                    BaseConfig::Sine => BaseFunction::Sine,
                    BaseConfig::Fourier { a0, cos, sin } => BaseFunction::Fourier {
                        a0: *a0,
                        cos: cos.clone(),
                        sin: sin.clone(),
                    },
                };
                let family = Family::PhaseAmplitude {
                    base,
                    amplitude_max: amplitude_max.unwrap_or(DEFAULT_AMPLITUDE_MAX),
                };
                (family, *period)
            }
        };
        builtin_family(family, period)
    }

    pub fn diffusion_spec(&self) -> Result<DiffusionSpec> {
        let d = &self.diffusion;
        let drift = if d.beta == 0.0 {
            Drift::Zero
        } else {
            Drift::MeanReverting { beta: d.beta }
        };
        match d.volatility {
            VolatilityKind::Constant if d.sigma == 0.0 => {
                DiffusionSpec::noiseless(drift, self.period(), d.x0)
            }
            VolatilityKind::Constant => {
                DiffusionSpec::new(drift, Volatility::Constant(d.sigma), self.period(), d.x0)
            }
            VolatilityKind::SqrtOnePlusSquare => DiffusionSpec::new(
                drift,
                Volatility::SqrtOnePlusSquare { scale: d.sigma },
                self.period(),
                d.x0,
            ),
        }
    }

    fn sim_theta(&self) -> Result<&[f64]> {
        if self.simulation.theta.is_empty() {
            return Err(Error::Config("simulation.theta is required".into()));
        }
        Ok(&self.simulation.theta)
    }

    pub fn study_config(&self) -> Result<StudyConfig> {
        Ok(StudyConfig {
            theta: self.sim_theta()?.to_vec(),
            n_periods: self.simulation.n_periods,
            steps_per_period: self.simulation.steps_per_period,
            replicates: self.study.replicates,
            base_seed: self.study.base_seed,
            directions: self.study.directions.clone(),
            estimators: self.study.estimators,
            estimator: self.estimation.clone(),
        })
    }

    /// `--seed` replaces both the single-path seed and the study base seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.simulation.seed = seed;
        self.study.base_seed = seed;
        self
    }
}

/// Simulates one path and writes `path.csv` or `path.bin` into `out`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &FsPath) -> Result<PathBuf> {
    let path = simulate_from(cfg)?;
    fs::create_dir_all(out)?;
    let file = match cfg.simulation.format {
        PathFormat::Csv => {
            let f = out.join("path.csv");
            path.write_csv(std::io::BufWriter::new(fs::File::create(&f)?))?;
            f
        }
        PathFormat::Binary => {
            let f = out.join("path.bin");
            path.write_binary(std::io::BufWriter::new(fs::File::create(&f)?))?;
            f
        }
    };
    Ok(file)
}

fn simulate_from(cfg: &ExperimentConfig) -> Result<Path> {
    let s = &cfg.simulation;
    simulate_path(
        &cfg.signal()?,
        &cfg.diffusion_spec()?,
        cfg.sim_theta()?,
        s.n_periods,
        s.steps_per_period,
        s.seed,
    )
}

fn fisher_json(f: &FisherMatrix) -> serde_json::Value {
    let inverse = f.inverse().ok().map(|m| rows(&m));
    json!({
        "provenance": f.provenance(),
        "matrix": f.to_rows(),
        "condition_number": f.condition_number(),
        "inverse": inverse,
    })
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Quadrature information (and optionally the empirical one) as JSON.
pub fn cmd_fisher(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    let signal = cfg.signal()?;
    let diffusion = cfg.diffusion_spec()?;
    let theta = if cfg.fisher.theta.is_empty() {
        cfg.sim_theta()?.to_vec()
    } else {
        cfg.fisher.theta.clone()
    };
    let weight = match diffusion.constant_sigma() {
        Some(_) => LambdaWeight::constant_sigma(&diffusion)?,
        None => {
            let s = &cfg.simulation;
            let periods = match cfg.fisher.calibration_periods {
                0 => 10 * s.n_periods,
                p => p,
            };
            let calib = simulate_path(&signal, &diffusion, &theta, periods, s.steps_per_period, s.seed)?;
            LambdaWeight::empirical(&calib, &diffusion)?
        }
    };
    let quad = fisher_quadrature(&signal, &diffusion, &theta, &weight, cfg.fisher.n_quad)?;
    let mut out = json!({
        "family": signal.name(),
        "theta": theta,
        "quadrature": fisher_json(&quad),
    });
    if cfg.fisher.empirical {
        let path = simulate_from(cfg)?;
        let emp = empirical_fisher(&path, &signal, &diffusion, &theta)?;
        out["empirical"] = fisher_json(&emp);
        out["empirical"]["n_periods"] = json!(path.n_periods());
    }
    Ok(out)
}

/// Runs the estimation pipeline on a stored path; returns a one-row CSV.
pub fn cmd_estimate(cfg: &ExperimentConfig, path_file: &FsPath) -> Result<String> {
    let signal = cfg.signal()?;
    let diffusion = cfg.diffusion_spec()?;
    let path = Path::load(path_file)?;
    let d = signal.dim();
    let mut head = vec!["seed".to_string(), "n".into()];
    let mut row = vec![path.seed().to_string(), path.n_periods().to_string()];
    let mut push = |tag: &str, v: &[f64]| {
        for (j, x) in v.iter().enumerate() {
            head.push(format!("{tag}_{j}"));
            row.push(fmt_f64(*x));
        }
    };
    let (mde, level, in_domain) = if diffusion.is_noiseless() {
        // no likelihood: distance estimator and its discretization only
        let est = &cfg.estimation;
        let level = est.dyadic_level.unwrap_or_else(|| default_dyadic_level(path.n_periods()));
        let mde = mde_estimate_at_level(&path, &signal, &diffusion, &est.search, level)?;
        let anchor = est.anchor.clone().unwrap_or_else(|| signal.domain().midpoint());
        let disc = dyadic_discretize(&mde.estimate, level, &anchor, signal.domain(), est.outside_cube)?;
        push("mde", &mde.estimate);
        push("disc", &disc);
        push("onestep", &vec![f64::NAN; d]);
        (mde, level, false)
    } else {
        let rec = estimate_pipeline(&path, &signal, &diffusion, &cfg.estimation)?;
        push("mde", &rec.mde.estimate);
        push("disc", &rec.discretized);
        push("onestep", &rec.one_step.estimate);
        if let Some(m) = &rec.mle {
            push("mle", &m.estimate);
        }
        (rec.mde, rec.level, rec.one_step.in_domain)
    };
    head.extend(["level", "mde_objective", "mde_converged", "mde_boundary_hit", "onestep_in_domain"].map(String::from));
    row.push(level.to_string());
    row.push(fmt_f64(mde.objective));
    row.push(u8::from(mde.converged).to_string());
    row.push(u8::from(mde.boundary_hit).to_string());
    row.push(u8::from(in_domain).to_string());
    Ok(format!("{}\n{}\n", head.join(","), row.join(",")))
}

/// Runs the study and writes `replicates.csv`, `summary.csv` and
/// `manifest.json`. Returns the threshold checks.
pub fn cmd_study(cfg: &ExperimentConfig, out: &FsPath) -> Result<Vec<CheckOutcome>> {
    let signal = cfg.signal()?;
    let diffusion = cfg.diffusion_spec()?;
    let study = cfg.study_config()?;
    let result = run_study(&signal, &diffusion, &study)?;
    let summary = summarize(&result)?;
    let mut rows = summary.rows();
    let checks = summary.check(&cfg.study.thresholds);
    if cfg.study.half_step {
        let fine = StudyConfig {
            steps_per_period: 2 * study.steps_per_period,
            ..study.clone()
        };
        let fine_summary = summarize(&run_study(&signal, &diffusion, &fine)?)?;
        rows.extend(
            fine_summary
                .rows()
                .into_iter()
                .map(|(k, v)| (format!("half_step.{k}"), v)),
        );
    }
    let echo = serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?;
    write_outputs(out, &result, &rows, &checks, echo)?;
    Ok(checks)
}

#[derive(Debug, Parser)]
#[command(name = "perisig", version, about = "Periodic-signal diffusion experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the simulation seed and the study base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for study replicates (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Fail (nonzero exit) when a study threshold check fails.
    #[arg(long, global = true)]
    pub check: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path.
    Simulate,
    /// Fisher information at a parameter.
    Fisher,
    /// Run the estimators on a stored path.
    Estimate {
        /// Path file written by `simulate` (CSV or binary).
        #[arg(long)]
        path: PathBuf,
    },
    /// Monte Carlo study.
    Study,
}

/// Outcome of a CLI invocation: what to print on stdout and the exit code.
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

pub fn error_json(e: &Error) -> String {
    json!({"error": {"kind": e.kind(), "message": e.to_string()}}).to_string()
}

/// Executes a parsed command line. Errors come back as JSON with exit code 1;
/// failed `--check` thresholds exit with code 2.
pub fn run(cli: &Cli) -> Outcome {
    match execute(cli) {
        Ok(o) => o,
        Err(e) => Outcome {
            stdout: error_json(&e),
            code: 1,
        },
    }
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let config = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config <file> is required".into()))?;
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cli.threads {
            if t == 0 {
                return Err(Error::InvalidArgument("--threads must be ≥ 1".into()));
            }
            b = b.num_threads(t);
        }
        b.build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
    };
    pool.install(|| match &cli.command {
        Command::Simulate => {
            let f = cmd_simulate(&cfg, &cli.out)?;
            Ok(Outcome {
                stdout: json!({"path": f}).to_string(),
                code: 0,
            })
        }
        Command::Fisher => {
            let v = cmd_fisher(&cfg)?;
            fs::create_dir_all(&cli.out)?;
            let text = serde_json::to_string_pretty(&v).map_err(|e| Error::Config(e.to_string()))?;
            fs::write(cli.out.join("fisher.json"), format!("{text}\n"))?;
            Ok(Outcome { stdout: text, code: 0 })
        }
        Command::Estimate { path } => {
            let csv = cmd_estimate(&cfg, path)?;
            fs::create_dir_all(&cli.out)?;
            fs::write(cli.out.join("estimate.csv"), &csv)?;
            Ok(Outcome { stdout: csv, code: 0 })
        }
        Command::Study => {
            let checks = cmd_study(&cfg, &cli.out)?;
            let failed: Vec<&CheckOutcome> = checks.iter().filter(|c| !c.passed).collect();
            if cli.check && !failed.is_empty() {
                let v = json!({"error": {"kind": "CheckFailed", "failed": failed}});
                return Ok(Outcome {
                    stdout: v.to_string(),
                    code: 2,
                });
            }
            Ok(Outcome {
                stdout: json!({"out": cli.out, "checks": checks}).to_string(),
                code: 0,
            })
        }
    })
}

//! Replicated simulate → estimate runs and the diagnostics computed from them:
//! the LAN remainder, score normality, and estimator covariances.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_pipeline, mde_asymptotic_covariance, EstimatorConfig, MdeCovariance, PhiMode,
};
use crate::inference::{
    empirical_fisher, fisher_quadrature, log_likelihood_ratio, score, FisherMatrix, LambdaWeight,
    DEFAULT_QUADRATURE_PANELS,
};
use crate::model::{DiffusionSpec, SignalModel};
use crate::rng::{replicate_seed, CounterNormal};
use crate::simulate::{fmt_f64, simulate_path};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path as FsPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub theta: Vec<f64>,
    pub n_periods: usize,
    pub steps_per_period: usize,
    pub replicates: usize,
    pub base_seed: u64,
    /// Local directions `h`; log-likelihood ratios are taken at `θ + h/√n`.
    pub directions: Vec<Vec<f64>>,
    /// Run MDE → discretization → one-step (and the MLE if enabled).
    pub estimators: bool,
    pub estimator: EstimatorConfig,
}

impl StudyConfig {
    pub fn validate(&self, signal: &SignalModel) -> Result<()> {
        signal.domain().check(&self.theta)?;
        if self.n_periods < 1 || self.steps_per_period < 2 || self.replicates < 1 {
            return Err(Error::InvalidArgument(
                "need n_periods ≥ 1, steps_per_period ≥ 2, replicates ≥ 1".into(),
            ));
        }
        let root_n = (self.n_periods as f64).sqrt();
        for h in &self.directions {
            let local: Vec<f64> = self.theta.iter().zip(h).map(|(t, h)| t + h / root_n).collect();
            if h.len() != self.theta.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.theta.len(),
                    got: h.len(),
                });
            }
            signal.domain().check(&local)?;
        }
        Ok(())
    }

    pub fn local_alternative(&self, h: &[f64]) -> Vec<f64> {
        let root_n = (self.n_periods as f64).sqrt();
        self.theta.iter().zip(h).map(|(t, h)| t + h / root_n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub mde: Vec<f64>,
    pub mde_objective: f64,
    pub mde_iterations: usize,
    pub boundary_hit: bool,
    pub discretized: Vec<f64>,
    pub one_step: Vec<f64>,
    pub one_step_in_domain: bool,
    pub mle: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub score: Vec<f64>,
    /// Row-major `I^n_T(θ)`.
    pub empirical_fisher: Vec<f64>,
    /// One entry per configured direction.
    pub log_lr: Vec<f64>,
    pub estimates: Option<EstimateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub replicate: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<Failure>,
    /// Quadrature information at the true parameter.
    pub fisher: FisherMatrix,
    /// Limit covariance of the MDE at the true parameter, when defined.
    pub mde_covariance: Option<MdeCovariance>,
}

/// Runs one replicate; the path seed is `replicate_seed(base_seed, r)`.
pub fn run_replicate(
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    config: &StudyConfig,
    replicate: usize,
) -> Result<ReplicateRecord> {
    let seed = replicate_seed(config.base_seed, replicate as u64);
    let path = simulate_path(
        signal,
        diffusion,
        &config.theta,
        config.n_periods,
        config.steps_per_period,
        seed,
    )?;
    let theta = &config.theta;
    let sc = score(&path, signal, diffusion, theta)?;
    let fi = empirical_fisher(&path, signal, diffusion, theta)?;
    let log_lr = config
        .directions
        .iter()
        .map(|h| log_likelihood_ratio(&path, signal, diffusion, &config.local_alternative(h), theta))
        .collect::<Result<Vec<_>>>()?;
    let estimates = if config.estimators {
        let rec = estimate_pipeline(&path, signal, diffusion, &config.estimator)?;
        Some(EstimateSummary {
            mde: rec.mde.estimate,
            mde_objective: rec.mde.objective,
            mde_iterations: rec.mde.iterations,
            boundary_hit: rec.mde.boundary_hit,
            discretized: rec.discretized,
            one_step: rec.one_step.estimate,
            one_step_in_domain: rec.one_step.in_domain,
            mle: rec.mle.map(|f| f.estimate),
        })
    } else {
        None
    };
    Ok(ReplicateRecord {
        replicate,
        seed,
        score: sc,
        empirical_fisher: fi.matrix().transpose().iter().copied().collect(),
        log_lr,
        estimates,
    })
}

/// Runs every replicate (in parallel on the current rayon pool) and collects
/// them in replicate order. Replicates whose path blows up are recorded as
/// failures; more than 1% of failures aborts the study.
pub fn run_study(
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    config: &StudyConfig,
) -> Result<StudyResult> {
    config.validate(signal)?;
    diffusion.check_compatible(signal)?;
    let outcomes: Vec<Result<ReplicateRecord>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(signal, diffusion, config, r))
        .collect();
    let mut records = Vec::with_capacity(config.replicates);
    let mut failures = Vec::new();
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(rec) => records.push(rec),
            Err(e @ Error::NonFiniteState { .. }) => failures.push(Failure {
                replicate: r,
                seed: replicate_seed(config.base_seed, r as u64),
                message: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if failures.len() * 100 > config.replicates {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: config.replicates,
        });
    }

    // state-dependent σ: λ and Φ come from a calibration path (the first
    // replicate's seed, ten times longer)
    let calib = match diffusion.constant_sigma() {
        Some(_) => None,
        None => Some(simulate_path(
            signal,
            diffusion,
            &config.theta,
            config.n_periods * 10,
            config.steps_per_period,
            replicate_seed(config.base_seed, 0),
        )?),
    };
    let weight = LambdaWeight::for_diffusion(diffusion, calib.as_ref())?;
    let fisher = fisher_quadrature(signal, diffusion, &config.theta, &weight, DEFAULT_QUADRATURE_PANELS)?;
    let phi = match &calib {
        None => PhiMode::ConstantSigma,
        Some(p) => PhiMode::Empirical(p),
    };
    let mde_covariance =
        mde_asymptotic_covariance(signal, diffusion, &config.theta, phi, DEFAULT_QUADRATURE_PANELS).ok();
    Ok(StudyResult {
        config: config.clone(),
        records,
        failures,
        fisher,
        mde_covariance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanStats {
    pub direction: Vec<f64>,
    /// `½ hᵀ I h`.
    pub half_quadratic: f64,
    pub mean: f64,
    pub std: f64,
    pub mean_abs: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    /// OLS of the log-likelihood ratio on `hᵀΔ − ½hᵀIh`; NaN when the
    /// regressor has no spread (e.g. `h = 0`).
    pub slope: f64,
    pub intercept: f64,
}

/// Remainders `R = log L − hᵀΔ + ½hᵀIh`, one set per direction.
pub fn lan_remainders(result: &StudyResult, fisher: &FisherMatrix) -> Vec<Vec<f64>> {
    result
        .config
        .directions
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let half = 0.5 * fisher.quadratic_form(h);
            result
                .records
                .iter()
                .map(|r| r.log_lr[k] - dot(h, &r.score) + half)
                .collect()
        })
        .collect()
}

pub fn lan_diagnostic(result: &StudyResult, fisher: &FisherMatrix) -> Vec<LanStats> {
    let rems = lan_remainders(result, fisher);
    result
        .config
        .directions
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let half = 0.5 * fisher.quadratic_form(h);
            let r = &rems[k];
            let x: Vec<f64> = result.records.iter().map(|rec| dot(h, &rec.score) - half).collect();
            let y: Vec<f64> = result.records.iter().map(|rec| rec.log_lr[k]).collect();
            let (slope, intercept) = ols(&x, &y);
            let (mean, std) = mean_std(r);
            let mut sorted = r.clone();
            sorted.sort_by(f64::total_cmp);
            LanStats {
                direction: h.clone(),
                half_quadratic: half,
                mean,
                std,
                mean_abs: r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64,
                q05: quantile(&sorted, 0.05),
                median: quantile(&sorted, 0.5),
                q95: quantile(&sorted, 0.95),
                slope,
                intercept,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsStat {
    pub statistic: f64,
    pub p_value: f64,
    /// Rejection threshold of the statistic at level 1%.
    pub critical_1pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityStats {
    pub count: usize,
    pub mean: Vec<f64>,
    /// `mean_j / √(target_jj / N)`.
    pub z_scores: Vec<f64>,
    /// Row-major sample covariance.
    pub covariance: Vec<f64>,
    /// `‖Ĉ − C‖_F / ‖C‖_F`.
    pub frobenius_rel_error: f64,
    pub ks: Vec<KsStat>,
}

/// Marginal check of `samples ≈ N(0, target)`.
pub fn normality_diagnostic(samples: &[Vec<f64>], target: &DMatrix<f64>) -> Result<NormalityStats> {
    let d = target.nrows();
    if target.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: target.ncols(),
        });
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let count = samples.len();
    let (mean, cov) = sample_covariance(samples);
    let z_scores = (0..d)
        .map(|j| mean[j] / (target[(j, j)] / count as f64).sqrt())
        .collect();
    let frobenius_rel_error = (&cov - target).norm() / target.norm();
    let mut ks = Vec::with_capacity(d);
    for j in 0..d {
        let sd = target[(j, j)].sqrt();
        let normal = Normal::new(0.0, sd)
            .map_err(|e| Error::InvalidArgument(format!("target variance {j}: {e}")))?;
        let mut xs: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let statistic = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = normal.cdf(x);
                (c - i as f64 / n).max((i + 1) as f64 / n - c)
            })
            .fold(0.0, f64::max);
        ks.push(KsStat {
            statistic,
            p_value: kolmogorov_p_value(statistic, count),
            critical_1pct: ks_critical(count, 0.01),
        });
    }
    Ok(NormalityStats {
        count,
        mean,
        z_scores,
        covariance: cov.transpose().iter().copied().collect(),
        frobenius_rel_error,
        ks,
    })
}

/// Stephens' small-sample scaling of the Kolmogorov statistic.
fn ks_scale(n: usize) -> f64 {
    let r = (n as f64).sqrt();
    r + 0.12 + 0.11 / r
}

/// `P(D_n > d)` from the Kolmogorov limit law.
pub fn kolmogorov_p_value(d: f64, n: usize) -> f64 {
    let lambda = ks_scale(n) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// Statistic value rejected at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    // bisection on the monotone p-value
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_p_value(mid, n) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `count` draws of `N(0, cov)` from the counter-based generator.
pub fn gaussian_samples(cov: &DMatrix<f64>, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let d = cov.nrows();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?;
    let l = chol.l();
    let g = CounterNormal::new(seed);
    Ok((0..count)
        .map(|i| {
            let z = DVector::from_iterator(d, (0..d).map(|j| g.normal((i * d + j) as u64)));
            (&l * z).iter().copied().collect()
        })
        .collect())
}

/// Mean and unbiased sample covariance.
pub fn sample_covariance(samples: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x / n;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    cov /= n - 1.0;
    (mean, cov)
}

/// Which estimator a set of normalized errors comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Mde,
    Discretized,
    OneStep,
    Mle,
}

/// `√n(ϑ̂ − θ)` for every replicate that ran the estimators.
pub fn normalized_errors(result: &StudyResult, kind: EstimatorKind) -> Vec<Vec<f64>> {
    let root_n = (result.config.n_periods as f64).sqrt();
    let theta = &result.config.theta;
    result
        .records
        .iter()
        .filter_map(|r| r.estimates.as_ref())
        .filter_map(|e| match kind {
            EstimatorKind::Mde => Some(&e.mde),
            EstimatorKind::Discretized => Some(&e.discretized),
            EstimatorKind::OneStep => Some(&e.one_step),
            EstimatorKind::Mle => e.mle.as_ref(),
        })
        .map(|est| est.iter().zip(theta).map(|(a, t)| root_n * (a - t)).collect())
        .collect()
}

pub fn scores(result: &StudyResult) -> Vec<Vec<f64>> {
    result.records.iter().map(|r| r.score.clone()).collect()
}

/// Aggregate diagnostics of one study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n_periods: usize,
    pub replicates: usize,
    pub failures: usize,
    pub fisher: Vec<f64>,
    pub empirical_fisher_mean: Vec<f64>,
    pub lan: Vec<LanStats>,
    pub score: Option<NormalityStats>,
    pub one_step: Option<NormalityStats>,
    pub mde: Option<NormalityStats>,
    pub mle: Option<NormalityStats>,
    pub mde_limit_covariance: Option<Vec<f64>>,
    pub one_step_out_of_domain: usize,
    pub mde_boundary_hits: usize,
}

pub fn summarize(result: &StudyResult) -> Result<Summary> {
    let d = result.config.theta.len();
    let fisher = &result.fisher;
    let inv = fisher.inverse()?;
    let enough = |s: &[Vec<f64>]| s.len() >= 2;
    let sc = scores(result);
    let score = if enough(&sc) {
        Some(normality_diagnostic(&sc, fisher.matrix())?)
    } else {
        None
    };
    let os = normalized_errors(result, EstimatorKind::OneStep);
    let one_step = if enough(&os) {
        Some(normality_diagnostic(&os, &inv)?)
    } else {
        None
    };
    let md = normalized_errors(result, EstimatorKind::Mde);
    let mde = match (&result.mde_covariance, enough(&md)) {
        (Some(c), true) => Some(normality_diagnostic(&md, &c.covariance)?),
        _ => None,
    };
    let ml = normalized_errors(result, EstimatorKind::Mle);
    let mle = if enough(&ml) {
        Some(normality_diagnostic(&ml, &inv)?)
    } else {
        None
    };
    let mut fi_mean = vec![0.0; d * d];
    for r in &result.records {
        for (m, v) in fi_mean.iter_mut().zip(&r.empirical_fisher) {
            *m += v / result.records.len() as f64;
        }
    }
    let est = || result.records.iter().filter_map(|r| r.estimates.as_ref());
    Ok(Summary {
        n_periods: result.config.n_periods,
        replicates: result.records.len(),
        failures: result.failures.len(),
        fisher: fisher.matrix().transpose().iter().copied().collect(),
        empirical_fisher_mean: fi_mean,
        lan: lan_diagnostic(result, fisher),
        score,
        one_step,
        mde,
        mle,
        mde_limit_covariance: result
            .mde_covariance
            .as_ref()
            .map(|c| c.covariance.transpose().iter().copied().collect()),
        one_step_out_of_domain: est().filter(|e| !e.one_step_in_domain).count(),
        mde_boundary_hits: est().filter(|e| e.boundary_hit).count(),
    })
}

/// Pass/fail thresholds applied by `--check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub lan_slope_low: f64,
    pub lan_slope_high: f64,
    pub score_cov_rel: f64,
    pub one_step_cov_rel: f64,
    pub mde_cov_rel: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            lan_slope_low: 0.95,
            lan_slope_high: 1.05,
            score_cov_rel: 0.15,
            one_step_cov_rel: 0.15,
            mde_cov_rel: 0.20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub passed: bool,
}

impl Summary {
    /// Flat `(metric, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("n_periods".to_string(), self.n_periods as f64),
            ("replicates".to_string(), self.replicates as f64),
            ("failures".to_string(), self.failures as f64),
        ];
        for (i, v) in self.fisher.iter().enumerate() {
            rows.push((format!("fisher_quadrature_{i}"), *v));
        }
        for (i, v) in self.empirical_fisher_mean.iter().enumerate() {
            rows.push((format!("fisher_empirical_mean_{i}"), *v));
        }
        for (k, l) in self.lan.iter().enumerate() {
            rows.push((format!("lan_{k}_slope"), l.slope));
            rows.push((format!("lan_{k}_intercept"), l.intercept));
            rows.push((format!("lan_{k}_half_quadratic"), l.half_quadratic));
            rows.push((format!("lan_{k}_remainder_mean"), l.mean));
            rows.push((format!("lan_{k}_remainder_std"), l.std));
            rows.push((format!("lan_{k}_remainder_mean_abs"), l.mean_abs));
            rows.push((format!("lan_{k}_remainder_q05"), l.q05));
            rows.push((format!("lan_{k}_remainder_median"), l.median));
            rows.push((format!("lan_{k}_remainder_q95"), l.q95));
        }
        let mut norm = |tag: &str, s: &Option<NormalityStats>| {
            if let Some(s) = s {
                rows.push((format!("{tag}_cov_rel_error"), s.frobenius_rel_error));
                for (i, v) in s.covariance.iter().enumerate() {
                    rows.push((format!("{tag}_cov_{i}"), *v));
                }
                for (j, z) in s.z_scores.iter().enumerate() {
                    rows.push((format!("{tag}_mean_z_{j}"), *z));
                }
                for (j, k) in s.ks.iter().enumerate() {
                    rows.push((format!("{tag}_ks_{j}"), k.statistic));
                    rows.push((format!("{tag}_ks_p_{j}"), k.p_value));
                    rows.push((format!("{tag}_ks_crit1_{j}"), k.critical_1pct));
                }
            }
        };
        norm("score", &self.score);
        norm("one_step", &self.one_step);
        norm("mde", &self.mde);
        norm("mle", &self.mle);
        if let Some(c) = &self.mde_limit_covariance {
            for (i, v) in c.iter().enumerate() {
                rows.push((format!("mde_limit_cov_{i}"), *v));
            }
        }
        rows.push(("one_step_out_of_domain".into(), self.one_step_out_of_domain as f64));
        rows.push(("mde_boundary_hits".into(), self.mde_boundary_hits as f64));
        rows
    }

    pub fn check(&self, t: &Thresholds) -> Vec<CheckOutcome> {
        let mut out = Vec::new();
        for (k, l) in self.lan.iter().enumerate() {
            if l.slope.is_finite() {
                out.push(CheckOutcome {
                    name: format!("lan_{k}_slope"),
                    value: l.slope,
                    passed: (t.lan_slope_low..=t.lan_slope_high).contains(&l.slope),
                });
            }
        }
        if let Some(s) = &self.score {
            out.push(CheckOutcome {
                name: "score_cov_rel_error".into(),
                value: s.frobenius_rel_error,
                passed: s.frobenius_rel_error <= t.score_cov_rel,
            });
            for (j, k) in s.ks.iter().enumerate() {
                out.push(CheckOutcome {
                    name: format!("score_ks_{j}"),
                    value: k.statistic,
                    passed: k.statistic < k.critical_1pct,
                });
            }
        }
        if let Some(s) = &self.one_step {
            out.push(CheckOutcome {
                name: "one_step_cov_rel_error".into(),
                value: s.frobenius_rel_error,
                passed: s.frobenius_rel_error <= t.one_step_cov_rel,
            });
        }
        if let Some(s) = &self.mde {
            out.push(CheckOutcome {
                name: "mde_cov_rel_error".into(),
                value: s.frobenius_rel_error,
                passed: s.frobenius_rel_error <= t.mde_cov_rel,
            });
        }
        out
    }
}

/// One CSV row per replicate, in replicate order.
pub fn replicates_csv(result: &StudyResult) -> String {
    let d = result.config.theta.len();
    let mut head = vec!["replicate".to_string(), "seed".into(), "n".into()];
    head.extend((0..d).map(|j| format!("score_{j}")));
    head.extend((0..d * d).map(|j| format!("fisher_emp_{j}")));
    head.extend((0..result.config.directions.len()).map(|k| format!("llr_{k}")));
    let with_est = result.config.estimators;
    let with_mle = with_est && result.config.estimator.mle;
    if with_est {
        for tag in ["mde", "disc", "onestep"] {
            head.extend((0..d).map(|j| format!("{tag}_{j}")));
        }
        head.extend(["mde_objective".into(), "onestep_in_domain".into(), "mde_boundary_hit".into()]);
    }
    if with_mle {
        head.extend((0..d).map(|j| format!("mle_{j}")));
    }
    let mut out = head.join(",");
    out.push('\n');
    for r in &result.records {
        let mut row = vec![r.replicate.to_string(), r.seed.to_string(), result.config.n_periods.to_string()];
        row.extend(r.score.iter().map(|v| fmt_f64(*v)));
        row.extend(r.empirical_fisher.iter().map(|v| fmt_f64(*v)));
        row.extend(r.log_lr.iter().map(|v| fmt_f64(*v)));
        if let Some(e) = r.estimates.as_ref().filter(|_| with_est) {
            for v in [&e.mde, &e.discretized, &e.one_step] {
                row.extend(v.iter().map(|x| fmt_f64(*x)));
            }
            row.push(fmt_f64(e.mde_objective));
            row.push(u8::from(e.one_step_in_domain).to_string());
            row.push(u8::from(e.boundary_hit).to_string());
            if with_mle {
                match &e.mle {
                    Some(m) => row.extend(m.iter().map(|x| fmt_f64(*x))),
                    None => row.extend((0..d).map(|_| "nan".to_string())),
                }
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// `metric,value` rows.
pub fn summary_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from("metric,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{}", fmt_f64(*v));
    }
    out
}

/// Content hash of a blob as git computes it (SHA-256 object format).
pub fn git_blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes `replicates.csv`, `summary.csv` and `manifest.json` into `dir`.
/// `config_echo` is stored verbatim in the manifest.
pub fn write_outputs(
    dir: &FsPath,
    result: &StudyResult,
    rows: &[(String, f64)],
    checks: &[CheckOutcome],
    config_echo: serde_json::Value,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let replicates = replicates_csv(result);
    let summary = summary_csv(rows);
    std::fs::write(dir.join("replicates.csv"), &replicates)?;
    std::fs::write(dir.join("summary.csv"), &summary)?;
    let manifest = serde_json::json!({
        "config": config_echo,
        "outputs": {
            "replicates.csv": git_blob_hash(replicates.as_bytes()),
            "summary.csv": git_blob_hash(summary.as_bytes()),
        },
        "replicates_requested": result.config.replicates,
        "replicates_completed": result.records.len(),
        "failures": result.failures,
        "checks": checks,
    });
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidArgument(format!("manifest: {e}")))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 1e-300) {
        return (f64::NAN, f64::NAN);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    let f = pos - i as f64;
    sorted[i] * (1.0 - f) + sorted[j] * f
}

//! Minimum distance estimation, dyadic discretization, the one-step
//! correction, the limit covariance of the minimum distance estimator, and a
//! grid maximum likelihood baseline.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    empirical_fisher, fisher_quadrature, log_likelihood_ratio, score, FisherMatrix, LambdaWeight,
    Provenance, DEFAULT_QUADRATURE_PANELS,
};
use crate::model::{DiffusionSpec, ParameterDomain, SignalModel};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::quad::{self, GridFunction};
use crate::simulate::Path;

/// `Ψ̂_n(s) = (1/n) Σ_k [ξ_{(k−1)T+s} − ξ_{(k−1)T} − ∫ b(ξ_r) dr]` on the path grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPsi {
    pub samples: Vec<f64>,
    pub n: usize,
    pub dt: f64,
}

/// The `b`-integral is a left-endpoint sum on the path grid.
pub fn psi_hat(path: &Path, diffusion: &DiffusionSpec) -> EmpiricalPsi {
    let m = path.steps_per_period();
    let n = path.n_periods();
    let dt = path.dt();
    let v = path.values();
    let mut samples = vec![0.0; m + 1];
    for k in 0..n {
        let seg = &v[k * m..=(k + 1) * m];
        let mut drift = 0.0;
        for j in 1..=m {
            drift += diffusion.b(seg[j - 1]) * dt;
            samples[j] += seg[j] - seg[0] - drift;
        }
    }
    for s in &mut samples[1..] {
        *s /= n as f64;
    }
    EmpiricalPsi { samples, n, dt }
}

/// How `Ψ_ζ(s) = ∫₀^s S(ζ, v) dv` is accumulated on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiRule {
    /// Left-endpoint sums, the same rule the Euler scheme applies to the
    /// drift; `E Ψ̂_n = Ψ_θ` holds exactly on simulated paths.
    #[default]
    LeftRiemann,
    Trapezoid,
}

/// `Ψ_ζ` at `s_j = j·dt`, `j = 0..=steps`.
pub fn psi_theoretical(
    signal: &SignalModel,
    zeta: &[f64],
    dt: f64,
    steps: usize,
    rule: PsiRule,
) -> Result<Vec<f64>> {
    signal.domain().check(zeta)?;
    Ok(psi_unchecked(signal, zeta, dt, steps, rule))
}

fn psi_unchecked(signal: &SignalModel, zeta: &[f64], dt: f64, steps: usize, rule: PsiRule) -> Vec<f64> {
    let s = signal.values_on_grid(zeta, dt, steps + 1);
    let mut out = Vec::with_capacity(steps + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for j in 1..=steps {
        acc += match rule {
            PsiRule::LeftRiemann => s[j - 1] * dt,
            PsiRule::Trapezoid => 0.5 * (s[j - 1] + s[j]) * dt,
        };
        out.push(acc);
    }
    out
}

/// `‖a − b‖²_H` by the trapezoid rule on a uniform grid.
pub fn h_distance_sq(a: &[f64], b: &[f64], dt: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let last = a.len() - 1;
    let mut acc = 0.0;
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        let d = x - y;
        let w = if j == 0 || j == last { 0.5 } else { 1.0 };
        acc += w * d * d;
    }
    acc * dt
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Coarse grid resolution per axis.
    pub grid_points: usize,
    /// Sub-rectangle of `Θ` scanned by the coarse grid; `None` scans `Θ`.
    pub search_box: Option<Vec<(f64, f64)>>,
    /// Initial simplex edge; `None` uses `2^-level`.
    pub simplex_scale: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub rule: PsiRule,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_points: 32,
            search_box: None,
            simplex_scale: None,
            tolerance: 1e-8,
            max_iterations: 20_000,
            rule: PsiRule::LeftRiemann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub estimate: Vec<f64>,
    pub objective: f64,
    /// Best value found by the coarse grid.
    pub grid_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub boundary_hit: bool,
}

fn search_box(domain: &ParameterDomain, search: &SearchConfig) -> Result<Vec<(f64, f64)>> {
    match &search.search_box {
        None => Ok(domain.bounds().to_vec()),
        Some(b) => {
            if b.len() != domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: domain.dim(),
                    got: b.len(),
                });
            }
            for (&(lo, hi), &(dlo, dhi)) in b.iter().zip(domain.bounds()) {
                if !(lo < hi && lo >= dlo && hi <= dhi) {
                    return Err(Error::InvalidArgument(format!(
                        "search box ({lo}, {hi}) is not a proper sub-interval of ({dlo}, {dhi})"
                    )));
                }
            }
            Ok(b.clone())
        }
    }
}

/// Coarse grid scan then Nelder–Mead refinement of `f` over `Θ`.
fn two_phase<F>(domain: &ParameterDomain, search: &SearchConfig, level: u32, mut f: F) -> Result<Fit>
where
    F: FnMut(&[f64]) -> f64,
{
    let bounds = search_box(domain, search)?;
    let d = bounds.len();
    let g = search.grid_points.max(1);
    let total = g.checked_pow(d as u32).ok_or_else(|| {
        Error::InvalidArgument("coarse grid too large".into())
    })?;
    let mut point = vec![0.0; d];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let (mut lo_val, mut hi_val) = (f64::INFINITY, f64::NEG_INFINITY);
    for idx in 0..total {
        // lexicographic order, first axis slowest
        let mut rem = idx;
        for j in (0..d).rev() {
            let i = rem % g;
            rem /= g;
            let (lo, hi) = bounds[j];
            point[j] = lo + (i as f64 + 0.5) * (hi - lo) / g as f64;
        }
        let v = f(&point);
        lo_val = lo_val.min(v);
        hi_val = hi_val.max(v);
        if best.as_ref().map_or(true, |(_, b)| v < *b) {
            best = Some((point.clone(), v));
        }
    }
    let (start, grid_objective) = best.expect("grid is nonempty");
    if !(hi_val - lo_val > 1e-14 * (1.0 + hi_val.abs())) {
        return Err(Error::DegenerateObjective);
    }
    let opts = NelderMeadOptions {
        initial_scale: search.simplex_scale.unwrap_or((-(level as f64)).exp2()),
        tolerance: search.tolerance,
        max_iterations: search.max_iterations,
    };
    let mut wrapped = |x: &[f64]| {
        if domain.contains(x) {
            f(x)
        } else {
            f64::INFINITY
        }
    };
    let r = nelder_mead(&mut wrapped, &start, &opts);
    let (estimate, objective) = if r.value <= grid_objective {
        (r.x, r.value)
    } else {
        (start, grid_objective)
    };
    let boundary_hit = estimate
        .iter()
        .zip(domain.bounds())
        .any(|(&x, &(lo, hi))| (x - lo).min(hi - x) <= 1e-6 * (hi - lo));
    Ok(Fit {
        estimate,
        objective,
        grid_objective,
        iterations: r.iterations,
        converged: r.converged,
        boundary_hit,
    })
}

/// `arginf_ζ ‖Ψ̂_n − Ψ_ζ‖_H`.
pub fn mde_estimate(
    path: &Path,
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    search: &SearchConfig,
) -> Result<Fit> {
    mde_estimate_at_level(path, signal, diffusion, search, default_dyadic_level(path.n_periods()))
}

pub(crate) fn mde_estimate_at_level(
    path: &Path,
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    search: &SearchConfig,
    level: u32,
) -> Result<Fit> {
    diffusion.check_compatible(signal)?;
    path.check_grid(signal.period())?;
    let psi = psi_hat(path, diffusion);
    let m = path.steps_per_period();
    let objective =
        |z: &[f64]| h_distance_sq(&psi.samples, &psi_unchecked(signal, z, psi.dt, m, search.rule), psi.dt);
    two_phase(signal.domain(), search, level, objective)
}

/// `max(⌈log₂ √n⌉, 6)`.
pub fn default_dyadic_level(n: usize) -> u32 {
    let l = (0.5 * (n.max(1) as f64).log2()).ceil() as u32;
    l.max(6)
}

/// What to return when the cube containing `ζ` is not inside `Θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutsideCube {
    /// Lower-left corner of the closest cube that is inside `Θ`.
    #[default]
    NearestInterior,
    /// The anchor point itself.
    Anchor,
}

/// Lower-left corner `α·2^{-level}` of the half-open dyadic cube containing `ζ`.
pub fn dyadic_discretize(
    zeta: &[f64],
    level: u32,
    anchor: &[f64],
    domain: &ParameterDomain,
    policy: OutsideCube,
) -> Result<Vec<f64>> {
    domain.check(zeta)?;
    domain.check(anchor)?;
    let side = (-(level as f64)).exp2();
    let mut corner = Vec::with_capacity(zeta.len());
    let mut inside = true;
    for (axis, (&z, &(lo, hi))) in zeta.iter().zip(domain.bounds()).enumerate() {
        // admissible α: α·side > lo and (α + 1)·side ≤ hi
        let a_min = (lo / side).floor() + 1.0;
        let a_max = (hi / side).floor() - 1.0;
        if a_min > a_max {
            return Err(Error::NoInteriorCube { level, axis });
        }
        let a = (z / side).floor();
        if a < a_min || a > a_max {
            inside = false;
        }
        corner.push(a.clamp(a_min, a_max) * side);
    }
    if !inside && policy == OutsideCube::Anchor {
        return Ok(anchor.to_vec());
    }
    Ok(corner)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherMode {
    #[default]
    Quadrature,
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneStep {
    /// `ζ + n^{-1/2} I(ζ)⁻¹ Δ_n(ζ)`, never projected back into `Θ`.
    pub estimate: Vec<f64>,
    pub in_domain: bool,
    pub score: Vec<f64>,
    pub fisher: FisherMatrix,
}

pub fn one_step(
    path: &Path,
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    start: &[f64],
    fisher_mode: FisherMode,
) -> Result<OneStep> {
    let delta = score(path, signal, diffusion, start)?;
    let fisher = match fisher_mode {
        FisherMode::Quadrature => {
            let w = LambdaWeight::for_diffusion(diffusion, Some(path))?;
            fisher_quadrature(signal, diffusion, start, &w, DEFAULT_QUADRATURE_PANELS)?
        }
        FisherMode::Empirical => empirical_fisher(path, signal, diffusion, start)?,
    };
    let inv = fisher.inverse()?;
    let scale = 1.0 / (path.n_periods() as f64).sqrt();
    let d = start.len();
    let estimate: Vec<f64> = (0..d)
        .map(|i| start[i] + scale * (0..d).map(|j| inv[(i, j)] * delta[j]).sum::<f64>())
        .collect();
    Ok(OneStep {
        in_domain: signal.domain().contains(&estimate),
        estimate,
        score: delta,
        fisher,
    })
}

/// How `Φ(s) = ∫₀^s φ(v) dv` enters the limit covariance.
#[derive(Debug, Clone, Copy)]
pub enum PhiMode<'a> {
    /// `φ ≡ σ²`.
    ConstantSigma,
    /// `φ(s) ≈ (1/n) Σ_k σ²(ξ_{(k−1)T+s})` from the given path.
    Empirical(&'a Path),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdeCovariance {
    /// Gram matrix of the curves `D_jΨ_θ` in `L²[0, T]`.
    pub lambda: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    /// `Λ⁻¹ Ξ Λ⁻¹`.
    pub covariance: DMatrix<f64>,
}

/// Limit covariance `Λ⁻¹ Ξ Λ⁻¹` of `√n(ϑ̃_n − θ)`.
///
/// `Ξ_ij = ∫∫ D_iΨ(s₁) Φ(s₁ ∧ s₂) D_jΨ(s₂)` is evaluated through the
/// equivalent single integral `∫₀^T φ(u) A_i(u) A_j(u) du` with
/// `A_i(u) = ∫_u^T D_iΨ(s) ds`.
pub fn mde_asymptotic_covariance(
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    theta: &[f64],
    phi_mode: PhiMode<'_>,
    n_quad: usize,
) -> Result<MdeCovariance> {
    signal.domain().check(theta)?;
    diffusion.check_compatible(signal)?;
    diffusion.require_noise()?;
    let phi: Box<dyn Fn(f64) -> f64> = match phi_mode {
        PhiMode::ConstantSigma => {
            let s = diffusion.constant_sigma().ok_or_else(|| {
                Error::InvalidArgument("constant-sigma mode needs a constant sigma".into())
            })?;
            Box::new(move |_| s * s)
        }
        PhiMode::Empirical(path) => {
            path.check_grid(signal.period())?;
            let g = GridFunction::segment_average(path, |x| {
                let s = diffusion.sigma(x);
                s * s
            });
            Box::new(move |u| g.eval(u))
        }
    };
    let mut extra = signal.kinks(theta);
    if let PhiMode::Empirical(path) = phi_mode {
        extra.extend((1..path.steps_per_period()).map(|j| j as f64 * path.dt()));
    }
    let breaks = quad::breakpoints(signal.period(), n_quad, &extra);
    let d = signal.dim();
    let shape = signal.shape();

    let grad = |s: f64| {
        let mut g = vec![0.0; d];
        shape.gradient(theta, s, &mut g);
        g
    };
    // ∫_a^b Ṡ, exact for gradients that are polynomial of degree ≤ 3 on [a, b]
    let grad_integral = |a: f64, b: f64| {
        let mut acc = vec![0.0; d];
        for (s, w) in quad::gauss4_points(a, b) {
            for (o, g) in acc.iter_mut().zip(grad(s)) {
                *o += w * g;
            }
        }
        acc
    };

    let intervals = breaks.len() - 1;
    // D Ψ at the left end of each interval
    let mut dpsi_left = vec![vec![0.0; d]; intervals + 1];
    for k in 0..intervals {
        let inc = grad_integral(breaks[k], breaks[k + 1]);
        dpsi_left[k + 1] = dpsi_left[k].iter().zip(&inc).map(|(a, b)| a + b).collect();
    }
    let dpsi = |k: usize, s: f64| -> Vec<f64> {
        let inc = grad_integral(breaks[k], s);
        dpsi_left[k].iter().zip(&inc).map(|(a, b)| a + b).collect()
    };
    // ∫_a^b DΨ within interval k
    let dpsi_integral = |k: usize, a: f64, b: f64| -> Vec<f64> {
        let mut acc = vec![0.0; d];
        for (s, w) in quad::gauss4_points(a, b) {
            for (o, v) in acc.iter_mut().zip(dpsi(k, s)) {
                *o += w * v;
            }
        }
        acc
    };

    let mut lambda = DMatrix::<f64>::zeros(d, d);
    let mut a_right = vec![vec![0.0; d]; intervals + 1];
    for k in (0..intervals).rev() {
        let (a, b) = (breaks[k], breaks[k + 1]);
        for (s, w) in quad::gauss4_points(a, b) {
            let v = dpsi(k, s);
            for i in 0..d {
                for j in 0..d {
                    lambda[(i, j)] += w * v[i] * v[j];
                }
            }
        }
        let p = dpsi_integral(k, a, b);
        a_right[k] = a_right[k + 1].iter().zip(&p).map(|(x, y)| x + y).collect();
    }

    let mut xi = DMatrix::<f64>::zeros(d, d);
    for k in 0..intervals {
        let (a, b) = (breaks[k], breaks[k + 1]);
        for (u, w) in quad::gauss4_points(a, b) {
            let tail = dpsi_integral(k, u, b);
            let au: Vec<f64> = a_right[k + 1].iter().zip(&tail).map(|(x, y)| x + y).collect();
            let wu = w * phi(u);
            for i in 0..d {
                for j in 0..d {
                    xi[(i, j)] += wu * au[i] * au[j];
                }
            }
        }
    }

    let gram = FisherMatrix::new(lambda.clone(), Provenance::Quadrature, theta.to_vec())
        .map_err(|e| Error::LinearlyDependentDerivatives(e.to_string()))?;
    let lambda_inv = gram
        .inverse()
        .map_err(|e| Error::LinearlyDependentDerivatives(e.to_string()))?;
    let covariance = &lambda_inv * &xi * &lambda_inv;
    Ok(MdeCovariance {
        lambda,
        xi,
        covariance,
    })
}

/// `argmax_ζ log L^{ζ/ζ₀}` by coarse grid and Nelder–Mead.
pub fn grid_mle(
    path: &Path,
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    search: &SearchConfig,
    reference: &[f64],
) -> Result<Fit> {
    signal.domain().check(reference)?;
    diffusion.require_noise()?;
    let level = default_dyadic_level(path.n_periods());
    let mut fit = two_phase(signal.domain(), search, level, |z| {
        log_likelihood_ratio(path, signal, diffusion, z, reference)
            .map(|l| -l)
            .unwrap_or(f64::INFINITY)
    })?;
    fit.objective = -fit.objective;
    fit.grid_objective = -fit.grid_objective;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub search: SearchConfig,
    /// Dyadic level; `None` uses [`default_dyadic_level`].
    pub dyadic_level: Option<u32>,
    /// Anchor of the discretization; `None` uses the midpoint of `Θ`.
    pub anchor: Option<Vec<f64>>,
    pub outside_cube: OutsideCube,
    pub fisher_mode: FisherMode,
    pub mle: bool,
    /// Reference point of the likelihood ratio maximized by the MLE; `None`
    /// uses the midpoint of `Θ`.
    pub mle_reference: Option<Vec<f64>>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            dyadic_level: None,
            anchor: None,
            outside_cube: OutsideCube::default(),
            fisher_mode: FisherMode::default(),
            mle: false,
            mle_reference: None,
        }
    }
}

/// Output of the full estimation pipeline on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub mde: Fit,
    pub level: u32,
    pub discretized: Vec<f64>,
    pub one_step: OneStep,
    pub mle: Option<Fit>,
}

/// MDE, dyadic discretization, one-step correction, and optionally the MLE.
pub fn estimate_pipeline(
    path: &Path,
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    config: &EstimatorConfig,
) -> Result<EstimateRecord> {
    let level = config
        .dyadic_level
        .unwrap_or_else(|| default_dyadic_level(path.n_periods()));
    let mde = mde_estimate_at_level(path, signal, diffusion, &config.search, level)?;
    let anchor = config
        .anchor
        .clone()
        .unwrap_or_else(|| signal.domain().midpoint());
    let discretized = dyadic_discretize(
        &mde.estimate,
        level,
        &anchor,
        signal.domain(),
        config.outside_cube,
    )?;
    let step = one_step(path, signal, diffusion, &discretized, config.fisher_mode)?;
    let mle = if config.mle {
        let reference = config
            .mle_reference
            .clone()
            .unwrap_or_else(|| signal.domain().midpoint());
        Some(grid_mle(path, signal, diffusion, &config.search, &reference)?)
    } else {
        None
    };
    Ok(EstimateRecord {
        mde,
        level,
        discretized,
        one_step: step,
        mle,
    })
}

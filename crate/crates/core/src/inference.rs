//! Likelihood objects: log-likelihood ratios, the score, and the Fisher
//! information both as an ergodic path average and by quadrature.
//!
//! All stochastic integrals are left-endpoint (Itô) sums on the path grid:
//! with `ΔB_i(θ)` from [`noise_increments`] and `δ_i = (S(ζ, t_i) − S(θ, t_i)) / σ(ξ_i)`,
//!
//! ```text
//! log L^{ζ/θ} = Σ_i δ_i ΔB_i(θ) − ½ Σ_i δ_i² h
//! Δ_n(θ)      = n^{-1/2} Σ_i Ṡ(θ, t_i) / σ(ξ_i) · ΔB_i(θ)
//! I^n(θ)      = n^{-1}   Σ_i Ṡ Ṡᵀ(θ, t_i) / σ²(ξ_i) · h
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{DiffusionSpec, SignalModel};
use crate::quad::{self, GridFunction};
use crate::simulate::{noise_increments, Path};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Quadrature,
    Empirical,
}

/// Largest condition number accepted when the information is inverted.
pub const MAX_CONDITION: f64 = 1e12;

/// Symmetric positive semi-definite `d × d` information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    matrix: DMatrix<f64>,
    provenance: Provenance,
    theta: Vec<f64>,
}

impl FisherMatrix {
    pub fn new(matrix: DMatrix<f64>, provenance: Provenance, theta: Vec<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d || theta.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if matrix.ncols() != d { matrix.ncols() } else { theta.len() },
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularInformation("non-finite entries".into()));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(Error::SingularInformation(format!(
                        "not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        let trace = matrix.trace();
        let min_eig = SymmetricEigen::new(matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 * trace.abs() {
            return Err(Error::SingularInformation(format!(
                "smallest eigenvalue {min_eig} is negative"
            )));
        }
        Ok(Self {
            matrix,
            provenance,
            theta,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Row-major entries.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.matrix[(i, j)]).collect())
            .collect()
    }

    pub fn condition_number(&self) -> f64 {
        let eig = SymmetricEigen::new(self.matrix.clone()).eigenvalues;
        let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// `I⁻¹`, refused when the condition number exceeds [`MAX_CONDITION`].
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let cond = self.condition_number();
        if !(cond <= MAX_CONDITION) {
            return Err(Error::SingularInformation(format!(
                "condition number {cond:e} exceeds {MAX_CONDITION:e}"
            )));
        }
        self.matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularInformation("matrix is not invertible".into()))
    }

    /// `hᵀ I h`.
    pub fn quadratic_form(&self, h: &[f64]) -> f64 {
        let v = DVector::from_column_slice(h);
        (v.transpose() * &self.matrix * &v)[(0, 0)]
    }
}

/// The weight `λ(ds) = w(s) ds` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaWeight {
    /// `w ≡ 1/σ²`.
    ConstantSigma { sigma: f64 },
    /// `w(s) ≈ (1/n) Σ_k 1/σ²(ξ_{(k−1)T+s})` from a calibration path.
    Empirical(GridFunction),
}

impl LambdaWeight {
    pub fn constant_sigma(diffusion: &DiffusionSpec) -> Result<Self> {
        diffusion.require_noise()?;
        diffusion
            .constant_sigma()
            .map(|sigma| LambdaWeight::ConstantSigma { sigma })
            .ok_or_else(|| {
                Error::InvalidArgument(
                    "closed-form weight needs a constant sigma; use an empirical weight".into(),
                )
            })
    }

    pub fn empirical(path: &Path, diffusion: &DiffusionSpec) -> Result<Self> {
        diffusion.require_noise()?;
        Ok(LambdaWeight::Empirical(GridFunction::segment_average(
            path,
            |x| {
                let s = diffusion.sigma(x);
                1.0 / (s * s)
            },
        )))
    }

    /// Closed form when `σ` is constant, otherwise estimated from `path`.
    pub fn for_diffusion(diffusion: &DiffusionSpec, path: Option<&Path>) -> Result<Self> {
        match (diffusion.constant_sigma(), path) {
            (Some(_), _) => Self::constant_sigma(diffusion),
            (None, Some(p)) => Self::empirical(p, diffusion),
            (None, None) => Err(Error::InvalidArgument(
                "state-dependent sigma needs a calibration path for the weight".into(),
            )),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            LambdaWeight::ConstantSigma { sigma } => 1.0 / (sigma * sigma),
            LambdaWeight::Empirical(g) => g.eval(s),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            LambdaWeight::ConstantSigma { .. } => Vec::new(),
            LambdaWeight::Empirical(g) => g.nodes(),
        }
    }
}

struct Prepared<'a> {
    path: &'a Path,
    diffusion: &'a DiffusionSpec,
}

impl<'a> Prepared<'a> {
    fn new(path: &'a Path, signal: &'a SignalModel, diffusion: &'a DiffusionSpec) -> Result<Self> {
        diffusion.require_noise()?;
        diffusion.check_compatible(signal)?;
        path.check_grid(signal.period())?;
        Ok(Self { path, diffusion })
    }

    fn sigmas(&self) -> impl Iterator<Item = f64> + '_ {
        self.path.values()[..self.path.n_steps()]
            .iter()
            .map(|&x| self.diffusion.sigma(x))
    }
}

/// `log L^{ζ/θ}` of the path (left-endpoint sums).
pub fn log_likelihood_ratio(
    path: &Path,
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    zeta: &[f64],
    theta: &[f64],
) -> Result<f64> {
    signal.domain().check(zeta)?;
    signal.domain().check(theta)?;
    let p = Prepared::new(path, signal, diffusion)?;
    let m = path.steps_per_period();
    let dt = path.dt();
    let s_zeta = signal.values_on_grid(zeta, dt, m);
    let s_theta = signal.values_on_grid(theta, dt, m);
    let db = noise_increments(path, signal, diffusion, theta)?;
    let (mut mart, mut quad) = (0.0, 0.0);
    for (i, (sig, inc)) in p.sigmas().zip(&db).enumerate() {
        let delta = (s_zeta[i % m] - s_theta[i % m]) / sig;
        mart += delta * inc;
        quad += delta * delta;
    }
    Ok(mart - 0.5 * quad * dt)
}

/// `Δ_n(θ)`.
pub fn score(
    path: &Path,
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    theta: &[f64],
) -> Result<Vec<f64>> {
    signal.domain().check(theta)?;
    let p = Prepared::new(path, signal, diffusion)?;
    let d = signal.dim();
    let m = path.steps_per_period();
    let grads = signal.gradients_on_grid(theta, path.dt(), m);
    let db = noise_increments(path, signal, diffusion, theta)?;
    let mut out = vec![0.0; d];
    for (i, (sig, inc)) in p.sigmas().zip(&db).enumerate() {
        let g = &grads[(i % m) * d..(i % m + 1) * d];
        let c = inc / sig;
        for (o, gj) in out.iter_mut().zip(g) {
            *o += gj * c;
        }
    }
    let norm = (path.n_periods() as f64).sqrt();
    out.iter_mut().for_each(|o| *o /= norm);
    Ok(out)
}

/// `I^n_T(θ)`, the path average of `Ṡ Ṡᵀ / σ²`.
pub fn empirical_fisher(
    path: &Path,
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    theta: &[f64],
) -> Result<FisherMatrix> {
    signal.domain().check(theta)?;
    let p = Prepared::new(path, signal, diffusion)?;
    let d = signal.dim();
    let m = path.steps_per_period();
    let grads = signal.gradients_on_grid(theta, path.dt(), m);
    let mut acc = DMatrix::<f64>::zeros(d, d);
    for (i, sig) in p.sigmas().enumerate() {
        let g = &grads[(i % m) * d..(i % m + 1) * d];
        let w = 1.0 / (sig * sig);
        for a in 0..d {
            for b in 0..=a {
                acc[(a, b)] += g[a] * g[b] * w;
            }
        }
    }
    let scale = path.dt() / path.n_periods() as f64;
    for a in 0..d {
        for b in 0..=a {
            let v = acc[(a, b)] * scale;
            acc[(a, b)] = v;
            acc[(b, a)] = v;
        }
    }
    FisherMatrix::new(acc, Provenance::Empirical, theta.to_vec())
}

/// Default number of uniform panels for [`fisher_quadrature`].
pub const DEFAULT_QUADRATURE_PANELS: usize = 256;

/// `I(θ) = ∫₀^T Ṡ Ṡᵀ(θ, s) w(s) ds` by four-point Gauss–Legendre on
/// `n_quad` uniform panels refined at every kink of `Ṡ`.
pub fn fisher_quadrature(
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    theta: &[f64],
    weight: &LambdaWeight,
    n_quad: usize,
) -> Result<FisherMatrix> {
    signal.domain().check(theta)?;
    diffusion.check_compatible(signal)?;
    let d = signal.dim();
    let mut extra = signal.kinks(theta);
    extra.extend(weight.breakpoints());
    let breaks = quad::breakpoints(signal.period(), n_quad, &extra);
    let shape = signal.shape();
    let mut g = vec![0.0; d];
    let mut acc = DMatrix::<f64>::zeros(d, d);
    for w in breaks.windows(2) {
        for (s, q) in quad::gauss4_points(w[0], w[1]) {
            shape.gradient(theta, s, &mut g);
            let wq = q * weight.eval(s);
            for a in 0..d {
                for b in 0..=a {
                    acc[(a, b)] += g[a] * g[b] * wq;
                }
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            acc[(b, a)] = acc[(a, b)];
        }
    }
    let fisher = FisherMatrix::new(acc, Provenance::Quadrature, theta.to_vec())?;
    fisher.inverse()?;
    Ok(fisher)
}

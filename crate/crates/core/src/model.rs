//! Parametrized periodic signals, the diffusion coefficients, and the
//! built-in signal families.
//!
//! A [`SignalModel`] is a map `(ζ, t) ↦ S(ζ, t)` that is `T`-periodic in `t`
//! together with its parameter gradient `Ṡ(ζ, t)` and an open rectangular
//! parameter domain. Time is always reduced to `[0, T)` through
//! [`reduce_time`] before a shape is evaluated, so `S(ζ, t) = S(ζ, t + kT)`
//! holds whenever `t + kT` is exactly representable.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// `t mod T`, mapped into `[0, T)`.
pub fn reduce_time(t: f64, period: f64) -> f64 {
    let r = t - period * (t / period).floor();
    if r >= period || r < 0.0 {
        0.0
    } else {
        r
    }
}

/// Open rectangle `Θ = Π_j (low_j, high_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    bounds: Vec<(f64, f64)>,
}

impl ParameterDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("parameter domain needs at least one axis".into()));
        }
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "axis {j}: bounds ({lo}, {hi}) do not form a proper interval"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.bounds.len()
            && point
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| lo < x && x < hi)
    }

    pub fn check(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        if self.contains(point) {
            Ok(())
        } else {
            Err(Error::ParameterOutOfDomain {
                point: point.to_vec(),
                bounds: self.bounds.clone(),
            })
        }
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }
}

/// The shape of a periodic signal, evaluated at a reduced time `s ∈ [0, T)`.
///
/// Implementations do not check the parameter domain; [`SignalModel`] does.
pub trait SignalShape: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64], s: f64) -> f64;

    /// Writes `Ṡ(θ, s)` into `out` (length `dim`).
    fn gradient(&self, theta: &[f64], s: f64, out: &mut [f64]);

    /// Points of `[0, T)` where the value or the gradient is not smooth in `s`.
    /// Quadrature rules split the period at these abscissae.
    fn kinks(&self, _theta: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}

/// A parametrized `T`-periodic signal with its gradient and parameter domain.
#[derive(Debug, Clone)]
pub struct SignalModel {
    name: String,
    domain: ParameterDomain,
    period: f64,
    shape: Arc<dyn SignalShape>,
}

impl SignalModel {
    pub fn new(
        name: impl Into<String>,
        domain: ParameterDomain,
        period: f64,
        shape: Arc<dyn SignalShape>,
    ) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidFamilyConfig(format!("period must be positive, got {period}")));
        }
        if shape.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: shape.dim(),
            });
        }
        Ok(Self {
            name: name.into(),
            domain,
            period,
            shape,
        })
    }

    /// Signal given by closures over the reduced time `s ∈ [0, T)`.
    pub fn from_fns<V, G>(
        name: impl Into<String>,
        domain: ParameterDomain,
        period: f64,
        value: V,
        gradient: G,
    ) -> Result<Self>
    where
        V: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        let shape = FnShape {
            dim: domain.dim(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            kinks: Vec::new(),
        };
        Self::new(name, domain, period, Arc::new(shape))
    }

    /// `S ≡ level` on a one-dimensional dummy domain `(0, 1)`; `Ṡ ≡ 0`.
    pub fn constant(level: f64, period: f64) -> Result<Self> {
        Self::from_fns(
            "constant",
            ParameterDomain::new(vec![(0.0, 1.0)])?,
            period,
            move |_, _| level,
            |_, _, out| out.fill(0.0),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn shape(&self) -> &dyn SignalShape {
        self.shape.as_ref()
    }

    /// `S(ζ, i_T(t))`.
    pub fn value(&self, zeta: &[f64], t: f64) -> Result<f64> {
        self.domain.check(zeta)?;
        Ok(self.shape.value(zeta, reduce_time(t, self.period)))
    }

    /// `Ṡ(ζ, i_T(t))`.
    pub fn gradient(&self, zeta: &[f64], t: f64) -> Result<Vec<f64>> {
        self.domain.check(zeta)?;
        let mut out = vec![0.0; self.dim()];
        self.shape.gradient(zeta, reduce_time(t, self.period), &mut out);
        Ok(out)
    }

    /// Kink abscissae in `[0, T)`, sorted and deduplicated.
    pub fn kinks(&self, zeta: &[f64]) -> Vec<f64> {
        let mut ks: Vec<f64> = self
            .shape
            .kinks(zeta)
            .into_iter()
            .map(|k| reduce_time(k, self.period))
            .collect();
        ks.sort_by(f64::total_cmp);
        ks.dedup();
        ks
    }

    /// Values at reduced times `s_m = m·dt`, `m = 0..count`. Assumes `ζ ∈ Θ`.
    pub(crate) fn values_on_grid(&self, zeta: &[f64], dt: f64, count: usize) -> Vec<f64> {
        (0..count)
            .map(|m| self.shape.value(zeta, reduce_time(m as f64 * dt, self.period)))
            .collect()
    }

    /// Gradients at `s_m = m·dt`, row-major `count × d`. Assumes `ζ ∈ Θ`.
    pub(crate) fn gradients_on_grid(&self, zeta: &[f64], dt: f64, count: usize) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; count * d];
        for (m, row) in out.chunks_exact_mut(d).enumerate() {
            self.shape
                .gradient(zeta, reduce_time(m as f64 * dt, self.period), row);
        }
        out
    }
}

type ValueFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

struct FnShape {
    dim: usize,
    value: ValueFn,
    gradient: GradientFn,
    kinks: Vec<f64>,
}

impl fmt::Debug for FnShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnShape").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl SignalShape for FnShape {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &[f64], s: f64) -> f64 {
        (self.value)(theta, s)
    }

    fn gradient(&self, theta: &[f64], s: f64, out: &mut [f64]) {
        (self.gradient)(theta, s, out)
    }

    fn kinks(&self, _theta: &[f64]) -> Vec<f64> {
        self.kinks.clone()
    }
}

/// Centered pulse `f(x) = (1 − |x|)^α` on `|x| ≤ 1`, zero elsewhere on the
/// torus of circumference `T`, shifted by the parameter: `S(ϑ, s) = f(s − ϑ)`.
/// `α = 1` is the triangular pulse.
#[derive(Debug, Clone)]
pub struct PulseShape {
    exponent: f64,
    period: f64,
}

impl PulseShape {
    /// `s − ϑ` wrapped into `[−T/2, T/2)`.
    fn offset(&self, theta: f64, s: f64) -> f64 {
        let x = s - theta;
        let half = 0.5 * self.period;
        x - self.period * ((x + half) / self.period).floor()
    }
}

impl SignalShape for PulseShape {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, theta: &[f64], s: f64) -> f64 {
        let x = self.offset(theta[0], s).abs();
        if x <= 1.0 {
            let base = 1.0 - x;
            if self.exponent == 1.0 {
                base
            } else {
                base.powf(self.exponent)
            }
        } else {
            0.0
        }
    }

    fn gradient(&self, theta: &[f64], s: f64, out: &mut [f64]) {
        let x = self.offset(theta[0], s);
        let a = self.exponent;
        // Null-set ties at x ∈ {−1, 0, 1} are set to 0.
        out[0] = if x > 0.0 && x < 1.0 {
            a * (1.0 - x).powf(a - 1.0)
        } else if x < 0.0 && x > -1.0 {
            -a * (1.0 + x).powf(a - 1.0)
        } else {
            0.0
        };
    }

    fn kinks(&self, theta: &[f64]) -> Vec<f64> {
        let t = theta[0];
        vec![t - 1.0, t, t + 1.0]
    }
}

/// Periodic base function `f` on `[0, T)` for the phase–amplitude family.
#[derive(Clone)]
pub enum BaseFunction {
    /// `f(s) = sin(2πs/T)`.
    Sine,
    /// `f(s) = a0 + Σ_k a_k cos(2πks/T) + b_k sin(2πks/T)`.
    Fourier {
        a0: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    /// User-supplied `(f, f′)` pair with its kink abscissae.
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        kinks: Vec<f64>,
    },
}

impl fmt::Debug for BaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseFunction::Sine => f.write_str("Sine"),
            BaseFunction::Fourier { a0, cos, sin } => f
                .debug_struct("Fourier")
                .field("a0", a0)
                .field("cos", cos)
                .field("sin", sin)
                .finish(),
            BaseFunction::Custom { kinks, .. } => {
                f.debug_struct("Custom").field("kinks", kinks).finish_non_exhaustive()
            }
        }
    }
}

impl BaseFunction {
    fn eval(&self, s: f64, period: f64) -> f64 {
        let w = 2.0 * PI / period;
        match self {
            BaseFunction::Sine => (w * s).sin(),
            BaseFunction::Fourier { a0, cos, sin } => {
                let mut acc = *a0;
                for (k, c) in cos.iter().enumerate() {
                    acc += c * (w * (k + 1) as f64 * s).cos();
                }
                for (k, b) in sin.iter().enumerate() {
                    acc += b * (w * (k + 1) as f64 * s).sin();
                }
                acc
            }
            BaseFunction::Custom { f, .. } => f(s),
        }
    }

    fn derivative(&self, s: f64, period: f64) -> f64 {
        let w = 2.0 * PI / period;
        match self {
            BaseFunction::Sine => w * (w * s).cos(),
            BaseFunction::Fourier { cos, sin, .. } => {
                let mut acc = 0.0;
                for (k, c) in cos.iter().enumerate() {
                    let wk = w * (k + 1) as f64;
                    acc -= c * wk * (wk * s).sin();
                }
                for (k, b) in sin.iter().enumerate() {
                    let wk = w * (k + 1) as f64;
                    acc += b * wk * (wk * s).cos();
                }
                acc
            }
            BaseFunction::Custom { df, .. } => df(s),
        }
    }

    fn kinks(&self) -> &[f64] {
        match self {
            BaseFunction::Custom { kinks, .. } => kinks,
            _ => &[],
        }
    }
}

/// `S(ϑ, s) = ϑ₂ f(i_T(s − ϑ₁))`.
#[derive(Debug, Clone)]
pub struct PhaseAmplitudeShape {
    base: BaseFunction,
    period: f64,
}

impl SignalShape for PhaseAmplitudeShape {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, theta: &[f64], s: f64) -> f64 {
        let u = reduce_time(s - theta[0], self.period);
        theta[1] * self.base.eval(u, self.period)
    }

    fn gradient(&self, theta: &[f64], s: f64, out: &mut [f64]) {
        let u = reduce_time(s - theta[0], self.period);
        out[0] = -theta[1] * self.base.derivative(u, self.period);
        out[1] = self.base.eval(u, self.period);
    }

    fn kinks(&self, theta: &[f64]) -> Vec<f64> {
        self.base.kinks().iter().map(|k| k + theta[0]).collect()
    }
}

/// Upper amplitude bound standing in for `+∞` in the phase–amplitude domain.
pub const DEFAULT_AMPLITUDE_MAX: f64 = 1e6;

/// Built-in signal families.
#[derive(Debug, Clone)]
pub enum Family {
    /// `ϑ₂ f(i_T(t) − ϑ₁)` on `Θ = (0, T) × (0, amplitude_max)`.
    PhaseAmplitude {
        base: BaseFunction,
        amplitude_max: f64,
    },
    /// Triangular pulse `(1 − |x|)⁺` shifted by `ϑ ∈ (0, T)`.
    Triangular,
    /// Pulse `((1 − |x|)⁺)^α`, `α > 1`, shifted by `ϑ ∈ (0, T)`.
    PowerPulse { exponent: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::PhaseAmplitude { .. } => "phase_amplitude",
            Family::Triangular => "triangular",
            Family::PowerPulse { .. } => "power_pulse",
        }
    }
}

pub fn builtin_family(family: Family, period: f64) -> Result<SignalModel> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidFamilyConfig(format!("period must be positive, got {period}")));
    }
    let name = family.name();
    match family {
        Family::Triangular => pulse(name, 1.0, period),
        Family::PowerPulse { exponent } => {
            if !(exponent.is_finite() && exponent > 1.0) {
                return Err(Error::InvalidFamilyConfig(format!(
                    "power_pulse requires exponent > 1, got {exponent}"
                )));
            }
            pulse(name, exponent, period)
        }
        Family::PhaseAmplitude {
            base,
            amplitude_max,
        } => {
            if !(amplitude_max.is_finite() && amplitude_max > 0.0) {
                return Err(Error::InvalidFamilyConfig(format!(
                    "amplitude upper bound must be positive, got {amplitude_max}"
                )));
            }
            if base.kinks().iter().any(|k| !(0.0..period).contains(k)) {
                return Err(Error::InvalidFamilyConfig(
                    "base function kinks must lie in [0, T)".into(),
                ));
            }
            let samples: Vec<f64> = (0..64)
                .map(|m| base.eval(m as f64 * period / 64.0, period))
                .collect();
            if samples.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidFamilyConfig("base function is not finite".into()));
            }
            if samples.iter().all(|&v| v == samples[0]) {
                return Err(Error::InvalidFamilyConfig(
                    "base function must be non-constant".into(),
                ));
            }
            let domain = ParameterDomain::new(vec![(0.0, period), (0.0, amplitude_max)])?;
            SignalModel::new(name, domain, period, Arc::new(PhaseAmplitudeShape { base, period }))
        }
    }
}

fn pulse(name: &str, exponent: f64, period: f64) -> Result<SignalModel> {
    if period <= 2.0 {
        return Err(Error::InvalidFamilyConfig(format!(
            "pulse families need a period larger than the pulse width 2, got {period}"
        )));
    }
    let domain = ParameterDomain::new(vec![(0.0, period)])?;
    SignalModel::new(name, domain, period, Arc::new(PulseShape { exponent, period }))
}

/// State drift `b(·)`.
#[derive(Clone)]
pub enum Drift {
    Zero,
    /// `b(x) = −βx`.
    MeanReverting { beta: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero => f.write_str("Zero"),
            Drift::MeanReverting { beta } => write!(f, "MeanReverting {{ beta: {beta} }}"),
            Drift::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Drift {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::MeanReverting { beta } => -beta * x,
            Drift::Custom(b) => b(x),
        }
    }
}

/// Diffusion coefficient `σ(·)`.
#[derive(Clone)]
pub enum Volatility {
    Constant(f64),
    /// `σ(x) = scale·√(1 + x²)`.
    SqrtOnePlusSquare { scale: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Volatility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Volatility::Constant(s) => write!(f, "Constant({s})"),
            Volatility::SqrtOnePlusSquare { scale } => {
                write!(f, "SqrtOnePlusSquare {{ scale: {scale} }}")
            }
            Volatility::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Volatility {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Volatility::Constant(s) => *s,
            Volatility::SqrtOnePlusSquare { scale } => scale * x.hypot(1.0),
            Volatility::Custom(s) => s(x),
        }
    }
}

/// Half-width of the state range on which `σ > 0` is checked.
pub const SIGMA_VALIDATION_RANGE: f64 = 100.0;

/// Drift offset, diffusion coefficient, period and initial value.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    drift: Drift,
    volatility: Volatility,
    period: f64,
    x0: f64,
    noiseless: bool,
}

impl DiffusionSpec {
    pub fn new(drift: Drift, volatility: Volatility, period: f64, x0: f64) -> Result<Self> {
        check_period_and_start(period, x0)?;
        for i in 0..=400 {
            let x = -SIGMA_VALIDATION_RANGE + i as f64 * (2.0 * SIGMA_VALIDATION_RANGE / 400.0);
            let s = volatility.eval(x);
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidDiffusion(format!(
                    "sigma must be strictly positive, sigma({x}) = {s}"
                )));
            }
        }
        Ok(Self {
            drift,
            volatility,
            period,
            x0,
            noiseless: false,
        })
    }

    /// `σ ≡ 0`: the deterministic ODE `dξ = [S + b(ξ)]dt`. Only simulation and
    /// the distance-based estimators accept it; likelihood quantities refuse.
    pub fn noiseless(drift: Drift, period: f64, x0: f64) -> Result<Self> {
        check_period_and_start(period, x0)?;
        Ok(Self {
            drift,
            volatility: Volatility::Constant(0.0),
            period,
            x0,
            noiseless: true,
        })
    }

    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    pub fn volatility(&self) -> &Volatility {
        &self.volatility
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn is_noiseless(&self) -> bool {
        self.noiseless
    }

    #[inline]
    pub fn b(&self, x: f64) -> f64 {
        self.drift.eval(x)
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        self.volatility.eval(x)
    }

    pub fn constant_sigma(&self) -> Option<f64> {
        match self.volatility {
            Volatility::Constant(s) => Some(s),
            _ => None,
        }
    }

    /// Same model with a different starting point.
    pub fn with_x0(&self, x0: f64) -> Self {
        Self { x0, ..self.clone() }
    }

    pub(crate) fn require_noise(&self) -> Result<()> {
        if self.noiseless {
            Err(Error::InvalidDiffusion(
                "likelihood quantities need a strictly positive sigma".into(),
            ))
        } else {
            Ok(())
        }
    }

    pub(crate) fn check_compatible(&self, signal: &SignalModel) -> Result<()> {
        let (a, b) = (self.period, signal.period());
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
            return Err(Error::InvalidArgument(format!(
                "diffusion period {a} differs from signal period {b}"
            )));
        }
        Ok(())
    }
}

fn check_period_and_start(period: f64, x0: f64) -> Result<()> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidDiffusion(format!("period must be positive, got {period}")));
    }
    if !x0.is_finite() {
        return Err(Error::InvalidDiffusion(format!("initial value must be finite, got {x0}")));
    }
    Ok(())
}

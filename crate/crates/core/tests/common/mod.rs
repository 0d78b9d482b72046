#![allow(dead_code)]

use perisig::model::*;

pub const PERIOD: f64 = 10.0;
pub const STEPS: usize = 512;

pub fn triangular() -> SignalModel {
    builtin_family(Family::Triangular, PERIOD).unwrap()
}

pub fn power_pulse(alpha: f64) -> SignalModel {
    builtin_family(Family::PowerPulse { exponent: alpha }, PERIOD).unwrap()
}

pub fn sine_phase_amplitude() -> SignalModel {
    builtin_family(
        Family::PhaseAmplitude {
            base: BaseFunction::Sine,
            amplitude_max: 10.0,
        },
        PERIOD,
    )
    .unwrap()
}

pub fn ou(beta: f64, sigma: f64) -> DiffusionSpec {
    DiffusionSpec::new(
        Drift::MeanReverting { beta },
        Volatility::Constant(sigma),
        PERIOD,
        0.0,
    )
    .unwrap()
}

/// `σ(x) = scale·√(1 + x²)` with mean reversion.
pub fn state_dependent(beta: f64, scale: f64) -> DiffusionSpec {
    DiffusionSpec::new(
        Drift::MeanReverting { beta },
        Volatility::SqrtOnePlusSquare { scale },
        PERIOD,
        0.0,
    )
    .unwrap()
}

pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Brute-force `∫₀^T∫₀^T f(s₁) Φ(s₁ ∧ s₂) g(s₂) ds₁ ds₂` on an `N × N` cell
/// grid: two-point Gauss–Legendre per axis off the diagonal, a fine
/// midpoint sub-grid on diagonal cells where `s₁ ∧ s₂` has its kink.
pub fn brute_force_double_integral(
    f: impl Fn(f64) -> f64,
    phi: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    period: f64,
    cells: usize,
) -> f64 {
    let h = period / cells as f64;
    let r = 0.5 / 3f64.sqrt();
    let nodes = |i: usize| [(i as f64 + 0.5 - r) * h, (i as f64 + 0.5 + r) * h];
    let sub = 32;
    let mut acc = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            if i == j {
                let hs = h / sub as f64;
                let mut cell = 0.0;
                for a in 0..sub {
                    let s1 = i as f64 * h + (a as f64 + 0.5) * hs;
                    for b in 0..sub {
                        let s2 = j as f64 * h + (b as f64 + 0.5) * hs;
                        cell += f(s1) * phi(s1.min(s2)) * g(s2);
                    }
                }
                acc += cell * hs * hs;
            } else {
                let mut cell = 0.0;
                for s1 in nodes(i) {
                    for s2 in nodes(j) {
                        cell += f(s1) * phi(s1.min(s2)) * g(s2);
                    }
                }
                acc += cell * 0.25 * h * h;
            }
        }
    }
    acc
}

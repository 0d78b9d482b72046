//! Piecewise Gauss–Legendre quadrature on `[0, T]` split at kinks, and grid
//! functions on one period.

use crate::simulate::Path;

const GL_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_86,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_86,
];

/// Four-point Gauss–Legendre rule on `[a, b]`. Exact for cubics; never
/// evaluates `f` at the endpoints.
#[inline]
pub fn gauss4<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        acc += w * f(c + r * x);
    }
    acc * r
}

/// Visits the `(node, weight)` pairs of [`gauss4`] on `[a, b]`.
#[inline]
pub fn gauss4_points(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(move |(x, w)| (c + r * x, w * r))
}

/// Sorted breakpoints `0 = x_0 < … < x_K = T`: `panels` uniform panels
/// merged with the given extra abscissae (taken modulo nothing; callers
/// pass points already in `[0, T)`).
pub fn breakpoints(period: f64, panels: usize, extra: &[f64]) -> Vec<f64> {
    let panels = panels.max(1);
    let mut pts: Vec<f64> = (0..=panels)
        .map(|i| period * i as f64 / panels as f64)
        .collect();
    pts.extend(extra.iter().copied().filter(|x| *x > 0.0 && *x < period));
    pts.sort_by(f64::total_cmp);
    let tol = 1e-12 * period;
    pts.dedup_by(|a, b| (*a - *b).abs() <= tol);
    *pts.last_mut().expect("nonempty") = period;
    pts
}

/// Piecewise rule: [`gauss4`] on every interval between consecutive breakpoints.
pub fn integrate<F: FnMut(f64) -> f64>(breaks: &[f64], mut f: F) -> f64 {
    breaks.windows(2).map(|w| gauss4(w[0], w[1], &mut f)).sum()
}

/// Function on `[0, T]` given by samples at `s_j = j·dt`, `j = 0..=M`,
/// interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    dt: f64,
    samples: Vec<f64>,
}

impl GridFunction {
    pub fn new(dt: f64, samples: Vec<f64>) -> Self {
        assert!(samples.len() >= 2, "grid function needs at least two samples");
        Self { dt, samples }
    }

    /// `w(s_j) = (1/n) Σ_k g(ξ_{(k−1)T + s_j})`, the ergodic average of `g`
    /// along the segment chain.
    pub fn segment_average<G: Fn(f64) -> f64>(path: &Path, g: G) -> Self {
        let m = path.steps_per_period();
        let n = path.n_periods();
        let v = path.values();
        let mut samples = vec![0.0; m + 1];
        for k in 0..n {
            for (j, acc) in samples.iter_mut().enumerate() {
                *acc += g(v[k * m + j]);
            }
        }
        for acc in &mut samples {
            *acc /= n as f64;
        }
        Self::new(path.dt(), samples)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|j| j as f64 * self.dt).collect()
    }

    pub fn eval(&self, s: f64) -> f64 {
        let last = self.samples.len() - 1;
        let u = (s / self.dt).clamp(0.0, last as f64);
        let j = (u.floor() as usize).min(last - 1);
        let frac = u - j as f64;
        self.samples[j] * (1.0 - frac) + self.samples[j + 1] * frac
    }
}

//! Euler–Maruyama trajectories, the `T`-segment view of a path, and driving
//! noise reconstruction under a hypothesized parameter.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::model::{DiffusionSpec, SignalModel};
use crate::rng::CounterNormal;

/// Trajectory sampled on the uniform grid `0, h, 2h, …, nT` with `T = M·h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    dt: f64,
    steps_per_period: usize,
    n_periods: usize,
    values: Vec<f64>,
    seed: u64,
}

/// The piece `(ξ_{(k−1)T+s})_{0≤s≤T}` of a path, `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<'a> {
    pub index: usize,
    pub values: &'a [f64],
}

impl Path {
    pub fn new(
        dt: f64,
        steps_per_period: usize,
        n_periods: usize,
        values: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::PathFormat(format!("dt must be positive, got {dt}")));
        }
        if steps_per_period < 1 || n_periods < 1 {
            return Err(Error::PathFormat(
                "steps per period and period count must be positive".into(),
            ));
        }
        let expected = n_periods * steps_per_period + 1;
        if values.len() != expected {
            return Err(Error::PathFormat(format!(
                "expected {expected} values for n = {n_periods}, M = {steps_per_period}, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::PathFormat(format!("value {i} is not finite")));
        }
        Ok(Self {
            dt,
            steps_per_period,
            n_periods,
            values,
            seed,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps_per_period
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn period(&self) -> f64 {
        self.steps_per_period as f64 * self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn segment(&self, k: usize) -> Option<Segment<'_>> {
        if k == 0 || k > self.n_periods {
            return None;
        }
        let m = self.steps_per_period;
        Some(Segment {
            index: k,
            values: &self.values[(k - 1) * m..=k * m],
        })
    }

    pub(crate) fn check_grid(&self, period: f64) -> Result<()> {
        let p = self.period();
        if (p - period).abs() > 1e-9 * period {
            return Err(Error::InvalidArgument(format!(
                "path grid covers periods of length {p}, model period is {period}"
            )));
        }
        Ok(())
    }

    /// Text format: a `dt,M,n,seed` header line, one line with those values,
    /// then one state value per line. Floats carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dt,M,n,seed")?;
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(self.dt),
            self.steps_per_period,
            self.n_periods,
            self.seed
        )?;
        for v in &self.values {
            writeln!(w, "{}", fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::PathFormat(format!("missing {what}")))?
                .map_err(Error::from)
        };
        let header = next("header")?;
        if header.trim() != "dt,M,n,seed" {
            return Err(Error::PathFormat(format!("unexpected header {header:?}")));
        }
        let meta = next("metadata line")?;
        let fields: Vec<&str> = meta.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(Error::PathFormat(format!("metadata line needs 4 fields: {meta:?}")));
        }
        let bad = |e: &dyn std::fmt::Display| Error::PathFormat(format!("line 2: {e}"));
        let dt: f64 = fields[0].parse().map_err(|e| bad(&e))?;
        let m: usize = fields[1].parse().map_err(|e| bad(&e))?;
        let n: usize = fields[2].parse().map_err(|e| bad(&e))?;
        let seed: u64 = fields[3].parse().map_err(|e| bad(&e))?;
        let mut values = Vec::with_capacity(n.saturating_mul(m).saturating_add(1));
        let mut line_no = 2;
        while let Ok(line) = next("value") {
            line_no += 1;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            values.push(
                t.parse::<f64>()
                    .map_err(|e| Error::PathFormat(format!("line {line_no}: {e}")))?,
            );
        }
        Self::new(dt, m, n, values, seed)
    }

    const MAGIC: &'static [u8; 8] = b"PSPATH01";

    /// Binary format: magic `PSPATH01`, then little-endian `dt: f64`,
    /// `M: u64`, `n: u64`, `seed: u64`, `len: u64` and `len` `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.steps_per_period as u64).to_le_bytes())?;
        w.write_all(&(self.n_periods as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::PathFormat("bad magic".into()));
        }
        let mut word = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let dt = f64::from_bits(read_u64(&mut r)?);
        let m = read_u64(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let len = read_u64(&mut r)? as usize;
        let expected = n.checked_mul(m).and_then(|x| x.checked_add(1));
        if expected != Some(len) {
            return Err(Error::PathFormat(format!("length {len} inconsistent with n = {n}, M = {m}")));
        }
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf)?;
        let values = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::new(dt, m, n, values, seed)
    }

    /// Reads either format, sniffing the binary magic.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(Self::MAGIC) {
            Self::read_binary(bytes.as_slice())
        } else {
            Self::read_csv(bytes.as_slice())
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// The `n_periods` segments of a path, sharing endpoints.
pub fn segment_chain(path: &Path) -> Vec<Segment<'_>> {
    (1..=path.n_periods())
        .map(|k| path.segment(k).expect("k in range"))
        .collect()
}

/// Euler–Maruyama path of `dξ = [S(θ, t) + b(ξ)]dt + σ(ξ)dW` with `h = T/M`.
///
/// The `i`-th Gaussian draw is `CounterNormal::new(seed).normal(i)`. Seed 0
/// is reserved for paths loaded from files.
pub fn simulate_path(
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    theta: &[f64],
    n_periods: usize,
    steps_per_period: usize,
    seed: u64,
) -> Result<Path> {
    signal.domain().check(theta)?;
    diffusion.check_compatible(signal)?;
    if n_periods < 1 {
        return Err(Error::InvalidArgument("n_periods must be at least 1".into()));
    }
    if steps_per_period < 2 {
        return Err(Error::InvalidArgument("steps_per_period must be at least 2".into()));
    }
    if seed == 0 {
        return Err(Error::InvalidArgument("seed 0 is reserved for loaded paths".into()));
    }
    let m = steps_per_period;
    let dt = signal.period() / m as f64;
    let sqrt_dt = dt.sqrt();
    let s = signal.values_on_grid(theta, dt, m);
    let noise = CounterNormal::new(seed);
    let noiseless = diffusion.is_noiseless();

    let total = n_periods * m;
    let mut values = Vec::with_capacity(total + 1);
    let mut x = diffusion.x0();
    values.push(x);
    for i in 0..total {
        let drift = (s[i % m] + diffusion.b(x)) * dt;
        x = if noiseless {
            x + drift
        } else {
            x + drift + diffusion.sigma(x) * (sqrt_dt * noise.normal(i as u64))
        };
        if !x.is_finite() {
            return Err(Error::NonFiniteState {
                step: i + 1,
                time: (i + 1) as f64 * dt,
            });
        }
        values.push(x);
    }
    Path::new(dt, m, n_periods, values, seed)
}

/// `ΔB_i = (Δξ_i − [S(θ, t_i) + b(ξ_i)]h) / σ(ξ_i)` for every grid step.
pub fn noise_increments(
    path: &Path,
    signal: &SignalModel,
    diffusion: &DiffusionSpec,
    theta: &[f64],
) -> Result<Vec<f64>> {
    signal.domain().check(theta)?;
    diffusion.require_noise()?;
    path.check_grid(signal.period())?;
    let m = path.steps_per_period();
    let dt = path.dt();
    let s = signal.values_on_grid(theta, dt, m);
    let v = path.values();
    Ok((0..path.n_steps())
        .map(|i| {
            let x = v[i];
            let drift = (s[i % m] + diffusion.b(x)) * dt;
            (v[i + 1] - x - drift) / diffusion.sigma(x)
        })
        .collect())
}

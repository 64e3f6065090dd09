//! Local volatility Monte Carlo for quanto payoffs.
//!
//! Each underlying's forward to the payoff date is simulated driftless under
//! the payment measure, with Dupire local volatility from its single smile
//! slice. The two are joined by a constant correlation.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::marketdata::{OptionKind, VolSurface};
use crate::numerics::path_stream;
use crate::perturbed::clamp_rho;

/// Grid half-width in at-the-money standard deviations.
pub const GRID_STD: f64 = 5.0;
const GRID_NODES: usize = 201;

/// Local vol on a uniform grid in log-strike, bilinear in (t, ln K) with flat
/// extrapolation in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalVolGrid {
    pub times: Vec<f64>,
    /// Uniformly spaced `ln K`.
    pub log_strikes: Vec<f64>,
    /// `vols[i][j]` at `times[i]`, `log_strikes[j]`.
    pub vols: Vec<Vec<f64>>,
}

impl LocalVolGrid {
    pub fn new(times: Vec<f64>, log_strikes: Vec<f64>, vols: Vec<Vec<f64>>) -> Result<Self> {
        let g = Self {
            times,
            log_strikes,
            vols,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let inc = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.times.is_empty() || !inc(&self.times) {
            return Err(invalid("time nodes must be non-empty and increasing"));
        }
        if self.log_strikes.len() < 2 || !inc(&self.log_strikes) {
            return Err(invalid("strike nodes must be increasing, at least two"));
        }
        let n = self.log_strikes.len();
        let d = (self.log_strikes[n - 1] - self.log_strikes[0]) / (n - 1) as f64;
        if self
            .log_strikes
            .iter()
            .enumerate()
            .any(|(j, y)| (y - (self.log_strikes[0] + d * j as f64)).abs() > 1e-9 * d)
        {
            return Err(invalid("log-strike nodes must be uniformly spaced"));
        }
        if self.vols.len() != self.times.len() || self.vols.iter().any(|r| r.len() != n) {
            return Err(invalid("vol table shape does not match the nodes"));
        }
        if self.vols.iter().flatten().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("local vols must be positive and finite"));
        }
        Ok(())
    }

    pub fn strikes(&self) -> Vec<f64> {
        self.log_strikes.iter().map(|y| y.exp()).collect()
    }

    #[inline]
    fn row(&self, i: usize, y: f64) -> f64 {
        let ys = &self.log_strikes;
        let n = ys.len();
        let pos = (y - ys[0]) / (ys[1] - ys[0]);
        if !(pos > 0.0) {
            return self.vols[i][0];
        }
        if pos >= (n - 1) as f64 {
            return self.vols[i][n - 1];
        }
        let j = pos as usize;
        let w = pos - j as f64;
        self.vols[i][j] * (1.0 - w) + self.vols[i][j + 1] * w
    }

    /// Local vol at time `t` and level `s`.
    #[inline]
    pub fn vol(&self, t: f64, s: f64) -> f64 {
        let y = s.ln();
        let ts = &self.times;
        if ts.len() == 1 || t <= ts[0] {
            return self.row(0, y);
        }
        let last = ts.len() - 1;
        if t >= ts[last] {
            return self.row(last, y);
        }
        let i = ts.partition_point(|x| *x <= t) - 1;
        let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
        self.row(i, y) * (1.0 - w) + self.row(i + 1, y) * w
    }
}

/// Dupire local vol from one smile slice, in total-implied-variance form
/// with the calendar term taken from a maturity-stationary implied vol.
pub fn dupire_local_vol(surface: &VolSurface) -> Result<LocalVolGrid> {
    surface.validate()?;
    let (f, t) = (surface.forward, surface.maturity);
    let sd = surface.vol_at(f) * t.sqrt();
    let w = |y: f64| {
        let v = surface.vol_at(f * y.exp());
        v * v * t
    };
    let h = 1e-4;
    let ys: Vec<f64> = (0..GRID_NODES)
        .map(|j| -GRID_STD * sd + 2.0 * GRID_STD * sd * j as f64 / (GRID_NODES - 1) as f64)
        .collect();
    let mut vols = Vec::with_capacity(GRID_NODES);
    for &y in &ys {
        let w0 = w(y);
        let (wp, wm) = (w(y + h), w(y - h));
        let d1 = (wp - wm) / (2.0 * h);
        let d2 = (wp - 2.0 * w0 + wm) / (h * h);
        let num = w0 / t;
        let den = 1.0 - y / w0 * d1 + 0.25 * (-0.25 - 1.0 / w0 + y * y / (w0 * w0)) * d1 * d1 + 0.5 * d2;
        if !(den > 0.0 && num > 0.0) {
            return Err(Error::NegativeVariance {
                strike: f * y.exp(),
                time: t,
            });
        }
        vols.push((num / den).sqrt());
    }
    let log_strikes = ys.iter().map(|y| f.ln() + y).collect();
    LocalVolGrid::new(vec![t], log_strikes, vec![vols])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 200_000,
            steps_per_year: 100,
            seed: 42,
            antithetic: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 1000 {
            return Err(invalid(format!("at least 1000 paths required, got {}", self.paths)));
        }
        if self.steps_per_year < 10 {
            return Err(invalid(format!("at least 10 steps per year required, got {}", self.steps_per_year)));
        }
        if self.antithetic && !self.paths.is_multiple_of(2) {
            return Err(invalid("antithetic runs need an even path count"));
        }
        Ok(())
    }

    fn steps(&self, maturity: f64) -> usize {
        ((self.steps_per_year as f64 * maturity).ceil() as usize).max(1)
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Pairwise sum, fixed association independent of scheduling.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let m = v.len() / 2;
    pairwise_sum(&v[..m]) + pairwise_sum(&v[m..])
}

fn estimate(samples: &[f64]) -> McEstimate {
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    McEstimate {
        value: mean,
        stderr: (var / n).sqrt(),
    }
}

fn draw_normals<const N: usize>(steps: usize, rng: &mut impl Rng, out: &mut Vec<[f64; N]>) {
    out.clear();
    for _ in 0..steps {
        let mut z = [0.0; N];
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        out.push(z);
    }
}

// Log-Euler to maturity; `sign` = -1 gives the antithetic path.
fn terminal<const N: usize>(
    grids: [&LocalVolGrid; N],
    forwards: [f64; N],
    chol: (f64, f64),
    maturity: f64,
    normals: &[[f64; N]],
    sign: f64,
) -> [f64; N] {
    let dt = maturity / normals.len() as f64;
    let sq = dt.sqrt();
    let mut x = forwards.map(f64::ln);
    let mut t = 0.0;
    for z in normals {
        let mut w = [0.0; N];
        w[0] = sign * z[0];
        if N == 2 {
            w[1] = sign * (chol.0 * z[0] + chol.1 * z[1]);
        }
        for k in 0..N {
            let v = grids[k].vol(t, x[k].exp());
            x[k] += -0.5 * v * v * dt + v * sq * w[k];
        }
        t += dt;
    }
    x.map(f64::exp)
}

fn run<const N: usize, P>(
    grids: [&LocalVolGrid; N],
    forwards: [f64; N],
    rho: f64,
    maturity: f64,
    cfg: &McConfig,
    payoff: P,
) -> Result<McEstimate>
where
    P: Fn([f64; N]) -> f64 + Sync,
{
    cfg.validate()?;
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(invalid("maturity must be positive"));
    }
    let chol = (rho, (1.0 - rho * rho).sqrt());
    let steps = cfg.steps(maturity);
    let draws = if cfg.antithetic { cfg.paths / 2 } else { cfg.paths };
    let samples: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let mut rng = path_stream(cfg.seed, i);
            draw_normals(steps, &mut rng, buf);
            let a = payoff(terminal(grids, forwards, chol, maturity, buf, 1.0));
            if cfg.antithetic {
                0.5 * (a + payoff(terminal(grids, forwards, chol, maturity, buf, -1.0)))
            } else {
                a
            }
        })
        .collect();
    Ok(estimate(&samples))
}

/// Discounted single-asset vanilla under local vol.
pub fn mc_price_vanilla(
    lv: &LocalVolGrid,
    forward: f64,
    strike: f64,
    maturity: f64,
    discount: f64,
    kind: OptionKind,
    cfg: &McConfig,
) -> Result<McEstimate> {
    let w = match kind {
        OptionKind::Call => 1.0,
        OptionKind::Put => -1.0,
    };
    let e = run([lv], [forward], 0.0, maturity, cfg, |s| (w * (s[0] - strike)).max(0.0))?;
    Ok(McEstimate {
        value: discount * e.value,
        stderr: discount * e.stderr,
    })
}

/// Quanto payoff `DF (w (S - K))^+ X / K`, per unit notional like
/// [`crate::pricing::PriceResult::pv`].
#[allow(clippy::too_many_arguments)]
pub fn mc_price_quanto(
    strike: f64,
    maturity: f64,
    discount: f64,
    kind: OptionKind,
    lv_s: &LocalVolGrid,
    forward_s: f64,
    lv_x: &LocalVolGrid,
    forward_x: f64,
    rho: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    if !(strike > 0.0) {
        return Err(invalid("strike must be positive"));
    }
    let rho = clamp_rho(rho)?;
    let w = match kind {
        OptionKind::Call => 1.0,
        OptionKind::Put => -1.0,
    };
    let e = run([lv_s, lv_x], [forward_s, forward_x], rho, maturity, cfg, |s| {
        (w * (s[0] - strike)).max(0.0) * s[1]
    })?;
    let scale = discount / strike;
    Ok(McEstimate {
        value: scale * e.value,
        stderr: scale * e.stderr,
    })
}

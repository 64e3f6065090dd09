//! Fitting (sigma, R, beta) of one underlying to a single-maturity smile.

use crate::error::{invalid, Error, Result};
use crate::marketdata::{bs_price, implied_vol, strike_for_delta, OptionKind, VolSurface};
use crate::numerics::{find_root, integrate_1d, normal_pdf, Interval, QuadratureSpec};
use crate::perturbed::{MarginalParams, PerturbedMarginal, SKEW_GUARD};

/// Straight line `vol = a * lmmr + b` fitted to the quotes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionSeed {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub params: MarginalParams,
    pub beta_iterations: usize,
    pub nr_iterations: usize,
    /// Model minus market price for the (call, put) instruments.
    pub price_residuals: [f64; 2],
    pub seed: RegressionSeed,
    /// Strikes of the (call, put) instruments.
    pub strikes: [f64; 2],
}

const DELTA_CALL: f64 = 0.25;
const DELTA_PUT: f64 = -0.25;
const BUMP_SIGMA: f64 = 1e-5;
const BUMP_R: f64 = 1e-8;
const MAX_HALVINGS: usize = 20;
const MAX_NR: usize = 100;
const MAX_BETA: usize = 50;
const MAX_POLISH: usize = 3;

/// Ordinary least squares of quote vols on LMMR.
pub fn regress_vol_line(surface: &VolSurface) -> Result<RegressionSeed> {
    if surface.quotes.len() < 2 {
        return Err(invalid("regression needs at least two quotes"));
    }
    let n = surface.quotes.len() as f64;
    let xs: Vec<f64> = surface.quotes.iter().map(|(k, _)| surface.lmmr(*k)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = surface.quotes.iter().map(|(_, v)| v).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, (_, v)) in xs.iter().zip(&surface.quotes) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (v - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("all quotes share one LMMR".into()));
    }
    let a = sxy / sxx;
    Ok(RegressionSeed { a, b: my - a * mx })
}

/// Starting `(sigma, R)` from the regression line.
pub fn seed_params(seed: RegressionSeed) -> (f64, f64) {
    let sigma = seed.b - seed.a * seed.b * seed.b / 2.0;
    (sigma, -seed.a * sigma.powi(3))
}

/// Log-mean of the zero-order solution with flat rates.
pub fn initial_beta(spot: f64, rate: f64, yield_: f64, sigma: f64, tau: f64) -> f64 {
    spot.ln() + (rate - yield_) * tau - 0.5 * sigma * sigma * tau
}

/// Perturbed marginal with a log-mean, priced by quadrature.
#[derive(Debug, Clone)]
pub struct ModelMarginal {
    marginal: PerturbedMarginal,
    /// Integral of `e^xi` against the marginal density.
    mgf: f64,
}

impl ModelMarginal {
    pub fn new(m: &MarginalParams, tau: f64) -> Result<Self> {
        let marginal = PerturbedMarginal::new(m, tau)?;
        let s = marginal.scale();
        let mgf = if m.r_skew == 0.0 {
            (0.5 * s * s).exp()
        } else {
            integrate_1d(
                |x| x.exp() * marginal.density(x),
                marginal.support(),
                &QuadratureSpec::new(1e-14, 1e-13, 4000),
            )?
            .value
        };
        Ok(Self { marginal, mgf })
    }

    pub fn marginal(&self) -> &PerturbedMarginal {
        &self.marginal
    }

    pub fn params(&self) -> &MarginalParams {
        self.marginal.params()
    }

    pub fn forward(&self) -> f64 {
        self.params().beta.exp() * self.mgf
    }

    /// Same density with another log-mean (no new quadrature).
    pub fn with_beta(&self, beta: f64) -> Self {
        let mut out = self.clone();
        out.marginal = PerturbedMarginal::new(&self.params().with_beta(beta), self.marginal.tau())
            .expect("beta is finite and the rest already validated");
        out
    }

    /// Option price `discount * E[(w (S - K))^+]` by quadrature, split at the strike.
    pub fn price(&self, strike: f64, discount: f64, kind: OptionKind) -> Result<f64> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(invalid(format!("strike must be positive, got {strike}")));
        }
        let beta = self.params().beta;
        let sup = self.marginal.support();
        let kink = strike.ln() - beta;
        let (lo, hi, w) = match kind {
            OptionKind::Call => (kink.max(sup.lo), sup.hi, 1.0),
            OptionKind::Put => (sup.lo, kink.min(sup.hi), -1.0),
        };
        if lo >= hi {
            return Ok(0.0);
        }
        let m = &self.marginal;
        let e = integrate_1d(
            |x| (w * ((beta + x).exp() - strike)).max(0.0) * m.density(x),
            Interval::new(lo, hi)?,
            &QuadratureSpec::new(1e-15 * strike, 1e-13, 4000),
        )?;
        Ok(discount * e.value)
    }
}

/// Model forward `E[e^(beta + xi)]`.
pub fn model_forward(m: &MarginalParams, tau: f64) -> Result<f64> {
    Ok(ModelMarginal::new(m, tau)?.forward())
}

fn fit_beta_model(model: &ModelMarginal, target: f64) -> Result<(ModelMarginal, usize)> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(invalid(format!("target forward must be positive, got {target}")));
    }
    let mut beta = model.params().beta;
    for it in 0..=MAX_BETA {
        let f = beta.exp() * model.mgf;
        if (f / target - 1.0).abs() <= 1e-12 {
            return Ok((model.with_beta(beta), it));
        }
        beta += target.ln() - f.ln();
    }
    Err(Error::NonConvergence {
        value: beta,
        error: f64::NAN,
        subdivisions: MAX_BETA,
    })
}

/// `beta` such that the model forward equals `target_forward`, with the
/// number of updates used.
pub fn fit_beta(m: &MarginalParams, tau: f64, target_forward: f64) -> Result<(f64, usize)> {
    let (model, it) = fit_beta_model(&ModelMarginal::new(m, tau)?, target_forward)?;
    Ok((model.params().beta, it))
}

/// Vanilla price by quadrature against the perturbed marginal.
pub fn marginal_vanilla_price(
    m: &MarginalParams,
    tau: f64,
    strike: f64,
    discount: f64,
    kind: OptionKind,
) -> Result<f64> {
    ModelMarginal::new(m, tau)?.price(strike, discount, kind)
}

// Model with forward matched to `forward`, for given (sigma, R).
fn matched_model(sigma: f64, r_skew: f64, tau: f64, forward: f64) -> Result<(ModelMarginal, usize)> {
    let m = MarginalParams::new(sigma, r_skew, forward.ln() - 0.5 * sigma * sigma * tau)?;
    fit_beta_model(&ModelMarginal::new(&m, tau)?, forward)
}

struct Instruments {
    forward: f64,
    tau: f64,
    discount: f64,
    strikes: [f64; 2],
    market: [f64; 2],
}

impl Instruments {
    fn residuals(&self, sigma: f64, r_skew: f64) -> Result<([f64; 2], ModelMarginal, usize)> {
        let (model, it) = matched_model(sigma, r_skew, self.tau, self.forward)?;
        let c = model.price(self.strikes[0], self.discount, OptionKind::Call)?;
        let p = model.price(self.strikes[1], self.discount, OptionKind::Put)?;
        Ok(([c - self.market[0], p - self.market[1]], model, it))
    }
}

fn norm(r: &[f64; 2]) -> f64 {
    r[0].hypot(r[1])
}

fn max_abs(r: &[f64; 2]) -> f64 {
    r[0].abs().max(r[1].abs())
}

/// Exact fit of (sigma, R) to the 25-delta call and put, with beta matching
/// the forward at every iterate.
pub fn calibrate_marginal(surface: &VolSurface) -> Result<CalibrationResult> {
    surface.validate()?;
    let seed = regress_vol_line(surface)?;
    let (mut sigma, mut r_skew) = seed_params(seed);
    if !(sigma > 0.0) {
        return Err(Error::SeedInvalid { sigma });
    }
    // Keep the seed inside the admissible skew range.
    let cap = 0.95 * SKEW_GUARD * sigma.powi(3);
    r_skew = r_skew.clamp(-cap, cap);

    let kc = strike_for_delta(surface, DELTA_CALL, OptionKind::Call)?;
    let kp = strike_for_delta(surface, DELTA_PUT, OptionKind::Put)?;
    let inst = Instruments {
        forward: surface.forward,
        tau: surface.maturity,
        discount: surface.discount,
        strikes: [kc, kp],
        market: [surface.price(kc, OptionKind::Call), surface.price(kp, OptionKind::Put)],
    };
    let tol = 1e-10 * surface.forward;

    let (mut r, mut model, mut beta_it) = inst.residuals(sigma, r_skew)?;
    let mut iterations = 0;
    let mut polish = 0;
    loop {
        if max_abs(&r) <= 1e-15 * surface.forward {
            break;
        }
        if iterations >= MAX_NR {
            if max_abs(&r) <= tol {
                break;
            }
            return Err(Error::CalibrationNonConvergence {
                iterations,
                residual: max_abs(&r),
            });
        }
        // Central-difference Jacobian, columns (sigma, R). At the skew guard
        // one side of the stencil is inadmissible and a one-sided difference
        // is used instead.
        let column = |ds: f64, dr: f64| -> Result<[f64; 2]> {
            let up = inst.residuals(sigma + ds, r_skew + dr).map(|x| x.0);
            let dn = inst.residuals(sigma - ds, r_skew - dr).map(|x| x.0);
            let h = ds + dr;
            match (up, dn) {
                (Ok(u), Ok(d)) => Ok([(u[0] - d[0]) / (2.0 * h), (u[1] - d[1]) / (2.0 * h)]),
                (Ok(u), Err(Error::InvalidParameter(_))) => Ok([(u[0] - r[0]) / h, (u[1] - r[1]) / h]),
                (Err(Error::InvalidParameter(_)), Ok(d)) => Ok([(r[0] - d[0]) / h, (r[1] - d[1]) / h]),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        };
        let cs = column(BUMP_SIGMA, 0.0)?;
        let cr = column(0.0, BUMP_R)?;
        let j = [[cs[0], cr[0]], [cs[1], cr[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !(det.abs() > 0.0 && det.is_finite()) {
            return Err(Error::Degenerate("singular calibration Jacobian".into()));
        }
        let ds = -(j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let dr = -(-j[1][0] * r[0] + j[0][0] * r[1]) / det;

        let current = norm(&r);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            if let Ok(trial) = inst.residuals(sigma + step * ds, r_skew + step * dr) {
                if norm(&trial.0) < current {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((rn, mn, itn)) => {
                sigma += step * ds;
                r_skew += step * dr;
                r = rn;
                model = mn;
                beta_it = itn;
            }
            // No reduction available: done if already within tolerance.
            None if max_abs(&r) <= tol => break,
            None => {
                return Err(Error::CalibrationNonConvergence {
                    iterations,
                    residual: max_abs(&r),
                })
            }
        }
        // A few steps past the tolerance polish the parameters.
        if max_abs(&r) <= tol {
            polish += 1;
            if polish > MAX_POLISH {
                break;
            }
        }
    }
    Ok(CalibrationResult {
        params: *model.params(),
        beta_iterations: beta_it,
        nr_iterations: iterations,
        price_residuals: r,
        seed,
        strikes: [kc, kp],
    })
}

/// Black price plus the first-order skew correction
/// `-tau R S^2 Gamma (1 - d1 / (sigma sqrt(tau)))`.
#[allow(clippy::too_many_arguments)]
pub fn appendix_vanilla_price(
    m: &MarginalParams,
    tau: f64,
    strike: f64,
    discount: f64,
    spot: f64,
    rate: f64,
    yield_: f64,
    kind: OptionKind,
) -> f64 {
    let f = spot * ((rate - yield_) * tau).exp();
    let p0 = bs_price(f, strike, tau, m.sigma, discount, kind);
    if m.r_skew == 0.0 {
        return p0;
    }
    let sd = m.sigma * tau.sqrt();
    let d1 = ((f / strike).ln() + 0.5 * sd * sd) / sd;
    // S^2 d2P/dS^2 in forward terms.
    let s2_gamma = discount * f * normal_pdf(d1) / sd;
    p0 - tau * m.r_skew * s2_gamma * (1.0 - d1 / sd)
}

/// First-order implied vol as a function of LMMR.
pub fn implied_vol_line(m: &MarginalParams, lmmr: f64) -> f64 {
    -(m.r_skew / m.sigma.powi(3)) * lmmr + m.sigma - m.r_skew / (2.0 * m.sigma)
}

/// Smile generated by the perturbed marginal with the given `(sigma, R)`.
///
/// Quotes sit at the model's own 25-delta put and call strikes, at the
/// forward, and at the two geometric midpoints, so calibrating to the result
/// sees model prices exactly at its instruments.
pub fn synthesize_surface(sigma: f64, r_skew: f64, tau: f64, forward: f64, discount: f64) -> Result<VolSurface> {
    let (model, _) = matched_model(sigma, r_skew, tau, forward)?;
    let vol = |k: f64| -> Result<f64> {
        let kind = if k >= forward { OptionKind::Call } else { OptionKind::Put };
        implied_vol(model.price(k, discount, kind)?, forward, k, tau, discount, kind)
    };
    let s = sigma * tau.sqrt();
    let delta_strike = |kind: OptionKind, target: f64, lo: f64, hi: f64| -> Result<f64> {
        let mut err = None;
        let x = find_root(
            |x| {
                let k = forward * x.exp();
                match vol(k) {
                    Ok(v) => crate::marketdata::forward_delta(forward, k, tau, v, kind) - target,
                    // A strongly skewed tail can price to exactly zero: delta is zero there.
                    Err(Error::OutOfBounds { price, .. }) if price <= 0.0 => -target,
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            lo,
            hi,
            1e-15,
        );
        if let Some(e) = err {
            return Err(e);
        }
        Ok(forward * x?.exp())
    };
    let kc = delta_strike(OptionKind::Call, DELTA_CALL, 0.0, 4.0 * s)?;
    let kp = delta_strike(OptionKind::Put, DELTA_PUT, -4.0 * s, 0.0)?;
    let strikes = [kp, (kp * forward).sqrt(), forward, (forward * kc).sqrt(), kc];
    let quotes = strikes.iter().map(|&k| Ok((k, vol(k)?))).collect::<Result<Vec<_>>>()?;
    VolSurface::new(forward, tau, discount, quotes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::UnderlyingSpec;

    fn surface_from(points: &[(f64, f64)], f: f64, t: f64) -> VolSurface {
        let quotes = points.iter().map(|(x, v)| (f * (x * t).exp(), *v)).collect();
        VolSurface::new(f, t, 1.0, quotes).unwrap()
    }

    #[test]
    fn regression_examples() {
        let s = VolSurface::flat(100.0, 1.0, 1.0, 0.2).unwrap();
        let seed = regress_vol_line(&s).unwrap();
        assert!(seed.a.abs() < 1e-14 && (seed.b - 0.2).abs() < 1e-14);

        let xs = [-0.3, -0.1, 0.0, 0.2, 0.3];
        let pts: Vec<_> = xs.iter().map(|x| (*x, 0.09 - 0.05 * x)).collect();
        let seed = regress_vol_line(&surface_from(&pts, 50.0, 2.0)).unwrap();
        assert!((seed.a + 0.05).abs() < 1e-12 && (seed.b - 0.09).abs() < 1e-12);

        // Textbook OLS via normal equations on raw sums.
        let noisy = [(-0.3, 0.31), (-0.1, 0.26), (0.05, 0.25), (0.2, 0.21), (0.25, 0.235)];
        let seed = regress_vol_line(&surface_from(&noisy, 1.0, 1.0)).unwrap();
        let n = noisy.len() as f64;
        let sx: f64 = noisy.iter().map(|p| p.0).sum();
        let sy: f64 = noisy.iter().map(|p| p.1).sum();
        let sxx: f64 = noisy.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = noisy.iter().map(|p| p.0 * p.1).sum();
        let a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let b = (sy - a * sx) / n;
        assert!((seed.a - a).abs() < 1e-12 && (seed.b - b).abs() < 1e-12);
    }

    #[test]
    fn seed_examples() {
        assert_eq!(seed_params(RegressionSeed { a: 0.0, b: 0.2 }), (0.2, 0.0));
        let (s, r) = seed_params(RegressionSeed { a: -0.05, b: 0.09 });
        assert!((s - 0.090_202_5).abs() < 1e-15);
        assert!((r - 0.05 * s.powi(3)).abs() < 1e-18);
        // Residual of the quadratic s^2 + (2/a) s - 2b/a is O(a^2 b^3) relative to its scale.
        for (a, b) in [(-0.05, 0.09), (0.1, 0.2), (-0.3, 0.3)] {
            let (s, _) = seed_params(RegressionSeed { a, b });
            let q = s * s + 2.0 / a * s - 2.0 * b / a;
            assert!((q * a / 2.0).abs() <= 2.0 * a * a * b.powi(3), "{a} {b} {q}");
        }
    }

    #[test]
    fn initial_beta_examples() {
        let b = initial_beta(981.3, 0.0, 0.0, 0.0892, 1.0);
        assert!((b - (981.3f64.ln() - 0.0892 * 0.0892 / 2.0)).abs() < 1e-15);
        assert!((initial_beta(981.3, 0.0, 0.0, 1e-12, 1.0) - 981.3f64.ln()).abs() < 1e-15);
        assert_eq!(initial_beta(10.0, 0.03, 0.03, 0.2, 2.0), 10f64.ln() - 0.04);
    }

    #[test]
    fn forward_and_beta() {
        let m = MarginalParams::new(0.2, 0.0, 0.1).unwrap();
        let f = model_forward(&m, 1.5).unwrap();
        assert!((f / (0.1 + 0.5 * 0.04 * 1.5f64).exp() - 1.0).abs() < 1e-15);
        let (b, it) = fit_beta(&m, 1.5, 120.0).unwrap();
        assert_eq!(it, 1);
        assert!((b - (120f64.ln() - 0.03)).abs() < 1e-14);

        let m = MarginalParams::new(0.0892, 1.31e-4, 0.0).unwrap();
        let f0 = model_forward(&m, 1.0).unwrap();
        let f1 = model_forward(&m.with_beta(0.3), 1.0).unwrap();
        assert!((f1 / f0 - 0.3f64.exp()).abs() < 1e-14);
        for r in [-5e-4, 1.31e-4, 2e-3] {
            let m = MarginalParams::new(0.1, r, 0.0).unwrap();
            let (b, it) = fit_beta(&m, 1.0, 981.3).unwrap();
            assert_eq!(it, 1);
            let f = model_forward(&m.with_beta(b), 1.0).unwrap();
            assert!((f / 981.3 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vanilla_prices() {
        // R = 0 reduces to Black.
        let m = MarginalParams::new(0.25, 0.0, 4.0).unwrap();
        let f = model_forward(&m, 0.75).unwrap();
        for k in [20.0, 50.0, 55.0, 70.0, 150.0] {
            for kind in [OptionKind::Call, OptionKind::Put] {
                let p = marginal_vanilla_price(&m, 0.75, k, 0.95, kind).unwrap();
                let b = bs_price(f, k, 0.75, 0.25, 0.95, kind);
                assert!((p - b).abs() < 1e-10, "{k} {kind:?} {p} {b}");
            }
        }
        let m = MarginalParams::new(0.2, 5e-4, 4.0).unwrap();
        let model = ModelMarginal::new(&m, 1.0).unwrap();
        let c = model.price(1e-12, 0.9, OptionKind::Call).unwrap();
        assert!((c - 0.9 * model.forward()).abs() < 1e-10);
        for k in [30.0, 54.6, 80.0] {
            let c = model.price(k, 0.9, OptionKind::Call).unwrap();
            let p = model.price(k, 0.9, OptionKind::Put).unwrap();
            assert!((c - p - 0.9 * (model.forward() - k)).abs() < 1e-10);
        }
    }

    #[test]
    fn flat_surface_calibrates_to_zero_skew() {
        let s = VolSurface::flat(100.0, 1.0, 0.97, 0.2).unwrap();
        let res = calibrate_marginal(&s).unwrap();
        assert!(res.params.r_skew.abs() < 1e-10);
        assert!((res.params.sigma - 0.2).abs() < 1e-8 * 0.2);
        assert!(res.price_residuals.iter().all(|r| r.abs() <= 1e-10 * 100.0));
    }

    #[test]
    fn round_trip() {
        let (sigma, r, t, f) = (0.09, 1.3e-4, 1.0, 981.3);
        let s = synthesize_surface(sigma, r, t, f, 1.0).unwrap();
        let res = calibrate_marginal(&s).unwrap();
        assert!((res.params.sigma / sigma - 1.0).abs() < 1e-8, "{res:?}");
        assert!((res.params.r_skew - r).abs() < 1e-10, "{res:?}");
        assert!(res.nr_iterations <= 15);
        let fwd = model_forward(&res.params, t).unwrap();
        assert!((fwd / f - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn market_shaped_surface() {
        // Gold-like left skew: 28.2% at the money, slope -0.168 per unit LMMR.
        let u = UnderlyingSpec {
            spot: 981.3,
            atm_vol: 0.2822,
            skew_slope: -0.168,
            foreign_rate: 0.0,
        };
        let s = crate::marketdata::make_linear_skew_surface(&u, 0.0, 1.0).unwrap();
        let res = calibrate_marginal(&s).unwrap();
        let (sig, r) = (0.2989, 73.43e-4);
        assert!((res.params.sigma / sig - 1.0).abs() < 0.05, "{res:?}");
        assert!(res.params.r_skew > 0.0 && (res.params.r_skew / r).ln().abs() < 0.4, "{res:?}");
    }

    #[test]
    fn appendix_price() {
        let m0 = MarginalParams::new(0.2, 0.0, 0.0).unwrap();
        let p = appendix_vanilla_price(&m0, 1.0, 95.0, 0.97, 100.0, 0.03, 0.01, OptionKind::Call);
        let f = 100.0 * 0.02f64.exp();
        assert_eq!(p, bs_price(f, 95.0, 1.0, 0.2, 0.97, OptionKind::Call));

        // Correction against finite differences of the Black price in spot.
        let m = MarginalParams::new(0.2, 5e-4, 0.0).unwrap();
        let (k, df, t) = (110.0, 0.97, 1.0);
        let bs = |s: f64| bs_price(s * 0.02f64.exp(), k, t, 0.2, df, OptionKind::Put);
        let (s0, h) = (100.0, 0.05);
        let g2 = (bs(s0 + h) - 2.0 * bs(s0) + bs(s0 - h)) / (h * h);
        let g3 = (bs(s0 + 2.0 * h) - 2.0 * bs(s0 + h) + 2.0 * bs(s0 - h) - bs(s0 - 2.0 * h)) / (2.0 * h.powi(3));
        let expect = bs(s0) - t * 5e-4 * (2.0 * s0 * s0 * g2 + s0.powi(3) * g3);
        let got = appendix_vanilla_price(&m, t, k, df, s0, 0.03, 0.01, OptionKind::Put);
        assert!((got - expect).abs() < 1e-6, "{got} {expect}");

        // Close to the full perturbed price at the money.
        let (b, _) = fit_beta(&m, 1.0, 100.0).unwrap();
        let q = marginal_vanilla_price(&m.with_beta(b), 1.0, 100.0, 1.0, OptionKind::Call).unwrap();
        let a = appendix_vanilla_price(&m, 1.0, 100.0, 1.0, 100.0, 0.0, 0.0, OptionKind::Call);
        assert!((q - a).abs() < 5e-4 * 100.0);
    }

    #[test]
    fn vol_line() {
        let m = MarginalParams::new(0.09, 0.0, 0.0).unwrap();
        assert_eq!(implied_vol_line(&m, 0.3), 0.09);
        let m = MarginalParams::new(0.09, 1.3e-4, 0.0).unwrap();
        assert!((implied_vol_line(&m, 0.0) - (0.09 - 1.3e-4 / 0.18)).abs() < 1e-15);
        let slope = implied_vol_line(&m, 1.0) - implied_vol_line(&m, 0.0);
        assert!((slope * 0.09f64.powi(3) + 1.3e-4).abs() < 1e-15);
    }
}

//! Black formula, implied volatility, single-maturity smiles and the
//! risk-neutral marginal they imply.

use crate::error::{invalid, Error, Result};
use crate::numerics::{find_root, integrate_1d_with_breaks, normal_cdf, normal_pdf, Interval, QuadratureSpec};
use crate::perturbed::clamp_rho;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    #[inline]
    fn sign(self) -> f64 {
        match self {
            OptionKind::Call => 1.0,
            OptionKind::Put => -1.0,
        }
    }
}

/// Black price on the forward.
pub fn bs_price(forward: f64, strike: f64, maturity: f64, vol: f64, discount: f64, kind: OptionKind) -> f64 {
    let w = kind.sign();
    let sd = vol * maturity.sqrt();
    if !(sd > 0.0) {
        return discount * (w * (forward - strike)).max(0.0);
    }
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    discount * w * (forward * normal_cdf(w * d1) - strike * normal_cdf(w * d2))
}

/// Black vega (per unit vol).
pub fn bs_vega(forward: f64, strike: f64, maturity: f64, vol: f64, discount: f64) -> f64 {
    let sd = vol * maturity.sqrt();
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    discount * forward * normal_pdf(d1) * maturity.sqrt()
}

/// Forward delta: `N(d1)` for calls, `-N(-d1)` for puts.
pub fn forward_delta(forward: f64, strike: f64, maturity: f64, vol: f64, kind: OptionKind) -> f64 {
    let sd = vol * maturity.sqrt();
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    match kind {
        OptionKind::Call => normal_cdf(d1),
        OptionKind::Put => -normal_cdf(-d1),
    }
}

/// Black implied volatility.
///
/// The price is first converted to the out-of-the-money option by parity;
/// the inversion is a Newton iteration on the log price kept inside a
/// shrinking bracket, so tiny deep out-of-the-money prices still converge.
pub fn implied_vol(
    price: f64,
    forward: f64,
    strike: f64,
    maturity: f64,
    discount: f64,
    kind: OptionKind,
) -> Result<f64> {
    if !(forward > 0.0 && strike > 0.0 && maturity > 0.0 && discount > 0.0) {
        return Err(invalid("forward, strike, maturity and discount must be positive"));
    }
    let w = kind.sign();
    let intrinsic = discount * (w * (forward - strike)).max(0.0);
    let upper = match kind {
        OptionKind::Call => discount * forward,
        OptionKind::Put => discount * strike,
    };
    if !(price > intrinsic && price < upper) {
        return Err(Error::OutOfBounds {
            price,
            lower: intrinsic,
            upper,
        });
    }
    let (otm_kind, target) = if strike >= forward {
        (OptionKind::Call, if kind == OptionKind::Call { price } else { price + discount * (forward - strike) })
    } else {
        (OptionKind::Put, if kind == OptionKind::Put { price } else { price - discount * (forward - strike) })
    };
    if !(target > 0.0) {
        return Err(Error::OutOfBounds {
            price,
            lower: intrinsic,
            upper,
        });
    }
    let f = |v: f64| bs_price(forward, strike, maturity, v, discount, otm_kind);
    let (mut lo, mut hi) = (1e-9, 1.0);
    while f(hi) < target {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::OutOfBounds {
                price,
                lower: intrinsic,
                upper,
            });
        }
    }
    let lt = target.ln();
    // Start near the at-the-money approximation.
    let mut v = (target / (discount * forward) * (2.0 * std::f64::consts::PI / maturity).sqrt()).clamp(lo, hi);
    if f(v) <= 0.0 {
        v = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let p = f(v);
        if p > target {
            hi = v;
        } else {
            lo = v;
        }
        if (p - target).abs() <= 1e-15 * target {
            return Ok(v);
        }
        let vega = bs_vega(forward, strike, maturity, v, discount);
        let mut next = if p > 0.0 && vega > 0.0 {
            v - (p.ln() - lt) * p / vega
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - v).abs() <= 1e-16 * v || hi - lo <= 1e-16 * hi {
            return Ok(next);
        }
        v = next;
    }
    Ok(v)
}

/// Extrapolation beyond the outermost quotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extrapolation {
    /// Hold the end vols.
    #[default]
    Flat,
    /// Continue the end segments in implied variance with a matching slope:
    /// linearly where the variance grows, exponentially where it decays. The
    /// vol is C1 at the end quotes and never reaches the 1% floor in practice.
    LinearVariance,
}

/// Lowest vol returned by wing extrapolation.
pub const VOL_FLOOR: f64 = 0.01;

/// Single-maturity implied volatility smile, linear in
/// LMMR = ln(K/F)/T between quotes.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSurface {
    pub forward: f64,
    pub maturity: f64,
    pub discount: f64,
    /// (strike, vol), strikes strictly increasing.
    pub quotes: Vec<(f64, f64)>,
    pub extrapolation: Extrapolation,
}

impl VolSurface {
    pub fn new(forward: f64, maturity: f64, discount: f64, quotes: Vec<(f64, f64)>) -> Result<Self> {
        Self::with_extrapolation(forward, maturity, discount, quotes, Extrapolation::Flat)
    }

    pub fn with_extrapolation(
        forward: f64,
        maturity: f64,
        discount: f64,
        quotes: Vec<(f64, f64)>,
        extrapolation: Extrapolation,
    ) -> Result<Self> {
        let s = Self {
            forward,
            maturity,
            discount,
            quotes,
            extrapolation,
        };
        s.validate()?;
        Ok(s)
    }

    /// Flat smile at one vol.
    pub fn flat(forward: f64, maturity: f64, discount: f64, vol: f64) -> Result<Self> {
        Self::new(forward, maturity, discount, vec![(forward * 0.5, vol), (forward * 2.0, vol)])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.forward > 0.0 && self.forward.is_finite()) {
            return Err(invalid("forward must be positive"));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(invalid("maturity must be positive"));
        }
        if !(self.discount > 0.0 && self.discount.is_finite()) {
            return Err(invalid("discount factor must be positive"));
        }
        if self.quotes.len() < 2 {
            return Err(invalid("a surface needs at least two quotes"));
        }
        for (i, (k, v)) in self.quotes.iter().enumerate() {
            if !(*k > 0.0 && k.is_finite()) || !(*v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("quote {i} must have positive strike and vol")));
            }
            if i > 0 && !(self.quotes[i - 1].0 < *k) {
                return Err(invalid("strikes must be strictly increasing"));
            }
        }
        Ok(())
    }

    /// Log-moneyness-to-maturity ratio of a strike.
    #[inline]
    pub fn lmmr(&self, strike: f64) -> f64 {
        (strike / self.forward).ln() / self.maturity
    }

    /// Interpolated implied vol at `strike`.
    pub fn vol_at(&self, strike: f64) -> f64 {
        let x = self.lmmr(strike);
        let q = &self.quotes;
        let n = q.len();
        let node = |i: usize| self.lmmr(q[i].0);
        let line = |i: usize, j: usize| {
            let (xi, xj) = (node(i), node(j));
            q[i].1 + (q[j].1 - q[i].1) * (x - xi) / (xj - xi)
        };
        // Variance v = vol^2 continued from the end quote with matching slope
        // g = 2 e a: linearly where it grows, exponentially where it decays.
        let wing = |e: usize, other: usize| {
            let (xe, xo) = (node(e), node(other));
            let a = (q[other].1 - q[e].1) / (xo - xe);
            let ve = q[e].1 * q[e].1;
            let dv = 2.0 * q[e].1 * a * (x - xe);
            let v = if dv >= 0.0 { ve + dv } else { ve * (dv / ve).exp() };
            v.max(VOL_FLOOR * VOL_FLOOR).sqrt()
        };
        if strike <= q[0].0 {
            if strike == q[0].0 {
                return q[0].1;
            }
            return match self.extrapolation {
                Extrapolation::Flat => q[0].1,
                Extrapolation::LinearVariance => wing(0, 1),
            };
        }
        if strike >= q[n - 1].0 {
            if strike == q[n - 1].0 {
                return q[n - 1].1;
            }
            return match self.extrapolation {
                Extrapolation::Flat => q[n - 1].1,
                Extrapolation::LinearVariance => wing(n - 1, n - 2),
            };
        }
        let j = q.partition_point(|(k, _)| *k <= strike);
        if q[j - 1].0 == strike {
            return q[j - 1].1;
        }
        line(j - 1, j)
    }

    /// Black price at `strike` using the interpolated vol.
    pub fn price(&self, strike: f64, kind: OptionKind) -> f64 {
        bs_price(self.forward, strike, self.maturity, self.vol_at(strike), self.discount, kind)
    }

    // Out-of-the-money price: put below the forward, call above.
    #[inline]
    fn otm(&self, strike: f64) -> f64 {
        let kind = if strike < self.forward { OptionKind::Put } else { OptionKind::Call };
        self.price(strike, kind)
    }

    /// Risk-neutral density of `xi = ln S_T`, from the second strike
    /// derivative of option prices (central differences, bump `1e-4 K`),
    /// times the Jacobian `K`.
    pub fn empirical_density(&self, xi: f64) -> f64 {
        let k = xi.exp();
        let h = 1e-4 * k;
        // Keep the stencil on one side of the forward so parity cannot leak in.
        let (a, b, c) = if k - h < self.forward && k + h > self.forward {
            let p = |s: f64| self.price(s, OptionKind::Put);
            (p(k - h), p(k), p(k + h))
        } else {
            (self.otm(k - h), self.otm(k), self.otm(k + h))
        };
        k * (a - 2.0 * b + c) / (h * h) / self.discount
    }

    /// Risk-neutral distribution function of `xi = ln S_T`, from the first
    /// strike derivative of put prices.
    pub fn empirical_cdf(&self, xi: f64) -> f64 {
        let k = xi.exp();
        let h = 1e-4 * k;
        let z = if k + h < self.forward {
            (self.price(k + h, OptionKind::Put) - self.price(k - h, OptionKind::Put)) / (2.0 * h) / self.discount
        } else if k - h > self.forward {
            1.0 + (self.price(k + h, OptionKind::Call) - self.price(k - h, OptionKind::Call)) / (2.0 * h) / self.discount
        } else {
            (self.price(k + h, OptionKind::Put) - self.price(k - h, OptionKind::Put)) / (2.0 * h) / self.discount
        };
        z.clamp(0.0, 1.0)
    }

    /// Integration range for the empirical marginal before its moments are
    /// known: log-forward +/- 15 at-the-money standard deviations.
    pub fn search_range(&self) -> Interval {
        let sd = self.vol_at(self.forward) * self.maturity.sqrt();
        let c = self.forward.ln() - 0.5 * sd * sd;
        Interval {
            lo: c - 15.0 * sd,
            hi: c + 15.0 * sd,
        }
    }

    fn node_breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.quotes.iter().map(|(k, _)| k.ln()).collect();
        b.push(self.forward.ln());
        b
    }

    /// Mass, mean and standard deviation of the empirical marginal in `xi`.
    pub fn empirical_moments(&self) -> Result<EmpiricalMoments> {
        let iv = self.search_range();
        let spec = QuadratureSpec::new(1e-9, 1e-8, 4000);
        let br = self.node_breaks();
        let m0 = integrate_1d_with_breaks(|x| self.empirical_density(x), iv, &br, &spec)?.value;
        let m1 = integrate_1d_with_breaks(|x| x * self.empirical_density(x), iv, &br, &spec)?.value / m0;
        let m2 = integrate_1d_with_breaks(|x| (x - m1) * (x - m1) * self.empirical_density(x), iv, &br, &spec)?.value / m0;
        Ok(EmpiricalMoments {
            mass: m0,
            mean: m1,
            std: m2.sqrt(),
        })
    }

    /// Points of a uniform grid over [`Self::search_range`] where the finite
    /// difference density is below `-1e-8` (butterfly arbitrage in the input).
    pub fn negative_density(&self, n: usize) -> Vec<NegativeDensity> {
        let iv = self.search_range();
        let n = n.max(2);
        (0..n)
            .map(|i| iv.lo + iv.width() * i as f64 / (n - 1) as f64)
            .filter_map(|xi| {
                let d = self.empirical_density(xi);
                (d < -1e-8).then_some(NegativeDensity { xi, density: d })
            })
            .collect()
    }
}

/// Moments of the empirical marginal in log-price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalMoments {
    pub mass: f64,
    pub mean: f64,
    pub std: f64,
}

/// Warning diagnostic: negative implied density at `xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeDensity {
    pub xi: f64,
    pub density: f64,
}

/// Strike whose forward delta under the smile equals `delta`.
pub fn strike_for_delta(surface: &VolSurface, delta: f64, kind: OptionKind) -> Result<f64> {
    let ok = match kind {
        OptionKind::Call => delta > 0.0 && delta < 1.0,
        OptionKind::Put => delta > -1.0 && delta < 0.0,
    };
    if !ok {
        return Err(invalid(format!("delta {delta} out of range for {kind:?}")));
    }
    let f = surface.forward;
    let t = surface.maturity;
    let sd = surface.vol_at(f) * t.sqrt();
    let width = 12.0 * sd.max(0.01);
    let obj = |x: f64| {
        let k = f * x.exp();
        forward_delta(f, k, t, surface.vol_at(k), kind) - delta
    };
    let x = find_root(obj, -width, width, 1e-15)?;
    Ok(f * x.exp())
}

/// One underlying of a synthetic scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnderlyingSpec {
    pub spot: f64,
    pub atm_vol: f64,
    /// Implied-vol slope per unit LMMR (negative: left skew).
    pub skew_slope: f64,
    /// Foreign (asset) yield, continuously compounded.
    pub foreign_rate: f64,
}

impl UnderlyingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(invalid("spot must be positive"));
        }
        if !(self.atm_vol > 0.0 && self.atm_vol.is_finite()) {
            return Err(invalid("atm vol must be positive"));
        }
        if !self.skew_slope.is_finite() || !self.foreign_rate.is_finite() {
            return Err(invalid("skew slope and foreign rate must be finite"));
        }
        Ok(())
    }

    pub fn forward(&self, domestic_rate: f64, maturity: f64) -> f64 {
        self.spot * ((domestic_rate - self.foreign_rate) * maturity).exp()
    }
}

/// Two-underlying synthetic skew scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub underlying1: UnderlyingSpec,
    pub underlying2: UnderlyingSpec,
    pub rho: f64,
    pub maturity: f64,
    pub domestic_rate: f64,
    pub strikes: Vec<f64>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.underlying1.validate()?;
        self.underlying2.validate()?;
        let r = clamp_rho(self.rho)?;
        if r != self.rho {
            return Err(invalid(format!("|rho| must be at most 0.99, got {}", self.rho)));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(invalid("maturity must be positive"));
        }
        if !self.domestic_rate.is_finite() {
            return Err(invalid("domestic rate must be finite"));
        }
        if self.strikes.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(invalid("strikes must be positive"));
        }
        Ok(())
    }

    pub fn surfaces(&self) -> Result<(VolSurface, VolSurface)> {
        self.validate()?;
        Ok((
            make_linear_skew_surface(&self.underlying1, self.domestic_rate, self.maturity)?,
            make_linear_skew_surface(&self.underlying2, self.domestic_rate, self.maturity)?,
        ))
    }
}

/// LMMR nodes of synthesized surfaces.
pub const SKEW_NODES: [f64; 5] = [-0.3, -0.15, 0.0, 0.15, 0.3];

/// Surface with vol = atm + slope * LMMR at five LMMR nodes, floored at 1%.
/// Wings are extrapolated linearly in variance so the implied density has no
/// atoms at the end quotes.
pub fn make_linear_skew_surface(u: &UnderlyingSpec, domestic_rate: f64, maturity: f64) -> Result<VolSurface> {
    u.validate()?;
    if !(maturity > 0.0) {
        return Err(invalid("maturity must be positive"));
    }
    let f = u.forward(domestic_rate, maturity);
    let quotes = SKEW_NODES
        .iter()
        .map(|x| (f * (x * maturity).exp(), (u.atm_vol + u.skew_slope * x).max(VOL_FLOOR)))
        .collect();
    VolSurface::with_extrapolation(f, maturity, (-domestic_rate * maturity).exp(), quotes, Extrapolation::LinearVariance)
}

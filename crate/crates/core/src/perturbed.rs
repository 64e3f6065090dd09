//! Perturbed joint and marginal densities and the perturbed copula.
//!
//! Everything here is evaluated with the drift-adjusted starting point set to
//! zero, so `xi` is a centred log-return over the horizon `tau`. Work is done in
//! standardized coordinates `u = xi / s` with `s = sigma * sqrt(tau)`; partial
//! derivatives of the Gaussian kernel are the kernel times Hermite-type
//! polynomials in `u`.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};
use crate::numerics::quadrature::{qk21, GL8};
use crate::numerics::{
    integrate_1d, integrate_2d, normal_cdf, normal_quantile, Interval, QuadratureSpec, Rect,
};

/// Half-width of the truncation domain in standard deviations.
pub const TRUNCATION: f64 = 10.0;
/// Largest admissible |rho|.
pub const RHO_MAX: f64 = 0.99;
/// Admissible normalizer band.
pub const NORMALIZER_BAND: (f64, f64) = (0.5, 2.0);
/// Perturbative guard: |R| must stay below this multiple of sigma^3.
pub const SKEW_GUARD: f64 = 5.0;

const CDF_NODES: usize = 2001;

/// One underlying's perturbed-marginal parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalParams {
    /// Effective volatility level per sqrt(year).
    pub sigma: f64,
    /// Skew coefficient per year^(3/2).
    pub r_skew: f64,
    /// Log-mean shift.
    pub beta: f64,
}

impl MarginalParams {
    pub fn new(sigma: f64, r_skew: f64, beta: f64) -> Result<Self> {
        let m = Self {
            sigma,
            r_skew,
            beta,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !self.r_skew.is_finite() || self.r_skew.abs() >= SKEW_GUARD * self.sigma.powi(3) {
            return Err(invalid(format!(
                "|R| = {:e} must be below {SKEW_GUARD}*sigma^3 = {:e}",
                self.r_skew.abs(),
                SKEW_GUARD * self.sigma.powi(3)
            )));
        }
        if !self.beta.is_finite() {
            return Err(invalid("beta must be finite"));
        }
        Ok(())
    }

    /// Same parameters with another log-mean.
    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }
}

/// Parameters of the perturbed joint density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointParams {
    pub m1: MarginalParams,
    pub m2: MarginalParams,
    pub rho: f64,
    pub tau: f64,
}

impl JointParams {
    /// Validates inputs. A correlation in `(0.99, 1]` in magnitude is clamped
    /// to `0.99`; anything beyond 1 is rejected.
    pub fn new(m1: MarginalParams, m2: MarginalParams, rho: f64, tau: f64) -> Result<Self> {
        m1.validate()?;
        m2.validate()?;
        Ok(Self {
            m1,
            m2,
            rho: clamp_rho(rho)?,
            tau: check_tau(tau)?,
        })
    }

    pub fn with_rho(self, rho: f64) -> Result<Self> {
        Ok(Self {
            rho: clamp_rho(rho)?,
            ..self
        })
    }

    #[inline]
    fn scales(&self) -> (f64, f64) {
        let st = self.tau.sqrt();
        (self.m1.sigma * st, self.m2.sigma * st)
    }
}

pub(crate) fn clamp_rho(rho: f64) -> Result<f64> {
    if rho.is_nan() || rho.abs() > 1.0 {
        return Err(invalid(format!("correlation {rho} outside [-1, 1]")));
    }
    Ok(rho.clamp(-RHO_MAX, RHO_MAX))
}

fn check_tau(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {tau}")));
    }
    Ok(tau)
}

/// Cross coefficients of the first-order correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCoeffs {
    pub r12: f64,
    pub r21: f64,
    pub q12: f64,
    pub q21: f64,
}

pub fn derive_cross_coeffs(p: &JointParams) -> CrossCoeffs {
    let (s1, s2) = (p.m1.sigma, p.m2.sigma);
    let (r1, r2) = (p.m1.r_skew, p.m2.r_skew);
    let k12 = s2 / s1;
    let k21 = s1 / s2;
    CrossCoeffs {
        r12: k12 * k12 * r1 + 2.0 * k21 * r2 * p.rho,
        r21: k21 * k21 * r2 + 2.0 * k12 * r1 * p.rho,
        q12: k12 * k12 * r1,
        q21: k21 * k21 * r2,
    }
}

/// Normalizing constants of the joint and the two marginal densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityNormalizers {
    pub w_joint: f64,
    pub w_marg1: f64,
    pub w_marg2: f64,
}

/// Zero-order joint density: bivariate normal with standard deviations
/// `sigma_i * sqrt(tau)` and correlation `rho`.
pub fn u0_density(xi1: f64, xi2: f64, p: &JointParams) -> f64 {
    let (s1, s2) = p.scales();
    let k = Kernel::new(xi1 / s1, xi2 / s2, p.rho);
    k.phi / (s1 * s2)
}

/// Partial derivatives of `u0` with respect to the starting point `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct U0Partials {
    pub d11: f64,
    pub d22: f64,
    pub d12: f64,
    pub d111: f64,
    pub d222: f64,
    pub d122: f64,
    pub d112: f64,
}

// Bivariate standard normal at (u1, u2) and the gradient terms of its exponent.
struct Kernel {
    phi: f64,
    v1: f64,
    v2: f64,
    c: f64,
    rho: f64,
}

impl Kernel {
    #[inline]
    fn new(u1: f64, u2: f64, rho: f64) -> Self {
        let c = 1.0 / (1.0 - rho * rho);
        let q = (u1 * u1 - 2.0 * rho * u1 * u2 + u2 * u2) * c;
        Self {
            phi: (-0.5 * q).exp() * c.sqrt() / (2.0 * PI),
            v1: (u1 - rho * u2) * c,
            v2: (u2 - rho * u1) * c,
            c,
            rho,
        }
    }

    // x-derivatives divided by the kernel, in standardized units. The kernel
    // depends on xi - x, so x-derivatives carry (-1)^order relative to
    // xi-derivatives.
    #[inline]
    fn ratios(&self) -> [f64; 7] {
        let (v1, v2, c, r) = (self.v1, self.v2, self.c, self.rho);
        [
            v1 * v1 - c,
            v2 * v2 - c,
            r * c + v1 * v2,
            v1 * v1 * v1 - 3.0 * c * v1,
            v2 * v2 * v2 - 3.0 * c * v2,
            2.0 * r * c * v2 + v1 * v2 * v2 - c * v1,
            2.0 * r * c * v1 + v1 * v1 * v2 - c * v2,
        ]
    }
}

/// Analytic second and third partials of `u0`.
pub fn u0_partials(xi1: f64, xi2: f64, p: &JointParams) -> U0Partials {
    let (s1, s2) = p.scales();
    let k = Kernel::new(xi1 / s1, xi2 / s2, p.rho);
    let u0 = k.phi / (s1 * s2);
    let r = k.ratios();
    U0Partials {
        d11: u0 * r[0] / (s1 * s1),
        d22: u0 * r[1] / (s2 * s2),
        d12: u0 * r[2] / (s1 * s2),
        d111: u0 * r[3] / (s1 * s1 * s1),
        d222: u0 * r[4] / (s2 * s2 * s2),
        d122: u0 * r[5] / (s1 * s2 * s2),
        d112: u0 * r[6] / (s1 * s1 * s2),
    }
}

// (sqrt(eps) * u1) / u0 as a polynomial in standardized coordinates.
#[inline]
fn correction_ratio(k: &Kernel, p: &JointParams, c: &CrossCoeffs, s1: f64, s2: f64) -> f64 {
    let r = k.ratios();
    let (r1, r2) = (p.m1.r_skew, p.m2.r_skew);
    let s11 = s1 * s1;
    let s22 = s2 * s2;
    let t = r1 * (r[3] / (s11 * s1) - r[0] / s11)
        + r2 * (r[4] / (s22 * s2) - r[1] / s22)
        + c.r12 * r[5] / (s1 * s22)
        + c.r21 * r[6] / (s11 * s2)
        - (c.q12 + c.q21) * r[2] / (s1 * s2);
    -p.tau * t
}

/// First-order correction `sqrt(eps) * u1` (signed; integrates to zero).
pub fn u1_correction(xi1: f64, xi2: f64, p: &JointParams, c: &CrossCoeffs) -> f64 {
    let (s1, s2) = p.scales();
    let k = Kernel::new(xi1 / s1, xi2 / s2, p.rho);
    k.phi / (s1 * s2) * correction_ratio(&k, p, c, s1, s2)
}

/// `1 + tanh(a)`, written to stay positive and accurate for large |a|.
#[inline]
pub fn one_plus_tanh(a: f64) -> f64 {
    2.0 / (1.0 + (-2.0 * a).exp())
}

/// `ln(1 + tanh(a))`.
#[inline]
pub fn ln_one_plus_tanh(a: f64) -> f64 {
    LN_2 - softplus(-2.0 * a)
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Zero-order marginal: normal density with mean 0 and standard deviation
/// `sigma * sqrt(tau)`.
pub fn marginal_p(xi: f64, m: &MarginalParams, tau: f64) -> f64 {
    let s = m.sigma * tau.sqrt();
    let u = xi / s;
    (-0.5 * u * u).exp() / (s * (2.0 * PI).sqrt())
}

fn check_band(which: &'static str, w: f64) -> Result<f64> {
    if !(w >= NORMALIZER_BAND.0 && w <= NORMALIZER_BAND.1) {
        return Err(Error::NormalizerOutOfBand { which, value: w });
    }
    Ok(w)
}

fn normalizer_spec_1d() -> QuadratureSpec {
    QuadratureSpec::new(5e-14, 1e-14, 4000)
}

fn normalizer_spec_2d() -> QuadratureSpec {
    QuadratureSpec::new(1e-13, 1e-13, 200_000)
}

#[derive(Debug)]
struct CdfTable {
    nodes: Vec<f64>,
    cum: Vec<f64>,
}

/// Perturbed marginal density of one underlying with cached normalizer and
/// cumulative table.
#[derive(Debug)]
pub struct PerturbedMarginal {
    params: MarginalParams,
    tau: f64,
    s: f64,
    w: f64,
    table: OnceLock<CdfTable>,
}

impl Clone for PerturbedMarginal {
    fn clone(&self) -> Self {
        Self {
            params: self.params,
            tau: self.tau,
            s: self.s,
            w: self.w,
            table: OnceLock::new(),
        }
    }
}

impl PerturbedMarginal {
    pub fn new(m: &MarginalParams, tau: f64) -> Result<Self> {
        m.validate()?;
        let tau = check_tau(tau)?;
        let s = m.sigma * tau.sqrt();
        let mut out = Self {
            params: *m,
            tau,
            s,
            w: 1.0,
            table: OnceLock::new(),
        };
        if m.r_skew != 0.0 {
            // W = 1 + integral of phi(u) tanh(h(u)) in standardized units.
            let (a, b) = (-TRUNCATION, TRUNCATION);
            let e = integrate_1d(
                |u| out.std_pdf(u) * out.tanh_arg_std(u).tanh(),
                Interval::new(a, b)?,
                &normalizer_spec_1d(),
            )?;
            out.w = check_band("marginal", 1.0 + e.value)?;
        }
        Ok(out)
    }

    pub fn params(&self) -> &MarginalParams {
        &self.params
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Standard deviation `sigma * sqrt(tau)` of the zero-order marginal.
    pub fn scale(&self) -> f64 {
        self.s
    }

    pub fn normalizer(&self) -> f64 {
        self.w
    }

    /// Truncation domain `[-10 s, 10 s]`.
    pub fn support(&self) -> Interval {
        Interval {
            lo: -TRUNCATION * self.s,
            hi: TRUNCATION * self.s,
        }
    }

    #[inline]
    fn std_pdf(&self, u: f64) -> f64 {
        (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
    }

    #[inline]
    fn tanh_arg_std(&self, u: f64) -> f64 {
        let s = self.s;
        let h3 = u * u * u - 3.0 * u;
        let h2 = u * u - 1.0;
        -self.tau * self.params.r_skew * (h3 / (s * s * s) - h2 / (s * s))
    }

    /// Argument of the tanh factor at `xi`.
    pub fn tanh_arg(&self, xi: f64) -> f64 {
        self.tanh_arg_std(xi / self.s)
    }

    /// Additive first-order marginal `p - tau R (d3 p - d2 p)` (may be negative).
    pub fn additive_density(&self, xi: f64) -> f64 {
        let u = xi / self.s;
        self.std_pdf(u) / self.s * (1.0 + self.tanh_arg_std(u))
    }

    pub fn density(&self, xi: f64) -> f64 {
        let u = xi / self.s;
        let p = self.std_pdf(u) / self.s;
        if self.params.r_skew == 0.0 {
            return p;
        }
        p * one_plus_tanh(self.tanh_arg_std(u)) / self.w
    }

    pub fn log_density(&self, xi: f64) -> f64 {
        let u = xi / self.s;
        let lp = -0.5 * u * u - 0.5 * (2.0 * PI).ln() - self.s.ln();
        if self.params.r_skew == 0.0 {
            return lp;
        }
        lp + ln_one_plus_tanh(self.tanh_arg_std(u)) - self.w.ln()
    }

    fn table(&self) -> &CdfTable {
        self.table.get_or_init(|| {
            let iv = self.support();
            let h = iv.width() / (CDF_NODES - 1) as f64;
            let nodes: Vec<f64> = (0..CDF_NODES)
                .map(|j| if j == CDF_NODES - 1 { iv.hi } else { iv.lo + j as f64 * h })
                .collect();
            let mut cum = Vec::with_capacity(CDF_NODES);
            cum.push(0.0);
            let mut acc = 0.0;
            let mut f = |x: f64| self.density(x);
            for w in nodes.windows(2) {
                acc += qk21(&mut f, w[0], w[1]).value;
                cum.push(acc);
            }
            CdfTable { nodes, cum }
        })
    }

    fn partial(&self, a: f64, x: f64) -> f64 {
        let c = 0.5 * (a + x);
        let h = 0.5 * (x - a);
        h * GL8
            .iter()
            .map(|(t, w)| w * self.density(c + h * t))
            .sum::<f64>()
    }

    /// Distribution function, built by integrating the density from the lower
    /// truncation bound.
    pub fn cdf(&self, xi: f64) -> f64 {
        if self.params.r_skew == 0.0 {
            return normal_cdf(xi / self.s);
        }
        let iv = self.support();
        if xi <= iv.lo {
            return 0.0;
        }
        if xi >= iv.hi {
            return 1.0;
        }
        let t = self.table();
        let h = iv.width() / (CDF_NODES - 1) as f64;
        let j = (((xi - iv.lo) / h) as usize).min(CDF_NODES - 2);
        (t.cum[j] + self.partial(t.nodes[j], xi)).clamp(0.0, 1.0)
    }

    /// Inverse of [`Self::cdf`].
    pub fn quantile(&self, z: f64) -> Result<f64> {
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::Domain {
                what: "probability",
                value: z,
            });
        }
        if self.params.r_skew == 0.0 {
            return Ok(self.s * normal_quantile(z)?);
        }
        let t = self.table();
        let last = CDF_NODES - 1;
        if z >= t.cum[last] {
            return Ok(t.nodes[last]);
        }
        // first j with cum[j+1] > z
        let j = t.cum.partition_point(|c| *c <= z).saturating_sub(1).min(last - 1);
        let (mut lo, mut hi) = (t.nodes[j], t.nodes[j + 1]);
        let (c_lo, c_hi) = (t.cum[j], t.cum[j + 1]);
        let frac = if c_hi > c_lo { (z - c_lo) / (c_hi - c_lo) } else { 0.5 };
        let mut x = lo + frac * (hi - lo);
        let tol = 1e-15 * self.s.max(x.abs());
        for _ in 0..60 {
            let g = c_lo + self.partial(t.nodes[j], x) - z;
            if g == 0.0 {
                break;
            }
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.density(x);
            let mut next = x - g / d;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= tol || hi - lo <= tol {
                x = next;
                break;
            }
            x = next;
        }
        Ok(x)
    }
}

/// The perturbed joint density with its marginals and normalizers.
#[derive(Debug, Clone)]
pub struct PerturbedCopula {
    params: JointParams,
    coeffs: CrossCoeffs,
    m1: PerturbedMarginal,
    m2: PerturbedMarginal,
    w: f64,
}

impl PerturbedCopula {
    /// Builds the model and computes the joint normalizer. Fails with
    /// `NormalizerOutOfBand` for non-perturbative parameters.
    pub fn new(p: &JointParams) -> Result<Self> {
        let p = JointParams::new(p.m1, p.m2, p.rho, p.tau)?;
        let m1 = PerturbedMarginal::new(&p.m1, p.tau)?;
        let m2 = PerturbedMarginal::new(&p.m2, p.tau)?;
        Self::with_marginals(p, m1, m2)
    }

    /// As [`Self::new`], reusing already built marginals (they must match `p`).
    pub fn with_marginals(p: JointParams, m1: PerturbedMarginal, m2: PerturbedMarginal) -> Result<Self> {
        if m1.params().sigma != p.m1.sigma
            || m1.params().r_skew != p.m1.r_skew
            || m2.params().sigma != p.m2.sigma
            || m2.params().r_skew != p.m2.r_skew
            || m1.tau() != p.tau
            || m2.tau() != p.tau
        {
            return Err(invalid("marginals do not match the joint parameters"));
        }
        let coeffs = derive_cross_coeffs(&p);
        let mut out = Self {
            params: p,
            coeffs,
            m1,
            m2,
            w: 1.0,
        };
        if !out.is_unskewed() {
            let (s1, s2) = p.scales();
            let t = TRUNCATION;
            let box_ = Rect::new(Interval::new(-t, t)?, Interval::new(-t, t)?);
            let e = integrate_2d(
                |a, b| {
                    let k = Kernel::new(a, b, p.rho);
                    k.phi * correction_ratio(&k, &p, &coeffs, s1, s2).tanh()
                },
                box_,
                &normalizer_spec_2d(),
            )?;
            out.w = check_band("joint", 1.0 + e.value)?;
        }
        Ok(out)
    }

    #[inline]
    fn is_unskewed(&self) -> bool {
        self.params.m1.r_skew == 0.0 && self.params.m2.r_skew == 0.0
    }

    pub fn params(&self) -> &JointParams {
        &self.params
    }

    pub fn coeffs(&self) -> &CrossCoeffs {
        &self.coeffs
    }

    pub fn marginal1(&self) -> &PerturbedMarginal {
        &self.m1
    }

    pub fn marginal2(&self) -> &PerturbedMarginal {
        &self.m2
    }

    pub fn normalizers(&self) -> DensityNormalizers {
        DensityNormalizers {
            w_joint: self.w,
            w_marg1: self.m1.normalizer(),
            w_marg2: self.m2.normalizer(),
        }
    }

    /// Perturbed joint density `u0 (1 + tanh(sqrt(eps) u1 / u0)) / W`.
    pub fn joint_density(&self, xi1: f64, xi2: f64) -> f64 {
        let (s1, s2) = self.params.scales();
        let k = Kernel::new(xi1 / s1, xi2 / s2, self.params.rho);
        let u0 = k.phi / (s1 * s2);
        if self.is_unskewed() {
            return u0;
        }
        u0 * one_plus_tanh(correction_ratio(&k, &self.params, &self.coeffs, s1, s2)) / self.w
    }

    /// Natural log of [`Self::joint_density`]; finite even where the density
    /// underflows because the tanh factor saturates.
    pub fn log_joint_density(&self, xi1: f64, xi2: f64) -> f64 {
        let (s1, s2) = self.params.scales();
        let k = Kernel::new(xi1 / s1, xi2 / s2, self.params.rho);
        let (a, b, rho) = (xi1 / s1, xi2 / s2, self.params.rho);
        let c = k.c;
        let l0 = -0.5 * (a * a - 2.0 * rho * a * b + b * b) * c + 0.5 * c.ln()
            - (2.0 * PI).ln()
            - (s1 * s2).ln();
        if self.is_unskewed() {
            return l0;
        }
        l0 + ln_one_plus_tanh(correction_ratio(&k, &self.params, &self.coeffs, s1, s2)) - self.w.ln()
    }

    /// Copula density at log-returns `(xi1, xi2)`: joint density over the
    /// product of the perturbed marginals, evaluated in log form.
    pub fn copula_density_at(&self, xi1: f64, xi2: f64) -> f64 {
        self.ln_copula_density_at(xi1, xi2).exp()
    }

    /// Log of [`copula_density_at`](Self::copula_density_at); finite where
    /// the density itself underflows.
    pub fn ln_copula_density_at(&self, xi1: f64, xi2: f64) -> f64 {
        let (s1, s2) = self.params.scales();
        let (a, b) = (xi1 / s1, xi2 / s2);
        let rho = self.params.rho;
        let c = 1.0 / (1.0 - rho * rho);
        // ln u0 - ln p1 - ln p2 for the bivariate normal.
        let mut l = 0.5 * c.ln() - 0.5 * c * rho * (rho * a * a - 2.0 * a * b + rho * b * b);
        if !self.is_unskewed() {
            let k = Kernel::new(a, b, rho);
            l += ln_one_plus_tanh(correction_ratio(&k, &self.params, &self.coeffs, s1, s2))
                - self.w.ln();
            l -= ln_one_plus_tanh(self.m1.tanh_arg_std(a)) - self.m1.w.ln();
            l -= ln_one_plus_tanh(self.m2.tanh_arg_std(b)) - self.m2.w.ln();
        }
        l
    }

    /// Copula density at uniform coordinates `(z1, z2)`.
    pub fn copula_density(&self, z1: f64, z2: f64) -> Result<f64> {
        let xi1 = self.m1.quantile(z1)?;
        let xi2 = self.m2.quantile(z2)?;
        Ok(self.copula_density_at(xi1, xi2))
    }
}

/// Perturbed marginal density (builds the normalizer on each call; prefer
/// [`PerturbedMarginal`] in loops).
pub fn marginal_density(xi: f64, m: &MarginalParams, tau: f64) -> Result<f64> {
    Ok(PerturbedMarginal::new(m, tau)?.density(xi))
}

pub fn marginal_cdf(xi: f64, m: &MarginalParams, tau: f64) -> Result<f64> {
    Ok(PerturbedMarginal::new(m, tau)?.cdf(xi))
}

pub fn marginal_quantile(z: f64, m: &MarginalParams, tau: f64) -> Result<f64> {
    PerturbedMarginal::new(m, tau)?.quantile(z)
}

pub fn joint_density(xi1: f64, xi2: f64, p: &JointParams) -> Result<f64> {
    Ok(PerturbedCopula::new(p)?.joint_density(xi1, xi2))
}

pub fn copula_density(z1: f64, z2: f64, p: &JointParams) -> Result<f64> {
    PerturbedCopula::new(p)?.copula_density(z1, z2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_1d, normal_pdf};
    use proptest::prelude::*;

    fn two_asset(rho: f64) -> JointParams {
        JointParams::new(
            MarginalParams::new(0.0892, 1.31e-4, 0.0).unwrap(),
            MarginalParams::new(0.0877, -1.29e-4, 0.0).unwrap(),
            rho,
            1.0,
        )
        .unwrap()
    }

    // Textbook bivariate normal density, written independently.
    fn bvn(x: f64, y: f64, sx: f64, sy: f64, rho: f64) -> f64 {
        let zx = x / sx;
        let zy = y / sy;
        let om = 1.0 - rho * rho;
        (-(zx * zx - 2.0 * rho * zx * zy + zy * zy) / (2.0 * om)).exp()
            / (2.0 * PI * sx * sy * om.sqrt())
    }

    #[test]
    fn cross_coeff_examples() {
        let z = JointParams::new(
            MarginalParams::new(0.1, 0.0, 0.0).unwrap(),
            MarginalParams::new(0.2, 0.0, 0.0).unwrap(),
            0.5,
            1.0,
        )
        .unwrap();
        let c = derive_cross_coeffs(&z);
        assert_eq!((c.r12, c.r21, c.q12, c.q21), (0.0, 0.0, 0.0, 0.0));

        let e = JointParams::new(
            MarginalParams::new(0.1, 2e-5, 0.0).unwrap(),
            MarginalParams::new(0.1, -3e-5, 0.0).unwrap(),
            0.0,
            1.0,
        )
        .unwrap();
        let c = derive_cross_coeffs(&e);
        assert_eq!((c.r12, c.r21, c.q12, c.q21), (2e-5, -3e-5, 2e-5, -3e-5));

        // Golden values (30-digit evaluation) for the calibrated example at rho = 0.6.
        let c = derive_cross_coeffs(&two_asset(0.6));
        let k = 0.0877 / 0.0892;
        assert!((c.q12 - k * k * 1.31e-4).abs() < 1e-20);
        assert!((c.r12 - (k * k * 1.31e-4 - 2.0 / k * 1.29e-4 * 0.6)).abs() < 1e-20);
        assert!((c.r12 - -3.081_644_755_079_945e-5).abs() < 1e-18, "{:e}", c.r12);
        assert!((c.r21 - 2.110_599_393_990_408e-5).abs() < 1e-18, "{:e}", c.r21);
        assert!((c.q12 - 1.266_312_149_349_474e-4).abs() < 1e-18, "{:e}", c.q12);
        assert!((c.q21 - -1.334_505_083_022_484e-4).abs() < 1e-18, "{:e}", c.q21);
    }

    #[test]
    fn u0_examples() {
        let unit = JointParams::new(
            MarginalParams::new(1.0, 0.0, 0.0).unwrap(),
            MarginalParams::new(1.0, 0.0, 0.0).unwrap(),
            0.0,
            1.0,
        )
        .unwrap();
        assert!((u0_density(0.0, 0.0, &unit) - 1.0 / (2.0 * PI)).abs() < 1e-17);
        assert!((u0_density(0.3, -1.2, &unit) / (normal_pdf(0.3) * normal_pdf(-1.2)) - 1.0).abs() < 1e-14);

        let p = JointParams::new(
            MarginalParams::new(0.2, 0.0, 0.0).unwrap(),
            MarginalParams::new(0.3, 0.0, 0.0).unwrap(),
            0.5,
            1.0,
        )
        .unwrap();
        let v = u0_density(0.1, -0.2, &p);
        assert!((v / bvn(0.1, -0.2, 0.2, 0.3, 0.5) - 1.0).abs() < 1e-14);
        assert!((v - 1.543_711_375_853_938_5).abs() < 1e-14, "{v}");
    }

    #[test]
    fn odd_partials_vanish_at_mode() {
        let d = u0_partials(0.0, 0.0, &two_asset(0.6));
        assert_eq!(d.d111, 0.0);
        assert_eq!(d.d222, 0.0);
        assert_eq!(d.d122, 0.0);
        assert_eq!(d.d112, 0.0);
    }

    #[test]
    fn partials_factorize_without_correlation() {
        let p = two_asset(0.0);
        let (s1, s2) = (0.0892, 0.0877);
        let (x1, x2) = (0.05, -0.13);
        let d = u0_partials(x1, x2, &p);
        // x-derivatives of the normal densities
        let (a, b) = (x1 / s1, x2 / s2);
        let dp1 = normal_pdf(a) / s1 * a / s1;
        let d2p2 = normal_pdf(b) / s2 * (b * b - 1.0) / (s2 * s2);
        assert!((d.d122 / (dp1 * d2p2) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn correction_is_linear_in_skews() {
        let mut p = two_asset(0.0);
        let c = derive_cross_coeffs(&p);
        let v = u1_correction(0.04, -0.1, &p, &c);
        p.m1.r_skew = -p.m1.r_skew;
        p.m2.r_skew = -p.m2.r_skew;
        let c2 = derive_cross_coeffs(&p);
        assert_eq!(u1_correction(0.04, -0.1, &p, &c2), -v);

        let z = two_asset(0.3);
        let mut z0 = z;
        z0.m1.r_skew = 0.0;
        z0.m2.r_skew = 0.0;
        assert_eq!(u1_correction(0.1, 0.1, &z0, &derive_cross_coeffs(&z0)), 0.0);
    }

    #[test]
    fn correction_integrates_to_zero() {
        let p = two_asset(0.6);
        let c = derive_cross_coeffs(&p);
        let (s1, s2) = p.scales();
        let r = Rect::new(
            Interval::new(-10.0 * s1, 10.0 * s1).unwrap(),
            Interval::new(-10.0 * s2, 10.0 * s2).unwrap(),
        );
        let e = integrate_2d(|a, b| u1_correction(a, b, &p, &c), r, &QuadratureSpec::new(1e-12, 1e-12, 50_000)).unwrap();
        assert!(e.value.abs() < 1e-8, "{:e}", e.value);
    }

    #[test]
    fn unskewed_reduces_to_gaussian() {
        let mut p = two_asset(0.6);
        p.m1.r_skew = 0.0;
        p.m2.r_skew = 0.0;
        let m = PerturbedCopula::new(&p).unwrap();
        assert_eq!(m.normalizers().w_joint, 1.0);
        assert_eq!(m.joint_density(0.02, -0.1), u0_density(0.02, -0.1, &p));
        let mp = PerturbedMarginal::new(&p.m1, 1.0).unwrap();
        assert_eq!(mp.density(0.07), marginal_p(0.07, &p.m1, 1.0));
        assert_eq!(mp.cdf(0.07), normal_cdf(0.07 / 0.0892));
        assert!((m.copula_density(0.5, 0.5).unwrap() - 1.25).abs() < 1e-14);
        let mut q = p;
        q.rho = 0.0;
        let ind = PerturbedCopula::new(&q).unwrap();
        assert!((ind.copula_density(0.2, 0.9).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn marginal_p_examples() {
        let m = MarginalParams::new(1.0, 0.0, 0.0).unwrap();
        assert!((marginal_p(0.0, &m, 1.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-17);
        let m = MarginalParams::new(0.3, 0.0, 0.0).unwrap();
        let s = 0.3 * 2f64.sqrt();
        let want = (-0.5 * (0.2 / s) * (0.2 / s)).exp() / (s * (2.0 * PI).sqrt());
        assert!((marginal_p(0.2, &m, 2.0) - want).abs() < 1e-15);
        let tot = integrate_1d(|x| marginal_p(x, &m, 2.0), Interval::new(-10.0 * s, 10.0 * s).unwrap(), &QuadratureSpec::one_d()).unwrap();
        assert!((tot.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn left_skew_for_positive_r() {
        let m = MarginalParams::new(0.0892, 1.31e-4, 0.0).unwrap();
        let pm = PerturbedMarginal::new(&m, 1.0).unwrap();
        let s = pm.scale();
        assert!(pm.density(-2.0 * s) > pm.density(2.0 * s));
        let flat = MarginalParams::new(0.0892, 0.0, 0.0).unwrap();
        assert!(pm.density(-3.0 * s) > marginal_p(-3.0 * s, &flat, 1.0));
        // mode to the right
        let mut best = (f64::MIN, 0.0);
        for i in -400..=400 {
            let x = i as f64 * s / 100.0;
            let d = pm.density(x);
            if d > best.0 {
                best = (d, x);
            }
        }
        assert!(best.1 > 0.0);
    }

    #[test]
    fn marginal_mass_and_cdf() {
        let m = MarginalParams::new(0.0892, 1.31e-4, 0.0).unwrap();
        let pm = PerturbedMarginal::new(&m, 1.0).unwrap();
        let iv = pm.support();
        let tot = integrate_1d(|x| pm.density(x), iv, &QuadratureSpec::new(1e-12, 1e-12, 1000)).unwrap();
        assert!((tot.value - 1.0).abs() < 1e-8);
        assert!((pm.cdf(iv.hi) - 1.0).abs() < 1e-10);
        assert!((pm.cdf(iv.hi - 1e-9) - 1.0).abs() < 1e-10);
        for z in [0.01, 0.25, 0.5, 0.75, 0.99] {
            let x = pm.quantile(z).unwrap();
            assert!((pm.cdf(x) - z).abs() < 1e-12, "z={z}");
        }
        assert!(pm.quantile(0.0).is_err());
        assert!(pm.quantile(1.0).is_err());
        // cdf derivative matches density
        let h = 1e-5;
        for x in [-0.2, -0.05, 0.0, 0.1] {
            let d = (pm.cdf(x + h) - pm.cdf(x - h)) / (2.0 * h);
            assert!((d - pm.density(x)).abs() < 1e-7);
        }
    }

    #[test]
    fn guard_and_rho_validation() {
        assert!(MarginalParams::new(0.1, 5.1e-3, 0.0).is_err());
        assert!(MarginalParams::new(0.1, 4.9e-3, 0.0).is_ok());
        assert!(MarginalParams::new(0.0, 0.0, 0.0).is_err());
        let m = MarginalParams::new(0.1, 0.0, 0.0).unwrap();
        assert_eq!(JointParams::new(m, m, 0.999, 1.0).unwrap().rho, 0.99);
        assert_eq!(JointParams::new(m, m, -1.0, 1.0).unwrap().rho, -0.99);
        assert!(JointParams::new(m, m, 1.01, 1.0).is_err());
        assert!(JointParams::new(m, m, f64::NAN, 1.0).is_err());
        assert!(JointParams::new(m, m, 0.0, 0.0).is_err());
    }

    #[test]
    fn joint_mass_and_positivity() {
        for rho in [-0.6, 0.0, 0.6] {
            let p = two_asset(rho);
            let m = PerturbedCopula::new(&p).unwrap();
            let (s1, s2) = p.scales();
            let r = Rect::new(
                Interval::new(-10.0 * s1, 10.0 * s1).unwrap(),
                Interval::new(-10.0 * s2, 10.0 * s2).unwrap(),
            );
            let e = integrate_2d(|a, b| m.joint_density(a, b), r, &QuadratureSpec::new(1e-10, 1e-10, 100_000)).unwrap();
            assert!((e.value - 1.0).abs() < 1e-6, "rho={rho} mass={}", e.value);
            for i in 0..=100 {
                for j in 0..=100 {
                    let a = (-8.0 + 0.16 * i as f64) * s1;
                    let b = (-8.0 + 0.16 * j as f64) * s2;
                    // positive in exact arithmetic; far corners underflow in f64
                    let l = m.log_joint_density(a, b);
                    assert!(l.is_finite());
                    assert!((l.exp() - m.joint_density(a, b)).abs() <= 1e-12 * m.joint_density(a, b).max(1e-300));
                }
            }
        }
    }

    #[test]
    fn swap_symmetry() {
        let p = two_asset(0.6);
        let q = JointParams::new(p.m2, p.m1, p.rho, p.tau).unwrap();
        let a = PerturbedCopula::new(&p).unwrap();
        let b = PerturbedCopula::new(&q).unwrap();
        for (x, y) in [(0.05, -0.1), (-0.2, 0.13), (0.0, 0.0), (0.25, 0.2)] {
            let (u, v) = (a.joint_density(x, y), b.joint_density(y, x));
            assert!((u / v - 1.0).abs() < 1e-12, "{u} {v}");
        }
    }

    #[test]
    fn copula_uniform_marginal_is_approximate() {
        // Exact only at additive order; the tanh factor leaves an O(1e-2)
        // departure for these parameters.
        let m = PerturbedCopula::new(&two_asset(0.6)).unwrap();
        for z1 in [0.1, 0.5, 0.9] {
            let e = integrate_1d(
                |z2| m.copula_density(z1, z2).unwrap(),
                Interval::new(1e-9, 1.0 - 1e-9).unwrap(),
                &QuadratureSpec::new(1e-7, 1e-7, 2000),
            )
            .unwrap();
            assert!((e.value - 1.0).abs() < 5e-2, "z1={z1} {}", e.value);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn log_copula_matches_ratio(x in -0.3f64..0.3, y in -0.3f64..0.3, rho in -0.9f64..0.9) {
            let p = two_asset(rho);
            let m = PerturbedCopula::new(&p).unwrap();
            let direct = m.log_joint_density(x, y) - m.marginal1().log_density(x) - m.marginal2().log_density(y);
            let logf = m.ln_copula_density_at(x, y);
            prop_assert!((direct - logf).abs() < 1e-10 * (1.0 + direct.abs()), "{direct} {logf}");
        }

        #[test]
        fn quantile_round_trip(z in 1e-6f64..0.999_999, r in -2e-4f64..2e-4) {
            let pm = PerturbedMarginal::new(&MarginalParams::new(0.09, r, 0.0).unwrap(), 1.0).unwrap();
            let x = pm.quantile(z).unwrap();
            prop_assert!((pm.cdf(x) - z).abs() < 1e-12);
        }

        #[test]
        fn one_plus_tanh_consistent(a in -30.0f64..30.0) {
            let v = one_plus_tanh(a);
            prop_assert!((0.0..=2.0).contains(&v));
            prop_assert!((v - (1.0 + a.tanh())).abs() < 1e-15);
            if v > 0.0 {
                prop_assert!((ln_one_plus_tanh(a) - v.ln()).abs() < 1e-12);
            }
        }
    }
}

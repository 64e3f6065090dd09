//! Quanto options on two underlyings by double integration against a copula
//! joined to the smile-implied marginals.
//!
//! The joint density is `c(F1(xi1), F2(xi2)) f1(xi1) f2(xi2)` with `fi`, `Fi`
//! the empirical density and distribution of `xi_i = ln S_i` read off each
//! smile. Integrals run over a tensor grid: each axis is partitioned once by
//! adaptively integrating its own marginal, and every segment carries the
//! GK21 nodes. The error estimate is the Kronrod-Gauss tensor difference.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::marketdata::{bs_price, OptionKind, VolSurface};
use crate::numerics::quadrature::gk21;
use crate::numerics::{adaptive_partition, brent, normal_quantile, Interval, QuadratureSpec, RootSpec};
use crate::perturbed::{clamp_rho, JointParams, PerturbedCopula, PerturbedMarginal};

/// Integration half-width in empirical standard deviations.
pub const RANGE_STD: f64 = 10.0;
/// Uniform coordinates are kept within `[Z_CLAMP, 1 - Z_CLAMP]`.
pub const Z_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantoSpec {
    pub strike: f64,
    pub maturity: f64,
    /// Discount factor of the payment currency to maturity.
    pub discount: f64,
    pub kind: OptionKind,
}

impl QuantoSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(invalid("strike must be positive"));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(invalid("maturity must be positive"));
        }
        if !(self.discount > 0.0 && self.discount.is_finite()) {
            return Err(invalid("discount factor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CopulaChoice {
    Gaussian { rho: f64 },
    Perturbed(JointParams),
}

impl CopulaChoice {
    pub fn rho(&self) -> f64 {
        match self {
            CopulaChoice::Gaussian { rho } => *rho,
            CopulaChoice::Perturbed(p) => p.rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceResult {
    /// Present value per unit notional (the notional is the strike).
    pub pv: f64,
    pub quad_error: f64,
    pub copula_used: CopulaChoice,
    /// E[S_T X_T], undiscounted.
    pub quanto_forward: f64,
}

/// Gaussian copula density at uniform coordinates.
pub fn gaussian_copula_density(z1: f64, z2: f64, rho: f64) -> Result<f64> {
    let rho = clamp_rho(rho)?;
    let (a, b) = (normal_quantile(z1)?, normal_quantile(z2)?);
    Ok(gaussian_log_copula(a, b, rho).exp())
}

#[inline]
fn gaussian_log_copula(a: f64, b: f64, rho: f64) -> f64 {
    let c = 1.0 / (1.0 - rho * rho);
    0.5 * c.ln() - 0.5 * c * rho * (rho * a * a - 2.0 * a * b + rho * b * b)
}

/// A copula ready for evaluation (the perturbed normalizers are computed once).
#[derive(Debug, Clone)]
pub enum Copula {
    Gaussian { rho: f64 },
    Perturbed(Box<PerturbedCopula>),
}

impl Copula {
    pub fn new(choice: &CopulaChoice) -> Result<Self> {
        Ok(match choice {
            CopulaChoice::Gaussian { rho } => Copula::Gaussian { rho: clamp_rho(*rho)? },
            CopulaChoice::Perturbed(p) => Copula::Perturbed(Box::new(PerturbedCopula::new(p)?)),
        })
    }

    pub fn choice(&self) -> CopulaChoice {
        match self {
            Copula::Gaussian { rho } => CopulaChoice::Gaussian { rho: *rho },
            Copula::Perturbed(c) => CopulaChoice::Perturbed(*c.params()),
        }
    }

    pub fn density(&self, z1: f64, z2: f64) -> Result<f64> {
        match self {
            Copula::Gaussian { rho } => gaussian_copula_density(z1, z2, *rho),
            Copula::Perturbed(c) => c.copula_density(z1, z2),
        }
    }

    // Per-axis coordinates in which the copula is evaluated.
    fn scores(&self, z: &[f64], axis: usize) -> Result<Vec<f64>> {
        match self {
            Copula::Gaussian { .. } => z.iter().map(|&z| normal_quantile(clamp_z(z))).collect(),
            Copula::Perturbed(c) => {
                let m: &PerturbedMarginal = if axis == 0 { c.marginal1() } else { c.marginal2() };
                z.iter().map(|&z| m.quantile(clamp_z(z))).collect()
            }
        }
    }

    #[inline]
    fn log_density_at(&self, a: f64, b: f64) -> f64 {
        match self {
            Copula::Gaussian { rho } => gaussian_log_copula(a, b, *rho),
            Copula::Perturbed(c) => c.copula_density_at(a, b).ln(),
        }
    }
}

#[inline]
fn clamp_z(z: f64) -> f64 {
    z.clamp(Z_CLAMP, 1.0 - Z_CLAMP)
}

/// Joint density of `(ln S1, ln S2)` under `copula` and the smile marginals.
pub fn joint_pdf(xi1: f64, xi2: f64, copula: &Copula, s1: &VolSurface, s2: &VolSurface) -> Result<f64> {
    let (f1, f2) = (s1.empirical_density(xi1), s2.empirical_density(xi2));
    let c = copula.density(clamp_z(s1.empirical_cdf(xi1)), clamp_z(s2.empirical_cdf(xi2)))?;
    Ok(c * f1 * f2)
}

/// Quadrature nodes along one axis with the marginal tabulated on them.
#[derive(Debug, Clone)]
pub struct Axis {
    pub x: Vec<f64>,
    /// Kronrod weights (segment half-width included).
    pub wk: Vec<f64>,
    /// Embedded Gauss weights, zero off the Gauss nodes.
    pub wg: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    pub range: Interval,
}

impl Axis {
    /// Nodes over the empirical mean +/- 10 standard deviations, partitioned
    /// to resolve the marginal and its exponential moment.
    pub fn build(surface: &VolSurface, breaks: &[f64]) -> Result<Self> {
        let mom = surface.empirical_moments()?;
        let range = Interval::new(mom.mean - RANGE_STD * mom.std, mom.mean + RANGE_STD * mom.std)?;
        let mut br: Vec<f64> = surface.quotes.iter().map(|(k, _)| k.ln()).collect();
        br.push(surface.forward.ln());
        br.extend_from_slice(breaks);
        let scale = surface.forward;
        let segs = adaptive_partition(
            |x| surface.empirical_density(x) * (1.0 + x.exp() / scale),
            range,
            &br,
            &QuadratureSpec::new(1e-10, 1e-9, 2000),
        )?;
        let rule = gk21();
        let n = segs.len() * rule.nodes.len();
        let (mut x, mut wk, mut wg) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for s in &segs {
            let (c, h) = (s.mid(), 0.5 * s.width());
            for i in 0..rule.nodes.len() {
                x.push(c + h * rule.nodes[i]);
                wk.push(h * rule.kronrod[i]);
                wg.push(h * rule.gauss[i]);
            }
        }
        let density = x.iter().map(|&v| surface.empirical_density(v)).collect();
        let cdf = x.iter().map(|&v| surface.empirical_cdf(v)).collect();
        Ok(Self {
            x,
            wk,
            wg,
            density,
            cdf,
            range,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Tensor grid for one pair of smiles, reusable across copulas.
#[derive(Debug, Clone)]
pub struct QuantoGrid {
    pub axis1: Axis,
    pub axis2: Axis,
    pub forward1: f64,
    pub forward2: f64,
}

/// Kronrod and Gauss tensor sums of several integrands at once.
#[derive(Debug, Clone, Copy)]
struct Sums<const N: usize> {
    k: [f64; N],
    g: [f64; N],
}

impl QuantoGrid {
    /// Grid for `surface1` (the asset) and `surface2` (the quanto factor),
    /// with the first axis split at each of `strikes`.
    pub fn new(surface1: &VolSurface, surface2: &VolSurface, strikes: &[f64]) -> Result<Self> {
        if surface1.maturity != surface2.maturity {
            return Err(Error::MaturityMismatch {
                first: surface1.maturity,
                second: surface2.maturity,
            });
        }
        let br: Vec<f64> = strikes.iter().map(|k| k.ln()).collect();
        Ok(Self {
            axis1: Axis::build(surface1, &br)?,
            axis2: Axis::build(surface2, &[])?,
            forward1: surface1.forward,
            forward2: surface2.forward,
        })
    }

    fn tensor<const N: usize, G>(&self, copula: &Copula, g: G) -> Result<Sums<N>>
    where
        G: Fn(f64, f64) -> [f64; N] + Sync,
    {
        let a1 = copula.scores(&self.axis1.cdf, 0)?;
        let a2 = copula.scores(&self.axis2.cdf, 1)?;
        let (ax1, ax2) = (&self.axis1, &self.axis2);
        let rows: Vec<Sums<N>> = (0..ax1.len())
            .into_par_iter()
            .map(|i| {
                let mut row = Sums { k: [0.0; N], g: [0.0; N] };
                let f1 = ax1.density[i];
                if f1 == 0.0 {
                    return row;
                }
                let mut rk = [0.0; N];
                let mut rg = [0.0; N];
                for j in 0..ax2.len() {
                    let f2 = ax2.density[j];
                    if f2 == 0.0 {
                        continue;
                    }
                    let v = g(ax1.x[i], ax2.x[j]);
                    if v.iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    let w = copula.log_density_at(a1[i], a2[j]).exp() * f1 * f2;
                    for n in 0..N {
                        rk[n] += ax2.wk[j] * v[n] * w;
                        rg[n] += ax2.wg[j] * v[n] * w;
                    }
                }
                for n in 0..N {
                    row.k[n] = ax1.wk[i] * rk[n];
                    row.g[n] = ax1.wg[i] * rg[n];
                }
                row
            })
            .collect();
        let mut out = Sums { k: [0.0; N], g: [0.0; N] };
        for r in rows {
            for n in 0..N {
                out.k[n] += r.k[n];
                out.g[n] += r.g[n];
            }
        }
        Ok(out)
    }

    /// Integral of `g(xi1, xi2)` against the joint density, with its error estimate.
    pub fn integrate<G>(&self, copula: &Copula, g: G) -> Result<(f64, f64)>
    where
        G: Fn(f64, f64) -> f64 + Sync,
    {
        let s = self.tensor(copula, |a, b| [g(a, b)])?;
        Ok((s.k[0], (s.k[0] - s.g[0]).abs()))
    }

    /// E[S1 S2] under the copula.
    pub fn quanto_forward(&self, copula: &Copula) -> Result<f64> {
        Ok(self.tensor(copula, |a, b| [(a + b).exp()])?.k[0])
    }

    pub fn price(&self, spec: &QuantoSpec, copula: &Copula) -> Result<PriceResult> {
        spec.validate()?;
        let k = spec.strike;
        let w = match spec.kind {
            OptionKind::Call => 1.0,
            OptionKind::Put => -1.0,
        };
        let s = self.tensor(copula, |a, b| {
            let e2 = b.exp();
            [(w * (a.exp() - k)).max(0.0) * e2, (a + b).exp()]
        })?;
        let scale = spec.discount / k;
        Ok(PriceResult {
            pv: s.k[0] * scale,
            quad_error: (s.k[0] - s.g[0]).abs() * scale,
            copula_used: copula.choice(),
            quanto_forward: s.k[1],
        })
    }
}

/// Quanto option priced by double integration.
pub fn price_quanto(
    spec: &QuantoSpec,
    copula: &CopulaChoice,
    surface_s: &VolSurface,
    surface_x: &VolSurface,
) -> Result<PriceResult> {
    spec.validate()?;
    if spec.maturity != surface_s.maturity {
        return Err(Error::MaturityMismatch {
            first: spec.maturity,
            second: surface_s.maturity,
        });
    }
    let grid = QuantoGrid::new(surface_s, surface_x, &[spec.strike])?;
    grid.price(spec, &Copula::new(copula)?)
}

/// E[S X] under the copula and the smile marginals.
pub fn quanto_forward(copula: &CopulaChoice, surface_s: &VolSurface, surface_x: &VolSurface) -> Result<f64> {
    QuantoGrid::new(surface_s, surface_x, &[])?.quanto_forward(&Copula::new(copula)?)
}

/// Joint-lognormal quanto price `DF E[(w (S - K))^+ X]`.
#[allow(clippy::too_many_arguments)]
pub fn closed_form_quanto(
    forward_s: f64,
    forward_x: f64,
    sigma_s: f64,
    sigma_x: f64,
    rho: f64,
    tau: f64,
    strike: f64,
    discount: f64,
    kind: OptionKind,
) -> f64 {
    // Under the measure with X as numeraire the forward of S is shifted by
    // exp(rho sigma_s sigma_x tau).
    let adj = (rho * sigma_s * sigma_x * tau).exp();
    forward_x * bs_price(forward_s * adj, strike, tau, sigma_s, discount, kind)
}

/// Correlation at which the perturbed copula reproduces `target` as the
/// quanto forward. The marginals of `template` are kept; its rho is ignored.
pub fn imply_perturbed_corr(
    target: f64,
    template: &JointParams,
    surface_s: &VolSurface,
    surface_x: &VolSurface,
) -> Result<f64> {
    let grid = QuantoGrid::new(surface_s, surface_x, &[])?;
    imply_perturbed_corr_on(&grid, target, template)
}

/// As [`imply_perturbed_corr`] on a prebuilt grid.
pub fn imply_perturbed_corr_on(grid: &QuantoGrid, target: f64, template: &JointParams) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(invalid("target quanto forward must be positive"));
    }
    let base = PerturbedCopula::new(template)?;
    // Scores depend on the marginals only, so they are computed once.
    let a1 = Copula::Perturbed(Box::new(base.clone())).scores(&grid.axis1.cdf, 0)?;
    let a2 = Copula::Perturbed(Box::new(base.clone())).scores(&grid.axis2.cdf, 1)?;
    let forward_at = |rho: f64| -> Result<f64> {
        let p = template.with_rho(rho)?;
        let c = PerturbedCopula::with_marginals(p, base.marginal1().clone(), base.marginal2().clone())?;
        let (ax1, ax2) = (&grid.axis1, &grid.axis2);
        let rows: Vec<f64> = (0..ax1.len())
            .into_par_iter()
            .map(|i| {
                let e1 = ax1.x[i].exp() * ax1.density[i];
                let mut r = 0.0;
                for j in 0..ax2.len() {
                    r += ax2.wk[j] * ax2.x[j].exp() * ax2.density[j] * c.copula_density_at(a1[i], a2[j]);
                }
                ax1.wk[i] * e1 * r
            })
            .collect();
        Ok(rows.iter().sum())
    };
    let mut err = None;
    let spec = RootSpec {
        x_tol: 1e-12,
        f_tol: 1e-12 * target,
        max_iter: 200,
    };
    let rho = brent(
        |rho| match forward_at(rho) {
            Ok(f) => f - target,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        },
        -crate::perturbed::RHO_MAX,
        crate::perturbed::RHO_MAX,
        &spec,
    );
    if let Some(e) = err {
        return Err(e);
    }
    rho
}

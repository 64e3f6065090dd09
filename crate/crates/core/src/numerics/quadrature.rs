//! Adaptive Gauss-Kronrod quadrature in one and two dimensions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{invalid, Error, Result};

/// Tolerances and subdivision budget for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl QuadratureSpec {
    pub const fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Self {
        Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        }
    }

    /// Default for one-dimensional integrals.
    pub const fn one_d() -> Self {
        Self::new(1e-10, 1e-12, 2000)
    }

    /// Default for two-dimensional integrals.
    pub const fn two_d() -> Self {
        Self::new(1e-8, 1e-10, 20_000)
    }

    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(invalid("quadrature tolerances must be strictly positive"));
        }
        if self.max_subdivisions == 0 {
            return Err(invalid("max_subdivisions must be at least 1"));
        }
        Ok(())
    }

    #[inline]
    fn satisfied(&self, value: f64, err: f64) -> bool {
        err <= self.abs_tol.max(self.rel_tol * value.abs())
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::one_d()
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || !(lo < hi) {
            return Err(invalid(format!("interval [{lo}, {hi}] must be finite with lo < hi")));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: Interval,
    pub y: Interval,
}

impl Rect {
    pub fn new(x: Interval, y: Interval) -> Self {
        Self { x, y }
    }
}

/// Integral estimate with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

// 21-point Kronrod abscissae; odd indices are the 10-point Gauss nodes.
const XGK21: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WG10: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];
const WGK21: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// 15-point Kronrod abscissae; odd indices are the 7-point Gauss nodes.
const XGK15: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WG7: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];
const WGK15: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// A Gauss-Kronrod node set expanded to full symmetric form on [-1, 1].
///
/// `gauss` holds the Gauss weight for each Kronrod node (zero where the node is
/// not a Gauss node).
#[derive(Debug, Clone)]
pub struct NodeSet {
    pub nodes: Vec<f64>,
    pub kronrod: Vec<f64>,
    pub gauss: Vec<f64>,
}

fn expand(x: &[f64], wk: &[f64], wg: &[f64]) -> NodeSet {
    let n = x.len();
    let mut nodes = Vec::with_capacity(2 * n - 1);
    let mut kronrod = Vec::with_capacity(2 * n - 1);
    let mut gauss = Vec::with_capacity(2 * n - 1);
    let gw = |j: usize| if j % 2 == 1 { wg[j / 2] } else { 0.0 };
    for j in 0..n - 1 {
        nodes.push(-x[j]);
        kronrod.push(wk[j]);
        gauss.push(gw(j));
    }
    nodes.push(0.0);
    kronrod.push(wk[n - 1]);
    // For 2n-1 = 21 the centre is not a Gauss node; for 15 it is.
    gauss.push(if (n - 1) % 2 == 1 { wg[wg.len() - 1] } else { 0.0 });
    for j in (0..n - 1).rev() {
        nodes.push(x[j]);
        kronrod.push(wk[j]);
        gauss.push(gw(j));
    }
    NodeSet {
        nodes,
        kronrod,
        gauss,
    }
}

/// The 21-point Kronrod rule with its embedded 10-point Gauss rule.
pub fn gk21() -> NodeSet {
    expand(&XGK21, &WGK21, &WG10)
}

/// The 15-point Kronrod rule with its embedded 7-point Gauss rule.
pub fn gk15() -> NodeSet {
    expand(&XGK15, &WGK15, &WG7)
}

#[inline]
fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut e = err.abs();
    if resasc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / resasc).powf(1.5);
        e = if scale < 1.0 { resasc * scale } else { resasc };
    }
    let floor = 50.0 * f64::EPSILON * resabs;
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && floor > e {
        e = floor;
    }
    e
}

/// One application of the GK21 rule on `[a, b]`.
pub fn qk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK21[10];
    let mut rg = 0.0;
    let mut resabs = rk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = h * XGK21[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        rk += WGK21[j] * (f1 + f2);
        resabs += WGK21[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            rg += WG10[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * rk;
    let mut resasc = WGK21[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK21[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let hab = h.abs();
    Estimate {
        value: rk * h,
        error: rescale_error((rk - rg) * h, resabs * hab, resasc * hab),
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

fn run_adaptive<F: FnMut(f64) -> f64>(
    f: &mut F,
    points: &[f64],
    spec: &QuadratureSpec,
) -> Result<(Estimate, Vec<Segment>)> {
    spec.validate()?;
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    for w in points.windows(2) {
        let e = qk21(f, w[0], w[1]);
        value += e.value;
        error += e.error;
        heap.push(Segment {
            lo: w[0],
            hi: w[1],
            value: e.value,
            error: e.error,
        });
    }
    let mut subdivisions = heap.len();
    while !spec.satisfied(value, error) {
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::NonConvergence {
                value,
                error,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            // Interval cannot be split further in floating point.
            return Err(Error::NonConvergence {
                value,
                error,
                subdivisions,
            });
        }
        let left = qk21(f, worst.lo, mid);
        let right = qk21(f, mid, worst.hi);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(Segment {
            lo: worst.lo,
            hi: mid,
            value: left.value,
            error: left.error,
        });
        heap.push(Segment {
            lo: mid,
            hi: worst.hi,
            value: right.value,
            error: right.error,
        });
        subdivisions += 1;
    }
    // Re-sum in a fixed order so the result does not carry the running sum's drift.
    let mut segs = heap.into_vec();
    segs.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let value = segs.iter().map(|s| s.value).sum();
    let error = segs.iter().map(|s| s.error).sum();
    Ok((Estimate { value, error }, segs))
}

/// Adaptive integral of `f` over `interval`.
pub fn integrate_1d<F: FnMut(f64) -> f64>(
    mut f: F,
    interval: Interval,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    run_adaptive(&mut f, &[interval.lo, interval.hi], spec).map(|r| r.0)
}

/// Adaptive integral with user-supplied interior breakpoints (kinks, steps).
///
/// Breakpoints outside the open interval are ignored.
pub fn integrate_1d_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    interval: Interval,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    let pts = breakpoints(interval, breaks);
    run_adaptive(&mut f, &pts, spec).map(|r| r.0)
}

fn breakpoints(interval: Interval, breaks: &[f64]) -> Vec<f64> {
    let mut pts = vec![interval.lo];
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| *b > interval.lo && *b < interval.hi)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(interval.hi);
    pts
}

/// The partition produced by adaptively integrating `f`, sorted by position.
///
/// Useful for building a fixed grid that resolves a reference function and can
/// then be reused for related integrands.
pub fn adaptive_partition<F: FnMut(f64) -> f64>(
    mut f: F,
    interval: Interval,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<Interval>> {
    let pts = breakpoints(interval, breaks);
    let (_, segs) = run_adaptive(&mut f, &pts, spec)?;
    Ok(segs
        .into_iter()
        .map(|s| Interval { lo: s.lo, hi: s.hi })
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    rect: Rect,
    value: f64,
    error: f64,
    split_x: bool,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.rect.x.lo.total_cmp(&self.rect.x.lo))
            .then_with(|| other.rect.y.lo.total_cmp(&self.rect.y.lo))
    }
}

fn cell_rule<F: FnMut(f64, f64) -> f64>(f: &mut F, rule: &NodeSet, rect: Rect) -> Cell {
    let n = rule.nodes.len();
    let (cx, hx) = (rect.x.mid(), 0.5 * rect.x.width());
    let (cy, hy) = (rect.y.mid(), 0.5 * rect.y.width());
    let mut kk = 0.0;
    let mut gk = 0.0; // Gauss in x, Kronrod in y
    let mut kg = 0.0; // Kronrod in x, Gauss in y
    let mut resabs = 0.0;
    let mut vals = vec![0.0; n * n];
    for i in 0..n {
        let x = cx + hx * rule.nodes[i];
        for j in 0..n {
            let y = cy + hy * rule.nodes[j];
            let v = f(x, y);
            vals[i * n + j] = v;
            kk += rule.kronrod[i] * rule.kronrod[j] * v;
            gk += rule.gauss[i] * rule.kronrod[j] * v;
            kg += rule.kronrod[i] * rule.gauss[j] * v;
            resabs += rule.kronrod[i] * rule.kronrod[j] * v.abs();
        }
    }
    let area = hx * hy;
    let mean = 0.25 * kk;
    let mut resasc = 0.0;
    for i in 0..n {
        for j in 0..n {
            resasc += rule.kronrod[i] * rule.kronrod[j] * (vals[i * n + j] - mean).abs();
        }
    }
    let ax = area.abs();
    let ex = rescale_error((kk - gk) * area, resabs * ax, resasc * ax);
    let ey = rescale_error((kk - kg) * area, resabs * ax, resasc * ax);
    Cell {
        rect,
        value: kk * area,
        error: ex + ey,
        split_x: ex >= ey,
    }
}

/// Adaptive integral of `f` over `rect` using a tensor GK15 rule per cell.
pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    rect: Rect,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    integrate_2d_with_breaks(&mut f, rect, &[], &[], spec)
}

/// As [`integrate_2d`] with interior breakpoints along each axis.
pub fn integrate_2d_with_breaks<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    rect: Rect,
    x_breaks: &[f64],
    y_breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    spec.validate()?;
    let rule = gk15();
    let xs = breakpoints(rect.x, x_breaks);
    let ys = breakpoints(rect.y, y_breaks);
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    for wx in xs.windows(2) {
        for wy in ys.windows(2) {
            let r = Rect::new(
                Interval { lo: wx[0], hi: wx[1] },
                Interval { lo: wy[0], hi: wy[1] },
            );
            let c = cell_rule(&mut f, &rule, r);
            value += c.value;
            error += c.error;
            heap.push(c);
        }
    }
    let mut subdivisions = heap.len();
    while !spec.satisfied(value, error) {
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::NonConvergence {
                value,
                error,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let (a, b) = if worst.split_x {
            let m = worst.rect.x.mid();
            (
                Rect::new(Interval { lo: worst.rect.x.lo, hi: m }, worst.rect.y),
                Rect::new(Interval { lo: m, hi: worst.rect.x.hi }, worst.rect.y),
            )
        } else {
            let m = worst.rect.y.mid();
            (
                Rect::new(worst.rect.x, Interval { lo: worst.rect.y.lo, hi: m }),
                Rect::new(worst.rect.x, Interval { lo: m, hi: worst.rect.y.hi }),
            )
        };
        let ca = cell_rule(&mut f, &rule, a);
        let cb = cell_rule(&mut f, &rule, b);
        value += ca.value + cb.value - worst.value;
        error += ca.error + cb.error - worst.error;
        heap.push(ca);
        heap.push(cb);
        subdivisions += 1;
    }
    let mut cells = heap.into_vec();
    cells.sort_by(|a, b| {
        a.rect
            .x
            .lo
            .total_cmp(&b.rect.x.lo)
            .then_with(|| a.rect.y.lo.total_cmp(&b.rect.y.lo))
    });
    Ok(Estimate {
        value: cells.iter().map(|c| c.value).sum(),
        error: cells.iter().map(|c| c.error).sum(),
    })
}

/// Eight-point Gauss-Legendre rule on [-1, 1] (nodes, weights), for cheap
/// fixed-order integrals over already resolved segments.
pub const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

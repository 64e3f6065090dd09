//! Standard normal distribution functions.

use crate::error::{Error, Result};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_868_f64;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, accurate to a few ulps in both tails.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of [`normal_cdf`].
///
/// Acklam's rational approximation followed by Halley refinement against
/// `normal_cdf`. The upper half is obtained by reflection, which is exact
/// because `1 - p` is representable for `p >= 0.5`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            what: "probability",
            value: p,
        });
    }
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

// p in (0, 0.5]
fn lower_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let mut x = acklam(p);
    for _ in 0..3 {
        let e = normal_cdf(x) - p;
        let u = e / normal_pdf(x);
        if !u.is_finite() {
            break;
        }
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// erf via the non-alternating series erf(x) = 2/sqrt(pi) e^{-x^2} sum 2^n x^{2n+1} / (2n+1)!!
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-18 * sum.abs() {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    }

    /// Lower tail via the Laplace continued fraction for the Mills ratio.
    fn lower_tail_cf(x: f64) -> f64 {
        // x < 0; Phi(x) = phi(x) / (|x| + 1/(|x| + 2/(|x| + 3/(...))))
        let a = -x;
        let mut frac = a;
        for k in (1..200).rev() {
            frac = a + k as f64 / frac;
        }
        normal_pdf(a) / frac
    }

    fn cdf_oracle(x: f64) -> f64 {
        if x < -5.0 {
            lower_tail_cf(x)
        } else {
            0.5 + 0.5 * erf_series(x * FRAC_1_SQRT_2)
        }
    }

    #[test]
    fn cdf_matches_series_oracle() {
        let mut x = -5.0;
        while x <= 5.0 {
            let err = (normal_cdf(x) - cdf_oracle(x)).abs();
            assert!(err < 1e-15, "x={x} err={err:e}");
            x += 0.0625;
        }
        for x in [-6.0, -8.0, -12.0, -20.0] {
            let rel = (normal_cdf(x) / cdf_oracle(x) - 1.0).abs();
            assert!(rel < 1e-13, "x={x} rel={rel:e}");
        }
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-7);
        assert!((normal_cdf(1.959964) - cdf_oracle(1.959964)).abs() < 1e-15);
        let t = normal_cdf(-40.0);
        assert!((0.0..=1e-300).contains(&t));
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn cdf_symmetry(x in -38.0f64..38.0) {
            prop_assert!((normal_cdf(-x) - (1.0 - normal_cdf(x))).abs() < 1e-15);
        }

        #[test]
        fn cdf_monotone(x in -30.0f64..30.0, dx in 0.0f64..1.0) {
            prop_assert!(normal_cdf(x + dx) >= normal_cdf(x));
        }

        #[test]
        fn quantile_inverts_cdf(p in 1e-300f64..1.0) {
            prop_assume!(p < 1.0);
            let x = normal_quantile(p).unwrap();
            prop_assert!((normal_cdf(x) - p).abs() < 1e-12);
        }

        #[test]
        fn quantile_antisymmetric(p in 1e-12f64..0.999_999_999_999) {
            let s = normal_quantile(p).unwrap() + normal_quantile(1.0 - p).unwrap();
            prop_assert!(s.abs() < 1e-12, "sum {}", s);
        }
    }
}

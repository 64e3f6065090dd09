//! Bracketing root finder (Brent's method with bisection fallback).

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSpec {
    /// Stop once the bracket is narrower than this.
    pub x_tol: f64,
    /// Stop once |f| is at most this.
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for RootSpec {
    fn default() -> Self {
        Self {
            x_tol: 1e-14,
            f_tol: 0.0,
            max_iter: 200,
        }
    }
}

/// Root of `f` in `[lo, hi]`; stops when `|f(root)| <= tol` or the bracket is
/// narrower than `tol`.
pub fn find_root<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    brent(
        f,
        lo,
        hi,
        &RootSpec {
            x_tol: tol,
            f_tol: tol,
            max_iter: 500,
        },
    )
}

/// Brent's method. Returns `NoBracket` when `f(lo)` and `f(hi)` share a sign.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, spec: &RootSpec) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(invalid(format!("invalid bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(invalid("objective is NaN at bracket end"));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoBracket {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..spec.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * spec.x_tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= spec.f_tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if fb.is_nan() {
            return Err(invalid(format!("objective is NaN at {b}")));
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal::normal_cdf;

    #[test]
    fn examples() {
        let r = find_root(|x| x * x - 4.0, 0.0, 10.0, 1e-14).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        let r = find_root(|x| normal_cdf(x) - 0.5, -5.0, 5.0, 1e-15).unwrap();
        assert!(r.abs() < 1e-12);
        let r = find_root(|x| normal_cdf(x) - 0.975, -5.0, 5.0, 1e-16).unwrap();
        assert!((r - 1.959_963_984_540_054).abs() < 1e-10);
    }

    #[test]
    fn no_bracket() {
        let r = find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12);
        assert!(matches!(r, Err(Error::NoBracket { .. })));
    }

    #[test]
    fn flat_tail_objective() {
        // Nearly flat objective away from the root; bisection safeguard must still converge.
        let r = find_root(|x: f64| (x - 3.0).powi(9), -10.0, 10.0, 1e-12).unwrap();
        assert!((r - 3.0).abs() < 0.05);
        let spec = RootSpec {
            x_tol: 1e-13,
            f_tol: 0.0,
            max_iter: 1000,
        };
        let r = brent(|x: f64| (x - 3.0).powi(9), -10.0, 10.0, &spec).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }
}

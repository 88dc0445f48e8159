//! Bracketed scalar root finding.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Outcome of a bracketed solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root<T> {
    pub x: T,
    pub fx: T,
    pub iterations: usize,
    /// The iteration stopped because the bracket could not shrink further
    /// at this precision, not because `|f| < tol`.
    pub machine_limited: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BisectNewton<T> {
    /// Bisect until the bracket is narrower than this, then polish.
    pub bisect_width: T,
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for BisectNewton<T> {
    fn default() -> Self {
        Self {
            bisect_width: T::lit(1e-8),
            tol: T::lit(1e-12),
            max_iter: 200,
        }
    }
}

impl<T: Real> BisectNewton<T> {
    /// Solves `f(x) = 0` on `(lo, hi)` where `f` is known to be positive at
    /// one end and negative at the other. `rising` says which: `true` when
    /// `f(lo) < 0 < f(hi)`. Endpoint values are never evaluated, so the
    /// bracket may sit on poles whose divergence direction is known.
    ///
    /// `f` returns the value and the derivative.
    pub fn solve<F>(&self, mut f: F, mut lo: T, mut hi: T, rising: bool) -> Result<Root<T>>
    where
        F: FnMut(T) -> (T, T),
    {
        let two = T::lit(2.0);
        let mut iterations = 0;
        let below = |v: T| if rising { v < T::zero() } else { v > T::zero() };

        while hi - lo > self.bisect_width {
            let mid = (lo + hi) / two;
            if mid <= lo || mid >= hi {
                // width below the resolution of T
                break;
            }
            let (v, _) = f(mid);
            iterations += 1;
            if v == T::zero() {
                return Ok(Root { x: mid, fx: v, iterations, machine_limited: false });
            }
            if below(v) {
                lo = mid;
            } else {
                hi = mid;
            }
            if iterations > self.max_iter {
                return Err(Error::NonConvergence {
                    what: "bisection",
                    iterations,
                    residual: v.to_f64_lossy().abs(),
                });
            }
        }

        let mut x = (lo + hi) / two;
        let mut best = (x, T::infinity());
        for _ in 0..self.max_iter {
            let (v, d) = f(x);
            iterations += 1;
            if v.abs() < best.1.abs() {
                best = (x, v);
            }
            if v.abs() < self.tol {
                return Ok(Root { x, fx: v, iterations, machine_limited: false });
            }
            if below(v) {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - v / d;
            let next = if d.is_finite() && d != T::zero() && newton > lo && newton < hi {
                newton
            } else {
                (lo + hi) / two
            };
            let floor = T::lit(4.0) * T::unit_roundoff() * x.abs().max(T::min_positive_value());
            if (next - x).abs() <= floor || hi - lo <= floor {
                return Ok(Root {
                    x: best.0,
                    fx: best.1,
                    iterations,
                    machine_limited: true,
                });
            }
            x = next;
        }
        Err(Error::NonConvergence {
            what: "newton polish",
            iterations,
            residual: best.1.to_f64_lossy().abs(),
        })
    }
}

/// Brent's method on `[a, b]` with `f(a)·f(b) < 0`. Stops when the bracket
/// is below `xtol` (plus a few ulps) or `|f| < ftol`.
pub fn brent<T, F>(mut f: F, a: T, b: T, xtol: T, ftol: T, max_iter: usize) -> Result<Root<T>>
where
    T: Real,
    F: FnMut(T) -> T,
{
    let two = T::lit(2.0);
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == T::zero() {
        return Ok(Root { x: a, fx: fa, iterations: 0, machine_limited: false });
    }
    if fb == T::zero() {
        return Ok(Root { x: b, fx: fb, iterations: 0, machine_limited: false });
    }
    if (fa > T::zero()) == (fb > T::zero()) {
        return Err(Error::NoSignChange {
            lo: a.to_f64_lossy(),
            hi: b.to_f64_lossy(),
            f_lo: fa.to_f64_lossy(),
            f_hi: fb.to_f64_lossy(),
        });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for it in 1..=max_iter {
        if (fb > T::zero()) == (fc > T::zero()) {
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
        let tol1 = two * T::unit_roundoff() * b.abs() + xtol / two;
        let xm = (c - b) / two;
        if xm.abs() <= tol1 || fb.abs() < ftol {
            let machine_limited = fb.abs() >= ftol;
            return Ok(Root { x: b, fx: fb, iterations: it, machine_limited });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = T::lit(3.0) * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
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
        b = if d.abs() > tol1 {
            b + d
        } else if xm > T::zero() {
            b + tol1
        } else {
            b - tol1
        };
        fb = f(b);
    }
    Err(Error::NonConvergence {
        what: "brent",
        iterations: max_iter,
        residual: fb.to_f64_lossy().abs(),
    })
}

//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All of the spectral machinery is written against [`Real`], which is
//! implemented for `f32`, `f64` and the double-double type [`Dd`]. The
//! characteristic roots are steep enough at high modes that plain `f64`
//! cannot resolve them to a small residual, so the pipeline computes them in
//! [`Dd`] and narrows to `f64` afterwards.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Double-double precision (about 32 significant digits).
pub type Dd = xprec::Df64;

/// Floating-point scalar usable by the solvers.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Relative spacing of representable numbers near one.
    #[inline]
    fn unit_roundoff() -> Self {
        Self::epsilon()
    }

    /// Converts an `f64` literal. Every implementor represents all `f64`
    /// values (f32 rounds), so this never fails.
    #[inline]
    fn lit(x: f64) -> Self {
        num_traits::cast::<f64, Self>(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Hyperbolic cotangent, accurate for large arguments.
    fn coth(self) -> Self {
        let two = Self::lit(2.0);
        let a = self.abs();
        let r = if a > Self::lit(0.5) {
            // 1 + 2e^{-2a} / (1 - e^{-2a})
            let e = (-two * a).exp();
            Self::one() + two * e / (Self::one() - e)
        } else {
            a.cosh() / a.sinh()
        };
        if self < Self::zero() { -r } else { r }
    }

    /// `x·coth(x)`, continuous through `x = 0`.
    fn x_coth_x(self) -> Self {
        let x2 = self * self;
        if self.abs() < Self::lit(1e-3) {
            // 1 + x²/3 - x⁴/45 + 2x⁶/945
            Self::one() + x2 / Self::lit(3.0) - x2 * x2 / Self::lit(45.0)
                + Self::lit(2.0) * x2 * x2 * x2 / Self::lit(945.0)
        } else {
            self * self.coth()
        }
    }

    /// `x·cot(x)`, continuous through `x = 0`.
    fn x_cot_x(self) -> Self {
        let x2 = self * self;
        if self.abs() < Self::lit(1e-3) {
            // 1 - x²/3 - x⁴/45 - 2x⁶/945
            Self::one() - x2 / Self::lit(3.0) - x2 * x2 / Self::lit(45.0)
                - Self::lit(2.0) * x2 * x2 * x2 / Self::lit(945.0)
        } else {
            self * self.cos() / self.sin()
        }
    }
}

impl Real for f32 {}

impl Real for f64 {}

impl Real for Dd {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coth_matches_definition() {
        for &x in &[0.1f64, 0.7, 2.0, 9.5, 40.0, -3.0] {
            let want = x.cosh() / x.sinh();
            assert!((x.coth() - want).abs() <= 4.0 * f64::EPSILON * want.abs());
        }
    }

    #[test]
    fn small_argument_series_are_continuous() {
        for &x in &[0.999e-3f64, 1.001e-3] {
            assert!((x.x_cot_x() - x * x.cos() / x.sin()).abs() < 1e-15);
            assert!((x.x_coth_x() - x * x.cosh() / x.sinh()).abs() < 1e-15);
        }
        assert_eq!(0.0f64.x_cot_x(), 1.0);
        assert_eq!(0.0f64.x_coth_x(), 1.0);
    }

    #[test]
    fn double_double_division_keeps_low_word() {
        let q = Dd::from(1.0) / Dd::from(3.0);
        assert_eq!(q.lo(), 1.850371707708594e-17);
        assert_eq!(q * Dd::from(3.0) - Dd::from(1.0), Dd::from(0.0));
        assert!(Dd::unit_roundoff() < Dd::from(1e-31));
    }

    #[test]
    fn literals_keep_fractions() {
        assert_eq!(Dd::lit(0.75).hi(), 0.75);
        assert_eq!(Dd::lit(1e-8).hi(), 1e-8);
        assert_eq!(Dd::lit(-2.5).to_f64_lossy(), -2.5);
    }

    #[test]
    fn double_double_trig_is_accurate() {
        // sin(630.123456789) from a 40-digit reference, split hi + lo.
        let s = Dd::from(630.123456789).sin();
        let reference = Dd::new_full(0.9727166059904323, 7.741245521787163e-18);
        assert!(((s - reference) / reference).abs() < Dd::from(1e-20));
    }
}

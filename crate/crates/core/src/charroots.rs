//! Roots of the unperturbed characteristic equation.
//!
//! A channel with eigenvalue `γ` has solutions `y = sin(zt)` of
//! `-y'' + γy = λy, y(0) = 0`, where `z² = λ - γ`. The boundary condition
//! `y'(1) = (λ - 1/λ) y(1)` becomes
//!
//! ```text
//! f(z) = z·cot z - (z² + γ) + 1/(z² + γ) = 0
//! ```
//!
//! On each interval `(πm, π(m+1))`, `m ≥ 1`, `f` falls strictly from `+∞` to
//! `-∞`, so there is exactly one oscillatory root there. On `(0, π)` it starts
//! at `1 - γ + 1/γ`, so a root exists only for `γ - 1/γ < 1`. For
//! `γ - 1/γ > 1` the missing root moves to the imaginary axis `z = iw` and
//! gives one eigenvalue in `(0, γ)`. A second imaginary root with `w > √γ`
//! always gives one negative eigenvalue near `-1/√γ`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Branch, EigenvalueRecord, OperatorSpec};
use crate::roots::BisectNewton;
use crate::scalar::Real;

/// `|sin z|` (and the relative distance to `w = √γ`) below which the
/// characteristic functions refuse to evaluate.
pub const POLE_GUARD: f64 = 1e-14;

/// Distance kept from the poles at `z = πm` when bracketing.
pub const BRACKET_SHRINK: f64 = 1e-9;

/// `z·cot z - (z² + γ) + 1/(z² + γ)`.
pub fn char_fn<T: Real>(z: T, gamma: T) -> Result<T> {
    if z.abs() > T::lit(1e-3) && z.sin().abs() < T::lit(POLE_GUARD) {
        return Err(Error::PoleProximity {
            at: z.to_f64_lossy(),
            guard: POLE_GUARD,
        });
    }
    Ok(char_fn_unguarded(z, gamma))
}

fn char_fn_unguarded<T: Real>(z: T, gamma: T) -> T {
    let s = z * z + gamma;
    z.x_cot_x() - s + s.recip()
}

/// `d/dz` of [`char_fn`].
pub fn char_fn_derivative<T: Real>(z: T, gamma: T) -> T {
    let two = T::lit(2.0);
    let s = z * z + gamma;
    let d_zcot = if z.abs() < T::lit(1e-3) {
        // -2z/3 - 4z³/45
        -two * z / T::lit(3.0) - T::lit(4.0) * z * z * z / T::lit(45.0)
    } else {
        let sin = z.sin();
        (sin * z.cos() - z) / (sin * sin)
    };
    d_zcot - two * z - two * z / (s * s)
}

/// `w·coth w - (γ - w²) + 1/(γ - w²)`: [`char_fn`] continued to `z = iw`.
pub fn char_fn_imag<T: Real>(w: T, gamma: T) -> Result<T> {
    let lambda = gamma - w * w;
    if lambda.abs() < T::lit(POLE_GUARD) * gamma {
        return Err(Error::PoleProximity {
            at: w.to_f64_lossy(),
            guard: POLE_GUARD,
        });
    }
    Ok(w.x_coth_x() - lambda + lambda.recip())
}

/// The imaginary-axis characteristic function in terms of `λ = γ - w²`.
///
/// Same values as [`char_fn_imag`], but without the cancellation in
/// `γ - w²` when `w` is close to `√γ`. Strictly decreasing on `(-∞, 0)`
/// and on `(0, γ)`.
fn imag_in_lambda<T: Real>(lambda: T, gamma: T) -> (T, T) {
    let w = (gamma - lambda).sqrt();
    let value = w.x_coth_x() - lambda + lambda.recip();
    // d(w coth w)/dw divided by w
    let slope_over_w = if w < T::lit(1e-3) {
        let w2 = w * w;
        T::lit(2.0) / T::lit(3.0) - T::lit(4.0) * w2 / T::lit(45.0)
            + T::lit(12.0) * w2 * w2 / T::lit(945.0)
    } else {
        let csch = if w > T::lit(0.5) {
            let e = (-w).exp();
            T::lit(2.0) * e / (T::one() - e * e)
        } else {
            w.sinh().recip()
        };
        (w.coth() - w * csch * csch) / w
    };
    let deriv = -slope_over_w / T::lit(2.0) - T::one() - (lambda * lambda).recip();
    (value, deriv)
}

/// `true` when the `m = 0` oscillatory root exists, i.e. `γ - 1/γ < 1`
/// (`γ` below the golden ratio).
pub fn has_low_oscillatory_root<T: Real>(gamma: T) -> bool {
    gamma - gamma.recip() < T::one()
}

fn solver<T: Real>(tol: T) -> BisectNewton<T> {
    BisectNewton {
        tol,
        ..BisectNewton::default()
    }
}

fn check_gamma<T: Real>(gamma: T) -> Result<()> {
    if !(gamma > T::one()) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must exceed 1")));
    }
    Ok(())
}

/// Root `x ∈ (πm, π(m+1))` of [`char_fn`]; `λ = γ + x²`.
pub fn solve_oscillatory_root<T: Real>(gamma: T, m: u32, tol: T) -> Result<EigenvalueRecord<T>> {
    check_gamma(gamma)?;
    if m == 0 && !has_low_oscillatory_root(gamma) {
        return Err(Error::NoRoot(format!(
            "no oscillatory root in (0, pi) for gamma = {gamma} (gamma - 1/gamma >= 1)"
        )));
    }
    let pi = T::PI();
    let mf = T::lit(m as f64);
    let shrink = T::lit(BRACKET_SHRINK);
    let lo = if m == 0 { T::zero() } else { pi * mf + shrink };
    let hi = pi * (mf + T::one()) - shrink;

    // Start from one Newton step off the asymptote when it lands inside.
    let (mut lo_b, mut hi_b) = (lo, hi);
    if m >= 1 {
        let guess = pi * mf + pi * mf / (pi * pi * mf * mf + gamma);
        if guess > lo && guess < hi {
            if char_fn_unguarded(guess, gamma) > T::zero() {
                lo_b = guess;
            } else {
                hi_b = guess;
            }
        }
    }
    let root = solver(tol).solve(
        |z| (char_fn_unguarded(z, gamma), char_fn_derivative(z, gamma)),
        lo_b,
        hi_b,
        false,
    )?;
    let x = root.x;
    Ok(EigenvalueRecord {
        k: 0,
        branch: Branch::Oscillatory(m),
        root_param: x,
        lambda: gamma + x * x,
        residual: root.fx.abs(),
    })
}

/// Imaginary root `w ∈ (0, √γ)`; `λ = γ - w² ∈ (0, γ)`.
pub fn solve_principal_root<T: Real>(gamma: T, tol: T) -> Result<EigenvalueRecord<T>> {
    check_gamma(gamma)?;
    if has_low_oscillatory_root(gamma) {
        return Err(Error::NoRoot(format!(
            "no principal root for gamma = {gamma} (gamma - 1/gamma < 1)"
        )));
    }
    let mut lo = T::zero();
    let mut hi = gamma;
    // guess from w ~ √γ - 1/2
    let w0 = gamma.sqrt() - T::lit(0.5);
    if w0 > T::zero() {
        let guess = gamma - w0 * w0;
        if guess > lo && guess < hi {
            if imag_in_lambda(guess, gamma).0 > T::zero() {
                lo = guess;
            } else {
                hi = guess;
            }
        }
    }
    let root = solver(tol).solve(|l| imag_in_lambda(l, gamma), lo, hi, false)?;
    Ok(EigenvalueRecord {
        k: 0,
        branch: Branch::Principal,
        root_param: (gamma - root.x).sqrt(),
        lambda: root.x,
        residual: root.fx.abs(),
    })
}

/// Imaginary root `w > √γ`; `λ = γ - w² < 0`.
pub fn solve_negative_root<T: Real>(gamma: T, tol: T) -> Result<EigenvalueRecord<T>> {
    check_gamma(gamma)?;
    // g(-1) = √(γ+1)·coth(√(γ+1)) > 0 and g → -∞ at 0⁻, so (-1, 0) brackets
    let mut lo = -T::one();
    let mut hi = T::zero();
    let guess = -gamma.sqrt().recip();
    if imag_in_lambda(guess, gamma).0 > T::zero() {
        lo = guess;
    } else {
        hi = guess;
    }
    let root = solver(tol).solve(|l| imag_in_lambda(l, gamma), lo, hi, false)?;
    Ok(EigenvalueRecord {
        k: 0,
        branch: Branch::Negative,
        root_param: (gamma - root.x).sqrt(),
        lambda: root.x,
        residual: root.fx.abs(),
    })
}

/// All eigenvalues of one channel: modes `m = 1..=modes`, the `m = 0` or
/// principal root, and optionally the negative root.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectrum<T> {
    pub k: usize,
    pub gamma: T,
    /// Sorted by `λ`.
    pub records: Vec<EigenvalueRecord<T>>,
}

impl<T: Real> ChannelSpectrum<T> {
    pub fn cast<U: Real>(&self) -> ChannelSpectrum<U> {
        ChannelSpectrum {
            k: self.k,
            gamma: U::lit(self.gamma.to_f64_lossy()),
            records: self.records.iter().map(|r| r.cast()).collect(),
        }
    }

    pub fn find(&self, branch: Branch) -> Option<&EigenvalueRecord<T>> {
        self.records.iter().find(|r| r.branch == branch)
    }

    pub fn oscillatory(&self) -> impl Iterator<Item = &EigenvalueRecord<T>> + '_ {
        self.records.iter().filter(|r| r.branch.is_oscillatory())
    }

    pub fn max_residual(&self) -> T {
        self.records
            .iter()
            .fold(T::zero(), |acc, r| acc.max(r.residual))
    }
}

pub fn enumerate_channel<T: Real>(
    k: usize,
    gamma: T,
    modes: u32,
    include_negative: bool,
    tol: T,
) -> Result<ChannelSpectrum<T>> {
    if modes == 0 {
        return Err(Error::InvalidArgument("at least one oscillatory mode is required".into()));
    }
    let mut records = Vec::with_capacity(modes as usize + 2);
    let tag = |branch: Branch| move |e: Error| e.in_channel(k, branch);
    if include_negative {
        records.push(solve_negative_root(gamma, tol).map_err(tag(Branch::Negative))?);
    }
    if has_low_oscillatory_root(gamma) {
        records.push(solve_oscillatory_root(gamma, 0, tol).map_err(tag(Branch::Oscillatory(0)))?);
    } else {
        records.push(solve_principal_root(gamma, tol).map_err(tag(Branch::Principal))?);
    }
    for m in 1..=modes {
        records.push(solve_oscillatory_root(gamma, m, tol).map_err(tag(Branch::Oscillatory(m)))?);
    }
    for r in &mut records {
        r.k = k;
    }
    records.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).expect("finite eigenvalues"));
    Ok(ChannelSpectrum { k, gamma, records })
}

/// Every retained channel of `spec`, in channel order.
pub fn enumerate_spectrum<T: Real>(
    spec: &OperatorSpec<T>,
    modes: u32,
    include_negative: bool,
    tol: T,
) -> Result<Vec<ChannelSpectrum<T>>> {
    spec.gammas()
        .par_iter()
        .enumerate()
        .map(|(i, &g)| enumerate_channel(i + 1, g, modes, include_negative, tol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Dd;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const TOL: f64 = 1e-12;

    #[test]
    fn char_fn_at_half_pi() {
        let g: f64 = 10.0;
        let s = PI * PI / 4.0 + g;
        let v = char_fn(PI / 2.0, g).unwrap();
        assert!((v - (-s + 1.0 / s)).abs() < 1e-12);
        assert!((v + 12.387_192).abs() < 1e-6);
    }

    #[test]
    fn limits_at_origin_agree() {
        assert!((char_fn(1e-9f64, 10.0).unwrap() + 8.9).abs() < 1e-12);
        assert!((char_fn_imag(1e-9f64, 10.0).unwrap() + 8.9).abs() < 1e-12);
    }

    #[test]
    fn pole_guard() {
        assert!(matches!(char_fn(PI * 3.0, 10.0), Err(Error::PoleProximity { .. })));
        assert!(matches!(char_fn_imag(10f64.sqrt(), 10.0), Err(Error::PoleProximity { .. })));
    }

    #[test]
    fn sign_changes_across_each_interval() {
        for m in 1..=5 {
            let lo = char_fn(PI * m as f64 + 0.01, 10.0).unwrap();
            let hi = char_fn(PI * (m + 1) as f64 - 0.01, 10.0).unwrap();
            assert!(lo > 0.0 && hi < 0.0, "m = {m}: {lo} {hi}");
        }
    }

    #[test]
    fn imaginary_function_samples() {
        // the principal root sits near √γ - 1/2
        let v = char_fn_imag(9.5f64, 100.0).unwrap();
        assert!(v.abs() < 0.5, "{v}");
        let g: f64 = 10.0;
        assert!(char_fn_imag(2.0 * g.sqrt(), g).unwrap() > 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &(z, g) in &[(0.5f64, 10.0), (3.7, 2.0), (40.2, 16.0), (1e-4, 3.0)] {
            let h = 1e-6;
            let fd = (char_fn_unguarded(z + h, g) - char_fn_unguarded(z - h, g)) / (2.0 * h);
            let d = char_fn_derivative(z, g);
            assert!((fd - d).abs() < 1e-5 * d.abs().max(1.0), "z = {z}: {fd} vs {d}");
        }
        for &(l, g) in &[(3.0f64, 10.0), (-0.3, 10.0), (0.2, 1.7), (9.9999, 10.0)] {
            let h = 1e-7;
            let fd = (imag_in_lambda(l + h, g).0 - imag_in_lambda(l - h, g).0) / (2.0 * h);
            let d = imag_in_lambda(l, g).1;
            assert!((fd - d).abs() < 1e-5 * d.abs().max(1.0), "lambda = {l}: {fd} vs {d}");
        }
    }

    /// Brute-force scan: every sign change of `f` on a fine grid.
    fn scan_sign_changes(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let h = (hi - lo) / n as f64;
        let mut out = Vec::new();
        let mut prev = f(lo);
        for i in 1..=n {
            let t = lo + h * i as f64;
            let v = f(t);
            if prev.signum() != v.signum() && prev.is_finite() && v.is_finite() {
                // refine by bisection
                let (mut a, mut b) = (t - h, t);
                for _ in 0..60 {
                    let mid = 0.5 * (a + b);
                    if f(mid).signum() == prev.signum() {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                out.push(0.5 * (a + b));
            }
            prev = v;
        }
        out
    }

    #[test]
    fn first_oscillatory_root_matches_scan() {
        let g = 10.0;
        let rec = solve_oscillatory_root(g, 1, TOL).unwrap();
        let lo = PI + 1e-6;
        let hi = 2.0 * PI - 1e-6;
        let found = scan_sign_changes(|z| char_fn_unguarded(z, g), lo, hi, 3_000_000);
        // one genuine root; the pole at 2π is excluded by the bracket
        assert_eq!(found.len(), 1);
        assert!((rec.root_param - found[0]).abs() < 1e-9);
        assert!(rec.residual < TOL);
        assert!((rec.lambda - (g + rec.root_param.powi(2))).abs() < 1e-12);
    }

    #[test]
    fn high_mode_tracks_asymptote() {
        let rec = solve_oscillatory_root(10.0, 50, TOL).unwrap();
        let off = rec.root_param - 50.0 * PI;
        assert!(off > 0.0 && off < 0.01, "{off}");
        assert!((rec.root_param / (50.0 * PI) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn low_root_exists_below_golden_ratio() {
        let g = 1.2;
        assert!(char_fn(1e-9, g).unwrap() > 0.0);
        assert!(char_fn(PI - 1e-6, g).unwrap() < 0.0);
        let rec = solve_oscillatory_root(g, 0, TOL).unwrap();
        assert!(rec.root_param > 0.0 && rec.root_param < PI);
        assert!(solve_principal_root(g, TOL).is_err());
    }

    #[test]
    fn principal_root_gamma_100() {
        let rec = solve_principal_root(100.0, TOL).unwrap();
        let found = scan_sign_changes(|w| char_fn_imag(w, 100.0).unwrap_or(f64::NAN), 1e-6, 10.0 - 1e-6, 1_000_000);
        assert_eq!(found.len(), 1);
        assert!((rec.root_param - found[0]).abs() < 1e-8);
        assert!((rec.root_param - 9.5).abs() < 0.1);
        assert!((rec.lambda - 10.0).abs() < 1.0);
        assert!(rec.lambda > 0.0 && rec.lambda < 100.0);
        assert!(solve_oscillatory_root(100.0, 0, TOL).is_err());
    }

    #[test]
    fn principal_root_gamma_10() {
        let rec = solve_principal_root(10.0, TOL).unwrap();
        assert!(rec.residual < TOL);
        assert!(rec.lambda > 0.0 && rec.lambda < 10.0);
    }

    #[test]
    fn principal_ratio_improves_with_gamma() {
        let mut prev = f64::INFINITY;
        for k in 10..=50 {
            let g = 2.0 * (k as f64).powi(3);
            let rec = solve_principal_root(g, TOL).unwrap();
            let dev = (rec.lambda / g.sqrt() - 1.0).abs();
            assert!(dev < prev, "k = {k}");
            prev = dev;
        }
    }

    #[test]
    fn negative_root() {
        let rec = solve_negative_root(100.0, TOL).unwrap();
        assert!(rec.lambda < 0.0);
        assert!(rec.lambda / -0.1 > 0.5 && rec.lambda / -0.1 < 2.0, "{}", rec.lambda);
        let found = scan_sign_changes(
            |w| char_fn_imag(w, 100.0).unwrap_or(f64::NAN),
            10.0 + 1e-9,
            20.0,
            2_000_000,
        );
        assert_eq!(found.len(), 1);
        assert!((rec.root_param - found[0]).abs() < 1e-8);

        // sign structure for γ = 10
        let g: f64 = 10.0;
        assert!(char_fn_imag(g.sqrt() + 1e-6, g).unwrap() < 0.0);
        assert!(char_fn_imag(50.0, g).unwrap() > 0.0);

        let mut prev = f64::NEG_INFINITY;
        for k in 1..=30 {
            let l = solve_negative_root(2.0 * (k as f64).powi(3), TOL).unwrap().lambda;
            assert!(l < 0.0 && l > prev, "k = {k}");
            prev = l;
        }
    }

    #[test]
    fn census_gamma_10_and_1_2() {
        let s = enumerate_channel(1, 10.0, 5, true, TOL).unwrap();
        assert_eq!(s.records.len(), 7);
        assert_eq!(s.oscillatory().count(), 5);
        assert!(s.find(Branch::Principal).is_some());
        assert!(s.find(Branch::Negative).is_some());

        let s = enumerate_channel(1, 1.2, 5, false, TOL).unwrap();
        assert_eq!(s.records.len(), 6);
        assert_eq!(s.oscillatory().count(), 6);
        assert!(s.find(Branch::Principal).is_none());
        let lambdas: Vec<f64> = s.oscillatory().map(|r| r.lambda).collect();
        assert!(lambdas.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn double_double_reaches_tiny_residual_at_high_modes() {
        let g = Dd::from(250000.0);
        let rec = solve_oscillatory_root(g, 200, Dd::from(TOL)).unwrap();
        assert!(rec.residual < Dd::from(1e-10));
        let x = rec.root_param;
        let id = x.sin() * (x * x + g) - x * x.cos() - x.sin() / (x * x + g);
        assert!(id.abs() < Dd::from(1e-9));
    }

    #[test]
    fn generic_in_f32() {
        let rec = solve_oscillatory_root(10.0f32, 1, 1e-3).unwrap();
        let want = solve_oscillatory_root(10.0f64, 1, TOL).unwrap();
        assert!((rec.root_param as f64 - want.root_param).abs() < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bracket_containment(g in 1.01f64..1e4, m in 1u32..300) {
            let rec = solve_oscillatory_root(g, m, TOL).unwrap();
            let x = rec.root_param;
            prop_assert!(x > PI * m as f64 && x < PI * (m + 1) as f64);
        }

        #[test]
        fn branch_exclusivity(g in 1.0001f64..50.0) {
            let low = solve_oscillatory_root(g, 0, TOL).is_ok();
            let principal = solve_principal_root(g, TOL).is_ok();
            prop_assert!(low != principal);
        }

        #[test]
        fn imaginary_continuation(w in 0.01f64..30.0, g in 1.01f64..500.0) {
            prop_assume!((g - w * w).abs() > 1e-3);
            // cot(iw) = -i·coth(w) so (iw)·cot(iw) = w·coth(w), (iw)² = -w²
            let zcot = w * (w.cosh() / w.sinh());
            let s = -w * w + g;
            let continued = zcot - s + 1.0 / s;
            let direct = char_fn_imag(w, g).unwrap();
            prop_assert!((continued - direct).abs() <= 1e-12 * (1.0 + continued.abs() + 1.0 / s.abs()));
        }

        #[test]
        fn uniqueness_by_sign_scan(g in 1.01f64..200.0, m in 1u32..20) {
            let lo = PI * m as f64 + 1e-6;
            let hi = PI * (m + 1) as f64 - 1e-6;
            let f = |z: f64| char_fn_unguarded(z, g);
            let n = 10_000;
            let changes = (0..n)
                .filter(|&i| {
                    let a = lo + (hi - lo) * i as f64 / n as f64;
                    let b = lo + (hi - lo) * (i + 1) as f64 / n as f64;
                    f(a).signum() != f(b).signum()
                })
                .count();
            prop_assert_eq!(changes, 1);
        }
    }
}

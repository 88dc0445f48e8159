//! Eigenvalues of the perturbed channel problems by shooting.
//!
//! `-y'' + (γ + q(t))y = λy`, `y(0) = 0`, `y'(1) = (λ - 1/λ)y(1)`.
//!
//! The initial value problem `y(0) = 0, y'(0) = 1` is integrated with the
//! fourth-order Magnus method. Each step applies the exact exponential of a
//! traceless 2×2 matrix, so a constant potential is integrated exactly and
//! the fast phase of high modes costs nothing in accuracy. Energies are
//! passed as `base + shift`, where `base` is the unperturbed eigenvalue:
//! `γ - base` is formed once and the small `shift` is never added to a large
//! number.

use rayon::prelude::*;

use crate::charroots::ChannelSpectrum;
use crate::error::{Error, Result};
use crate::model::{Branch, CosineSeries, EigenvalueRecord};
use crate::roots::brent;
use crate::scalar::Real;

/// Smallest `|λ|` at which the boundary function is evaluated.
pub const POLE_EPS: f64 = 1e-6;

pub const DEFAULT_STEPS: usize = 4096;

/// A real potential on `[0, 1]` for one channel.
pub trait ChannelPotential<T>: Sync {
    fn value(&self, t: T) -> T;
    /// `max_t |q(t)|`.
    fn sup_norm(&self) -> T;
    fn is_zero(&self) -> bool;
}

impl<T: Real> ChannelPotential<T> for CosineSeries<T> {
    fn value(&self, t: T) -> T {
        CosineSeries::value(self, t)
    }
    fn sup_norm(&self) -> T {
        CosineSeries::sup_norm(self)
    }
    fn is_zero(&self) -> bool {
        CosineSeries::is_zero(self)
    }
}

/// `q(t) ≡ c`. Not zero-mean, so not a valid trace potential, but it is the
/// one perturbation with a closed-form answer: the spectrum of `γ + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPotential<T>(pub T);

impl<T: Real> ChannelPotential<T> for ConstantPotential<T> {
    fn value(&self, _t: T) -> T {
        self.0
    }
    fn sup_norm(&self) -> T {
        self.0.abs()
    }
    fn is_zero(&self) -> bool {
        self.0 == T::zero()
    }
}

/// Boundary data of the solution with `y(0) = 0, y'(0) = 1`.
///
/// The true values are `y1·e^{log_scale}` and `yp1·e^{log_scale}`; the
/// state is rescaled during integration when it grows too large.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingResult<T> {
    pub y1: T,
    pub yp1: T,
    pub log_scale: T,
    pub steps: usize,
    pub estimated_error: T,
}

impl<T: Real> ShootingResult<T> {
    /// `(y(1), y'(1))` without the scale factor applied.
    pub fn unscaled(&self) -> (T, T) {
        let s = self.log_scale.exp();
        (self.y1 * s, self.yp1 * s)
    }
}

/// Fixed-step Magnus integrator for one channel, with the potential
/// sampled once at the Gauss points of every step.
#[derive(Debug, Clone)]
pub struct Shooter<T> {
    gamma: T,
    h: T,
    /// `(q_a + q_b)/2` per step.
    q_mid: Vec<T>,
    /// `(√3/12)·h²·(q_a - q_b)` per step; energy independent.
    skew: Vec<T>,
}

const RESCALE_AT: f64 = 1e150;

impl<T: Real> Shooter<T> {
    pub fn new<Q: ChannelPotential<T> + ?Sized>(gamma: T, q: &Q, steps: usize) -> Result<Self> {
        if steps < 16 {
            return Err(Error::InvalidArgument(format!("{steps} integration steps, need at least 16")));
        }
        let h = T::one() / T::from_usize_lossy(steps);
        let half = T::lit(0.5);
        let off = T::lit(3.0).sqrt() / T::lit(6.0);
        let k = T::lit(3.0).sqrt() / T::lit(12.0) * h * h;
        let zero = q.is_zero();
        let mut q_mid = Vec::with_capacity(steps);
        let mut skew = Vec::with_capacity(steps);
        for i in 0..steps {
            let t0 = T::from_usize_lossy(i) * h;
            let (qa, qb) = if zero {
                (T::zero(), T::zero())
            } else {
                (q.value(t0 + (half - off) * h), q.value(t0 + (half + off) * h))
            };
            q_mid.push((qa + qb) * half);
            skew.push(k * (qa - qb));
        }
        Ok(Self { gamma, h, q_mid, skew })
    }

    pub fn steps(&self) -> usize {
        self.q_mid.len()
    }

    /// Integrates at energy `base + shift`.
    pub fn shoot(&self, base: T, shift: T) -> ShootingResult<T> {
        let g0 = self.gamma - base;
        let h = self.h;
        let h2 = h * h;
        let (mut y, mut yp) = (T::zero(), T::one());
        let mut log_scale = T::zero();
        let big = T::lit(RESCALE_AT);
        let tiny_k = T::lit(1e-4);
        for (qm, c) in self.q_mid.iter().zip(&self.skew) {
            // Ω = [[c, h], [h·s, -c]], Ω² = κI
            let s = g0 + (*qm - shift);
            let kappa = *c * *c + h2 * s;
            let (cc, ss) = if kappa.abs() < tiny_k {
                let k2 = kappa * kappa;
                (
                    T::one() + kappa / T::lit(2.0) + k2 / T::lit(24.0) + k2 * kappa / T::lit(720.0),
                    T::one() + kappa / T::lit(6.0) + k2 / T::lit(120.0) + k2 * kappa / T::lit(5040.0),
                )
            } else if kappa > T::zero() {
                let r = kappa.sqrt();
                (r.cosh(), r.sinh() / r)
            } else {
                let r = (-kappa).sqrt();
                (r.cos(), r.sin() / r)
            };
            let ny = (cc + ss * *c) * y + ss * h * yp;
            let nyp = ss * h * s * y + (cc - ss * *c) * yp;
            y = ny;
            yp = nyp;
            if y.abs() + yp.abs() > big {
                y = y / big;
                yp = yp / big;
                log_scale = log_scale + big.ln();
            }
        }
        ShootingResult {
            y1: y,
            yp1: yp,
            log_scale,
            steps: self.steps(),
            estimated_error: T::zero(),
        }
    }

    /// `(y'(1) - (λ - 1/λ)y(1)) / |(y(1), y'(1))|`: same zeros and signs as
    /// the boundary mismatch, but free of the growth factor.
    pub fn mismatch(&self, base: T, shift: T) -> Result<T> {
        let lambda = base + shift;
        check_pole(lambda)?;
        let r = self.shoot(base, shift);
        let norm = r.y1.hypot(r.yp1);
        Ok((r.yp1 - (lambda - lambda.recip()) * r.y1) / norm)
    }
}

fn check_pole<T: Real>(lambda: T) -> Result<()> {
    if lambda.abs() < T::lit(POLE_EPS) {
        return Err(Error::PoleProximity {
            at: lambda.to_f64_lossy(),
            guard: POLE_EPS,
        });
    }
    Ok(())
}

/// Integrates `y(0) = 0, y'(0) = 1` to `t = 1` with `steps` Magnus steps.
/// The error estimate compares against `steps/2` (Richardson, order 4).
pub fn integrate_ivp<T: Real, Q: ChannelPotential<T> + ?Sized>(
    gamma: T,
    q: &Q,
    lambda: T,
    steps: usize,
) -> Result<ShootingResult<T>> {
    let fine = Shooter::new(gamma, q, steps)?.shoot(lambda, T::zero());
    let coarse = Shooter::new(gamma, q, (steps / 2).max(16))?.shoot(lambda, T::zero());
    let rel = (coarse.log_scale - fine.log_scale).exp();
    let err = ((coarse.y1 * rel - fine.y1).abs()).max((coarse.yp1 * rel - fine.yp1).abs());
    Ok(ShootingResult {
        estimated_error: err / T::lit(15.0),
        ..fine
    })
}

/// `y'(1; λ) - (λ - 1/λ)·y(1; λ)`. Zeros are the perturbed eigenvalues.
pub fn delta_fn<T: Real, Q: ChannelPotential<T> + ?Sized>(
    gamma: T,
    q: &Q,
    lambda: T,
    steps: usize,
) -> Result<T> {
    check_pole(lambda)?;
    let r = Shooter::new(gamma, q, steps)?.shoot(lambda, T::zero());
    let (y1, yp1) = r.unscaled();
    Ok(yp1 - (lambda - lambda.recip()) * y1)
}

/// One unperturbed record and its perturbed partner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedPair<T> {
    pub base: EigenvalueRecord<T>,
    pub mu: T,
    /// Normalized boundary mismatch at `mu`.
    pub residual: T,
}

impl<T: Real> PerturbedPair<T> {
    pub fn shift(&self) -> T {
        self.mu - self.base.lambda
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PerturbOptions<T> {
    pub steps: usize,
    /// Subintervals of the sign scan inside the Weyl bracket.
    pub scan: usize,
    /// Extra width beyond `max|q|`, relative to `max|q|`.
    pub margin: T,
}

impl<T: Real> Default for PerturbOptions<T> {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            scan: 8,
            margin: T::lit(0.05),
        }
    }
}

/// Estimates of the perturbed principal and negative eigenvalues, e.g. from
/// the finite-element oracle. Used to start a narrow search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSeeds<T> {
    pub principal: Option<T>,
    pub negative: Option<T>,
}

impl<T> Default for BranchSeeds<T> {
    fn default() -> Self {
        Self { principal: None, negative: None }
    }
}

/// Perturbed partner of every record of `base`, paired by branch and mode.
pub fn solve_perturbed_channel<T: Real, Q: ChannelPotential<T> + ?Sized>(
    q: &Q,
    base: &ChannelSpectrum<T>,
    seeds: BranchSeeds<T>,
    opts: &PerturbOptions<T>,
) -> Result<Vec<PerturbedPair<T>>> {
    if q.is_zero() {
        return Ok(base
            .records
            .iter()
            .map(|r| PerturbedPair { base: *r, mu: r.lambda, residual: T::zero() })
            .collect());
    }
    let shooter = Shooter::new(base.gamma, q, opts.steps)?;
    let sup = q.sup_norm();
    base.records
        .par_iter()
        .map(|r| {
            let seed = match r.branch {
                Branch::Principal => seeds.principal,
                Branch::Negative => seeds.negative,
                Branch::Oscillatory(_) => None,
            };
            solve_record(&shooter, r, sup, seed, opts).map_err(|e| e.in_channel(base.k, r.branch))
        })
        .collect()
}

fn solve_record<T: Real>(
    shooter: &Shooter<T>,
    rec: &EigenvalueRecord<T>,
    sup: T,
    seed: Option<T>,
    opts: &PerturbOptions<T>,
) -> Result<PerturbedPair<T>> {
    let base = rec.lambda;
    // clip at twice the guard so rounding in base + shift stays outside it
    let eps = T::lit(2.0 * POLE_EPS);
    let margin = sup * opts.margin + T::lit(1e-9) * base.abs().max(T::one());
    let r = sup + margin;
    // shift bounds, kept on the base's side of λ = 0
    let (mut lo, mut hi) = (-r, r);
    if base < T::zero() {
        hi = hi.min(-eps - base);
    } else {
        lo = lo.max(eps - base);
    }
    if !(lo < hi) {
        return Err(Error::PoleStraddle {
            lo: (base + lo).to_f64_lossy(),
            hi: (base + hi).to_f64_lossy(),
        });
    }
    let f = |s: T| shooter.mismatch(base, s);

    if let Some(mu0) = seed {
        if let Some((a, b)) = seeded_bracket(&f, mu0 - base, lo, hi)? {
            return finish(&f, rec, a, b);
        }
    }
    let (a, b) = scan_bracket(&f, lo, hi, opts.scan, base)?;
    finish(&f, rec, a, b)
}

fn finish<T: Real, F: Fn(T) -> Result<T>>(
    f: &F,
    rec: &EigenvalueRecord<T>,
    a: T,
    b: T,
) -> Result<PerturbedPair<T>> {
    let mut err = None;
    let g = |s: T| match f(s) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            T::nan()
        }
    };
    let xtol = T::lit(4.0) * T::unit_roundoff() * rec.lambda.abs().max(T::one());
    let root = brent(g, a, b, xtol, T::zero(), 300)?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(PerturbedPair {
        base: *rec,
        mu: rec.lambda + root.x,
        residual: root.fx.abs(),
    })
}

/// Grows a bracket around a seed shift until the mismatch changes sign.
fn seeded_bracket<T: Real, F: Fn(T) -> Result<T>>(f: &F, s0: T, lo: T, hi: T) -> Result<Option<(T, T)>> {
    if !(s0 > lo && s0 < hi) {
        return Ok(None);
    }
    let mut w = (hi - lo) * T::lit(1e-4);
    for _ in 0..20 {
        let a = (s0 - w).max(lo);
        let b = (s0 + w).min(hi);
        let (fa, fb) = (f(a)?, f(b)?);
        if fa == T::zero() {
            return Ok(Some((a, a)));
        }
        if (fa > T::zero()) != (fb > T::zero()) {
            return Ok(Some((a, b)));
        }
        if a == lo && b == hi {
            break;
        }
        w = w * T::lit(4.0);
    }
    Ok(None)
}

/// Finds the unique sign change of `f` on `[lo, hi]` by scanning; refines
/// the scan up to 64 subintervals when the count is not one.
fn scan_bracket<T: Real, F: Fn(T) -> Result<T>>(f: &F, lo: T, hi: T, scan: usize, base: T) -> Result<(T, T)> {
    let mut n = scan.max(2);
    loop {
        let width = (hi - lo) / T::from_usize_lossy(n);
        let mut pts = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let s = if i == n { hi } else { lo + width * T::from_usize_lossy(i) };
            pts.push((s, f(s)?));
        }
        let changes: Vec<(T, T)> = pts
            .windows(2)
            .filter(|w| (w[0].1 > T::zero()) != (w[1].1 > T::zero()))
            .map(|w| (w[0].0, w[1].0))
            .collect();
        match changes.len() {
            1 => return Ok(changes[0]),
            0 if n >= 64 => {
                return Err(Error::NoSignChange {
                    lo: (base + lo).to_f64_lossy(),
                    hi: (base + hi).to_f64_lossy(),
                    f_lo: pts[0].1.to_f64_lossy(),
                    f_hi: pts[n].1.to_f64_lossy(),
                })
            }
            c if c > 1 && n >= 64 => {
                return Err(Error::BracketCapture {
                    center: base.to_f64_lossy(),
                    count: c,
                })
            }
            _ => n *= 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charroots::enumerate_channel;
    use crate::scalar::Dd;

    const TOL: f64 = 1e-12;

    fn zero() -> CosineSeries<f64> {
        CosineSeries::new(vec![]).unwrap()
    }

    #[test]
    fn free_solution_at_first_node() {
        let g = 10.0;
        let pi = std::f64::consts::PI;
        let r = integrate_ivp(g, &zero(), g + pi * pi, 4096).unwrap();
        assert!(r.y1.abs() < 1e-8, "{}", r.y1);
        assert!((r.yp1 + 1.0).abs() < 1e-8);
        assert_eq!(r.steps, 4096);
    }

    #[test]
    fn degenerate_linear_solution() {
        let r = integrate_ivp(10.0, &zero(), 10.0, 4096).unwrap();
        assert!((r.y1 - 1.0).abs() < 1e-12);
        assert!((r.yp1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_solution() {
        let g: f64 = 10.0;
        let r = integrate_ivp(g, &zero(), 0.0, 4096).unwrap();
        let s = g.sqrt();
        assert!((r.y1 - s.sinh() / s).abs() < 1e-7);
        assert!((r.yp1 - s.cosh()).abs() < 1e-7);
    }

    #[test]
    fn deep_tunnelling_is_rescaled() {
        let g: f64 = 1e6;
        let r = integrate_ivp(g, &zero(), -1.0, 4096).unwrap();
        assert!(r.log_scale > 0.0);
        // y'/y = √(γ+1)·coth√(γ+1)
        let want = (g + 1.0).sqrt();
        assert!((r.yp1 / r.y1 / want - 1.0).abs() < 1e-12);
        // log y(1) = log(sinh(s)/s)
        let log_y = r.y1.ln() + r.log_scale;
        assert!((log_y - (want - 2f64.ln() - want.ln())).abs() < 1e-9);
    }

    #[test]
    fn fourth_order_convergence() {
        let q = CosineSeries::new(vec![0.4, 0.3]).unwrap();
        let lambda = 60.0;
        let at = |n| Shooter::new(10.0, &q, n).unwrap().shoot(lambda, 0.0).y1;
        let (a, b, c) = (at(64), at(128), at(256));
        let ratio: f64 = (a - b) / (b - c);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
        let r = integrate_ivp(10.0, &q, lambda, 256).unwrap();
        assert!(r.estimated_error > 0.0 && r.estimated_error < 1e-8);
    }

    #[test]
    fn mismatch_vanishes_on_free_spectrum() {
        let s = enumerate_channel(1, 10.0, 20, true, TOL).unwrap();
        for r in &s.records {
            let d = delta_fn(10.0, &zero(), r.lambda, 4096).unwrap();
            let scale = r.lambda.abs().max(1.0);
            assert!(d.abs() < 1e-7 * scale, "{}: {d}", r.branch);
        }
    }

    #[test]
    fn pole_guard() {
        assert!(matches!(delta_fn(10.0, &zero(), 1e-7, 64), Err(Error::PoleProximity { .. })));
    }

    #[test]
    fn zero_potential_is_identity() {
        let s = enumerate_channel(1, 16.0, 10, true, TOL).unwrap();
        let pairs = solve_perturbed_channel(&zero(), &s, BranchSeeds::default(), &PerturbOptions::default()).unwrap();
        assert!(pairs.iter().all(|p| p.mu == p.base.lambda));
    }

    #[test]
    fn constant_potential_shifts_gamma() {
        for &g in &[2.0f64, 16.0, 54.0] {
            let s = enumerate_channel(1, g, 30, true, TOL).unwrap();
            let shifted = enumerate_channel(1, Dd::from(g) + Dd::from(0.3), 30, true, Dd::from(TOL))
                .unwrap()
                .cast::<f64>();
            let pairs = solve_perturbed_channel(
                &ConstantPotential(0.3),
                &s,
                BranchSeeds::default(),
                &PerturbOptions::default(),
            )
            .unwrap();
            for (p, want) in pairs.iter().zip(&shifted.records) {
                assert_eq!(p.base.branch, want.branch);
                assert!((p.mu - want.lambda).abs() < 1e-9, "{g} {}: {} vs {}", p.base.branch, p.mu, want.lambda);
            }
        }
    }

    #[test]
    fn weyl_bound_for_cosine() {
        let q = CosineSeries::term(1, 1.0);
        let s = enumerate_channel(1, 2.0, 20, true, TOL).unwrap();
        let pairs = solve_perturbed_channel(&q, &s, BranchSeeds::default(), &PerturbOptions::default()).unwrap();
        assert_eq!(pairs.len(), s.records.len());
        for p in &pairs {
            assert!(p.shift().abs() <= 1.0 + 1e-8, "{}: {}", p.base.branch, p.shift());
        }
        let neg = pairs.iter().find(|p| p.base.branch == Branch::Negative).unwrap();
        assert!(neg.mu < 0.0);
    }

    #[test]
    fn seeds_reach_the_same_root() {
        let q = CosineSeries::term(2, 0.2);
        let s = enumerate_channel(1, 16.0, 3, true, TOL).unwrap();
        let opts = PerturbOptions::default();
        let plain = solve_perturbed_channel(&q, &s, BranchSeeds::default(), &opts).unwrap();
        let p = plain.iter().find(|p| p.base.branch == Branch::Principal).unwrap().mu;
        let n = plain.iter().find(|p| p.base.branch == Branch::Negative).unwrap().mu;
        let seeds = BranchSeeds { principal: Some(p + 1e-4), negative: Some(n * 1.001) };
        let seeded = solve_perturbed_channel(&q, &s, seeds, &opts).unwrap();
        for (a, b) in plain.iter().zip(&seeded) {
            assert!((a.mu - b.mu).abs() < 1e-11 * a.mu.abs().max(1.0));
        }
    }
}

//! Operator and potential specifications.
//!
//! The unperturbed operator `A` enters only through its eigenvalues
//! `γ_1 ≤ γ_2 ≤ …`, one per channel. The potential is channel-diagonal: each
//! active channel carries a real cosine series without constant term, so it
//! has zero mean on `[0, 1]` by construction.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues of the unperturbed operator, one per retained channel.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec<T> {
    growth: Option<(T, T)>,
    gammas: Vec<T>,
}

/// `γ_k = a·k^α` for `k = 1..=channels`.
pub fn make_operator_spec<T: Real>(a: T, alpha: T, channels: usize) -> Result<OperatorSpec<T>> {
    OperatorSpec::power_law(a, alpha, channels)
}

impl<T: Real> OperatorSpec<T> {
    pub fn power_law(a: T, alpha: T, channels: usize) -> Result<Self> {
        if !(a > T::zero()) || !a.is_finite() {
            return Err(Error::InvalidOperator(format!("amplitude a = {a} must be positive")));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::InvalidOperator(format!("exponent alpha = {alpha} must be positive")));
        }
        if channels == 0 {
            return Err(Error::InvalidOperator("at least one channel is required".into()));
        }
        let gammas: Vec<T> = (1..=channels).map(|k| power(a, alpha, k)).collect();
        Self::validate(&gammas)?;
        Ok(Self {
            growth: Some((a, alpha)),
            gammas,
        })
    }

    /// Explicit eigenvalue list, e.g. to probe `γ` just above 1.
    pub fn from_gammas(gammas: Vec<T>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::InvalidOperator("at least one channel is required".into()));
        }
        Self::validate(&gammas)?;
        Ok(Self { growth: None, gammas })
    }

    fn validate(gammas: &[T]) -> Result<()> {
        for (i, &g) in gammas.iter().enumerate() {
            if !g.is_finite() || !(g > T::one()) {
                return Err(Error::InvalidOperator(format!(
                    "gamma_{} = {g} violates A > I (every gamma must exceed 1)",
                    i + 1
                )));
            }
        }
        if let Some(i) = gammas.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidOperator(format!(
                "gammas must be nondecreasing (gamma_{} > gamma_{})",
                i + 1,
                i + 2
            )));
        }
        Ok(())
    }

    pub fn gammas(&self) -> &[T] {
        &self.gammas
    }

    /// Number of retained channels `K`.
    pub fn channels(&self) -> usize {
        self.gammas.len()
    }

    /// `γ_k` for a 1-based channel index.
    pub fn gamma(&self, k: usize) -> Option<T> {
        k.checked_sub(1).and_then(|i| self.gammas.get(i)).copied()
    }

    /// `(a, α)` when the spec was generated from a power law.
    pub fn growth(&self) -> Option<(T, T)> {
        self.growth
    }

    /// `γ_k` for any `k`, extrapolating the power law past the truncation.
    /// Explicit lists only answer for retained channels.
    pub fn implied_gamma(&self, k: usize) -> Option<T> {
        match self.growth {
            Some((a, alpha)) if k >= 1 => Some(power(a, alpha, k)),
            _ => self.gamma(k),
        }
    }
}

fn power<T: Real>(a: T, alpha: T, k: usize) -> T {
    let kk = T::from_usize_lossy(k);
    // Integer exponents go through powi so that e.g. 2·50³ is exact.
    if alpha.fract() == T::zero() && alpha <= T::lit(64.0) {
        a * kk.powi(alpha.to_i32().unwrap_or(0))
    } else {
        a * kk.powf(alpha)
    }
}

/// `q_k(t) = Σ_j c_j cos(πjt)`, `j ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CosineSeries<T> {
    coeffs: Vec<T>,
}

impl<T: Real> CosineSeries<T> {
    /// `coeffs[0]` multiplies `cos(πt)`, `coeffs[1]` multiplies `cos(2πt)`, …
    pub fn new(coeffs: Vec<T>) -> Result<Self> {
        if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidPotential(format!("non-finite coefficient {c}")));
        }
        Ok(Self { coeffs })
    }

    /// Single term `c·cos(πjt)`.
    pub fn term(j: usize, c: T) -> Self {
        assert!(j >= 1, "cosine index starts at 1");
        let mut coeffs = vec![T::zero(); j];
        coeffs[j - 1] = c;
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// `(j, c_j)` for nonzero coefficients.
    pub fn terms(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != T::zero())
            .map(|(i, &c)| (i + 1, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == T::zero())
    }

    pub fn value(&self, t: T) -> T {
        self.terms()
            .fold(T::zero(), |acc, (j, c)| acc + c * (freq::<T>(j) * t).cos())
    }

    pub fn derivative(&self, t: T) -> T {
        self.terms().fold(T::zero(), |acc, (j, c)| {
            let w = freq::<T>(j);
            acc - c * w * (w * t).sin()
        })
    }

    pub fn second_derivative(&self, t: T) -> T {
        self.terms().fold(T::zero(), |acc, (j, c)| {
            let w = freq::<T>(j);
            acc - c * w * w * (w * t).cos()
        })
    }

    /// `Σ|c_j|`, an upper bound for `max_t |q(t)|`.
    pub fn sup_bound(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |acc, c| acc + c.abs())
    }

    /// `max_t |q(t)|` by dense sampling refined with a local parabola.
    pub fn sup_norm(&self) -> T {
        if self.is_zero() {
            return T::zero();
        }
        let jmax = self.coeffs.len();
        let samples = 64 * jmax + 64;
        let h = T::one() / T::from_usize_lossy(samples);
        let mut best = T::zero();
        for i in 0..=samples {
            let t = T::from_usize_lossy(i) * h;
            best = best.max(self.value(t).abs());
            // one Newton step on q' from each sample catches interior peaks
            let d2 = self.second_derivative(t);
            if d2 != T::zero() {
                let s = t - self.derivative(t) / d2;
                if s >= T::zero() && s <= T::one() {
                    best = best.max(self.value(s).abs());
                }
            }
        }
        best
    }

    /// `∫_lo^hi q(t) dt`, exact.
    pub fn integral(&self, lo: T, hi: T) -> T {
        self.terms().fold(T::zero(), |acc, (j, c)| {
            let w = freq::<T>(j);
            acc + c * ((w * hi).sin() - (w * lo).sin()) / w
        })
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|&c| c * s).collect(),
        }
    }
}

#[inline]
fn freq<T: Real>(j: usize) -> T {
    T::PI() * T::from_usize_lossy(j)
}

/// Channel-diagonal potential: finitely many active channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PotentialSpec<T> {
    channels: BTreeMap<usize, CosineSeries<T>>,
}

impl<T: Real> Default for PotentialSpec<T> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Real> PotentialSpec<T> {
    pub fn zero() -> Self {
        Self {
            channels: BTreeMap::new(),
        }
    }

    pub fn new(channels: BTreeMap<usize, CosineSeries<T>>) -> Result<Self> {
        if channels.contains_key(&0) {
            return Err(Error::InvalidPotential("channel indices start at 1".into()));
        }
        Ok(Self { channels })
    }

    pub fn with_channel(mut self, k: usize, q: CosineSeries<T>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPotential("channel indices start at 1".into()));
        }
        self.channels.insert(k, q);
        Ok(self)
    }

    pub fn channel(&self, k: usize) -> Option<&CosineSeries<T>> {
        self.channels.get(&k)
    }

    /// Channels with at least one nonzero coefficient.
    pub fn active(&self) -> impl Iterator<Item = (usize, &CosineSeries<T>)> + '_ {
        self.channels
            .iter()
            .filter(|(_, q)| !q.is_zero())
            .map(|(&k, q)| (k, q))
    }

    pub fn max_channel(&self) -> Option<usize> {
        self.active().map(|(k, _)| k).last()
    }

    pub fn is_zero(&self) -> bool {
        self.active().next().is_none()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            channels: self.channels.iter().map(|(&k, q)| (k, q.scaled(s))).collect(),
        }
    }
}

/// `q_k^{(order)}(t)`; inactive channels evaluate to zero.
pub fn eval_potential<T: Real>(p: &PotentialSpec<T>, k: usize, t: T, order: u8) -> Result<T> {
    let Some(q) = p.channel(k) else {
        return if order <= 2 {
            Ok(T::zero())
        } else {
            Err(Error::InvalidArgument(format!("derivative order {order} > 2")))
        };
    };
    match order {
        0 => Ok(q.value(t)),
        1 => Ok(q.derivative(t)),
        2 => Ok(q.second_derivative(t)),
        _ => Err(Error::InvalidArgument(format!("derivative order {order} > 2"))),
    }
}

/// Which end of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Zero,
    One,
}

/// `tr q(0)` or `tr q(1)`: the sum of the diagonal entries over active channels.
pub fn trace_endpoint<T: Real>(p: &PotentialSpec<T>, endpoint: Endpoint) -> T {
    let t = match endpoint {
        Endpoint::Zero => T::zero(),
        Endpoint::One => T::one(),
    };
    p.active().fold(T::zero(), |acc, (_, q)| acc + q.value(t))
}

/// `-(tr q(0) + tr q(1)) / 4`.
pub fn trace_target<T: Real>(p: &PotentialSpec<T>) -> T {
    -(trace_endpoint(p, Endpoint::Zero) + trace_endpoint(p, Endpoint::One)) / T::lit(4.0)
}

/// Spectral branch of a channel eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `λ < 0`.
    Negative,
    /// `0 < λ < γ`, from the imaginary root of the characteristic function.
    Principal,
    /// `λ = γ + x²` with `πm < x < π(m+1)`.
    Oscillatory(u32),
}

impl Branch {
    pub fn name(&self) -> &'static str {
        match self {
            Branch::Negative => "negative",
            Branch::Principal => "principal",
            Branch::Oscillatory(_) => "oscillatory",
        }
    }

    /// Mode index `m` for oscillatory records, 0 otherwise.
    pub fn mode(&self) -> u32 {
        match self {
            Branch::Oscillatory(m) => *m,
            _ => 0,
        }
    }

    pub fn is_oscillatory(&self) -> bool {
        matches!(self, Branch::Oscillatory(_))
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branch::Oscillatory(m) => write!(f, "oscillatory(m={m})"),
            other => f.write_str(other.name()),
        }
    }
}

/// One eigenvalue of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenvalueRecord<T> {
    pub k: usize,
    pub branch: Branch,
    /// `x` for oscillatory records, `w = √(γ - λ)` otherwise.
    pub root_param: T,
    pub lambda: T,
    /// `|characteristic function|` at the root.
    pub residual: T,
}

impl<T: Real> EigenvalueRecord<T> {
    pub fn cast<U: Real>(&self) -> EigenvalueRecord<U> {
        EigenvalueRecord {
            k: self.k,
            branch: self.branch,
            root_param: U::lit(self.root_param.to_f64_lossy()),
            lambda: U::lit(self.lambda.to_f64_lossy()),
            residual: U::lit(self.residual.to_f64_lossy()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::composite_gauss_legendre;
    use proptest::prelude::*;

    #[test]
    fn power_law_gammas() {
        let spec = make_operator_spec(2.0, 3.0, 3).unwrap();
        assert_eq!(spec.gammas(), &[2.0, 16.0, 54.0]);
        let spec = make_operator_spec(2.0, 3.0, 50).unwrap();
        assert_eq!(spec.gamma(50), Some(250000.0));
        assert_eq!(spec.implied_gamma(41), Some(2.0 * 41f64.powi(3)));
    }

    #[test]
    fn rejects_gamma_not_above_one() {
        assert!(matches!(
            make_operator_spec(1.0, 2.0, 1),
            Err(Error::InvalidOperator(_))
        ));
        assert!(make_operator_spec(-2.0, 2.0, 1).is_err());
        assert!(make_operator_spec(2.0, 0.0, 1).is_err());
        assert!(make_operator_spec(2.0, 1.0, 0).is_err());
        assert!(OperatorSpec::from_gammas(vec![1.2, 1.1]).is_err());
        assert!(OperatorSpec::from_gammas(vec![1.2, 1.5, 10.0]).is_ok());
    }

    #[test]
    fn potential_values_and_derivatives() {
        let p = PotentialSpec::zero()
            .with_channel(1, CosineSeries::term(1, 1.0f64))
            .unwrap();
        assert_eq!(eval_potential(&p, 1, 0.0, 0).unwrap(), 1.0);
        assert_eq!(eval_potential(&p, 1, 0.0, 1).unwrap(), 0.0);
        assert_eq!(eval_potential(&p, 7, 0.3, 2).unwrap(), 0.0);
        assert!(eval_potential(&p, 1, 0.3, 3).is_err());
        assert!(p.channel(1).unwrap().integral(0.0, 1.0).abs() < 1e-16);
    }

    #[test]
    fn endpoint_traces() {
        let p = PotentialSpec::zero()
            .with_channel(1, CosineSeries::term(1, 1.0f64))
            .unwrap();
        assert_eq!(trace_endpoint(&p, Endpoint::Zero), 1.0);
        assert_eq!(trace_endpoint(&p, Endpoint::One), -1.0);

        let empty = PotentialSpec::<f64>::zero();
        assert_eq!(trace_endpoint(&empty, Endpoint::Zero), 0.0);
        assert_eq!(trace_endpoint(&empty, Endpoint::One), 0.0);

        let p = PotentialSpec::zero()
            .with_channel(1, CosineSeries::new(vec![1.0f64, 1.0]).unwrap())
            .unwrap()
            .with_channel(2, CosineSeries::term(2, 2.0))
            .unwrap();
        assert!((trace_endpoint(&p, Endpoint::Zero) - 4.0).abs() < 1e-15);
        assert!((trace_endpoint(&p, Endpoint::One) - 2.0).abs() < 1e-15);
        assert!((trace_target(&p) + 1.5).abs() < 1e-15);
    }

    #[test]
    fn sup_norm_finds_interior_peak() {
        // 0.2cos(2πt) + 0.1cos(4πt) peaks at t = 0 with 0.3
        let q = CosineSeries::new(vec![0.0f64, 0.2, 0.0, 0.1]).unwrap();
        assert!((q.sup_norm() - 0.3).abs() < 1e-12);
        let q = CosineSeries::new(vec![0.3, 0.0, -0.5]).unwrap();
        assert!(q.sup_norm() <= q.sup_bound());
    }

    fn series() -> impl Strategy<Value = CosineSeries<f64>> {
        prop::collection::vec(-1.0f64..1.0, 1..6).prop_map(|c| CosineSeries::new(c).unwrap())
    }

    proptest! {
        #[test]
        fn zero_mean_by_quadrature(q in series()) {
            let integral = composite_gauss_legendre(|t| q.value(t), 0.0, 1.0, 8, 8);
            prop_assert!(integral.abs() < 1e-12);
        }

        #[test]
        fn derivative_matches_central_difference(q in series(), t in 0.05f64..0.95) {
            let h = 1e-5;
            // truncation h²/6·max|q'''| plus roundoff ε·max|q|/h, bounded termwise
            let bound = |order: i32| {
                q.terms()
                    .map(|(j, c)| c.abs() * (std::f64::consts::PI * j as f64).powi(order))
                    .sum::<f64>()
            };
            let fd = (q.value(t + h) - q.value(t - h)) / (2.0 * h);
            let tol = h * h / 6.0 * bound(3) + 1e-15 * bound(0) / h;
            prop_assert!((fd - q.derivative(t)).abs() <= tol);
            let fd2 = (q.derivative(t + h) - q.derivative(t - h)) / (2.0 * h);
            let tol2 = h * h / 6.0 * bound(4) + 1e-15 * bound(1) / h;
            prop_assert!((fd2 - q.second_derivative(t)).abs() <= tol2);
        }

        #[test]
        fn power_law_gammas_positive_nondecreasing(a in 1.01f64..10.0, alpha in 0.1f64..4.0, k in 1usize..60) {
            let spec = make_operator_spec(a, alpha, k).unwrap();
            prop_assert!(spec.gammas().iter().all(|&g| g > 0.0));
            prop_assert!(spec.gammas().windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

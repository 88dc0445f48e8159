//! Eigenvalue counting function `N(λ)` and its growth exponent.
//!
//! With `γ_k = a·k^α` the oscillatory eigenvalues form the lattice
//! `{γ_k + x²_{m,k}}`, whose count grows like `λ^{(α+2)/(2α)}`, while the
//! principal eigenvalues `≈ √γ_k` grow like `λ^{2/α}`. The two cross over at
//! `α = 2`.
//!
//! Only the oscillatory count is fitted. Below `γ_{K+1}` it is exact for a
//! truncation to `K` channels, whereas the principal count saturates at `K`
//! once `λ > √γ_{K+1}`, and the negative branch adds a constant `K` to every
//! positive `λ`.

use serde::Serialize;

use crate::charroots::{has_low_oscillatory_root, solve_oscillatory_root, ChannelSpectrum};
use crate::error::{Error, Result};
use crate::model::{Branch, OperatorSpec};
use crate::scalar::Real;

/// `N(λ)` split by branch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BranchCounts {
    pub oscillatory: usize,
    pub principal: usize,
    pub negative: usize,
}

impl BranchCounts {
    pub fn total(&self) -> usize {
        self.oscillatory + self.principal + self.negative
    }
}

/// Number of eigenvalues strictly below `lambda`, over all channels and
/// branches.
pub fn count_below<T: Real>(spectra: &[ChannelSpectrum<T>], lambda: T) -> usize {
    spectra
        .iter()
        .map(|s| s.records.partition_point(|r| r.lambda < lambda))
        .sum()
}

pub fn count_by_branch<T: Real>(spectra: &[ChannelSpectrum<T>], lambda: T) -> BranchCounts {
    let mut c = BranchCounts::default();
    for s in spectra {
        for r in s.records.iter().take_while(|r| r.lambda < lambda) {
            match r.branch {
                Branch::Oscillatory(_) => c.oscillatory += 1,
                Branch::Principal => c.principal += 1,
                Branch::Negative => c.negative += 1,
            }
        }
    }
    c
}

/// How many of the smallest counted eigenvalues lie below the window.
pub const WINDOW_SKIP: usize = 10;

/// `(λ_lo, λ_hi)` over which the oscillatory count of a truncated spectrum is
/// exact.
///
/// `λ_hi = min(γ_{K+1}, γ_1 + π²M²)`: past `γ_{K+1}` the discarded channels
/// start contributing, past `γ_1 + π²M²` the discarded modes do. For an
/// explicit `γ` list there are no channels beyond the list. `λ_lo` is the
/// 10th smallest oscillatory eigenvalue.
pub fn validity_window<T: Real>(spec: &OperatorSpec<T>, modes: u32) -> Result<(T, T)> {
    if modes == 0 {
        return Err(Error::EmptyWindow("no oscillatory modes retained".into()));
    }
    let pi = T::PI();
    let m = T::lit(modes as f64);
    let mode_cap = spec.gammas()[0] + pi * pi * m * m;
    let hi = match spec.growth() {
        Some(_) => spec
            .implied_gamma(spec.channels() + 1)
            .map_or(mode_cap, |g| g.min(mode_cap)),
        None => mode_cap,
    };

    let tol = T::lit(1e-10);
    let per_channel = modes.min(WINDOW_SKIP as u32);
    let mut low = Vec::new();
    for &g in spec.gammas() {
        if has_low_oscillatory_root(g) {
            low.push(solve_oscillatory_root(g, 0, tol)?.lambda);
        }
        for j in 1..=per_channel {
            low.push(solve_oscillatory_root(g, j, tol)?.lambda);
        }
    }
    low.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let lo = *low.get(WINDOW_SKIP - 1).ok_or_else(|| {
        Error::EmptyWindow(format!(
            "only {} oscillatory eigenvalues with K = {} and M = {modes}",
            low.len(),
            spec.channels()
        ))
    })?;
    if !(lo < hi) {
        return Err(Error::EmptyWindow(format!(
            "lower edge {} is not below the truncation limit {}",
            lo.to_f64_lossy(),
            hi.to_f64_lossy()
        )));
    }
    Ok((lo, hi))
}

/// Least-squares power law `y ≈ e^c·x^p` in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit<T> {
    pub exponent: T,
    pub log_prefactor: T,
    /// Coefficient of determination of the log-log regression.
    pub r_squared: T,
}

pub const MIN_FIT_SAMPLES: usize = 20;

/// Fits `y ~ x^p` to positive samples spanning at least a decade in `x`.
pub fn fit_exponent<T: Real>(samples: &[(T, T)]) -> Result<PowerFit<T>> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSpan(format!(
            "{} samples, need {MIN_FIT_SAMPLES}",
            samples.len()
        )));
    }
    if let Some((x, y)) = samples.iter().find(|(x, y)| !(*x > T::zero() && *y > T::zero())) {
        return Err(Error::InsufficientSpan(format!(
            "non-positive sample ({}, {})",
            x.to_f64_lossy(),
            y.to_f64_lossy()
        )));
    }
    let (xmin, xmax) = samples
        .iter()
        .fold((T::infinity(), T::zero()), |(lo, hi), (x, _)| (lo.min(*x), hi.max(*x)));
    if xmax < T::lit(10.0) * xmin {
        return Err(Error::InsufficientSpan(format!(
            "samples span [{}, {}], less than a decade",
            xmin.to_f64_lossy(),
            xmax.to_f64_lossy()
        )));
    }

    let n = T::from_usize_lossy(samples.len());
    let logs: Vec<(T, T)> = samples.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().fold(T::zero(), |a, (u, _)| a + *u) / n;
    let my = logs.iter().fold(T::zero(), |a, (_, v)| a + *v) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (u, v) in &logs {
        let (du, dv) = (*u - mx, *v - my);
        sxx = sxx + du * du;
        sxy = sxy + du * dv;
        syy = syy + dv * dv;
    }
    let exponent = sxy / sxx;
    let log_prefactor = my - exponent * mx;
    let r_squared = if syy > T::zero() {
        (sxy * sxy / (sxx * syy)).min(T::one())
    } else {
        T::one()
    };
    Ok(PowerFit { exponent, log_prefactor, r_squared })
}

/// The two reference exponent tables, in the order
/// `(stated for N(λ), stated for λ_n)`:
/// `2α/(α+2), α/2, 1` and `(α+2)/(2α), 2/α, 1` for `α > 2, α < 2, α = 2`.
pub fn table_exponents<T: Real>(alpha: T) -> (T, T) {
    let two = T::lit(2.0);
    if alpha > two {
        (two * alpha / (alpha + two), (alpha + two) / (two * alpha))
    } else if alpha < two {
        (alpha / two, two / alpha)
    } else {
        (T::one(), T::one())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TableVerdict {
    /// The fit matches the exponent the reference table states for `N(λ)`.
    CountingTable,
    /// The fit matches the exponent the reference table states for `λ_n`.
    GrowthTable,
    /// Both entries coincide (`α = 2`) and the fit matches them.
    Both,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountSample<T> {
    pub lambda: T,
    pub counts: BranchCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingReport<T> {
    pub samples: Vec<CountSample<T>>,
    pub window: (T, T),
    /// Exponent of the oscillatory `N(λ)` fit.
    pub delta_hat: T,
    pub fit_quality: T,
    /// Exponent of `λ_n ~ n^p` over the same eigenvalues.
    pub inverse_exponent: T,
    /// `delta_hat · inverse_exponent`; 1 for a consistent pair of fits.
    pub inverse_product: T,
    pub delta_counting_table: T,
    pub delta_growth_table: T,
    pub tolerance: T,
    pub verdict: TableVerdict,
}

pub const DEFAULT_SAMPLES: usize = 200;

/// Samples `N(λ)` on a log-uniform grid over the validity window and fits
/// the oscillatory count. `alpha` selects the table entries to compare with.
pub fn counting_report<T: Real>(
    spec: &OperatorSpec<T>,
    spectra: &[ChannelSpectrum<T>],
    modes: u32,
    alpha: T,
    n_samples: usize,
    tolerance: T,
) -> Result<CountingReport<T>> {
    let (lo, hi) = validity_window(spec, modes)?;
    let n_samples = n_samples.max(MIN_FIT_SAMPLES);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let step = (lhi - llo) / T::from_usize_lossy(n_samples - 1);
    let samples: Vec<CountSample<T>> = (0..n_samples)
        .map(|i| {
            let lambda = if i + 1 == n_samples {
                hi
            } else {
                (llo + step * T::from_usize_lossy(i)).exp()
            };
            CountSample {
                lambda,
                counts: count_by_branch(spectra, lambda),
            }
        })
        .collect();

    let fit_points: Vec<(T, T)> = samples
        .iter()
        .map(|s| (s.lambda, T::from_usize_lossy(s.counts.oscillatory)))
        .collect();
    let fit = fit_exponent(&fit_points)?;

    // λ_n against n for the oscillatory eigenvalues inside the window
    let mut osc: Vec<T> = spectra
        .iter()
        .flat_map(|s| s.oscillatory().map(|r| r.lambda))
        .collect();
    osc.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let first = osc.partition_point(|l| *l < lo) + 1;
    let last = osc.partition_point(|l| *l <= hi);
    if last < first + MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSpan(format!(
            "{} eigenvalues inside the window",
            last + 1 - first.min(last + 1)
        )));
    }
    let (nlo, nhi) = (T::from_usize_lossy(first).ln(), T::from_usize_lossy(last).ln());
    let nstep = (nhi - nlo) / T::from_usize_lossy(n_samples - 1);
    let mut idx: Vec<usize> = (0..n_samples)
        .map(|i| {
            (nlo + nstep * T::from_usize_lossy(i))
                .exp()
                .round()
                .to_usize()
                .unwrap_or(first)
                .clamp(first, last)
        })
        .collect();
    idx.dedup();
    let inverse_points: Vec<(T, T)> = idx
        .iter()
        .map(|&n| (T::from_usize_lossy(n), osc[n - 1]))
        .collect();
    let inverse = fit_exponent(&inverse_points)?;

    let (d_count, d_growth) = table_exponents(alpha);
    let near = |d: T| (fit.exponent - d).abs() <= tolerance;
    let verdict = match (near(d_count), near(d_growth)) {
        (true, true) => TableVerdict::Both,
        (true, false) => TableVerdict::CountingTable,
        (false, true) => TableVerdict::GrowthTable,
        (false, false) => TableVerdict::Neither,
    };
    Ok(CountingReport {
        samples,
        window: (lo, hi),
        delta_hat: fit.exponent,
        fit_quality: fit.r_squared,
        inverse_exponent: inverse.exponent,
        inverse_product: fit.exponent * inverse.exponent,
        delta_counting_table: d_count,
        delta_growth_table: d_growth,
        tolerance,
        verdict,
    })
}

//! Normalized modes, first-order matrix elements and regularized trace sums.
//!
//! An unperturbed eigenvector is the triple `{y, y₁, y(1)}` with
//! `y₁ = -y(1)/λ`. Oscillatory modes use `y = sin(xt)`, principal and
//! negative modes use `y = sinh(wt)/sinh(w)`, which keeps large `w` finite.
//! The potential only acts on the first component, so the first-order shift
//! is `∫ y² q dt / ‖Y‖²`.

use rayon::prelude::*;

use crate::charroots::{enumerate_channel, ChannelSpectrum};
use crate::discretizer::oracle_channel;
use crate::error::{Error, Result};
use crate::model::{trace_target, Branch, CosineSeries, EigenvalueRecord, OperatorSpec, PotentialSpec};
use crate::perturbed::{solve_perturbed_channel, BranchSeeds, ChannelPotential, PerturbOptions, PerturbedPair};
use crate::quadrature::{integrate_adaptive, GaussLegendre};
use crate::scalar::Real;

/// The closed-form norm is trusted only where the root identity holds to
/// this level.
pub const IDENTITY_GATE: f64 = 1e-9;

const QUAD_NODES: usize = 8;
const QUAD_REL_TOL: f64 = 1e-10;
// close to the rounding floor of a sum over thousands of panels
const NORM_REL_TOL: f64 = 1e-12;
const MAX_PANELS: usize = 1 << 22;

/// `H = xλ² - λ² sin x cos x + 4x sin²x + 2x²λ sin x cos x` with
/// `λ = x² + γ`. At a root, `‖Y‖² = H / (2xλ²)`.
pub fn norm_h<T: Real>(x: T, gamma: T) -> T {
    let lam = x * x + gamma;
    let (s, c) = x.sin_cos();
    let two = T::lit(2.0);
    x * lam * lam - lam * lam * s * c + T::lit(4.0) * x * s * s + two * x * x * lam * s * c
}

/// `sin x·(x² + γ) - x cos x - sin x/(x² + γ)`, zero exactly at the
/// oscillatory roots.
pub fn root_identity_residual<T: Real>(x: T, gamma: T) -> T {
    let lam = x * x + gamma;
    let (s, c) = x.sin_cos();
    s * lam - x * c - s / lam
}

/// `∫₀¹ sin²(xt) dt + sin²x/λ² + sin²x` by quadrature.
pub fn quadrature_norm_sq<T: Real>(x: T, gamma: T) -> T {
    let lam = x * x + gamma;
    let s = x.sin();
    let rule = GaussLegendre::<T>::new(QUAD_NODES);
    let (v, _) = integrate_adaptive(
        &rule,
        |t: T| (x * t).sin().powi(2),
        T::zero(),
        T::one(),
        oscillatory_panels(x),
        MAX_PANELS,
        T::lit(NORM_REL_TOL),
        T::one(),
    );
    v + s * s / (lam * lam) + s * s
}

fn oscillatory_panels<T: Real>(x: T) -> usize {
    let p = (T::lit(4.0) * x / T::PI()).ceil().to_usize().unwrap_or(MAX_PANELS);
    p.max(16)
}

/// `sinh(wt)/sinh(w)` without overflow.
fn scaled_sinh<T: Real>(w: T, t: T) -> T {
    if w * t < T::lit(20.0) && w < T::lit(300.0) {
        return (w * t).sinh() / w.sinh();
    }
    let e = |z: T| (-z).exp();
    (w * (t - T::one())).exp() * (T::one() - e(T::lit(2.0) * w * t)) / (T::one() - e(T::lit(2.0) * w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// From `H`.
    ClosedForm,
    Quadrature,
}

/// A unit-norm unperturbed eigenvector in the direct-sum space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedMode<T> {
    pub record: EigenvalueRecord<T>,
    pub gamma: T,
    /// Present for oscillatory modes that passed the identity gate.
    pub h: Option<T>,
    pub normalization: Normalization,
    norm_sq: T,
}

impl<T: Real> NormalizedMode<T> {
    pub fn new(record: EigenvalueRecord<T>, gamma: T) -> Result<Self> {
        let x = record.root_param;
        match record.branch {
            Branch::Oscillatory(_) => {
                let gate = root_identity_residual(x, gamma).abs() < T::lit(IDENTITY_GATE);
                let (h, norm_sq, normalization) = if gate {
                    let h = norm_h(x, gamma);
                    let lam = x * x + gamma;
                    (Some(h), h / (T::lit(2.0) * x * lam * lam), Normalization::ClosedForm)
                } else {
                    (None, quadrature_norm_sq(x, gamma), Normalization::Quadrature)
                };
                if !(norm_sq > T::zero()) {
                    return Err(Error::InvalidArgument(format!("mode {} has norm² {norm_sq}", record.branch)));
                }
                Ok(Self { record, gamma, h, normalization, norm_sq })
            }
            _ => {
                let lam = record.lambda;
                let rule = GaussLegendre::<T>::new(QUAD_NODES);
                let (body, ok) = integrate_adaptive(
                    &rule,
                    |t: T| scaled_sinh(x, t).powi(2),
                    T::zero(),
                    T::one(),
                    oscillatory_panels(x),
                    MAX_PANELS,
                    T::lit(NORM_REL_TOL),
                    T::one(),
                );
                if !ok {
                    return Err(Error::NonConvergence {
                        what: "mode normalization",
                        iterations: MAX_PANELS,
                        residual: f64::NAN,
                    });
                }
                let norm_sq = body + (lam * lam).recip() + T::one();
                Ok(Self {
                    record,
                    gamma,
                    h: None,
                    normalization: Normalization::Quadrature,
                    norm_sq,
                })
            }
        }
    }

    pub fn norm_sq(&self) -> T {
        self.norm_sq
    }

    /// The same mode in another precision, keeping the normalization
    /// computed here.
    pub fn cast<U: Real>(&self) -> NormalizedMode<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        NormalizedMode {
            record: self.record.cast(),
            gamma: c(self.gamma),
            h: self.h.map(c),
            normalization: self.normalization,
            norm_sq: c(self.norm_sq),
        }
    }

    /// `y(t)` before normalization.
    pub fn profile(&self, t: T) -> T {
        let x = self.record.root_param;
        match self.record.branch {
            Branch::Oscillatory(_) => (x * t).sin(),
            _ => scaled_sinh(x, t),
        }
    }

    /// `w(t) = y(t)²/‖Y‖²`.
    pub fn weight(&self, t: T) -> T {
        self.profile(t).powi(2) / self.norm_sq
    }

    /// `(y₁² + y(1)²)/‖Y‖²`.
    pub fn boundary_weight(&self) -> T {
        let y1 = self.profile(T::one());
        let lam = self.record.lambda;
        y1 * y1 * ((lam * lam).recip() + T::one()) / self.norm_sq
    }

    pub fn panels(&self) -> usize {
        oscillatory_panels(self.record.root_param)
    }

    /// `∫ w + boundary weight - 1` by an independent quadrature.
    pub fn unit_norm_residual(&self) -> T {
        let rule = GaussLegendre::<T>::new(QUAD_NODES);
        let body = rule.composite(|t| self.weight(t), T::zero(), T::one(), 2 * self.panels());
        body + self.boundary_weight() - T::one()
    }
}

/// First-order eigenvalue shift `∫₀¹ w(t) q(t) dt`.
pub fn matrix_element<T: Real, Q: ChannelPotential<T> + ?Sized>(mode: &NormalizedMode<T>, q: &Q) -> Result<T> {
    if q.is_zero() {
        return Ok(T::zero());
    }
    let rule = GaussLegendre::<T>::new(QUAD_NODES);
    let scale = q.sup_norm() * T::lit(1e-3);
    let (v, ok) = integrate_adaptive(
        &rule,
        |t| mode.weight(t) * q.value(t),
        T::zero(),
        T::one(),
        mode.panels(),
        MAX_PANELS,
        T::lit(QUAD_REL_TOL),
        scale,
    );
    if !ok {
        return Err(Error::NonConvergence {
            what: "matrix element quadrature",
            iterations: MAX_PANELS,
            residual: f64::NAN,
        });
    }
    Ok(v)
}

/// One paired eigenvalue with its first-order shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry<T> {
    pub k: usize,
    pub branch: Branch,
    pub lambda: T,
    pub mu: T,
    pub element: T,
}

impl<T: Real> TraceEntry<T> {
    pub fn m(&self) -> u32 {
        self.branch.mode()
    }

    pub fn shift(&self) -> T {
        self.mu - self.lambda
    }

    pub fn remainder(&self) -> T {
        self.shift() - self.element
    }

    fn within(&self, cutoff: u32) -> bool {
        !self.branch.is_oscillatory() || self.m() <= cutoff
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BranchSums<T> {
    pub oscillatory: T,
    pub principal: T,
    pub negative: T,
}

impl<T: Real> BranchSums<T> {
    fn zero() -> Self {
        Self {
            oscillatory: T::zero(),
            principal: T::zero(),
            negative: T::zero(),
        }
    }

    fn add(&mut self, branch: Branch, v: T) {
        let slot = match branch {
            Branch::Oscillatory(_) => &mut self.oscillatory,
            Branch::Principal => &mut self.principal,
            Branch::Negative => &mut self.negative,
        };
        *slot = *slot + v;
    }

    pub fn total(&self) -> T {
        self.oscillatory + self.principal + self.negative
    }
}

/// Partial sums at one mode cutoff `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSums<T> {
    pub cutoff: u32,
    /// `Σ (μ - λ)`
    pub shift: BranchSums<T>,
    pub element: BranchSums<T>,
    /// `Σ (μ - λ - element)`
    pub remainder: BranchSums<T>,
    /// `Σ (μ_(n) - λ_(n))` over the same number of terms, with both
    /// spectra sorted globally instead of paired by mode.
    pub global_shift: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLedger<T> {
    pub entries: Vec<TraceEntry<T>>,
    pub schedule: Vec<u32>,
    pub partial_sums: Vec<CutoffSums<T>>,
    pub target: T,
    /// Mean of the shift sums over every cutoff in the last quarter of
    /// `1..=M_max`.
    pub extrapolated: BranchSums<T>,
    pub extrapolated_remainder: BranchSums<T>,
}

impl<T: Real> TraceLedger<T> {
    /// Partial sums of one channel only.
    pub fn channel_sums(&self, k: usize, cutoff: u32) -> BranchSums<T> {
        let mut s = BranchSums::zero();
        for e in self.entries.iter().filter(|e| e.k == k && e.within(cutoff)) {
            s.add(e.branch, e.shift());
        }
        s
    }
}

/// Pairs every channel's perturbed results with their elements and forms the
/// partial sums at each cutoff of `schedule`.
pub fn pair_and_sum<T: Real>(
    pairs: &[Vec<PerturbedPair<T>>],
    elements: &[Vec<T>],
    schedule: &[u32],
    target: T,
) -> Result<TraceLedger<T>> {
    if pairs.len() != elements.len() {
        return Err(Error::Misaligned(format!("{} channels of pairs, {} of elements", pairs.len(), elements.len())));
    }
    let mut entries = Vec::new();
    for (ps, es) in pairs.iter().zip(elements) {
        if ps.len() != es.len() {
            return Err(Error::Misaligned(format!("{} pairs, {} elements", ps.len(), es.len())));
        }
        for (p, e) in ps.iter().zip(es) {
            entries.push(TraceEntry {
                k: p.base.k,
                branch: p.base.branch,
                lambda: p.base.lambda,
                mu: p.mu,
                element: *e,
            });
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for e in &entries {
        if !seen.insert((e.k, e.branch)) {
            return Err(Error::Misaligned(format!("channel {} has two {} records", e.k, e.branch)));
        }
    }
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("schedule must be non-empty and increasing".into()));
    }
    let m_max = *schedule.last().expect("non-empty");
    for k in seen.iter().map(|(k, _)| *k).collect::<std::collections::BTreeSet<_>>() {
        let top = entries.iter().filter(|e| e.k == k).map(|e| e.m()).max().unwrap_or(0);
        if top < m_max {
            return Err(Error::InvalidArgument(format!("channel {k} has modes up to {top}, schedule needs {m_max}")));
        }
    }

    let mut lambdas: Vec<T> = entries.iter().map(|e| e.lambda).collect();
    let mut mus: Vec<T> = entries.iter().map(|e| e.mu).collect();
    lambdas.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    mus.sort_by(|a, b| a.partial_cmp(b).expect("finite"));

    let sums_at = |cutoff: u32| {
        let mut c = CutoffSums {
            cutoff,
            shift: BranchSums::zero(),
            element: BranchSums::zero(),
            remainder: BranchSums::zero(),
            global_shift: T::zero(),
        };
        let mut count = 0;
        for e in entries.iter().filter(|e| e.within(cutoff)) {
            c.shift.add(e.branch, e.shift());
            c.element.add(e.branch, e.element);
            c.remainder.add(e.branch, e.remainder());
            count += 1;
        }
        c.global_shift = mus[..count]
            .iter()
            .zip(&lambdas[..count])
            .fold(T::zero(), |acc, (m, l)| acc + (*m - *l));
        c
    };
    let partial_sums: Vec<CutoffSums<T>> = schedule.iter().map(|&c| sums_at(c)).collect();

    // running sums over every cutoff, for the Cesàro tail average
    let from = m_max - m_max / 4;
    let mut running = BranchSums::zero();
    let mut running_rem = BranchSums::zero();
    let mut acc = BranchSums::zero();
    let mut acc_rem = BranchSums::zero();
    let mut by_mode: Vec<&TraceEntry<T>> = entries.iter().filter(|e| e.within(m_max)).collect();
    by_mode.sort_by_key(|e| (e.branch.is_oscillatory(), e.m(), e.k));
    let mut idx = 0;
    let mut terms = 0usize;
    for cutoff in 0..=m_max {
        while idx < by_mode.len() && (!by_mode[idx].branch.is_oscillatory() || by_mode[idx].m() <= cutoff) {
            running.add(by_mode[idx].branch, by_mode[idx].shift());
            running_rem.add(by_mode[idx].branch, by_mode[idx].remainder());
            idx += 1;
        }
        if cutoff > from || (from == m_max && cutoff == m_max) {
            for (a, r) in [(&mut acc, &running), (&mut acc_rem, &running_rem)] {
                a.oscillatory = a.oscillatory + r.oscillatory;
                a.principal = a.principal + r.principal;
                a.negative = a.negative + r.negative;
            }
            terms += 1;
        }
    }
    let n = T::from_usize_lossy(terms);
    let mean = |s: BranchSums<T>| BranchSums {
        oscillatory: s.oscillatory / n,
        principal: s.principal / n,
        negative: s.negative / n,
    };
    Ok(TraceLedger {
        entries,
        schedule: schedule.to_vec(),
        partial_sums,
        target,
        extrapolated: mean(acc),
        extrapolated_remainder: mean(acc_rem),
    })
}

/// `T_N = Σ_{m≤N} ∫₀¹ cos(2πmt) q(t) dt` and its Cesàro mean `(1/N) Σ T_n`.
///
/// Both are integrals of `q` against closed-form kernels: the Dirichlet
/// kernel `D_N(t) = sin((2N+1)πt)/(2 sin πt) - 1/2` and
/// `(1/N) Σ_{n≤N} D_n = F_N - 1/2 + D_N/N` with the Fejér kernel
/// `F_N = sin²(Nπt)/(2N sin²πt)`.
pub fn fourier_endpoint_limit<T: Real, F: Fn(T) -> T>(q: F, n: usize) -> (T, T) {
    let nf = T::from_usize_lossy(n);
    let pi = T::PI();
    let half = T::lit(0.5);
    // both kernels are symmetric about 1/2; evaluate at the nearer end
    let fold = |t: T| t.min(T::one() - t);
    let dirichlet = |t: T| {
        let u = fold(t);
        ((T::lit(2.0) * nf + T::one()) * pi * u).sin() / (T::lit(2.0) * (pi * u).sin()) - half
    };
    let fejer = |t: T| {
        let u = fold(t);
        let r = (nf * pi * u).sin() / (pi * u).sin();
        r * r / (T::lit(2.0) * nf)
    };
    let rule = GaussLegendre::<T>::new(QUAD_NODES);
    let panels = 4 * n + 16;
    let mean_q = rule.composite(&q, T::zero(), T::one(), 16);
    let t_n = rule.composite(|t| q(t) * dirichlet(t), T::zero(), T::one(), panels);
    let f_n = rule.composite(|t| q(t) * fejer(t), T::zero(), T::one(), panels);
    (t_n, f_n - half * mean_q + t_n / nf)
}

/// Everything a trace run reports against the closed-form target.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceVerdict<T> {
    pub target: T,
    pub osc_sum: T,
    pub principal_sum: T,
    pub negative_sum: T,
    pub total_sum: T,
    /// `|S_{c+1} - S_c|` of the remainder totals along the schedule.
    pub remainder_trend: Vec<T>,
    /// `(|osc_sum| - |target|)/|target|`, or `|osc_sum|` for a zero target.
    pub relative_deviation_osc: T,
    pub relative_deviation_total: T,
    pub sign_agrees: bool,
    /// Largest gap between mode pairing and global pairing over the schedule.
    pub pairing_gap: T,
    pub warning: Option<String>,
}

pub fn trace_verdict<T: Real>(ledger: &TraceLedger<T>, alpha: Option<T>) -> TraceVerdict<T> {
    let e = ledger.extrapolated;
    let target = ledger.target;
    let rel = |s: T| {
        if target == T::zero() {
            s.abs()
        } else {
            (s.abs() - target.abs()) / target.abs()
        }
    };
    let remainder_trend = ledger
        .partial_sums
        .windows(2)
        .map(|w| (w[1].remainder.total() - w[0].remainder.total()).abs())
        .collect();
    let pairing_gap = ledger
        .partial_sums
        .iter()
        .fold(T::zero(), |g, c| g.max((c.global_shift - c.shift.total()).abs()));
    let sign_agrees = (e.oscillatory > T::zero()) == (target > T::zero())
        || e.oscillatory == T::zero() && target == T::zero();
    let warning = match alpha {
        Some(a) if a <= T::lit(2.0) => Some(format!("growth exponent {a} ≤ 2: the trace formula is not claimed")),
        None => Some("operator has no growth exponent; the trace formula assumes α > 2".into()),
        _ => None,
    };
    TraceVerdict {
        target,
        osc_sum: e.oscillatory,
        principal_sum: e.principal,
        negative_sum: e.negative,
        total_sum: e.total(),
        remainder_trend,
        relative_deviation_osc: rel(e.oscillatory),
        relative_deviation_total: rel(e.total()),
        sign_agrees,
        pairing_gap,
        warning,
    }
}

#[derive(Debug, Clone)]
pub struct TraceOptions<T> {
    /// Oscillatory modes per channel; at least the last schedule entry.
    pub modes: u32,
    pub schedule: Vec<u32>,
    pub include_negative: bool,
    pub tol: T,
    pub perturb: PerturbOptions<T>,
    /// Grid of the finite-element oracle that seeds the principal and
    /// negative roots.
    pub oracle_grid: usize,
}

impl<T: Real> TraceOptions<T> {
    pub fn new(schedule: Vec<u32>) -> Self {
        Self {
            modes: schedule.last().copied().unwrap_or(0),
            schedule,
            include_negative: true,
            tol: T::lit(1e-12),
            perturb: PerturbOptions {
                scan: 4,
                ..PerturbOptions::default()
            },
            oracle_grid: 2000,
        }
    }
}

/// Per-channel intermediate results of a trace run.
#[derive(Debug, Clone)]
pub struct ChannelTrace<T> {
    pub base: ChannelSpectrum<T>,
    pub pairs: Vec<PerturbedPair<T>>,
    pub elements: Vec<T>,
}

fn series_f64<T: Real>(q: &CosineSeries<T>) -> Result<CosineSeries<f64>> {
    CosineSeries::new(q.coeffs().iter().map(|c| c.to_f64_lossy()).collect())
}

/// Elements are evaluated in `f64`: they are small and the quadrature is
/// far below their size, while extended-precision trigonometry would
/// dominate the run time.
pub fn channel_trace<T: Real>(k: usize, gamma: T, q: &CosineSeries<T>, opts: &TraceOptions<T>) -> Result<ChannelTrace<T>> {
    let base = enumerate_channel(k, gamma, opts.modes, opts.include_negative, opts.tol)?;
    let q64 = series_f64(q)?;
    let oracle = oracle_channel(k, gamma.to_f64_lossy(), Some(&q64), opts.oracle_grid, 3)?;
    let seed = |b: Branch| oracle.find(b).map(|r| T::lit(r.lambda));
    let seeds = BranchSeeds {
        principal: seed(Branch::Principal),
        negative: seed(Branch::Negative),
    };
    let pairs = solve_perturbed_channel(q, &base, seeds, &opts.perturb)?;
    let g64 = gamma.to_f64_lossy();
    let elements = base
        .records
        .par_iter()
        .map(|r| {
            let mode = match r.branch {
                // the root identity needs the root's own precision
                Branch::Oscillatory(_) => NormalizedMode::new(*r, gamma)?.cast::<f64>(),
                _ => NormalizedMode::new(r.cast::<f64>(), g64)?,
            };
            matrix_element(&mode, &q64).map(T::lit).map_err(|e| e.in_channel(k, r.branch))
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(ChannelTrace { base, pairs, elements })
}

/// Full pipeline over the active channels of `potential`.
pub fn trace_pipeline<T: Real>(
    spec: &OperatorSpec<T>,
    potential: &PotentialSpec<T>,
    opts: &TraceOptions<T>,
) -> Result<(TraceLedger<T>, Vec<ChannelTrace<T>>)> {
    if let Some(k) = potential.max_channel().filter(|&k| k > spec.channels()) {
        return Err(Error::InvalidPotential(format!("channel {k} beyond K = {}", spec.channels())));
    }
    if opts.schedule.last().is_some_and(|&m| m > opts.modes) {
        return Err(Error::InvalidArgument(format!("schedule exceeds {} modes", opts.modes)));
    }
    let mut channels = Vec::new();
    for (k, q) in potential.active() {
        let gamma = spec.gamma(k).expect("checked above");
        channels.push(channel_trace(k, gamma, q, opts)?);
    }
    let pairs: Vec<_> = channels.iter().map(|c| c.pairs.clone()).collect();
    let elements: Vec<_> = channels.iter().map(|c| c.elements.clone()).collect();
    let schedule = if channels.is_empty() { vec![opts.modes.max(1)] } else { opts.schedule.clone() };
    let ledger = if channels.is_empty() {
        empty_ledger(schedule, trace_target(potential))
    } else {
        pair_and_sum(&pairs, &elements, &schedule, trace_target(potential))?
    };
    Ok((ledger, channels))
}

fn empty_ledger<T: Real>(schedule: Vec<u32>, target: T) -> TraceLedger<T> {
    let zero = CutoffSums {
        cutoff: 0,
        shift: BranchSums::zero(),
        element: BranchSums::zero(),
        remainder: BranchSums::zero(),
        global_shift: T::zero(),
    };
    TraceLedger {
        partial_sums: schedule.iter().map(|&c| CutoffSums { cutoff: c, ..zero }).collect(),
        entries: Vec::new(),
        schedule,
        target,
        extrapolated: BranchSums::zero(),
        extrapolated_remainder: BranchSums::zero(),
    }
}

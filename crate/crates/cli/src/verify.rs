//! The invariant suite behind `verify`.

use std::f64::consts::PI;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sltrace::counting::count_below;
use sltrace::discretizer::{assemble_channel, expected_census, window_census};
use sltrace::traceform::{norm_h, quadrature_norm_sq, root_identity_residual};
use sltrace::{char_fn, counting_report, enumerate_spectrum, oracle_channel, Branch, Real};

use crate::commands::{dispatch, exact_channel, perturbed, spectra, traced};
use crate::config::RunConfig;
use crate::output::Artifacts;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst measured value.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

fn at_most(name: &'static str, value: f64, threshold: f64, detail: impl Into<String>) -> Check {
    Check {
        name,
        passed: value <= threshold,
        value,
        threshold,
        detail: detail.into(),
    }
}

/// Per-root measurements taken in the working precision.
struct RootStats {
    bracket_violations: usize,
    max_char: f64,
    max_identity: f64,
    /// `(k, m, x)` of every oscillatory root with `m ≥ 1`.
    roots: Vec<(usize, u32, f64)>,
    /// `(k, γ, λ)` of every principal root.
    principal: Vec<(usize, f64, f64)>,
    negatives: Vec<usize>,
}

fn root_stats<T: Real>(cfg: &RunConfig) -> Result<RootStats> {
    let spec = cfg.operator_spec::<T>()?;
    let n = &cfg.numerics;
    let all = enumerate_spectrum(&spec, n.m_modes, n.include_negative, T::lit(n.tol_root))?;
    let mut st = RootStats {
        bracket_violations: 0,
        max_char: 0.0,
        max_identity: 0.0,
        roots: Vec::new(),
        principal: Vec::new(),
        negatives: Vec::new(),
    };
    for s in &all {
        let mut neg = 0;
        for r in &s.records {
            match r.branch {
                Branch::Oscillatory(m) => {
                    let x = r.root_param;
                    let lo = T::PI() * T::lit(m as f64);
                    if !(x > lo && x < lo + T::PI()) {
                        st.bracket_violations += 1;
                    }
                    let f = char_fn(x, s.gamma).map(|v| v.abs().to_f64_lossy()).unwrap_or(f64::INFINITY);
                    st.max_char = st.max_char.max(f);
                    let id = root_identity_residual(x, s.gamma).abs().to_f64_lossy();
                    st.max_identity = st.max_identity.max(id);
                    if m >= 1 {
                        st.roots.push((s.k, m, x.to_f64_lossy()));
                    }
                }
                Branch::Principal => st.principal.push((s.k, s.gamma.to_f64_lossy(), r.lambda.to_f64_lossy())),
                Branch::Negative => neg += 1,
            }
        }
        st.negatives.push(neg);
    }
    Ok(st)
}

/// Runs every check, writes `verify.json` and returns the names of the
/// failed checks.
pub fn verify(cfg: &RunConfig, out: &mut Artifacts) -> Result<Vec<String>> {
    let n = &cfg.numerics;
    let mut checks = Vec::new();

    let st = dispatch!(cfg, root_stats)?;
    checks.push(at_most(
        "root_bracket",
        st.bracket_violations as f64,
        0.0,
        "oscillatory roots outside (pi m, pi (m+1))",
    ));
    checks.push(at_most("root_residual", st.max_char, 1e-10, "max |char_fn| at the roots"));
    checks.push(at_most(
        "root_identity",
        st.max_identity,
        1e-9,
        "max |sin x (x^2+g) - x cos x - sin x/(x^2+g)|",
    ));

    let gammas = cfg.operator_spec::<f64>()?.gammas().to_vec();
    let norm_err = st
        .roots
        .par_iter()
        .map(|&(k, _, x)| {
            let g = gammas[k - 1];
            let lam = x * x + g;
            let closed = norm_h(x, g) / (2.0 * x * lam * lam);
            let quad = quadrature_norm_sq(x, g);
            (closed - quad).abs() / quad
        })
        .reduce(|| 0.0, f64::max);
    checks.push(at_most(
        "norm_consistency",
        norm_err,
        1e-8,
        "relative gap between the closed-form and quadrature norms",
    ));

    // max_k |x/(πm) - 1| must not grow with m
    let mut dev = vec![0.0f64; n.m_modes as usize + 1];
    for &(_, m, x) in &st.roots {
        let d = (x / (PI * m as f64) - 1.0).abs();
        dev[m as usize] = dev[m as usize].max(d);
    }
    let rises = dev[1..].windows(2).filter(|w| w[1] > w[0]).count();
    checks.push(at_most("mode_asymptotics", rises as f64, 0.0, "modes where max_k |x/(pi m) - 1| increases"));

    let ratio: Vec<(usize, f64)> = st
        .principal
        .iter()
        .map(|&(k, g, l)| (k, (l / g.sqrt() - 1.0).abs()))
        .collect();
    let p_rises = ratio
        .windows(2)
        .filter(|w| w[0].0 >= 5 && w[1].1 > w[0].1)
        .count();
    let p_far = ratio.iter().filter(|(k, _)| *k >= 20).map(|(_, r)| *r).fold(0.0, f64::max);
    checks.push(at_most(
        "principal_trend",
        p_rises as f64,
        0.0,
        "channels k >= 5 where |lambda_p/sqrt(g) - 1| increases",
    ));
    checks.push(at_most("principal_asymptotics", p_far, 0.1, "max |lambda_p/sqrt(g) - 1| over k >= 20"));
    if n.include_negative {
        let wrong = st.negatives.iter().filter(|&&c| c != 1).count();
        checks.push(at_most("negative_root", wrong as f64, 0.0, "channels without exactly one negative root"));
    }

    // finite-element census and agreement on the first few unperturbed channels
    let pot = cfg.potential_spec::<f64>()?;
    let oracle_k: Vec<usize> = (1..=gammas.len().min(3)).collect();
    let modes = n.oracle_modes as u32;
    let mut census_bad = 0;
    let mut oracle_err = 0.0f64;
    for &k in &oracle_k {
        let g = gammas[k - 1];
        let q = pot.channel(k).filter(|q| !q.is_zero());
        let p = assemble_channel(g, q, n.grid_n)?;
        if q.is_none() {
            if window_census(&p, g, modes) != expected_census(g, modes) {
                census_bad += 1;
            }
            let fe = oracle_channel(k, g, None, n.grid_n, n.oracle_modes)?;
            let exact = exact_channel(cfg, k, g, modes)?;
            for r in &fe.records {
                if let Some(e) = exact.find(r.branch) {
                    oracle_err = oracle_err.max((r.lambda - e.lambda).abs() / e.lambda.abs().max(1.0));
                }
            }
        }
    }
    checks.push(at_most("oracle_census", census_bad as f64, 0.0, "unperturbed channels 1..=3 with a census mismatch"));
    checks.push(at_most(
        "oracle_agreement",
        oracle_err,
        1e-4,
        format!("relative gap of the lowest {} finite-element eigenvalues", n.oracle_modes),
    ));

    let counting = counting_checks(cfg, &mut checks)?;

    let rows = dispatch!(cfg, perturbed)?;
    let weyl = rows
        .iter()
        .map(|r| (r.mu - r.lambda).abs() - r.sup_norm)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    checks.push(at_most("weyl_bound", weyl, 1e-8, "max(|mu - lambda| - sup|q|) over perturbed modes"));

    let mut trace = serde_json::Value::Null;
    if n.m_modes >= 10 {
        let t = dispatch!(cfg, traced)?;
        if pot.is_zero() {
            checks.push(at_most("trace_zero_potential", t.max_abs_sum, 0.0, "largest partial sum with q = 0"));
        } else {
            let rises = t.remainder_trend.windows(2).filter(|w| w[1] >= w[0]).count();
            checks.push(at_most(
                "trace_remainder_cauchy",
                rises as f64,
                0.0,
                "schedule steps where |S_next - S| fails to shrink",
            ));
        }
        trace = t.verdict;
    }

    let passed = checks.iter().all(|c| c.passed);
    out.json(
        "verify.json",
        json!({ "passed": passed, "checks": checks, "counting": counting, "trace": trace }),
    )?;
    Ok(checks.iter().filter(|c| !c.passed).map(|c| c.name.to_string()).collect())
}

fn counting_checks(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<serde_json::Value> {
    let n = &cfg.numerics;
    let Some(alpha) = cfg.alpha().filter(|_| n.m_modes >= 10) else {
        return Ok(serde_json::Value::Null);
    };
    let spec = cfg.operator_spec::<f64>()?;
    let all = dispatch!(cfg, spectra)?;
    let report = match counting_report(&spec, &all, n.m_modes, alpha, n.counting_samples, n.counting_tolerance) {
        Ok(r) => r,
        // too few channels or modes for a fit: nothing to check
        Err(e @ (sltrace::Error::EmptyWindow(_) | sltrace::Error::InsufficientSpan(_))) => {
            return Ok(json!({ "skipped": e.to_string() }));
        }
        Err(e) => return Err(e.into()),
    };
    let mono = report.samples.windows(2).filter(|w| w[1].counts.total() < w[0].counts.total()).count();
    let lo = count_below(&all, report.window.0);
    checks.push(at_most("counting_monotone", mono as f64, 0.0, "decreases of N along the samples"));
    checks.push(at_most(
        "counting_inversion",
        (report.inverse_product - 1.0).abs(),
        0.05,
        "|delta_hat * lambda_n exponent - 1|",
    ));
    checks.push(Check {
        name: "counting_window",
        passed: lo >= 1,
        value: lo as f64,
        threshold: 1.0,
        detail: "N(lambda_lo) must be at least 1".into(),
    });
    Ok(json!({ "delta_hat": report.delta_hat, "verdict": report.verdict }))
}

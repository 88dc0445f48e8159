//! One function per subcommand. Each computes in the configured precision,
//! narrows to `f64` and writes its artifacts.

use anyhow::Result;
use serde_json::{json, Value};
use sltrace::discretizer::{assemble_channel, oracle_spectrum};
use sltrace::perturbed::{solve_perturbed_channel, BranchSeeds, PerturbOptions};
use sltrace::traceform::{trace_pipeline, trace_verdict, BranchSums, TraceOptions};
use sltrace::{
    counting_report, enumerate_channel, enumerate_spectrum, oracle_channel, Branch, ChannelSpectrum, CosineSeries, Dd,
    EigenvalueRecord, Real,
};

use crate::config::{Precision, RunConfig};
use crate::output::{num, Artifacts};

/// Runs `$f::<T>($cfg)` with `T` chosen by the configured precision.
macro_rules! dispatch {
    ($cfg:expr, $f:ident) => {
        match $cfg.numerics.precision {
            $crate::config::Precision::F64 => $f::<f64>($cfg),
            $crate::config::Precision::Dd => $f::<sltrace::Dd>($cfg),
        }
    };
}
pub(crate) use dispatch;

pub(crate) fn spectra<T: Real>(cfg: &RunConfig) -> Result<Vec<ChannelSpectrum<f64>>> {
    let spec = cfg.operator_spec::<T>()?;
    let n = &cfg.numerics;
    let s = enumerate_spectrum(&spec, n.m_modes, n.include_negative, T::lit(n.tol_root))?;
    Ok(s.iter().map(|c| c.cast()).collect())
}

fn record_row(r: &EigenvalueRecord<f64>) -> Vec<String> {
    vec![
        r.k.to_string(),
        r.branch.name().into(),
        r.branch.mode().to_string(),
        num(r.root_param),
        num(r.lambda),
        num(r.residual),
    ]
}

pub fn spectrum(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let all = dispatch!(cfg, spectra)?;
    for s in &all {
        let rows: Vec<_> = s.records.iter().map(record_row).collect();
        out.csv(
            &format!("spectrum_k{:03}.csv", s.k),
            &["k", "branch", "m", "root_param", "lambda", "residual"],
            &rows,
        )?;
    }
    Ok(())
}

pub fn counting(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let all = dispatch!(cfg, spectra)?;
    let spec = cfg.operator_spec::<f64>()?;
    let alpha = cfg.alpha().expect("validated");
    let n = &cfg.numerics;
    let report = counting_report(&spec, &all, n.m_modes, alpha, n.counting_samples, n.counting_tolerance)?;
    let rows: Vec<_> = report
        .samples
        .iter()
        .map(|s| {
            let c = s.counts;
            vec![
                num(s.lambda),
                c.oscillatory.to_string(),
                c.principal.to_string(),
                c.negative.to_string(),
                c.total().to_string(),
            ]
        })
        .collect();
    out.csv(
        "counting_samples.csv",
        &["lambda", "oscillatory", "principal", "negative", "total"],
        &rows,
    )?;
    let mut v = serde_json::to_value(&report)?;
    if let Value::Object(m) = &mut v {
        m.remove("samples");
        m.insert("alpha".into(), json!(alpha));
        m.insert("fitted_count".into(), json!("oscillatory"));
    }
    out.json("counting.json", v)
}

pub(crate) struct PerturbRow {
    pub k: usize,
    pub branch: Branch,
    pub lambda: f64,
    pub mu: f64,
    pub residual: f64,
    pub sup_norm: f64,
}

fn series_f64<T: Real>(q: &CosineSeries<T>) -> sltrace::Result<CosineSeries<f64>> {
    CosineSeries::new(q.coeffs().iter().map(|c| c.to_f64_lossy()).collect())
}

pub(crate) fn perturbed<T: Real>(cfg: &RunConfig) -> Result<Vec<PerturbRow>> {
    let spec = cfg.operator_spec::<T>()?;
    let pot = cfg.potential_spec::<T>()?;
    let n = &cfg.numerics;
    let opts = PerturbOptions {
        steps: n.ivp_steps,
        ..PerturbOptions::default()
    };
    let mut rows = Vec::new();
    for (k, q) in pot.active() {
        let gamma = spec.gamma(k).expect("validated");
        let base = enumerate_channel(k, gamma, n.m_modes, n.include_negative, T::lit(n.tol_root))?;
        let q64 = series_f64(q)?;
        let oracle = oracle_channel(k, gamma.to_f64_lossy(), Some(&q64), n.grid_n, 3)?;
        let seed = |b: Branch| oracle.find(b).map(|r| T::lit(r.lambda));
        let seeds = BranchSeeds {
            principal: seed(Branch::Principal),
            negative: seed(Branch::Negative),
        };
        let sup = q64.sup_norm();
        for p in solve_perturbed_channel(q, &base, seeds, &opts)? {
            rows.push(PerturbRow {
                k,
                branch: p.base.branch,
                lambda: p.base.lambda.to_f64_lossy(),
                mu: p.mu.to_f64_lossy(),
                residual: p.residual.to_f64_lossy(),
                sup_norm: sup,
            });
        }
    }
    Ok(rows)
}

pub fn perturb(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let rows = dispatch!(cfg, perturbed)?;
    let rows: Vec<_> = rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.branch.name().into(),
                r.branch.mode().to_string(),
                num(r.lambda),
                num(r.mu),
                num(r.mu - r.lambda),
                num(r.residual),
                num(r.sup_norm),
            ]
        })
        .collect();
    out.csv(
        "perturb.csv",
        &["k", "branch", "m", "lambda", "mu", "mu_minus_lambda", "residual", "sup_norm"],
        &rows,
    )
}

/// Trace results narrowed to `f64` and laid out for output.
pub(crate) struct TraceOutput {
    pub ledger: Vec<Vec<String>>,
    pub partial: Vec<Vec<String>>,
    pub verdict: Value,
    /// Largest `|sum|` over every branch and cutoff.
    pub max_abs_sum: f64,
    pub remainder_trend: Vec<f64>,
}

fn sums_json<T: Real>(s: &BranchSums<T>) -> Value {
    json!({
        "oscillatory": s.oscillatory.to_f64_lossy(),
        "principal": s.principal.to_f64_lossy(),
        "negative": s.negative.to_f64_lossy(),
        "total": s.total().to_f64_lossy(),
    })
}

pub(crate) fn traced<T: Real>(cfg: &RunConfig) -> Result<TraceOutput> {
    let spec = cfg.operator_spec::<T>()?;
    let pot = cfg.potential_spec::<T>()?;
    let n = &cfg.numerics;
    let mut opts = TraceOptions::<T>::new(cfg.schedule());
    opts.modes = n.m_modes;
    opts.include_negative = n.include_negative;
    opts.tol = T::lit(n.tol_root);
    opts.perturb.steps = n.ivp_steps;
    opts.oracle_grid = n.grid_n;
    let (ledger, _) = trace_pipeline(&spec, &pot, &opts)?;
    let verdict = trace_verdict(&ledger, cfg.alpha().map(T::lit));
    let f = |x: T| x.to_f64_lossy();

    let rows = ledger
        .entries
        .iter()
        .map(|e| {
            vec![
                e.k.to_string(),
                e.branch.name().into(),
                e.m().to_string(),
                num(f(e.lambda)),
                num(f(e.mu)),
                num(f(e.element)),
                num(f(e.shift())),
            ]
        })
        .collect();
    let mut max_abs = 0.0f64;
    let partial = ledger
        .partial_sums
        .iter()
        .map(|c| {
            for s in [&c.shift, &c.element, &c.remainder] {
                for v in [s.oscillatory, s.principal, s.negative] {
                    max_abs = max_abs.max(f(v).abs());
                }
            }
            vec![
                c.cutoff.to_string(),
                num(f(c.shift.oscillatory)),
                num(f(c.shift.principal)),
                num(f(c.shift.negative)),
                num(f(c.shift.total())),
                num(f(c.element.total())),
                num(f(c.remainder.total())),
                num(f(c.global_shift)),
            ]
        })
        .collect();
    let trend: Vec<f64> = verdict.remainder_trend.iter().map(|v| f(*v)).collect();
    let value = json!({
        "target": f(verdict.target),
        "osc_sum": f(verdict.osc_sum),
        "principal_sum": f(verdict.principal_sum),
        "negative_sum": f(verdict.negative_sum),
        "total_sum": f(verdict.total_sum),
        "remainder_trend": trend,
        "relative_deviation_osc": f(verdict.relative_deviation_osc),
        "relative_deviation_total": f(verdict.relative_deviation_total),
        "sign_agrees": verdict.sign_agrees,
        "pairing_gap": f(verdict.pairing_gap),
        "warning": verdict.warning,
        "schedule": ledger.schedule,
        "extrapolated_remainder": sums_json(&ledger.extrapolated_remainder),
        "extrapolation": "mean of the partial sums over every cutoff in the last quarter of 1..=M",
    });
    Ok(TraceOutput {
        ledger: rows,
        partial,
        verdict: value,
        max_abs_sum: max_abs,
        remainder_trend: trend,
    })
}

pub fn trace(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let t = dispatch!(cfg, traced)?;
    out.csv(
        "trace_ledger.csv",
        &["k", "branch", "m", "lambda", "mu", "element", "mu_minus_lambda"],
        &t.ledger,
    )?;
    out.csv(
        "trace_partial_sums.csv",
        &[
            "cutoff",
            "osc_shift",
            "principal_shift",
            "negative_shift",
            "total_shift",
            "element_total",
            "remainder_total",
            "global_shift",
        ],
        &t.partial,
    )?;
    out.json("trace_verdict.json", t.verdict)
}

/// Deterministic probe vector for the symmetry residuals.
fn probe(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| (0.7 * i as f64 + phase).sin()).collect()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn oracle(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let spec = cfg.operator_spec::<f64>()?;
    let pot = cfg.potential_spec::<f64>()?;
    let n = &cfg.numerics;
    let spectra = oracle_spectrum(&spec, &pot, n.grid_n, n.oracle_modes)?;
    let mut rows = Vec::new();
    let mut channels = Vec::new();
    for s in &spectra {
        let q = pot.channel(s.k).filter(|q| !q.is_zero());
        // closed-form partners exist only for unperturbed channels
        let exact = match q {
            None => Some(exact_channel(cfg, s.k, s.gamma, n.oracle_modes as u32)?),
            Some(_) => None,
        };
        for r in &s.records {
            let want = exact.as_ref().and_then(|e| e.find(r.branch)).map(|e| e.lambda);
            rows.push(vec![
                r.k.to_string(),
                r.branch.name().into(),
                r.branch.mode().to_string(),
                num(r.lambda),
                num(r.residual),
                want.map(num).unwrap_or_default(),
                want.map(|w| num((r.lambda - w).abs() / w.abs().max(1.0))).unwrap_or_default(),
            ]);
        }
        let p = assemble_channel(s.gamma, q, n.grid_n)?;
        let (u, v) = (probe(p.dim(), 0.3), probe(p.dim(), 1.1));
        let (au, av) = (p.a_mul(&u), p.a_mul(&v));
        let (bu, bv) = (p.b_mul(&u), p.b_mul(&v));
        let scale = dot(&u, &u).sqrt() * dot(&v, &v).sqrt();
        let vecs: Vec<Vec<f64>> = s.records.iter().take(5).map(|r| p.eigenvector(r.lambda)).collect();
        let mut orth = 0.0f64;
        let mut rayleigh = 0.0f64;
        for (i, x) in vecs.iter().enumerate() {
            let bx = p.b_mul(x);
            let rq = dot(x, &p.a_mul(x)) / dot(x, &bx);
            rayleigh = rayleigh.max((rq - s.records[i].lambda).abs() / s.records[i].lambda.abs().max(1.0));
            for (j, y) in vecs.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                orth = orth.max((dot(y, &bx) - want).abs());
            }
        }
        channels.push(json!({
            "k": s.k,
            "dof": p.dim(),
            "a_symmetry": (dot(&u, &av) - dot(&v, &au)).abs() / scale,
            "b_symmetry": (dot(&u, &bv) - dot(&v, &bu)).abs() / scale,
            "b_orthonormality": orth,
            "rayleigh": rayleigh,
        }));
    }
    out.csv(
        "oracle.csv",
        &["k", "branch", "m", "lambda", "bracket_width", "closed_form", "relative_error"],
        &rows,
    )?;
    out.json("oracle_symmetry.json", json!({ "grid_n": n.grid_n, "channels": channels }))
}

pub(crate) fn exact_channel(cfg: &RunConfig, k: usize, gamma: f64, modes: u32) -> Result<ChannelSpectrum<f64>> {
    let tol = cfg.numerics.tol_root;
    let s = match cfg.numerics.precision {
        Precision::F64 => enumerate_channel(k, gamma, modes.max(1), true, tol)?,
        Precision::Dd => enumerate_channel(k, Dd::from(gamma), modes.max(1), true, Dd::from(tol))?.cast(),
    };
    Ok(s)
}

//! Configuration, orchestration and report emission for the `sltrace`
//! command-line tool.
//!
//! Exit status: 0 ok, 2 configuration error, 3 numerical failure,
//! 4 invariant failure (from `verify`), 1 anything else (I/O).

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

pub use config::{ConfigError, RunConfig};
use output::Artifacts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Eigenvalues of every channel, one CSV per channel.
    Spectrum,
    /// Counting function N(lambda) and its fitted exponent.
    Counting,
    /// Perturbed eigenvalues paired with the unperturbed ones.
    Perturb,
    /// First regularized trace: ledger, partial sums and verdict.
    Trace,
    /// Finite-element eigenvalues and symmetry residuals.
    Oracle,
    /// Full invariant suite with a pass/fail report.
    Verify,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Spectrum => "spectrum",
            Command::Counting => "counting",
            Command::Perturb => "perturb",
            Command::Trace => "trace",
            Command::Oracle => "oracle",
            Command::Verify => "verify",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Parser)]
#[command(name = "sltrace", version, about = "Spectra and regularized traces of a Sturm-Liouville operator with a spectral-parameter boundary condition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; the built-in default when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, overriding `numerics.threads`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Accepted for interface stability; no pipeline is random.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

/// Some `verify` checks failed. Maps to exit status 4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantFailure(pub Vec<String>);

impl fmt::Display for InvariantFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariants failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for InvariantFailure {}

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<InvariantFailure>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<sltrace::Error>() {
            return if e.is_configuration() { 2 } else { 3 };
        }
    }
    1
}

/// Loads the config, applies the command-line overrides and runs `cli.command`.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.out {
        cfg.output.directory = dir.clone();
    }
    if cli.threads.is_some() {
        cfg.numerics.threads = cli.threads;
    }
    execute(cli.command, &cfg)
}

/// Validates `cfg` and runs `command` on a pool of `numerics.threads` workers.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate(command)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.numerics.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting the worker pool")?;
    pool.install(|| dispatch(command, cfg, &cfg.output.directory))
}

fn dispatch(command: Command, cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Artifacts::new(dir, cfg)?;
    match command {
        Command::Spectrum => commands::spectrum(cfg, &mut out)?,
        Command::Counting => commands::counting(cfg, &mut out)?,
        Command::Perturb => commands::perturb(cfg, &mut out)?,
        Command::Trace => commands::trace(cfg, &mut out)?,
        Command::Oracle => commands::oracle(cfg, &mut out)?,
        Command::Verify => {
            let failed = verify::verify(cfg, &mut out)?;
            if !failed.is_empty() {
                return Err(InvariantFailure(failed).into());
            }
        }
    }
    Ok(out.written().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::fs;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.operator = config::OperatorConfig::PowerLaw { a: 2.0, alpha: 3.0, k: 3 };
        c.numerics.m_modes = 12;
        c.numerics.grid_n = 400;
        c.numerics.precision = config::Precision::F64;
        c.numerics.threads = Some(1);
        c
    }

    fn in_dir(mut c: RunConfig, dir: &Path) -> RunConfig {
        c.output.directory = dir.to_path_buf();
        c
    }

    #[test]
    fn spectrum_writes_one_csv_per_channel() {
        let dir = tempfile::tempdir().unwrap();
        let files = execute(Command::Spectrum, &in_dir(small(), dir.path())).unwrap();
        assert_eq!(files.len(), 3);
        let text = fs::read_to_string(dir.path().join("spectrum_k001.csv")).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# config_hash: "));
        assert_eq!(lines.next().unwrap(), "k,branch,m,root_param,lambda,residual");
        // negative, principal, then 12 oscillatory modes
        assert_eq!(lines.count(), 14);
    }

    #[test]
    fn config_errors_exit_2() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = in_dir(small(), dir.path());
        c.potential = BTreeMap::from([(4, vec![0.1])]);
        let err = execute(Command::Spectrum, &c).unwrap_err();
        assert_eq!(exit_code(&err), 2);

        let mut c = in_dir(small(), dir.path());
        c.operator = config::OperatorConfig::Explicit { gammas: vec![0.5] };
        let err = execute(Command::Spectrum, &c).unwrap_err();
        assert_eq!(exit_code(&err), 2, "{err:#}");

        let cli = Cli::parse_from(["sltrace", "spectrum", "--config", "/nonexistent/cfg.json"]);
        assert_eq!(exit_code(&run(&cli).unwrap_err()), 2);
    }

    #[test]
    fn numeric_and_invariant_codes() {
        let numeric = anyhow::Error::new(sltrace::Error::NonConvergence {
            what: "brent",
            iterations: 300,
            residual: 1.0,
        })
        .context("trace");
        assert_eq!(exit_code(&numeric), 3);
        assert_eq!(exit_code(&InvariantFailure(vec!["x".into()]).into()), 4);
        assert_eq!(exit_code(&anyhow::anyhow!("disk full")), 1);
    }

    #[test]
    fn trace_with_single_channel_potential() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = in_dir(small(), dir.path());
        c.potential = BTreeMap::from([(1, vec![0.0, 0.2])]);
        c.numerics.schedule = vec![6, 12];
        execute(Command::Trace, &c).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("trace_verdict.json")).unwrap()).unwrap();
        assert!((v["target"].as_f64().unwrap() + 0.1).abs() < 1e-15);
        for key in ["osc_sum", "principal_sum", "negative_sum", "total_sum", "relative_deviation_osc"] {
            assert!(v[key].is_number(), "{key}");
        }
        assert!(v["sign_agrees"].is_boolean());
        assert_eq!(v["remainder_trend"].as_array().unwrap().len(), 1);
        let ledger = fs::read_to_string(dir.path().join("trace_ledger.csv")).unwrap();
        assert_eq!(ledger.lines().nth(1).unwrap(), "k,branch,m,lambda,mu,element,mu_minus_lambda");
        assert_eq!(ledger.lines().count(), 2 + 14);
    }

    #[test]
    fn perturb_respects_weyl_bound() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = in_dir(small(), dir.path());
        c.potential = BTreeMap::from([(2, vec![0.0, 0.2])]);
        execute(Command::Perturb, &c).unwrap();
        let text = fs::read_to_string(dir.path().join("perturb.csv")).unwrap();
        for line in text.lines().skip(2) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[0], "2");
            let shift: f64 = f[5].parse().unwrap();
            assert!(shift.abs() <= 0.2 + 1e-8, "{line}");
        }
    }

    #[test]
    fn counting_names_a_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = in_dir(small(), dir.path());
        c.operator = config::OperatorConfig::PowerLaw { a: 2.0, alpha: 3.0, k: 20 };
        c.numerics.m_modes = 100;
        execute(Command::Counting, &c).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("counting.json")).unwrap()).unwrap();
        assert!(v["delta_hat"].is_number());
        assert!(v["verdict"].is_string());
        assert!(v.get("samples").is_none());
        assert!(dir.path().join("counting_samples.csv").exists());
    }

    #[test]
    fn oracle_matches_closed_form_and_is_symmetric() {
        let dir = tempfile::tempdir().unwrap();
        execute(Command::Oracle, &in_dir(small(), dir.path())).unwrap();
        let text = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
        for line in text.lines().skip(2) {
            let rel: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert!(rel < 1e-2, "{line}");
        }
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("oracle_symmetry.json")).unwrap()).unwrap();
        for ch in v["channels"].as_array().unwrap() {
            assert!(ch["a_symmetry"].as_f64().unwrap() < 1e-12);
            assert!(ch["b_orthonormality"].as_f64().unwrap() < 1e-8);
        }
    }

    #[test]
    fn verify_passes_on_zero_potential() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = in_dir(small(), dir.path());
        c.numerics.precision = config::Precision::Dd;
        // the oracle tolerance assumes the default grid
        c.numerics.grid_n = 2000;
        execute(Command::Verify, &c).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
        assert_eq!(v["passed"], true);
        assert_eq!(v["trace"]["total_sum"], 0.0);
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut c = small();
        c.potential = BTreeMap::from([(1, vec![0.0, 0.2]), (3, vec![0.1])]);
        c.numerics.threads = Some(1);
        execute(Command::Perturb, &in_dir(c.clone(), a.path())).unwrap();
        c.numerics.threads = Some(3);
        execute(Command::Perturb, &in_dir(c, b.path())).unwrap();
        assert_eq!(
            fs::read(a.path().join("perturb.csv")).unwrap(),
            fs::read(b.path().join("perturb.csv")).unwrap()
        );
    }
}

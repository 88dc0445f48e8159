//! Run configuration, parsed from JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sltrace::{CosineSeries, OperatorSpec, PotentialSpec, Real};

use crate::Command;

/// Invalid or unreadable configuration. Maps to exit status 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub operator: OperatorConfig,
    /// Channel index to cosine coefficients; `c[j-1]` multiplies `cos(πjt)`.
    #[serde(default)]
    pub potential: BTreeMap<usize, Vec<f64>>,
    #[serde(default)]
    pub numerics: Numerics,
    /// Not part of the config hash: moving the output does not change results.
    #[serde(default, skip_serializing)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorConfig {
    PowerLaw {
        a: f64,
        alpha: f64,
        #[serde(rename = "K")]
        k: usize,
    },
    Explicit {
        gammas: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    Dd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub tol_root: f64,
    pub ivp_steps: usize,
    pub grid_n: usize,
    #[serde(rename = "M_modes")]
    pub m_modes: u32,
    pub include_negative: bool,
    /// Mode cutoffs of the trace. Empty means `M/8, M/4, M/2, M`.
    pub schedule: Vec<u32>,
    /// Scalar used for the root finding and shooting.
    pub precision: Precision,
    /// Eigenvalues per channel reported by the finite-element oracle.
    pub oracle_modes: usize,
    pub counting_samples: usize,
    pub counting_tolerance: f64,
    /// Worker count; output never depends on it.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            tol_root: 1e-12,
            ivp_steps: sltrace::perturbed::DEFAULT_STEPS,
            grid_n: 2000,
            m_modes: 200,
            include_negative: true,
            schedule: Vec::new(),
            precision: Precision::Dd,
            oracle_modes: 10,
            counting_samples: sltrace::counting::DEFAULT_SAMPLES,
            counting_tolerance: 0.05,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl Default for RunConfig {
    /// `a = 2`, `α = 3`, `K = 30`, `M = 200`, `q = 0`.
    fn default() -> Self {
        Self {
            operator: OperatorConfig::PowerLaw { a: 2.0, alpha: 3.0, k: 30 },
            potential: BTreeMap::new(),
            numerics: Numerics::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn channels(&self) -> usize {
        match &self.operator {
            OperatorConfig::PowerLaw { k, .. } => *k,
            OperatorConfig::Explicit { gammas } => gammas.len(),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.operator {
            OperatorConfig::PowerLaw { alpha, .. } => Some(alpha),
            OperatorConfig::Explicit { .. } => None,
        }
    }

    /// The explicit schedule or the default quartering of `M`.
    pub fn schedule(&self) -> Vec<u32> {
        if !self.numerics.schedule.is_empty() {
            return self.numerics.schedule.clone();
        }
        let m = self.numerics.m_modes;
        let mut s: Vec<u32> = [m / 8, m / 4, m / 2, m].into_iter().filter(|&c| c > 0).collect();
        s.dedup();
        s
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    /// Hex SHA-256 of the canonical JSON form (output settings and worker
    /// count excluded).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let n = &self.numerics;
        match &self.operator {
            OperatorConfig::PowerLaw { a, alpha, k } => {
                if !(*a > 0.0 && a.is_finite()) || !(*alpha > 0.0 && alpha.is_finite()) {
                    return bad(format!("a = {a} and alpha = {alpha} must be positive"));
                }
                if *k == 0 {
                    return bad("K must be at least 1");
                }
            }
            OperatorConfig::Explicit { gammas } => {
                if gammas.is_empty() {
                    return bad("gammas must not be empty");
                }
            }
        }
        let kmax = self.channels();
        for (&k, coeffs) in &self.potential {
            if k == 0 || k > kmax {
                return bad(format!("potential channel {k} outside 1..={kmax}"));
            }
            if coeffs.iter().any(|c| !c.is_finite()) {
                return bad(format!("potential channel {k} has a non-finite coefficient"));
            }
        }
        if !(n.tol_root > 0.0 && n.tol_root <= 1e-6) {
            return bad(format!("tol_root = {} must lie in (0, 1e-6]", n.tol_root));
        }
        if n.m_modes == 0 {
            return bad("M_modes must be at least 1");
        }
        if matches!(command, Command::Counting | Command::Trace) && n.m_modes < 10 {
            return bad(format!("M_modes = {} must be at least 10 for {command}", n.m_modes));
        }
        if n.ivp_steps < 16 {
            return bad("ivp_steps must be at least 16");
        }
        if n.grid_n < sltrace::discretizer::MIN_GRID {
            return bad(format!("grid_n must be at least {}", sltrace::discretizer::MIN_GRID));
        }
        if n.oracle_modes == 0 {
            return bad("oracle_modes must be at least 1");
        }
        if !(n.counting_tolerance > 0.0) {
            return bad("counting_tolerance must be positive");
        }
        if n.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        let s = &n.schedule;
        if s.first() == Some(&0) || s.windows(2).any(|w| w[1] <= w[0]) {
            return bad("schedule must be strictly increasing and positive");
        }
        if s.last().is_some_and(|&m| m > n.m_modes) {
            return bad(format!("schedule exceeds M_modes = {}", n.m_modes));
        }
        if command == Command::Counting && self.alpha().is_none() {
            return bad("counting needs a power-law operator (a, alpha, K)");
        }
        if self.output.formats.is_empty() {
            return bad("output.formats must name at least one format");
        }
        Ok(())
    }

    pub fn operator_spec<T: Real>(&self) -> sltrace::Result<OperatorSpec<T>> {
        match &self.operator {
            OperatorConfig::PowerLaw { a, alpha, k } => OperatorSpec::power_law(T::lit(*a), T::lit(*alpha), *k),
            OperatorConfig::Explicit { gammas } => OperatorSpec::from_gammas(gammas.iter().map(|g| T::lit(*g)).collect()),
        }
    }

    pub fn potential_spec<T: Real>(&self) -> sltrace::Result<PotentialSpec<T>> {
        let mut channels = BTreeMap::new();
        for (&k, c) in &self.potential {
            channels.insert(k, CosineSeries::new(c.iter().map(|v| T::lit(*v)).collect())?);
        }
        PotentialSpec::new(channels)
    }
}

//! Spectra and regularized traces of the operator
//! `-y'' + (A + q(t)) y = λ y` on `[0, 1]` with `y(0) = 0` and the
//! spectral-parameter condition `y'(1) = (λ - 1/λ) y(1)`.
//!
//! `A` is diagonal with eigenvalues `γ_k > 1`, so the unperturbed problem
//! splits into scalar channels. Everything numeric is generic over
//! [`Real`]; the aliases at the bottom fix the scalar to `f64` or the
//! double-double [`Dd`].
//!
//! ```
//! use sltrace::{enumerate_channel, Branch};
//!
//! let s = enumerate_channel(1, 10.0f64, 3, true, 1e-12).unwrap();
//! assert_eq!(s.records.len(), 5);
//! assert_eq!(s.records[0].branch, Branch::Negative);
//! ```

pub mod scalar;
pub mod error;
pub mod model;
pub mod quadrature;
pub mod roots;
pub mod charroots;
pub mod counting;
pub mod perturbed;
pub mod discretizer;
pub mod traceform;

pub use charroots::{
    char_fn, char_fn_derivative, char_fn_imag, enumerate_channel, enumerate_spectrum,
    solve_negative_root, solve_oscillatory_root, solve_principal_root, ChannelSpectrum,
};
pub use counting::{
    count_below, count_by_branch, counting_report, fit_exponent, validity_window, BranchCounts,
    CountingReport, TableVerdict,
};
pub use discretizer::{
    assemble_channel, assemble_forms, oracle_channel, oracle_spectrum, solve_gevp, FormPair,
    SymMatrix, TriPencil,
};
pub use error::{Error, Result};
pub use model::{
    eval_potential, make_operator_spec, trace_endpoint, trace_target, Branch, CosineSeries,
    EigenvalueRecord, Endpoint, OperatorSpec, PotentialSpec,
};
pub use perturbed::{
    integrate_ivp, solve_perturbed_channel, BranchSeeds, ChannelPotential, ConstantPotential,
    PerturbOptions, PerturbedPair,
};
pub use scalar::{Dd, Real};
pub use traceform::{
    fourier_endpoint_limit, matrix_element, pair_and_sum, trace_pipeline, trace_verdict,
    NormalizedMode, TraceEntry, TraceLedger, TraceOptions, TraceVerdict,
};

pub type OperatorSpecF64 = OperatorSpec<f64>;
pub type OperatorSpecDd = OperatorSpec<Dd>;
pub type PotentialSpecF64 = PotentialSpec<f64>;
pub type PotentialSpecDd = PotentialSpec<Dd>;
pub type ChannelSpectrumF64 = ChannelSpectrum<f64>;
pub type ChannelSpectrumDd = ChannelSpectrum<Dd>;
pub type ChannelSpectrumF32 = ChannelSpectrum<f32>;
pub type PerturbedPairF64 = PerturbedPair<f64>;
pub type PerturbedPairDd = PerturbedPair<Dd>;
pub type TraceLedgerF64 = TraceLedger<f64>;
pub type CountingReportF64 = CountingReport<f64>;

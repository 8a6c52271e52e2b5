//! Simulation and fitting toolkit for a flux-tunable Kerr nonlinear
//! superconducting resonator measured in reflection.
//!
//! The crate covers the full analysis chain for such a device:
//!
//! * [`params`] — working-point parameters, input tones, and the linear
//!   reflection coefficient from input-output theory.
//! * [`moments`] — steady-state operator-moment hierarchy for one-tone and
//!   two-tone spectroscopy, truncated at a configurable order.
//! * [`lindblad`] — brute-force Lindblad steady state in a Fock basis, used
//!   as an independent oracle for the moment solver.
//! * [`semiclassical`] — mean-field Duffing response and parametric
//!   oscillation (0/π states, threshold, phase locking).
//! * [`circuit`] — equivalent-circuit model of the CPW resonator with an
//!   embedded dc-SQUID: flux-dependent resonance frequency and Kerr
//!   coefficient, critical-current fitting.
//! * [`fitting`] — parameter recovery from reflection traces and spectra.
//! * [`spectrum`] — grid sweeps of the reflection coefficient.
//! * [`csvio`] — CSV import/export of spectra, traces, and flux curves.

pub mod banded;
pub mod circuit;
pub mod csvio;
pub mod fitting;
pub mod lindblad;
pub mod moments;
pub mod params;
pub mod semiclassical;
pub mod spectrum;

mod optim;

pub use circuit::{fit_critical_current, kerr_coefficient, resonance_frequency, squid_inductance, CircuitParams, FluxCurve};
pub use fitting::{fit_kerr_and_power, fit_linear_resonance, kerr_from_12_transition, kerr_from_two_photon_dip, FitResult, ReflectionTrace};
pub use lindblad::{lindblad_steady_state, LindbladSteadyState};
pub use moments::{converge_one_tone, reflection, solve_one_tone, solve_two_tone, ConvergedSolve, MomentTable, TwoToneSolution};
pub use params::{dbm_to_watts, linear_reflection, tone_amplitude, DeviceParams, FluxBias, ToneSpec};
pub use semiclassical::{duffing_reflection, duffing_steady, kpo_steady_states, simulate_locking, BranchRule, DuffingSolution, PumpSpec};
pub use spectrum::{sweep_spectrum, sweep_two_tone, MomentOptions, SolverChoice, SpectrumGrid};

use num_complex::Complex64;

/// Errors produced by solvers, fits, and I/O in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {msg} (condition estimate {cond:.3e})")]
    NumericalFailure { msg: String, cond: f64 },
    #[error("circuit model failure: {0}")]
    ModelFailure(String),
    #[error("fit failure: {0}")]
    FitFailure(String),
    #[error("feature not found: {0}")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error at line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) type C64 = Complex64;

//! Decoherence of a dephasing-coupled central system in a nested-environment
//! configuration.
//!
//! The near environment is a random-matrix Hamiltonian `H0` perturbed by a
//! dephasing coupling `lambda * Veff`; the far environment is integrated out
//! into a damping rate `Gamma` acting through a random coupling operator.
//! The crate computes:
//!
//! - exact fidelity-amplitude (relative-coherence) dynamics at `Gamma = 0`
//!   from cached eigendecompositions ([`echo`]),
//! - damped coherence dynamics via Strang splitting of the master-equation
//!   generator, with an exact vectorized reference solver ([`lindblad`]),
//! - the linear-response convolution prediction, its perturbative closed
//!   form, the exponentiated linear response with the two-point form factor,
//!   and the pre-self-averaged matrix formula ([`theory`]),
//! - reproducible Monte Carlo ensemble averages ([`montecarlo`]) and
//!   least-squares rate extraction ([`fitting`]).
//!
//! Units: `hbar = 1` and the mean level spacing at the spectrum center is
//! `d0 = 1`, so time is measured in `hbar/d0` and the Heisenberg time is
//! `2*pi`.

// Force linkage of the system BLAS used by `ndarray::dot` and LAPACK.
use blas_src as _;
use openblas_src as _;

pub mod echo;
pub mod error;
pub mod fitting;
pub mod grid;
pub mod lindblad;
pub mod montecarlo;
pub mod quadrature;
pub mod rmt;
pub mod spline;
pub mod state;
pub mod theory;
pub mod trace;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use rmt::{
    build_h_lambda, eigendecompose, normalize_center_spacing, sample_gaussian_ensemble,
    EnsembleKind, EnsembleSampler, EnsembleSpec, HamiltonianPair, Spectrum,
};
pub use state::{DensityMatrix, InitialState};
pub use trace::{CoherenceTrace, TraceMeta};

pub use echo::{echo_operator, fidelity_amplitude, relative_coherence};
pub use lindblad::{
    fgr_decay_rate, gamma_from_decay_rate, generator_apply, propagate_coherence, sample_vprime,
    superoperator_reference, CoherenceState, DissipatorSpec, DissipatorSubStep,
    PropagationSettings,
};
pub use theory::{
    elr_exponent, elr_fidelity, fit_spline, form_factor_b2, full_lr_matrix, lr_convolution,
    lr_convolution_kernel, perturbative_g, TheoryCurve, TheoryKind,
};

pub use fitting::{fit_gamma, fit_gamma_default, fit_saturation, FitObjective, FitResult, FitWindow};
pub use montecarlo::{
    aggregate_traces, run_ensemble, run_realization, run_scenario_sweep, Propagation, RunPlan,
    Scenario,
};
pub use spline::CubicSpline;

/// Complex scalar used throughout.
pub use ndarray_linalg::c64;

/// Complex matrix type used throughout.
pub type CMatrix = ndarray::Array2<c64>;

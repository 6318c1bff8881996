//! Near-environment initial states.

use ndarray::Array2;
use ndarray_linalg::{c64, Eigh, UPLO};

use crate::error::{Error, Result};
use crate::rmt::{require_hermitian, EnsembleSampler};
use crate::CMatrix;

/// Which initial state the ensemble runs use for the near environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// `I/N_e` (the default; the trace then runs over the full spectral
    /// range of the semicircle).
    MaximallyMixed,
    /// A Haar-ish random pure state (complex Gaussian vector, normalized),
    /// drawn per realization after the matrix draws.
    RandomPure,
}

impl InitialState {
    pub fn as_str(self) -> &'static str {
        match self {
            InitialState::MaximallyMixed => "maximally_mixed",
            InitialState::RandomPure => "random_pure",
        }
    }
}

impl std::str::FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maximally_mixed" | "mixed" => Ok(InitialState::MaximallyMixed),
            "random_pure" | "pure" => Ok(InitialState::RandomPure),
            other => Err(Error::InvalidParameter(format!(
                "unknown initial state '{other}'"
            ))),
        }
    }
}

/// Validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        require_hermitian(&m, "density matrix")?;
        let trace: c64 = (0..m.nrows()).map(|i| m[[i, i]]).sum();
        if (trace.re - 1.0).abs() > 1e-10 || trace.im.abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "density matrix trace must be 1, got {trace}"
            )));
        }
        let (eigs, _) = m.eigh(UPLO::Lower)?;
        if let Some(min) = eigs.iter().cloned().reduce(f64::min) {
            if min < -1e-10 {
                return Err(Error::Validation(format!(
                    "density matrix has negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(Self(m))
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let w = c64::new(1.0 / n as f64, 0.0);
        Self(Array2::eye(n).mapv(|z: c64| z * w))
    }

    /// |psi><psi| for a normalized complex Gaussian vector drawn from the
    /// sampler's stream.
    pub fn random_pure(sampler: &mut EnsembleSampler, n: usize) -> Self {
        let mut psi: Vec<c64> = (0..n)
            .map(|_| c64::new(sampler.standard_normal(), sampler.standard_normal()))
            .collect();
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut psi {
            *z /= norm;
        }
        let mut m = Array2::<c64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] = psi[i] * psi[j].conj();
            }
        }
        Self(m)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}
